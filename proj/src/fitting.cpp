#include "ankle_msk/fitting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ankle_msk/controller.hpp"
#include "ankle_msk/errors.hpp"
#include "json_doc.hpp"

namespace ankle_msk {

std::string_view param_name(FitParam p) {
  switch (p) {
    case FitParam::plant_f_max: return "plant.f_max";
    case FitParam::plant_l_o: return "plant.l_o";
    case FitParam::plant_r_max: return "plant.r_max";
    case FitParam::plant_theta_ref: return "plant.theta_ref";
    case FitParam::plant_theta_max: return "plant.theta_max";
    case FitParam::dorsi_f_max: return "dorsi.f_max";
    case FitParam::dorsi_l_o: return "dorsi.l_o";
    case FitParam::dorsi_r_max: return "dorsi.r_max";
    case FitParam::dorsi_shape: return "dorsi.shape_factor";
    case FitParam::plant_shape: return "plant.shape_factor";
  }
  return "?";
}

std::vector<FitParam> fit_parameters(bool include_shape) {
  std::vector<FitParam> p{FitParam::plant_f_max,     FitParam::plant_l_o,   FitParam::plant_r_max,
                          FitParam::plant_theta_ref, FitParam::plant_theta_max, FitParam::dorsi_f_max,
                          FitParam::dorsi_l_o,       FitParam::dorsi_r_max};
  if (include_shape) {
    p.push_back(FitParam::dorsi_shape);
    p.push_back(FitParam::plant_shape);
  }
  return p;
}

namespace {

ParamBound default_bound(FitParam p) {
  switch (p) {
    case FitParam::plant_f_max: return {500.0, 6000.0};
    case FitParam::plant_l_o: return {0.02, 0.06};
    case FitParam::plant_r_max: return {0.01, 0.065};
    case FitParam::plant_theta_ref: return {70.0, 130.0};
    case FitParam::plant_theta_max: return {70.0, 130.0};
    case FitParam::dorsi_f_max: return {500.0, 4000.0};
    case FitParam::dorsi_l_o: return {0.02, 0.145};
    case FitParam::dorsi_r_max: return {0.01, 0.065};
    case FitParam::dorsi_shape:
    case FitParam::plant_shape: return {-2.999, -1e-3};
  }
  return {};
}

double& slot(AnkleModel& m, FitParam p) {
  switch (p) {
    case FitParam::plant_f_max: return m.plantarflexor.f_max;
    case FitParam::plant_l_o: return m.plantarflexor.l_o;
    case FitParam::plant_r_max: return m.plantarflexor.r_max;
    case FitParam::plant_theta_ref: return m.plantarflexor.theta_ref;
    case FitParam::plant_theta_max: return m.plantarflexor.theta_max;
    case FitParam::dorsi_f_max: return m.dorsiflexor.f_max;
    case FitParam::dorsi_l_o: return m.dorsiflexor.l_o;
    case FitParam::dorsi_r_max: return m.dorsiflexor.r_max;
    case FitParam::dorsi_shape: return m.dorsiflexor.shape_factor;
    case FitParam::plant_shape: return m.plantarflexor.shape_factor;
  }
  throw InvalidInput("unknown fit parameter");
}

std::vector<double> to_unit(const std::vector<double>& x, const Bounds& b) {
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    u[i] = std::clamp((x[i] - b.ranges[i].lo) / (b.ranges[i].hi - b.ranges[i].lo), 0.0, 1.0);
  }
  return u;
}

std::vector<double> from_unit(const std::vector<double>& u, const Bounds& b) {
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    x[i] = b.ranges[i].lo + std::clamp(u[i], 0.0, 1.0) * (b.ranges[i].hi - b.ranges[i].lo);
  }
  return x;
}

// Uniform double in [0, 1) from the top 53 bits, identical across standard libraries.
double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Bounds Bounds::defaults(bool include_shape) {
  Bounds b;
  b.params = fit_parameters(include_shape);
  for (FitParam p : b.params) b.ranges.push_back(default_bound(p));
  return b;
}

bool Bounds::contains(const std::vector<double>& x) const {
  if (x.size() != ranges.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < ranges[i].lo || x[i] > ranges[i].hi) return false;
  }
  return true;
}

void Bounds::validate() const {
  if (params.size() != ranges.size() || params.empty()) throw InvalidParameter("bounds do not match parameters");
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (!(ranges[i].lo < ranges[i].hi)) {
      throw InvalidParameter(fmt::format("bound for {} has min {} >= max {}", param_name(params[i]), ranges[i].lo,
                                         ranges[i].hi));
    }
  }
}

std::vector<double> extract_params(const AnkleModel& model, const std::vector<FitParam>& params) {
  AnkleModel m = model;
  std::vector<double> x;
  for (FitParam p : params) x.push_back(slot(m, p));
  return x;
}

AnkleModel expand_params(const std::vector<double>& x, const std::vector<FitParam>& params, const AnkleModel& base) {
  if (x.size() != params.size()) throw InvalidInput("parameter vector has the wrong length");
  AnkleModel m = base;
  for (std::size_t i = 0; i < params.size(); ++i) slot(m, params[i]) = x[i];
  m.dorsiflexor.theta_ref = m.plantarflexor.theta_max;
  m.dorsiflexor.theta_max = m.plantarflexor.theta_ref;
  return m;
}

PreparedTrial prepare_trial(const TrialRecording& trial, const ModelConfig& config) {
  trial.validate(true);
  if (!trial.torque_ref) throw InvalidInput("trial has no ankle_torque_ref column to fit against");
  const std::size_t n = trial.size();
  FrontEnd front(config, trial.fs);
  const bool causal = config.pipeline.velocity == VelocityEstimator::backward;
  std::vector<double> omega;
  if (!causal) omega = estimate_velocity(trial.ankle_angle, trial.fs, config.pipeline);

  PreparedTrial p;
  p.u_ta.resize(n);
  p.u_gas.resize(n);
  std::vector<double> w(n), a_ta(n), a_gas(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FrontEndSample s = causal ? front.step(trial.emg_ta[i], trial.emg_gas[i], trial.ankle_angle[i])
                                    : front.step_with_velocity(trial.emg_ta[i], trial.emg_gas[i], omega[i]);
    p.u_ta[i] = s.u_ta;
    p.u_gas[i] = s.u_gas;
    a_ta[i] = s.a_ta;
    a_gas[i] = s.a_gas;
    w[i] = s.omega;
  }
  p.samples = kernels::SampleBuffer::from_angles(trial.ankle_angle, w, a_ta, a_gas);
  p.torque_ref = *trial.torque_ref;
  return p;
}

Objective::Objective(std::vector<PreparedTrial> trials, ModelConfig base, std::vector<FitParam> params)
    : trials_(std::move(trials)), base_(std::move(base)), params_(std::move(params)) {
  if (trials_.empty()) throw InvalidInput("objective needs at least one trial");
  for (const auto& t : trials_) n_ += t.torque_ref.size();
  if (n_ == 0) throw InvalidInput("objective trials are empty");
  shape_free_ = std::any_of(params_.begin(), params_.end(),
                            [](FitParam p) { return p == FitParam::dorsi_shape || p == FitParam::plant_shape; });
}

double Objective::operator()(const std::vector<double>& x) const {
  AnkleModel m;
  try {
    m = expand_params(x, params_, base_.model);
    m.dorsiflexor.validate();
    m.plantarflexor.validate();
  } catch (const InvalidParameter&) {
    return kPenalty;
  }
  const kernels::MuscleLane dorsi = kernels::prepare_lane(m.dorsiflexor);
  const kernels::MuscleLane plant = kernels::prepare_lane(m.plantarflexor);

  double sse = 0.0;
  std::vector<double> a_ta, a_gas;
  for (const auto& t : trials_) {
    kernels::SampleView view = t.samples.view();
    if (shape_free_) {
      a_ta.resize(t.u_ta.size());
      a_gas.resize(t.u_gas.size());
      for (std::size_t i = 0; i < a_ta.size(); ++i) {
        a_ta[i] = shape_activation(t.u_ta[i], m.dorsiflexor.shape_factor);
        a_gas[i] = shape_activation(t.u_gas[i], m.plantarflexor.shape_factor);
      }
      view.a_dorsi = a_ta;
      view.a_plant = a_gas;
    }
    const kernels::ErrorSum e = kernels::squared_error(dorsi, plant, view, t.torque_ref);
    if (e.degenerate || !std::isfinite(e.sse)) return kPenalty;
    sse += e.sse;
  }
  return sse / static_cast<double>(n_);
}

std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> pts(n, std::vector<double>(dims));
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < dims; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    // Fisher-Yates with the portable draw.
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(unit_double(rng) * static_cast<double>(i));
      std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      pts[i][d] = (static_cast<double>(perm[i]) + unit_double(rng)) / static_cast<double>(n);
    }
  }
  return pts;
}

LocalResult bounded_simplex(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                            int max_evaluations, double rel_tolerance) {
  const std::size_t n = x0.size();
  max_evaluations = std::max(max_evaluations, static_cast<int>(n) + 2);
  int evals = 0;
  auto project = [](std::vector<double>& x) {
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
  };
  auto eval = [&](std::vector<double>& x) {
    project(x);
    ++evals;
    return f(x);
  };

  project(x0);
  std::vector<std::vector<double>> simplex(n + 1);
  std::vector<double> fv(n + 1);
  simplex[0] = x0;
  fv[0] = eval(simplex[0]);

  auto build = [&](double step) {
    for (std::size_t i = 0; i < n && evals < max_evaluations; ++i) {
      std::vector<double> x = simplex[0];
      x[i] += x[i] + step <= 1.0 ? step : -step;
      simplex[i + 1] = x;
      fv[i + 1] = eval(simplex[i + 1]);
    }
  };
  build(0.1);

  std::vector<std::size_t> order(n + 1);
  double last_restart_best = fv[0];
  double step = 0.1;
  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    {
      std::vector<std::vector<double>> s2(n + 1);
      std::vector<double> f2(n + 1);
      for (std::size_t i = 0; i <= n; ++i) {
        s2[i] = simplex[order[i]];
        f2[i] = fv[order[i]];
      }
      simplex.swap(s2);
      fv.swap(f2);
    }

    const double spread = std::abs(fv[n] - fv[0]);
    if (spread <= rel_tolerance * std::abs(fv[0]) || spread == 0.0) {
      // Converged: restart around the incumbent once per improvement.
      if (!(fv[0] < last_restart_best) && step < 0.1) break;
      last_restart_best = fv[0];
      step *= 0.5;
      if (step < 1e-6) break;
      build(step);
      continue;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);
    }
    auto along = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t k = 0; k < n; ++k) x[k] = centroid[k] + t * (simplex[n][k] - centroid[k]);
      return x;
    };

    std::vector<double> xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      std::vector<double> xe = along(-2.0);
      const double fe = evals < max_evaluations ? eval(xe) : fr;
      if (fe < fr) {
        simplex[n] = xe;
        fv[n] = fe;
      } else {
        simplex[n] = xr;
        fv[n] = fr;
      }
      continue;
    }
    if (fr < fv[n - 1]) {
      simplex[n] = xr;
      fv[n] = fr;
      continue;
    }
    if (evals >= max_evaluations) break;
    const bool outside = fr < fv[n];
    std::vector<double> xc = along(outside ? -0.5 : 0.5);
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[n])) {
      simplex[n] = xc;
      fv[n] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t i = 1; i <= n && evals < max_evaluations; ++i) {
      for (std::size_t k = 0; k < n; ++k) simplex[i][k] = simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
      fv[i] = eval(simplex[i]);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  return {simplex[best], fv[best], evals};
}

FitResult fit(const Objective& objective, const Bounds& bounds, const FitConfig& config) {
  bounds.validate();
  if (bounds.params != objective.params()) throw InvalidInput("bounds and objective disagree on the parameters");
  if (config.n_starts < 1) throw InvalidParameter("fit needs at least one start");
  const std::size_t dims = bounds.size();
  const auto n_starts = static_cast<std::size_t>(config.n_starts);

  std::vector<std::vector<double>> starts;
  for (const auto& s : config.seeds) {
    if (starts.size() == n_starts) break;
    if (s.size() != dims) throw InvalidInput("seed start point has the wrong dimension");
    starts.push_back(to_unit(s, bounds));
  }
  if (starts.size() < n_starts) {
    const auto lhs = latin_hypercube(n_starts - starts.size(), dims, config.seed);
    starts.insert(starts.end(), lhs.begin(), lhs.end());
  }

  auto f_unit = [&](const std::vector<double>& u) { return objective(from_unit(u, bounds)); };

  std::vector<StartRecord> records(n_starts);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < n_starts; i = next.fetch_add(1)) {
      StartRecord& r = records[i];
      r.start = from_unit(starts[i], bounds);
      r.start_objective = objective(r.start);
      const LocalResult local = bounded_simplex(f_unit, starts[i], config.max_evaluations, config.rel_tolerance);
      r.final = from_unit(local.x, bounds);
      r.final_objective = local.f;
      r.evaluations = local.evaluations;
    }
  };
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_starts));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  FitResult result;
  result.params = bounds.params;
  result.bounds = bounds;
  result.seed = config.seed;
  result.samples = objective.sample_count();
  result.best_start = 0;
  for (std::size_t i = 1; i < n_starts; ++i) {
    if (records[i].final_objective < records[result.best_start].final_objective) result.best_start = i;
  }
  result.best = records[result.best_start].final;
  result.objective = records[result.best_start].final_objective;
  result.starts = std::move(records);
  if (!(result.objective < kPenalty)) {
    throw FitFailure(fmt::format("all {} starts ended in degenerate geometry (objective {})", n_starts,
                                 result.objective));
  }
  spdlog::info("fit: best objective {:.6g} from start {} of {} ({} kernel)", result.objective, result.best_start,
               n_starts, kernels::isa_name(kernels::active_isa()));
  return result;
}

FitResult fit_trials(const std::vector<TrialRecording>& trials, const ModelConfig& base, const FitConfig& config) {
  if (trials.empty()) throw InvalidInput("fit needs at least one trial");
  std::vector<PreparedTrial> prepared;
  for (const auto& t : trials) prepared.push_back(prepare_trial(t, base));
  const Bounds bounds = Bounds::defaults(config.fit_shape);
  Objective objective(std::move(prepared), base, bounds.params);
  return fit(objective, bounds, config);
}

ModelConfig apply_fit(const FitResult& result, const ModelConfig& base) {
  ModelConfig out = base;
  out.model = expand_params(result.best, result.params, base.model);
  out.validate();
  return out;
}

std::string dump_fit_report(const FitResult& r, const std::vector<InputDigest>& inputs) {
  using json_doc::json;
  json doc = json_doc::header("ankle_msk.fit_report");
  json names = json::array();
  json bounds = json::array();
  for (std::size_t i = 0; i < r.params.size(); ++i) {
    names.push_back(std::string(param_name(r.params[i])));
    bounds.push_back(json::array({r.bounds.ranges[i].lo, r.bounds.ranges[i].hi}));
  }
  doc["parameters"] = names;
  doc["bounds"] = bounds;
  doc["best"] = r.best;
  doc["objective"] = r.objective;
  doc["best_start"] = r.best_start;
  doc["seed"] = r.seed;
  doc["samples"] = r.samples;
  json starts = json::array();
  for (const auto& s : r.starts) {
    starts.push_back({{"start", s.start},
                      {"final", s.final},
                      {"start_objective", s.start_objective},
                      {"final_objective", s.final_objective},
                      {"evaluations", s.evaluations}});
  }
  doc["starts"] = starts;
  doc["inputs"] = json_doc::inputs_to_json(inputs);
  return json_doc::dump(doc);
}

}  // namespace ankle_msk
