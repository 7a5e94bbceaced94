#include "ankle_msk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"
#include "ankle_msk/hashing.hpp"
#include "ankle_msk/msk_core.hpp"
#include "ankle_msk/signal_pipeline.hpp"
#include "json_doc.hpp"

namespace ankle_msk {

using json_doc::json;
using json_doc::ObjectReader;

double Trajectory::value(double t) const {
  if (!knots.empty()) {
    if (t <= knots.front().first) return knots.front().second;
    if (t >= knots.back().first) return knots.back().second;
    const auto it = std::upper_bound(knots.begin(), knots.end(), t,
                                     [](double v, const auto& k) { return v < k.first; });
    const auto& [t1, v1] = *it;
    const auto& [t0, v0] = *(it - 1);
    return v0 + (t - t0) / (t1 - t0) * (v1 - v0);
  }
  double v = offset;
  for (const auto& c : components) v += c.amplitude * std::sin(2.0 * std::numbers::pi * c.freq_hz * t + c.phase_rad);
  return v;
}

double Trajectory::derivative(double t) const {
  if (!knots.empty()) {
    if (t < knots.front().first || t >= knots.back().first) return 0.0;
    const auto it = std::upper_bound(knots.begin(), knots.end(), t,
                                     [](double v, const auto& k) { return v < k.first; });
    return (it->second - (it - 1)->second) / (it->first - (it - 1)->first);
  }
  double d = 0.0;
  for (const auto& c : components) {
    const double w = 2.0 * std::numbers::pi * c.freq_hz;
    d += c.amplitude * w * std::cos(w * t + c.phase_rad);
  }
  return d;
}

std::size_t SyntheticProfile::samples() const {
  return static_cast<std::size_t>(std::llround(duration_s * rate_hz));
}

void SyntheticProfile::validate() const {
  if (!(duration_s > 0.0) || !(rate_hz > 0.0)) {
    throw InvalidProfile(fmt::format("duration {} s and rate {} Hz must be positive", duration_s, rate_hz));
  }
  if (samples() < 2) throw InvalidProfile("profile has fewer than 2 samples");
  if (!(noise_level >= 0.0)) throw InvalidProfile(fmt::format("noise_level must be >= 0, got {}", noise_level));
  if (!(carrier_hz > 0.0) || !(carrier_hz < rate_hz / 2.0)) {
    throw InvalidProfile(fmt::format("carrier {} Hz must lie below the Nyquist rate", carrier_hz));
  }
  if (cycle_period_s && !(*cycle_period_s > 0.0)) throw InvalidProfile("cycle_period_s must be positive");
  for (const Trajectory* tr : {&angle_deg, &activation_ta, &activation_gas}) {
    for (std::size_t i = 1; i < tr->knots.size(); ++i) {
      if (!(tr->knots[i].first > tr->knots[i - 1].first)) throw InvalidProfile("knot times must increase");
    }
  }
  const std::size_t n = samples();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    const double th = angle_deg.value(t);
    if (!(th >= 70.0 && th <= 130.0)) {
      throw InvalidProfile(fmt::format("angle {} deg at t={} s is outside [70, 130]", th, t));
    }
    for (const auto& [name, tr] : {std::pair{"activation_ta", &activation_ta}, std::pair{"activation_gas", &activation_gas}}) {
      const double a = tr->value(t);
      if (!(a >= 0.0 && a <= 1.0)) throw InvalidProfile(fmt::format("{} {} at t={} s is outside [0, 1]", name, a, t));
    }
  }
}

namespace {

Trajectory trajectory_from_json(ObjectReader r) {
  Trajectory tr;
  if (r.has("knots")) {
    const json& k = r.value("knots");
    if (!k.is_array() || k.empty()) throw InvalidProfile(fmt::format("{}.knots: expected a non-empty array", r.where()));
    for (const auto& p : k) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw InvalidProfile(fmt::format("{}.knots: each knot is [time_s, value]", r.where()));
      }
      tr.knots.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
  } else {
    tr.offset = r.number("offset");
    const json& comps = r.value("components");
    if (!comps.is_array()) throw InvalidProfile(fmt::format("{}.components: expected an array", r.where()));
    for (std::size_t i = 0; i < comps.size(); ++i) {
      ObjectReader c(comps[i], fmt::format("{}.components[{}]", r.where(), i));
      tr.components.push_back({c.number("amplitude"), c.number("freq_hz"), c.number("phase_rad")});
      c.finish();
    }
  }
  r.finish();
  return tr;
}

json trajectory_to_json(const Trajectory& tr) {
  if (!tr.knots.empty()) {
    json k = json::array();
    for (const auto& [t, v] : tr.knots) k.push_back({t, v});
    return json{{"knots", k}};
  }
  json comps = json::array();
  for (const auto& c : tr.components) {
    comps.push_back({{"amplitude", c.amplitude}, {"freq_hz", c.freq_hz}, {"phase_rad", c.phase_rad}});
  }
  return json{{"offset", tr.offset}, {"components", comps}};
}

}  // namespace

SyntheticProfile parse_profile(const std::string& text, const std::string& origin) {
  SyntheticProfile p;
  try {
    const json doc = json_doc::parse_text(text, origin);
    ObjectReader r(doc, origin);
    p.duration_s = r.number("duration_s");
    p.rate_hz = r.number("rate_hz");
    p.angle_deg = trajectory_from_json(r.object("angle_deg"));
    p.activation_ta = trajectory_from_json(r.object("activation_ta"));
    p.activation_gas = trajectory_from_json(r.object("activation_gas"));
    p.noise_level = r.number("noise_level");
    if (r.has("carrier_hz")) p.carrier_hz = r.number("carrier_hz");
    if (r.has("cycle_period_s")) p.cycle_period_s = r.number("cycle_period_s");
    r.finish();
  } catch (const InvalidInput& e) {
    throw InvalidProfile(e.what());
  }
  p.validate();
  return p;
}

SyntheticProfile load_profile(const std::filesystem::path& path) { return parse_profile(read_file(path), path.string()); }

std::string dump_profile(const SyntheticProfile& p) {
  json doc{{"duration_s", p.duration_s},
           {"rate_hz", p.rate_hz},
           {"angle_deg", trajectory_to_json(p.angle_deg)},
           {"activation_ta", trajectory_to_json(p.activation_ta)},
           {"activation_gas", trajectory_to_json(p.activation_gas)},
           {"noise_level", p.noise_level},
           {"carrier_hz", p.carrier_hz}};
  if (p.cycle_period_s) doc["cycle_period_s"] = *p.cycle_period_s;
  return json_doc::dump(doc);
}

namespace {

// Inverts one EMG channel: commanded activation -> excitation -> envelope
// level -> carrier modulation, compensating the envelope's delay and its
// second-order smoothing.
class ChannelInverter {
 public:
  ChannelInverter(const Trajectory& act, double shape, const ActivationParams& ap, double mvc, double fs,
                  double lead, double sigma2, double gain)
      : act_(act), shape_(shape), ap_(ap), mvc_(mvc), dt_(1.0 / fs), lead_(lead), sigma2_(sigma2), gain_(gain) {
    d_ = static_cast<double>(ap.delay_samples(fs)) * dt_;
  }

  double modulation(double t) const {
    const double s = t + lead_;
    const double g = level(s);
    const double g2 = (level(s + dt_) - 2.0 * g + level(s - dt_)) / (dt_ * dt_);
    return std::max(0.0, (g - 0.5 * sigma2_ * g2) / gain_);
  }

 private:
  double u(double t) const { return unshape_activation(std::clamp(act_.value(t), 0.0, 1.0), shape_); }
  // Normalized excitation e(t) that makes the recursion reproduce u.
  double level(double t) const {
    const double s = t + d_;
    const double e = (u(s) + ap_.beta1 * u(s - dt_) + ap_.beta2 * u(s - 2.0 * dt_)) / ap_.alpha;
    return e * mvc_;
  }

  const Trajectory& act_;
  double shape_;
  ActivationParams ap_;
  double mvc_, dt_, lead_, sigma2_, gain_, d_ = 0.0;
};

// Steady-state envelope of a unit-amplitude carrier.
double carrier_gain(const FilterSpec& hp, double window_ms, double carrier_hz, double phase) {
  EmgChannel ch(hp, window_ms, 1.0);
  const auto n = static_cast<std::size_t>(std::llround(3.0 * hp.fs));
  const std::size_t tail = static_cast<std::size_t>(std::llround(hp.fs));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / hp.fs;
    const double e = ch.envelope_step(std::sin(2.0 * std::numbers::pi * carrier_hz * t + phase));
    if (i >= n - tail) sum += e;
  }
  return sum / static_cast<double>(tail);
}

double sample_sd(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace

TrialRecording generate_trial(const ModelConfig& config, const SyntheticProfile& profile, std::uint64_t seed) {
  config.validate();
  profile.validate();
  const double fs = profile.rate_hz;
  const double dt = 1.0 / fs;
  const std::size_t n = profile.samples();
  const AnkleModel& model = config.model;
  const PipelineSettings& ps = config.pipeline;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double phase_ta = phase_dist(rng);
  const double phase_gas = phase_dist(rng);

  const FilterSpec hp = design_highpass(fs, ps.highpass_hz, ps.highpass_order);
  const auto w = static_cast<double>(envelope_window(fs, ps.envelope_ms));
  const double tau_g = hp.group_delay(profile.carrier_hz);
  const double lead = 0.5 * (w - 1.0) * dt + tau_g;
  const double sigma2 = (w * w - 1.0) / 12.0 * dt * dt;

  const ChannelInverter ta(profile.activation_ta, model.dorsiflexor.shape_factor, model.activation,
                           ps.mvc.ta.constant, fs, lead, sigma2,
                           carrier_gain(hp, ps.envelope_ms, profile.carrier_hz, phase_ta));
  const ChannelInverter gas(profile.activation_gas, model.plantarflexor.shape_factor, model.activation,
                            ps.mvc.gas.constant, fs, lead, sigma2,
                            carrier_gain(hp, ps.envelope_ms, profile.carrier_hz, phase_gas));

  TrialRecording trial;
  trial.fs = fs;
  trial.time.resize(n);
  trial.emg_ta.resize(n);
  trial.emg_gas.resize(n);
  trial.ankle_angle.resize(n);
  std::vector<double> tau(n), a_ta(n), a_gas(n);
  const double wc = 2.0 * std::numbers::pi * profile.carrier_hz;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    trial.time[i] = t;
    trial.emg_ta[i] = ta.modulation(t) * std::sin(wc * t + phase_ta);
    trial.emg_gas[i] = gas.modulation(t) * std::sin(wc * t + phase_gas);
    const double theta = profile.angle_deg.value(t);
    trial.ankle_angle[i] = theta;
    a_ta[i] = std::clamp(profile.activation_ta.value(t), 0.0, 1.0);
    a_gas[i] = std::clamp(profile.activation_gas.value(t), 0.0, 1.0);
    tau[i] = ankle_torque(a_ta[i], a_gas[i], theta, profile.angle_deg.derivative(t), model);
  }

  std::vector<double> ref = tau;
  if (profile.noise_level > 0.0) {
    std::normal_distribution<double> noise(0.0, profile.noise_level * sample_sd(tau));
    for (double& v : ref) v += noise(rng);
  }
  trial.torque_ref = std::move(ref);

  if (profile.cycle_period_s) {
    const double period = *profile.cycle_period_s;
    std::vector<double> grf(n);
    std::vector<int> event(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = trial.time[i];
      const auto cycle = static_cast<long long>(std::floor(t / period + 1e-9));
      const double phase = t - static_cast<double>(cycle) * period;
      grf[i] = phase < 0.6 * period ? 700.0 : 0.0;
      const auto start = static_cast<std::size_t>(std::llround(static_cast<double>(cycle) * period * fs));
      if (start == i) event[i] = 1;
    }
    trial.grf_z = std::move(grf);
    trial.event = std::move(event);
  }
  trial.extra.push_back({"tau_true", std::move(tau)});
  trial.extra.push_back({"a_ta_true", std::move(a_ta)});
  trial.extra.push_back({"a_gas_true", std::move(a_gas)});
  trial.validate(true);
  return trial;
}

}  // namespace ankle_msk
