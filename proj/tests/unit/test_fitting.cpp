#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ankle_msk/errors.hpp"
#include "ankle_msk/fitting.hpp"
#include "ankle_msk/synth.hpp"
#include "support.hpp"

using namespace ankle_msk;

TEST_CASE("latin hypercube hits every stratum once") {
  const auto pts = latin_hypercube(16, 5, 42);
  REQUIRE(pts.size() == 16);
  for (std::size_t d = 0; d < 5; ++d) {
    std::vector<int> hits(16, 0);
    for (const auto& p : pts) {
      REQUIRE(p.size() == 5);
      CHECK(p[d] >= 0.0);
      CHECK(p[d] < 1.0);
      ++hits[static_cast<std::size_t>(p[d] * 16.0)];
    }
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  }
  CHECK(latin_hypercube(16, 5, 42) == pts);
  CHECK(latin_hypercube(16, 5, 43) != pts);
}

TEST_CASE("bounded simplex finds interior and boundary minima") {
  auto bowl = [](std::vector<double> c) {
    return [c](const std::vector<double>& x) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += (i + 1.0) * (x[i] - c[i]) * (x[i] - c[i]);
      return s;
    };
  };
  const LocalResult in = bounded_simplex(bowl({0.3, 0.7, 0.5}), {0.9, 0.1, 0.1}, 3000, 1e-12);
  CHECK(in.x[0] == doctest::Approx(0.3).epsilon(1e-4));
  CHECK(in.x[1] == doctest::Approx(0.7).epsilon(1e-4));
  CHECK(in.evaluations <= 3000);

  const LocalResult edge = bounded_simplex(bowl({1.4, -0.5}), {0.5, 0.5}, 2000, 1e-12);
  CHECK(edge.x[0] == doctest::Approx(1.0));
  CHECK(edge.x[1] == doctest::Approx(0.0));
}

TEST_CASE("dorsiflexor angles follow the plantarflexor") {
  const Bounds b = Bounds::defaults();
  std::vector<double> x = extract_params(AnkleModel::defaults(), b.params);
  CHECK(b.contains(x));
  x[3] = 80.0;   // plant.theta_ref
  x[4] = 120.0;  // plant.theta_max
  const AnkleModel m = expand_params(x, b.params, AnkleModel::defaults());
  CHECK(m.dorsiflexor.theta_ref == 120.0);
  CHECK(m.dorsiflexor.theta_max == 80.0);
  CHECK_NOTHROW(m.validate());
  CHECK(Bounds::defaults(true).size() == 10);
}

namespace {

struct Fixture {
  ModelConfig config;
  std::vector<TrialRecording> trials;
  Fixture() {
    SyntheticProfile p = test_support::small_profile(4.0);
    trials.push_back(generate_trial(config, p, 1));
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "objective is small at the generating parameters") {
  const Bounds b = Bounds::defaults();
  const Objective obj({prepare_trial(trials[0], config)}, config, b.params);
  const double at_truth = obj(extract_params(config.model, b.params));
  // Filter warm-up dominates the residual at the truth, so compare against the
  // reference power and against perturbed parameter sets.
  double power = 0.0;
  for (double v : *trials[0].torque_ref) power += v * v;
  power /= static_cast<double>(trials[0].size());
  CHECK(at_truth < 0.02 * power);
  const std::vector<double> truth = extract_params(config.model, b.params);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    for (double f : {0.8, 1.2}) {
      std::vector<double> off = truth;
      off[k] *= f;
      CHECK(obj(off) > at_truth);
    }
  }
  CHECK(obj.sample_count() == trials[0].size());

  std::vector<double> bad = extract_params(config.model, b.params);
  bad[1] = 0.005;  // plant.l_o
  bad[2] = 0.065;  // plant.r_max
  bad[4] = 70.0;
  CHECK(obj(bad) == kPenalty);
}

TEST_CASE_FIXTURE(Fixture, "single start at the optimum does not move away") {
  const Bounds b = Bounds::defaults();
  const Objective obj({prepare_trial(trials[0], config)}, config, b.params);
  FitConfig fc;
  fc.n_starts = 1;
  fc.max_evaluations = 200;
  fc.seeds = {extract_params(config.model, b.params)};
  const FitResult r = fit(obj, b, fc);
  CHECK(r.objective <= obj(fc.seeds[0]));
}

TEST_CASE_FIXTURE(Fixture, "short fit is deterministic, in bounds and thread-independent") {
  FitConfig fc;
  fc.n_starts = 4;
  fc.max_evaluations = 150;
  fc.threads = 1;
  const FitResult a = fit_trials(trials, config, fc);
  fc.threads = 3;
  const FitResult b = fit_trials(trials, config, fc);
  CHECK(a.best == b.best);
  CHECK(a.objective == b.objective);
  CHECK(a.best_start == b.best_start);
  CHECK(a.bounds.contains(a.best));
  CHECK(a.starts.size() == 4);
  for (const auto& s : a.starts) CHECK(s.final_objective <= s.start_objective);
  const ModelConfig fitted = apply_fit(a, config);
  CHECK_NOTHROW(fitted.validate());
  CHECK(dump_fit_report(a, {}) == dump_fit_report(b, {}));
}

TEST_CASE_FIXTURE(Fixture, "fit needs a reference torque") {
  TrialRecording t = trials[0];
  t.torque_ref.reset();
  CHECK_THROWS_AS(prepare_trial(t, config), InvalidInput);
}

TEST_CASE("bounds validation") {
  Bounds b = Bounds::defaults();
  b.ranges[0] = {10.0, 5.0};
  CHECK_THROWS_AS(b.validate(), InvalidParameter);
}
