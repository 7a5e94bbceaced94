#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ankle_msk/kernels.hpp"
#include "ankle_msk/model_config.hpp"
#include "ankle_msk/trial.hpp"

namespace ankle_msk {

// Free parameters in fixed order. The dorsiflexor's theta_ref / theta_max are
// the plantarflexor's theta_max / theta_ref and are not free.
enum class FitParam {
  plant_f_max,
  plant_l_o,
  plant_r_max,
  plant_theta_ref,
  plant_theta_max,
  dorsi_f_max,
  dorsi_l_o,
  dorsi_r_max,
  dorsi_shape,  // optional
  plant_shape,  // optional
};

std::string_view param_name(FitParam p);
std::vector<FitParam> fit_parameters(bool include_shape);

struct ParamBound {
  double lo = 0.0;
  double hi = 1.0;
};

struct Bounds {
  std::vector<FitParam> params;
  std::vector<ParamBound> ranges;

  // Default search limits; shape factors get (-3, 0] when included.
  static Bounds defaults(bool include_shape = false);
  std::size_t size() const { return params.size(); }
  bool contains(const std::vector<double>& x) const;
  void validate() const;
};

std::vector<double> extract_params(const AnkleModel& model, const std::vector<FitParam>& params);
// Copies `base` and overwrites the free parameters, applying the angle
// interchange to the dorsiflexor.
AnkleModel expand_params(const std::vector<double>& x, const std::vector<FitParam>& params, const AnkleModel& base);

// A trial run once through the signal pipeline and activation dynamics. The
// activations do not depend on the fitted geometry, so they are computed once.
struct PreparedTrial {
  kernels::SampleBuffer samples;
  std::vector<double> u_ta, u_gas;
  std::vector<double> torque_ref;
};

PreparedTrial prepare_trial(const TrialRecording& trial, const ModelConfig& config);

inline constexpr double kPenalty = 1e9;

// Mean squared torque error over every sample of every trial, or kPenalty if
// any sample hits degenerate geometry.
class Objective {
 public:
  Objective(std::vector<PreparedTrial> trials, ModelConfig base, std::vector<FitParam> params);

  double operator()(const std::vector<double>& x) const;
  std::size_t sample_count() const { return n_; }
  const ModelConfig& base() const { return base_; }
  const std::vector<FitParam>& params() const { return params_; }

 private:
  std::vector<PreparedTrial> trials_;
  ModelConfig base_;
  std::vector<FitParam> params_;
  bool shape_free_ = false;
  std::size_t n_ = 0;
};

struct FitConfig {
  int n_starts = 64;
  std::uint64_t seed = 20220711;
  int max_evaluations = 2000;  // per start
  double rel_tolerance = 1e-10;
  unsigned threads = 0;  // 0 = hardware concurrency
  bool fit_shape = false;
  // Optional explicit start points (in parameter units) used before sampling.
  std::vector<std::vector<double>> seeds;
};

struct StartRecord {
  std::vector<double> start;
  std::vector<double> final;
  double start_objective = 0.0;
  double final_objective = 0.0;
  int evaluations = 0;
};

struct FitResult {
  std::vector<FitParam> params;
  std::vector<double> best;
  double objective = 0.0;
  std::size_t best_start = 0;
  std::vector<StartRecord> starts;
  std::uint64_t seed = 0;
  Bounds bounds;
  std::size_t samples = 0;
};

// Latin hypercube in the unit cube: each dimension is split into n strata and
// every stratum is hit exactly once.
std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dims, std::uint64_t seed);

struct LocalResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
};

// Nelder-Mead on the unit box with projection of every trial point onto the
// box. Restarts the simplex around the incumbent after convergence while the
// budget lasts.
LocalResult bounded_simplex(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                            int max_evaluations, double rel_tolerance);

FitResult fit(const Objective& objective, const Bounds& bounds, const FitConfig& config);

// Convenience: prepares the trials, fits, and returns the fitted model config.
FitResult fit_trials(const std::vector<TrialRecording>& trials, const ModelConfig& base, const FitConfig& config);
ModelConfig apply_fit(const FitResult& result, const ModelConfig& base);

std::string dump_fit_report(const FitResult& result, const std::vector<InputDigest>& inputs);

}  // namespace ankle_msk
