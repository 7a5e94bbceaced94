#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ankle_msk/model_config.hpp"
#include "ankle_msk/trial.hpp"

namespace ankle_msk {

struct Sinusoid {
  double amplitude = 0.0;
  double freq_hz = 0.0;
  double phase_rad = 0.0;
  bool operator==(const Sinusoid&) const = default;
};

// Either offset + sum of sinusoids, or piecewise-linear knots (time s, value)
// held constant outside the first and last knot.
struct Trajectory {
  double offset = 0.0;
  std::vector<Sinusoid> components;
  std::vector<std::pair<double, double>> knots;

  double value(double t) const;
  double derivative(double t) const;
  bool operator==(const Trajectory&) const = default;
};

struct SyntheticProfile {
  double duration_s = 10.0;
  double rate_hz = 1000.0;
  Trajectory angle_deg;
  Trajectory activation_ta;
  Trajectory activation_gas;
  double noise_level = 0.0;  // torque noise SD as a fraction of the torque SD
  double carrier_hz = 100.0;
  std::optional<double> cycle_period_s;  // adds event and grf_z columns

  std::size_t samples() const;
  // Activations within [0, 1] and angle within [70, 130] deg on the sample grid.
  void validate() const;
  bool operator==(const SyntheticProfile&) const = default;
};

SyntheticProfile parse_profile(const std::string& text, const std::string& origin);
SyntheticProfile load_profile(const std::filesystem::path& path);
std::string dump_profile(const SyntheticProfile& profile);

// Trial whose processed EMG reproduces the profile's activations through the
// configured pipeline. Ground truth goes into the extra columns tau_true,
// a_ta_true and a_gas_true; ankle_torque_ref is tau_true plus noise.
TrialRecording generate_trial(const ModelConfig& config, const SyntheticProfile& profile, std::uint64_t seed);

}  // namespace ankle_msk
