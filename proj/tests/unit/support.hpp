#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ankle_msk/synth.hpp"

namespace test_support {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline std::vector<double> random_series(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ankle_msk_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline ankle_msk::Trajectory sines(double offset, std::vector<ankle_msk::Sinusoid> c) {
  ankle_msk::Trajectory t;
  t.offset = offset;
  t.components = std::move(c);
  return t;
}

// Short gait-like profile used across tests.
inline ankle_msk::SyntheticProfile small_profile(double duration = 5.0) {
  ankle_msk::SyntheticProfile p;
  p.duration_s = duration;
  p.rate_hz = 1000.0;
  p.angle_deg = sines(95.0, {{15.0, 0.8, 0.0}, {5.0, 1.6, 1.0}});
  p.activation_ta = sines(0.3, {{0.2, 0.8, 2.0}, {0.08, 2.4, 0.0}});
  p.activation_gas = sines(0.35, {{0.25, 0.8, 0.0}, {0.08, 1.6, 0.5}});
  p.cycle_period_s = 1.25;
  return p;
}

}  // namespace test_support
