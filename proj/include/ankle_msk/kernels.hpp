#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ankle_msk/msk_core.hpp"

// Batched torque evaluation over many samples for a fixed parameter set. This
// is the inner loop of the parameter fit. The scalar kernel is the reference;
// vector variants must agree with it to rounding and are picked at runtime.
namespace ankle_msk::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
// Best available ISA, unless an override is set.
Isa active_isa();
void set_isa_override(std::optional<Isa> isa);

// Per-muscle constants folded so that the per-sample work needs only
// sin/cos of the joint angle.
struct MuscleLane {
  double s = 1.0;
  double f_max = 0.0;
  double l_o = 0.0;
  double inv_l_o = 0.0;
  double r_max = 0.0;
  double s_r_max = 0.0;
  double sin_theta_max = 0.0;
  double cos_theta_max = 1.0;
  double p0 = 0.0;          // l_o cos(phi_ref) - s r_max sin(theta_max - theta_ref)
  double thickness2 = 0.0;  // (l_o sin(phi_ref))^2
  double inv_lo_w = 0.0;
  double inv_lo_eps = 0.0;
  double v_max = -10.0;
  double K = 5.0;
  double N = 1.5;
};

MuscleLane prepare_lane(const MuscleParams& mp);

// Structure-of-arrays sample block. omega is in rad/s.
struct SampleView {
  std::span<const double> sin_theta;
  std::span<const double> cos_theta;
  std::span<const double> omega;
  std::span<const double> a_dorsi;
  std::span<const double> a_plant;

  std::size_t size() const { return sin_theta.size(); }
};

struct SampleBuffer {
  std::vector<double> sin_theta, cos_theta, omega, a_dorsi, a_plant;

  static SampleBuffer from_angles(std::span<const double> theta_deg, std::span<const double> omega_deg_s,
                                  std::span<const double> a_dorsi, std::span<const double> a_plant);
  SampleView view() const { return {sin_theta, cos_theta, omega, a_dorsi, a_plant}; }
};

struct ErrorSum {
  double sse = 0.0;
  bool degenerate = false;
};

// Writes torque per sample; returns false if any sample has degenerate
// geometry (non-positive moment arm or fiber projection).
bool torque_batch(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                  std::span<double> out, Isa isa = active_isa());

// Sum over samples of (torque - reference)^2.
ErrorSum squared_error(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                       std::span<const double> reference, Isa isa = active_isa());

}  // namespace ankle_msk::kernels
