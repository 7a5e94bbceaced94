#pragma once

#include <algorithm>
#include <cmath>

#include "ankle_msk/kernels.hpp"

namespace ankle_msk::kernels::detail {

constexpr double kEccentricSlope = 7.56;

// Torque contribution F_m * r of one muscle at one sample.
inline double muscle_torque(const MuscleLane& m, double sin_t, double cos_t, double omega, double a,
                            bool& degenerate) {
  const double cos_off = cos_t * m.cos_theta_max + sin_t * m.sin_theta_max;
  const double sin_diff = m.sin_theta_max * cos_t - m.cos_theta_max * sin_t;
  const double r = m.r_max * cos_off;
  const double p = m.p0 + m.s_r_max * sin_diff;
  if (!(cos_off > 0.0) || !(p > 0.0)) degenerate = true;

  const double l_ce = std::sqrt(p * p + m.thickness2);
  const double cos_phi = p / l_ce;
  const double v = -m.s * r * omega * cos_phi * m.inv_l_o;

  const double x = (m.l_o - l_ce) * m.inv_lo_w;
  const double fl = std::exp(-x * x);
  double fv;
  if (v < 0.0) {
    fv = std::max(0.0, (m.v_max - v) / (m.v_max + m.K * v));
  } else {
    fv = m.N + (m.N - 1.0) * (m.v_max + v) / (kEccentricSlope * m.K * v - m.v_max);
  }
  const double strain = std::max(0.0, (l_ce - m.l_o) * m.inv_lo_eps);
  const double force = (m.f_max * fl * fv * a + m.f_max * strain * strain) * cos_phi;
  return force * r;
}

bool torque_batch_scalar(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                         std::span<double> out);
ErrorSum squared_error_scalar(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                              std::span<const double> reference);

#if defined(ANKLE_MSK_WITH_AVX2)
bool torque_batch_avx2(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                       std::span<double> out);
ErrorSum squared_error_avx2(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                            std::span<const double> reference);
#endif

}  // namespace ankle_msk::kernels::detail
