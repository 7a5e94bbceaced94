#include "ankle_msk/kernels.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"
#include "kernels_internal.hpp"

namespace ankle_msk::kernels {

namespace {

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

// -1 = no override, otherwise static_cast<int>(Isa).
std::atomic<int> g_override{-1};

Isa detect() {
#if defined(ANKLE_MSK_WITH_AVX2)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
  return Isa::scalar;
}

void check_sizes(const SampleView& s, std::size_t other) {
  const std::size_t n = s.size();
  if (s.cos_theta.size() != n || s.omega.size() != n || s.a_dorsi.size() != n || s.a_plant.size() != n ||
      other != n) {
    throw InvalidInput("sample block columns differ in length");
  }
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  if (isa == Isa::scalar) return true;
  return detect() == Isa::avx2;
}

Isa active_isa() {
  static const Isa detected = detect();
  const int forced = g_override.load(std::memory_order_relaxed);
  return forced < 0 ? detected : static_cast<Isa>(forced);
}

void set_isa_override(std::optional<Isa> isa) {
  if (isa && !isa_available(*isa)) {
    throw InvalidInput(fmt::format("ISA {} is not available on this CPU", isa_name(*isa)));
  }
  g_override.store(isa ? static_cast<int>(*isa) : -1, std::memory_order_relaxed);
}

MuscleLane prepare_lane(const MuscleParams& mp) {
  MuscleLane m;
  m.s = mp.s;
  m.f_max = mp.f_max;
  m.l_o = mp.l_o;
  m.inv_l_o = 1.0 / mp.l_o;
  m.r_max = mp.r_max;
  m.s_r_max = mp.s * mp.r_max;
  m.sin_theta_max = std::sin(deg2rad(mp.theta_max));
  m.cos_theta_max = std::cos(deg2rad(mp.theta_max));
  const double phi_ref = deg2rad(mp.phi_ref);
  m.p0 = mp.l_o * std::cos(phi_ref) - mp.s * mp.r_max * std::sin(deg2rad(mp.theta_max - mp.theta_ref));
  const double thickness = mp.l_o * std::sin(phi_ref);
  m.thickness2 = thickness * thickness;
  m.inv_lo_w = 1.0 / (mp.l_o * mp.w);
  m.inv_lo_eps = 1.0 / (mp.l_o * mp.eps_pe);
  m.v_max = mp.v_max;
  m.K = mp.K;
  m.N = mp.N;
  return m;
}

SampleBuffer SampleBuffer::from_angles(std::span<const double> theta_deg, std::span<const double> omega_deg_s,
                                       std::span<const double> a_dorsi, std::span<const double> a_plant) {
  const std::size_t n = theta_deg.size();
  if (omega_deg_s.size() != n || a_dorsi.size() != n || a_plant.size() != n) {
    throw InvalidInput("sample columns differ in length");
  }
  SampleBuffer b;
  b.sin_theta.resize(n);
  b.cos_theta.resize(n);
  b.omega.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = deg2rad(theta_deg[i]);
    b.sin_theta[i] = std::sin(t);
    b.cos_theta[i] = std::cos(t);
    b.omega[i] = deg2rad(omega_deg_s[i]);
  }
  b.a_dorsi.assign(a_dorsi.begin(), a_dorsi.end());
  b.a_plant.assign(a_plant.begin(), a_plant.end());
  return b;
}

namespace detail {

bool torque_batch_scalar(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& s,
                         std::span<double> out) {
  bool degenerate = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = muscle_torque(dorsi, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_dorsi[i], degenerate) -
             muscle_torque(plant, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_plant[i], degenerate);
  }
  return !degenerate;
}

ErrorSum squared_error_scalar(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& s,
                              std::span<const double> reference) {
  ErrorSum acc;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double tau =
        muscle_torque(dorsi, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_dorsi[i], acc.degenerate) -
        muscle_torque(plant, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_plant[i], acc.degenerate);
    const double e = tau - reference[i];
    acc.sse += e * e;
  }
  return acc;
}

}  // namespace detail

bool torque_batch(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                  std::span<double> out, Isa isa) {
  check_sizes(samples, out.size());
#if defined(ANKLE_MSK_WITH_AVX2)
  if (isa == Isa::avx2) return detail::torque_batch_avx2(dorsi, plant, samples, out);
#endif
  (void)isa;
  return detail::torque_batch_scalar(dorsi, plant, samples, out);
}

ErrorSum squared_error(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& samples,
                       std::span<const double> reference, Isa isa) {
  check_sizes(samples, reference.size());
#if defined(ANKLE_MSK_WITH_AVX2)
  if (isa == Isa::avx2) return detail::squared_error_avx2(dorsi, plant, samples, reference);
#endif
  (void)isa;
  return detail::squared_error_scalar(dorsi, plant, samples, reference);
}

}  // namespace ankle_msk::kernels
