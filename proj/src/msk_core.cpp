#include "ankle_msk/msk_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"

namespace ankle_msk {

namespace {

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Eccentric branch denominator constant.
constexpr double kEccentricSlope = 7.56;

}  // namespace

void MuscleParams::validate() const {
  auto require = [](bool ok, const char* what, double v) {
    if (!ok) throw InvalidParameter(fmt::format("muscle parameter {} invalid: {}", what, v));
  };
  require(f_max > 0.0 && std::isfinite(f_max), "f_max", f_max);
  require(l_o > 0.0 && std::isfinite(l_o), "l_o", l_o);
  require(r_max > 0.0 && std::isfinite(r_max), "r_max", r_max);
  require(std::isfinite(theta_max), "theta_max", theta_max);
  require(std::isfinite(theta_ref), "theta_ref", theta_ref);
  require(phi_ref >= 0.0 && phi_ref < 90.0, "phi_ref", phi_ref);
  require(l_slack >= 0.0 && std::isfinite(l_slack), "l_slack", l_slack);
  require(w > 0.0, "w", w);
  require(K > 0.0, "K", K);
  require(eps_pe > 0.0, "eps_pe", eps_pe);
  require(N > 1.0, "N", N);
  require(v_max < 0.0, "v_max", v_max);
  require(s == 1.0 || s == -1.0, "s", s);
  validate_shape_factor(shape_factor);
}

AnkleModel AnkleModel::defaults() {
  AnkleModel m;
  m.plantarflexor.f_max = 4800.0;
  m.plantarflexor.l_o = 0.0402;
  m.plantarflexor.r_max = 0.0375;
  m.plantarflexor.theta_ref = 70.0;
  m.plantarflexor.theta_max = 112.0;
  m.plantarflexor.s = 1.0;

  m.dorsiflexor.f_max = 1800.0;
  m.dorsiflexor.l_o = 0.065;
  m.dorsiflexor.r_max = 0.0449;
  m.dorsiflexor.theta_ref = 112.0;
  m.dorsiflexor.theta_max = 70.0;
  m.dorsiflexor.s = -1.0;
  return m;
}

void AnkleModel::validate() const {
  dorsiflexor.validate();
  plantarflexor.validate();
  activation.validate();
  if (dorsiflexor.theta_ref != plantarflexor.theta_max || dorsiflexor.theta_max != plantarflexor.theta_ref) {
    throw InvalidParameter(fmt::format(
        "dorsiflexor angles (ref {}, max {}) must interchange the plantarflexor's (ref {}, max {})",
        dorsiflexor.theta_ref, dorsiflexor.theta_max, plantarflexor.theta_ref, plantarflexor.theta_max));
  }
  if (dorsiflexor.s != -plantarflexor.s) {
    throw InvalidParameter("dorsiflexor and plantarflexor must have opposite action signs");
  }
}

double moment_arm(double theta_deg, const MuscleParams& mp) {
  const double offset = theta_deg - mp.theta_max;
  if (!(std::abs(offset) < 90.0)) {
    throw DegenerateGeometry(fmt::format(
        "angle {} deg is {} deg from the moment-arm peak at {} deg", theta_deg, offset, mp.theta_max));
  }
  return mp.r_max * std::cos(deg2rad(offset));
}

double mtu_length(double theta_deg, const MuscleParams& mp) {
  const double phi_ref = deg2rad(mp.phi_ref);
  return mp.l_o * std::cos(phi_ref) + mp.l_slack +
         mp.s * mp.r_max *
             (std::sin(deg2rad(mp.theta_max - theta_deg)) - std::sin(deg2rad(mp.theta_max - mp.theta_ref)));
}

FiberState fiber_state(double theta_deg, double omega_deg_s, const MuscleParams& mp) {
  FiberState fs;
  fs.l_mt = mtu_length(theta_deg, mp);
  const double projection = fs.l_mt - mp.l_slack;  // rigid tendon: l_se = l_slack
  if (!(projection > 0.0)) {
    throw DegenerateGeometry(fmt::format(
        "fiber projection {} m at {} deg is not positive (fully slack fiber)", projection, theta_deg));
  }
  const double thickness = mp.l_o * std::sin(deg2rad(mp.phi_ref));
  fs.l_ce = std::hypot(projection, thickness);
  const double phi = std::asin(thickness / fs.l_ce);
  fs.phi = rad2deg(phi);
  const double v_mt = -mp.s * moment_arm(theta_deg, mp) * deg2rad(omega_deg_s);
  fs.v_ce = std::cos(phi) * v_mt;
  return fs;
}

double force_length(double l_ce, const MuscleParams& mp) {
  const double x = (mp.l_o - l_ce) / (mp.l_o * mp.w);
  return std::exp(-x * x);
}

double force_velocity(double v, const MuscleParams& mp) {
  if (v < 0.0) {
    return std::max(0.0, (mp.v_max - v) / (mp.v_max + mp.K * v));
  }
  return mp.N + (mp.N - 1.0) * (mp.v_max + v) / (kEccentricSlope * mp.K * v - mp.v_max);
}

double passive_force(double l_ce, const MuscleParams& mp) {
  if (l_ce <= mp.l_o) return 0.0;
  const double strain = (l_ce - mp.l_o) / (mp.l_o * mp.eps_pe);
  return mp.f_max * strain * strain;
}

double muscle_force(double activation, const FiberState& fiber, const MuscleParams& mp) {
  const double active =
      mp.f_max * force_length(fiber.l_ce, mp) * force_velocity(fiber.v_ce / mp.l_o, mp) * activation;
  return (active + passive_force(fiber.l_ce, mp)) * std::cos(deg2rad(fiber.phi));
}

double ankle_torque(double a_dorsi, double a_plant, double theta_deg, double omega_deg_s,
                    const AnkleModel& model) {
  const FiberState dorsi = fiber_state(theta_deg, omega_deg_s, model.dorsiflexor);
  const FiberState plant = fiber_state(theta_deg, omega_deg_s, model.plantarflexor);
  return muscle_force(a_dorsi, dorsi, model.dorsiflexor) * moment_arm(theta_deg, model.dorsiflexor) -
         muscle_force(a_plant, plant, model.plantarflexor) * moment_arm(theta_deg, model.plantarflexor);
}

}  // namespace ankle_msk
