#pragma once

#include "ankle_msk/activation.hpp"

namespace ankle_msk {

// Angles are the shank-foot angle in degrees (neutral stance ~90, increasing
// with plantarflexion). Positive joint torque is dorsiflexion.
struct MuscleParams {
  double f_max = 1000.0;     // N
  double l_o = 0.05;         // m
  double r_max = 0.04;       // m
  double theta_max = 90.0;   // deg, angle of maximum moment arm
  double theta_ref = 90.0;   // deg, angle where l_ce = l_o
  double phi_ref = 0.0;      // deg, pennation at theta_ref
  double l_slack = 0.0;      // m
  double w = 0.56;           // force-length width
  double v_max = -10.0;      // l_o/s, signed (shortening negative)
  double K = 5.0;            // force-velocity curvature
  double N = 1.5;            // eccentric force ceiling
  double eps_pe = 0.56;      // passive reference strain
  double s = 1.0;            // +1 plantarflexor, -1 dorsiflexor
  double shape_factor = -1.0;  // activation nonlinearity A

  void validate() const;
  bool operator==(const MuscleParams&) const = default;
};

struct FiberState {
  double l_ce = 0.0;  // m
  double v_ce = 0.0;  // m/s, negative when shortening
  double phi = 0.0;   // deg
  double l_mt = 0.0;  // m
};

struct AnkleModel {
  MuscleParams dorsiflexor;
  MuscleParams plantarflexor;
  ActivationParams activation;

  // Reference subject values with the fixed Hill constants.
  static AnkleModel defaults();
  void validate() const;
  bool operator==(const AnkleModel&) const = default;
};

double moment_arm(double theta_deg, const MuscleParams& mp);
double mtu_length(double theta_deg, const MuscleParams& mp);
FiberState fiber_state(double theta_deg, double omega_deg_s, const MuscleParams& mp);
double force_length(double l_ce, const MuscleParams& mp);
double force_velocity(double v_ce_lo_per_s, const MuscleParams& mp);
double passive_force(double l_ce, const MuscleParams& mp);
double muscle_force(double activation, const FiberState& fiber, const MuscleParams& mp);

double ankle_torque(double a_dorsi, double a_plant, double theta_deg, double omega_deg_s,
                    const AnkleModel& model);

}  // namespace ankle_msk
