#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ankle_msk/activation.hpp"
#include "ankle_msk/model_config.hpp"
#include "ankle_msk/signal_pipeline.hpp"
#include "ankle_msk/trial.hpp"

namespace ankle_msk {

// Causal angular-velocity estimate: backward difference, optionally through a
// 2nd-order Butterworth low-pass. The first sample reports 0.
class VelocityTracker {
 public:
  VelocityTracker() = default;
  VelocityTracker(double fs, double lowpass_hz);

  double step(double theta_deg);
  double smooth(double omega_deg_s);
  void reset();

 private:
  double fs_ = 1.0;
  bool have_last_ = false;
  double last_ = 0.0;
  bool filtered_ = false;
  BiquadCascade lowpass_;
};

struct FrontEndSample {
  double e_ta = 0.0, e_gas = 0.0;
  double u_ta = 0.0, u_gas = 0.0;
  double a_ta = 0.0, a_gas = 0.0;
  double omega = 0.0;  // deg/s
};

// EMG conditioning, activation dynamics and velocity estimation for one
// stream. TA drives the dorsiflexor, GAS the plantarflexor.
class FrontEnd {
 public:
  FrontEnd(const ModelConfig& config, double fs);

  FrontEndSample step(double emg_ta, double emg_gas, double theta_deg);
  // Same, with an externally estimated velocity (offline centered estimator).
  FrontEndSample step_with_velocity(double emg_ta, double emg_gas, double omega_deg_s);
  void reset();
  double fs() const { return fs_; }
  std::size_t clamp_count() const { return ta_.clamp_count() + gas_.clamp_count(); }

 private:
  FrontEndSample activate(double emg_ta, double emg_gas);

  double fs_;
  double shape_dorsi_, shape_plant_;
  EmgChannel ta_, gas_;
  NeuralActivation act_ta_, act_gas_;
  VelocityTracker velocity_;
};

struct ControllerOutput {
  FrontEndSample front;
  double tau = 0.0;  // N m, positive dorsiflexion
};

class TorqueController {
 public:
  TorqueController(const ModelConfig& config, double fs);

  // Throws DegenerateGeometry if the angle is outside the model's geometry.
  ControllerOutput step(double emg_ta, double emg_gas, double theta_deg);
  ControllerOutput step_with_velocity(double emg_ta, double emg_gas, double theta_deg, double omega_deg_s);
  void reset() { front_.reset(); }
  const AnkleModel& model() const { return model_; }
  std::size_t clamp_count() const { return front_.clamp_count(); }

 private:
  AnkleModel model_;
  FrontEnd front_;
};

struct Prediction {
  std::vector<double> tau, a_ta, a_gas, u_ta, u_gas, omega;
  std::size_t clamped = 0;
};

// Offline angular velocity in deg/s from the configured estimator.
std::vector<double> estimate_velocity(std::span<const double> theta_deg, double fs, const PipelineSettings& settings);

// Batch prediction through the same per-sample path the streaming service uses.
Prediction predict_trial(const TrialRecording& trial, const ModelConfig& config);

}  // namespace ankle_msk
