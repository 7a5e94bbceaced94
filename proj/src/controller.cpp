#include "ankle_msk/controller.hpp"

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"
#include "ankle_msk/msk_core.hpp"

namespace ankle_msk {

VelocityTracker::VelocityTracker(double fs, double lowpass_hz) : fs_(fs), filtered_(lowpass_hz > 0.0) {
  if (filtered_) lowpass_ = BiquadCascade(design_lowpass(fs, lowpass_hz, 2));
}

double VelocityTracker::step(double theta_deg) {
  const double raw = have_last_ ? (theta_deg - last_) * fs_ : 0.0;
  have_last_ = true;
  last_ = theta_deg;
  return smooth(raw);
}

double VelocityTracker::smooth(double omega_deg_s) { return filtered_ ? lowpass_.step(omega_deg_s) : omega_deg_s; }

void VelocityTracker::reset() {
  have_last_ = false;
  last_ = 0.0;
  lowpass_.reset();
}

FrontEnd::FrontEnd(const ModelConfig& config, double fs)
    : fs_(fs),
      shape_dorsi_(config.model.dorsiflexor.shape_factor),
      shape_plant_(config.model.plantarflexor.shape_factor) {
  config.validate();
  const FilterSpec hp = design_highpass(fs, config.pipeline.highpass_hz, config.pipeline.highpass_order);
  ta_ = EmgChannel(hp, config.pipeline.envelope_ms, config.pipeline.mvc.ta.constant);
  gas_ = EmgChannel(hp, config.pipeline.envelope_ms, config.pipeline.mvc.gas.constant);
  act_ta_ = NeuralActivation(config.model.activation, fs);
  act_gas_ = NeuralActivation(config.model.activation, fs);
  velocity_ = VelocityTracker(fs, config.pipeline.velocity_lowpass_hz);
}

FrontEndSample FrontEnd::activate(double emg_ta, double emg_gas) {
  FrontEndSample s;
  s.e_ta = ta_.step(emg_ta);
  s.e_gas = gas_.step(emg_gas);
  s.u_ta = act_ta_.step(s.e_ta).u;
  s.u_gas = act_gas_.step(s.e_gas).u;
  s.a_ta = shape_activation(s.u_ta, shape_dorsi_);
  s.a_gas = shape_activation(s.u_gas, shape_plant_);
  return s;
}

FrontEndSample FrontEnd::step(double emg_ta, double emg_gas, double theta_deg) {
  FrontEndSample s = activate(emg_ta, emg_gas);
  s.omega = velocity_.step(theta_deg);
  return s;
}

FrontEndSample FrontEnd::step_with_velocity(double emg_ta, double emg_gas, double omega_deg_s) {
  FrontEndSample s = activate(emg_ta, emg_gas);
  s.omega = omega_deg_s;
  return s;
}

void FrontEnd::reset() {
  ta_.reset();
  gas_.reset();
  act_ta_.reset();
  act_gas_.reset();
  velocity_.reset();
}

TorqueController::TorqueController(const ModelConfig& config, double fs) : model_(config.model), front_(config, fs) {}

ControllerOutput TorqueController::step(double emg_ta, double emg_gas, double theta_deg) {
  ControllerOutput out;
  out.front = front_.step(emg_ta, emg_gas, theta_deg);
  out.tau = ankle_torque(out.front.a_ta, out.front.a_gas, theta_deg, out.front.omega, model_);
  return out;
}

ControllerOutput TorqueController::step_with_velocity(double emg_ta, double emg_gas, double theta_deg,
                                                      double omega_deg_s) {
  ControllerOutput out;
  out.front = front_.step_with_velocity(emg_ta, emg_gas, omega_deg_s);
  out.tau = ankle_torque(out.front.a_ta, out.front.a_gas, theta_deg, out.front.omega, model_);
  return out;
}

std::vector<double> estimate_velocity(std::span<const double> theta, double fs, const PipelineSettings& settings) {
  const std::size_t n = theta.size();
  std::vector<double> omega(n, 0.0);
  if (settings.velocity == VelocityEstimator::backward) {
    VelocityTracker tracker(fs, settings.velocity_lowpass_hz);
    for (std::size_t i = 0; i < n; ++i) omega[i] = tracker.step(theta[i]);
    return omega;
  }
  if (n >= 2) {
    omega[0] = (theta[1] - theta[0]) * fs;
    omega[n - 1] = (theta[n - 1] - theta[n - 2]) * fs;
    for (std::size_t i = 1; i + 1 < n; ++i) omega[i] = (theta[i + 1] - theta[i - 1]) * fs / 2.0;
  }
  if (settings.velocity_lowpass_hz > 0.0) {
    VelocityTracker smoother(fs, settings.velocity_lowpass_hz);
    for (auto& w : omega) w = smoother.smooth(w);
  }
  return omega;
}

Prediction predict_trial(const TrialRecording& trial, const ModelConfig& config) {
  trial.validate(true);
  TorqueController controller(config, trial.fs);
  const std::size_t n = trial.size();
  Prediction p;
  for (auto* v : {&p.tau, &p.a_ta, &p.a_gas, &p.u_ta, &p.u_gas, &p.omega}) v->reserve(n);

  const bool causal = config.pipeline.velocity == VelocityEstimator::backward;
  std::vector<double> omega;
  if (!causal) omega = estimate_velocity(trial.ankle_angle, trial.fs, config.pipeline);

  for (std::size_t i = 0; i < n; ++i) {
    const ControllerOutput o =
        causal ? controller.step(trial.emg_ta[i], trial.emg_gas[i], trial.ankle_angle[i])
               : controller.step_with_velocity(trial.emg_ta[i], trial.emg_gas[i], trial.ankle_angle[i], omega[i]);
    p.tau.push_back(o.tau);
    p.a_ta.push_back(o.front.a_ta);
    p.a_gas.push_back(o.front.a_gas);
    p.u_ta.push_back(o.front.u_ta);
    p.u_gas.push_back(o.front.u_gas);
    p.omega.push_back(o.front.omega);
  }
  p.clamped = controller.clamp_count();
  return p;
}

}  // namespace ankle_msk
