#include "ankle_msk/activation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ankle_msk/errors.hpp"

namespace ankle_msk {

namespace {
constexpr double kLinearShape = 1e-6;
}

std::array<std::complex<double>, 2> ActivationParams::poles() const {
  const std::complex<double> disc = std::sqrt(std::complex<double>(beta1 * beta1 - 4.0 * beta2));
  return {(-beta1 + disc) / 2.0, (-beta1 - disc) / 2.0};
}

std::size_t ActivationParams::delay_samples(double fs) const {
  return static_cast<std::size_t>(std::llround(delay_ms * 1e-3 * fs));
}

void ActivationParams::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta1) || !std::isfinite(beta2)) {
    throw InvalidParameter("activation constants must be finite");
  }
  for (const auto& p : poles()) {
    if (!(std::abs(p) < 1.0)) {
      throw InvalidParameter(fmt::format(
          "activation recursion unstable: pole magnitude {} (beta1={}, beta2={})", std::abs(p), beta1, beta2));
    }
  }
  if (!(delay_ms >= 0.0) || !std::isfinite(delay_ms)) {
    throw InvalidParameter(fmt::format("electromechanical delay must be >= 0 ms, got {}", delay_ms));
  }
}

NeuralActivation::NeuralActivation(const ActivationParams& params, double fs)
    : params_(params), delay_(params.delay_samples(fs), 0.0) {
  params_.validate();
}

NeuralActivation::Output NeuralActivation::step(double e_now) {
  double e_delayed = e_now;
  if (!delay_.empty()) {
    e_delayed = delay_[head_];
    delay_[head_] = e_now;
    head_ = (head_ + 1) % delay_.size();
  }
  const double u = params_.alpha * e_delayed - params_.beta1 * u1_ - params_.beta2 * u2_;
  u2_ = u1_;
  u1_ = u;
  return {std::clamp(u, 0.0, 1.0), u};
}

void NeuralActivation::reset() {
  std::fill(delay_.begin(), delay_.end(), 0.0);
  head_ = 0;
  u1_ = u2_ = 0.0;
}

void validate_shape_factor(double shape_factor) {
  if (!(shape_factor > -3.0 && shape_factor <= 0.0)) {
    throw InvalidParameter(fmt::format("shape factor A must lie in (-3, 0], got {}", shape_factor));
  }
}

double shape_activation(double u, double shape_factor) {
  validate_shape_factor(shape_factor);
  if (std::abs(shape_factor) < kLinearShape) return u;
  return std::expm1(shape_factor * u) / std::expm1(shape_factor);
}

double unshape_activation(double a, double shape_factor) {
  validate_shape_factor(shape_factor);
  if (std::abs(shape_factor) < kLinearShape) return a;
  return std::log1p(a * std::expm1(shape_factor)) / shape_factor;
}

}  // namespace ankle_msk
