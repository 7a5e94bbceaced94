#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

namespace ankle_msk {

// Second-order discrete excitation-to-neural-activation recursion
//   u(t) = alpha e(t-d) - beta1 u(t-1) - beta2 u(t-2)
struct ActivationParams {
  double alpha = 0.9486;
  double beta1 = -0.056;
  double beta2 = 0.000627;
  double delay_ms = 40.0;  // electromechanical delay

  // Roots of z^2 + beta1 z + beta2.
  std::array<std::complex<double>, 2> poles() const;
  double dc_gain() const { return alpha / (1.0 + beta1 + beta2); }
  std::size_t delay_samples(double fs) const;
  void validate() const;
  bool operator==(const ActivationParams&) const = default;
};

// Streaming state for one muscle. The recursion itself runs unclamped; the
// value handed to the shaping stage is clamped to [0, 1].
class NeuralActivation {
 public:
  NeuralActivation() = default;
  NeuralActivation(const ActivationParams& params, double fs);

  struct Output {
    double u;      // clamped to [0, 1]
    double u_raw;  // recursion value before clamping
  };

  Output step(double e_now);
  void reset();
  std::size_t delay() const { return delay_.size(); }

 private:
  ActivationParams params_;
  std::vector<double> delay_;
  std::size_t head_ = 0;
  double u1_ = 0.0;
  double u2_ = 0.0;
};

// (exp(A u) - 1) / (exp(A) - 1). A must lie in (-3, 0]; |A| < 1e-6 returns u.
double shape_activation(double u, double shape_factor);
// Inverse of shape_activation on [0, 1].
double unshape_activation(double a, double shape_factor);
void validate_shape_factor(double shape_factor);

}  // namespace ankle_msk
