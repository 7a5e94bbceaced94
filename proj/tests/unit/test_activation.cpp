#include <doctest.h>

#include <cmath>

#include "ankle_msk/activation.hpp"
#include "ankle_msk/errors.hpp"

using namespace ankle_msk;

TEST_CASE("recursion poles and steady state") {
  const ActivationParams p;
  const auto poles = p.poles();
  double m0 = std::abs(poles[0]), m1 = std::abs(poles[1]);
  if (m0 < m1) std::swap(m0, m1);
  CHECK(m0 == doctest::Approx(0.040529964).epsilon(1e-7));
  CHECK(m1 == doctest::Approx(0.015470036).epsilon(1e-7));
  CHECK(p.dc_gain() == doctest::Approx(1.004205893).epsilon(1e-8));
}

TEST_CASE("unit step settles above one before clamping") {
  NeuralActivation act(ActivationParams{}, 1000.0);
  NeuralActivation::Output o{};
  for (int i = 0; i < 200; ++i) o = act.step(1.0);
  CHECK(o.u_raw == doctest::Approx(1.004205893).epsilon(1e-9));
  CHECK(o.u == 1.0);
}

TEST_CASE("impulse appears after exactly the delay") {
  for (double delay_ms : {0.0, 10.0, 40.0, 100.0}) {
    ActivationParams p;
    p.delay_ms = delay_ms;
    NeuralActivation act(p, 1000.0);
    const auto d = static_cast<int>(delay_ms);
    CHECK(act.delay() == static_cast<std::size_t>(d));
    for (int i = 0; i < d + 5; ++i) {
      const auto o = act.step(i == 0 ? 1.0 : 0.0);
      if (i < d) {
        CHECK(o.u_raw == 0.0);
      } else if (i == d) {
        CHECK(o.u_raw == doctest::Approx(p.alpha));
      }
    }
  }
}

TEST_CASE("delay rounds to whole samples at the control rate") {
  ActivationParams p;
  p.delay_ms = 40.0;
  CHECK(p.delay_samples(1000.0) == 40);
  CHECK(p.delay_samples(2000.0) == 80);
  CHECK(p.delay_samples(100.0) == 4);
}

TEST_CASE("reset returns to rest") {
  NeuralActivation act(ActivationParams{}, 1000.0);
  for (int i = 0; i < 100; ++i) act.step(0.7);
  act.reset();
  for (int i = 0; i < 100; ++i) CHECK(act.step(0.0).u_raw == 0.0);
}

TEST_CASE("unstable recursion is rejected") {
  ActivationParams p;
  p.beta1 = -2.5;
  CHECK_THROWS_AS(p.validate(), InvalidParameter);
  CHECK_THROWS_AS(NeuralActivation(p, 1000.0), InvalidParameter);
  p = {};
  p.delay_ms = -1.0;
  CHECK_THROWS_AS(p.validate(), InvalidParameter);
}

TEST_CASE("shape function fixtures") {
  CHECK(shape_activation(0.5, -1.0) == doctest::Approx(0.622459331).epsilon(1e-9));
  CHECK(shape_activation(0.0, -2.0) == 0.0);
  CHECK(shape_activation(1.0, -2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(shape_activation(0.3, 0.0) == 0.3);
  CHECK(shape_activation(0.3, -1e-9) == 0.3);
  CHECK_THROWS_AS(shape_activation(0.5, -3.0), InvalidParameter);
  CHECK_THROWS_AS(shape_activation(0.5, 0.5), InvalidParameter);
}

TEST_CASE("shape function is monotone, concave and invertible") {
  for (double A : {-2.999, -2.0, -1.0, -0.1, -1e-3}) {
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
      const double u = i / 100.0;
      const double a = shape_activation(u, A);
      CHECK(a > prev);
      CHECK(a >= u - 1e-15);
      CHECK(unshape_activation(a, A) == doctest::Approx(u).epsilon(1e-10));
      prev = a;
    }
  }
}
