#include <doctest.h>

#include <cmath>
#include <random>

#include "ankle_msk/fitting.hpp"
#include "ankle_msk/kernels.hpp"
#include "ankle_msk/msk_core.hpp"
#include "support.hpp"

using namespace ankle_msk;
using namespace ankle_msk::kernels;

namespace {

struct Batch {
  std::vector<double> theta, omega, a_d, a_p;
  SampleBuffer buf;
};

Batch random_batch(std::size_t n, std::uint64_t seed) {
  Batch b;
  b.theta = test_support::random_series(n, seed, 70.0, 130.0);
  b.omega = test_support::random_series(n, seed + 1, -400.0, 400.0);
  b.a_d = test_support::random_series(n, seed + 2, 0.0, 1.0);
  b.a_p = test_support::random_series(n, seed + 3, 0.0, 1.0);
  b.buf = SampleBuffer::from_angles(b.theta, b.omega, b.a_d, b.a_p);
  return b;
}

AnkleModel random_model(std::mt19937_64& rng) {
  const Bounds bounds = Bounds::defaults(true);
  std::vector<double> x;
  for (const auto& r : bounds.ranges) x.push_back(std::uniform_real_distribution<double>(r.lo, r.hi)(rng));
  return expand_params(x, bounds.params, AnkleModel::defaults());
}

}  // namespace

TEST_CASE("scalar kernel matches the reference torque") {
  const AnkleModel m = AnkleModel::defaults();
  const Batch b = random_batch(1001, 11);
  std::vector<double> out(b.theta.size());
  REQUIRE(torque_batch(prepare_lane(m.dorsiflexor), prepare_lane(m.plantarflexor), b.buf.view(), out, Isa::scalar));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double want = ankle_torque(b.a_d[i], b.a_p[i], b.theta[i], b.omega[i], m);
    CHECK(std::abs(out[i] - want) <= 1e-9 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("AVX2 kernel agrees with the scalar kernel") {
  if (!isa_available(Isa::avx2)) {
    MESSAGE("AVX2 not available on this CPU");
    return;
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    AnkleModel m = random_model(rng);
    if (trial % 3 == 0) m.plantarflexor.phi_ref = 15.0;
    const auto d = prepare_lane(m.dorsiflexor);
    const auto p = prepare_lane(m.plantarflexor);
    for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 1003u}) {
      const Batch b = random_batch(n, 100 + trial);
      std::vector<double> s(n), v(n);
      const bool ok_s = torque_batch(d, p, b.buf.view(), s, Isa::scalar);
      const bool ok_v = torque_batch(d, p, b.buf.view(), v, Isa::avx2);
      CHECK(ok_s == ok_v);
      if (!ok_s) continue;
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(s[i] - v[i]) <= 1e-12 * std::max(1.0, std::abs(s[i])));

      const auto ref = test_support::random_series(n, 7, -50.0, 50.0);
      const ErrorSum es = squared_error(d, p, b.buf.view(), ref, Isa::scalar);
      const ErrorSum ev = squared_error(d, p, b.buf.view(), ref, Isa::avx2);
      CHECK(ev.sse == doctest::Approx(es.sse).epsilon(1e-12));
    }
  }
}

TEST_CASE("squared error is the sum of squared residuals") {
  const AnkleModel m = AnkleModel::defaults();
  const Batch b = random_batch(257, 21);
  const auto d = prepare_lane(m.dorsiflexor);
  const auto p = prepare_lane(m.plantarflexor);
  std::vector<double> tau(257);
  torque_batch(d, p, b.buf.view(), tau, Isa::scalar);
  const auto ref = test_support::random_series(257, 9, -20.0, 20.0);
  double sse = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) sse += (tau[i] - ref[i]) * (tau[i] - ref[i]);
  for (Isa isa : {Isa::scalar, active_isa()}) {
    CHECK(squared_error(d, p, b.buf.view(), ref, isa).sse == doctest::Approx(sse).epsilon(1e-12));
  }
}

TEST_CASE("degenerate samples are flagged by every kernel") {
  AnkleModel m = AnkleModel::defaults();
  m.plantarflexor.l_o = 0.005;
  m.plantarflexor.r_max = 0.06;
  const auto d = prepare_lane(m.dorsiflexor);
  const auto p = prepare_lane(m.plantarflexor);
  const Batch b = random_batch(50, 31);
  std::vector<double> out(50);
  for (Isa isa : {Isa::scalar, Isa::avx2}) {
    if (!isa_available(isa)) continue;
    CHECK_FALSE(torque_batch(d, p, b.buf.view(), out, isa));
    CHECK(squared_error(d, p, b.buf.view(), out, isa).degenerate);
  }
}

TEST_CASE("ISA override") {
  set_isa_override(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  set_isa_override(std::nullopt);
  CHECK(isa_available(active_isa()));
  CHECK(isa_name(Isa::avx2) == "avx2");
}
