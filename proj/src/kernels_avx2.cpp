// AVX2 + FMA variant of the batched torque kernel. Compiled with -mavx2 -mfma
// and only called after a runtime CPU check.

#include <immintrin.h>

#include "kernels_internal.hpp"

namespace ankle_msk::kernels::detail {

namespace {

// Cephes-style exp for x <= 0: x = n ln2 + r, exp(r) by a Pade form, then
// scale by 2^n through the exponent bits. Inputs below -700 are clamped.
inline __m256d exp_nonpositive(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878E-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300E-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910E-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042E-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192E-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766E-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000009E0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);

  x = _mm256_max_pd(x, _mm256_set1_pd(-700.0));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, x);
  r = _mm256_fnmadd_pd(n, c2, r);
  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d px = _mm256_fmadd_pd(p0, rr, p1);
  px = _mm256_fmadd_pd(px, rr, p2);
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_fmadd_pd(q0, rr, q1);
  qx = _mm256_fmadd_pd(qx, rr, q2);
  qx = _mm256_fmadd_pd(qx, rr, q3);
  const __m256d er = _mm256_fmadd_pd(two, _mm256_div_pd(px, _mm256_sub_pd(qx, px)), one);

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(er, _mm256_castsi256_pd(bits));
}

struct LaneVec {
  __m256d s, f_max, l_o, inv_l_o, r_max, s_r_max, sin_tmax, cos_tmax, p0, thickness2, inv_lo_w, inv_lo_eps,
      v_max, K, N, ecc_k;

  explicit LaneVec(const MuscleLane& m)
      : s(_mm256_set1_pd(m.s)),
        f_max(_mm256_set1_pd(m.f_max)),
        l_o(_mm256_set1_pd(m.l_o)),
        inv_l_o(_mm256_set1_pd(m.inv_l_o)),
        r_max(_mm256_set1_pd(m.r_max)),
        s_r_max(_mm256_set1_pd(m.s_r_max)),
        sin_tmax(_mm256_set1_pd(m.sin_theta_max)),
        cos_tmax(_mm256_set1_pd(m.cos_theta_max)),
        p0(_mm256_set1_pd(m.p0)),
        thickness2(_mm256_set1_pd(m.thickness2)),
        inv_lo_w(_mm256_set1_pd(m.inv_lo_w)),
        inv_lo_eps(_mm256_set1_pd(m.inv_lo_eps)),
        v_max(_mm256_set1_pd(m.v_max)),
        K(_mm256_set1_pd(m.K)),
        N(_mm256_set1_pd(m.N)),
        ecc_k(_mm256_set1_pd(kEccentricSlope * m.K)) {}
};

// Returns F_m * r for four samples; ORs degenerate lanes into `bad`. Operation
// order follows the scalar kernel so the two differ only through exp.
inline __m256d muscle_torque4(const LaneVec& m, __m256d st, __m256d ct, __m256d om, __m256d a, __m256d& bad) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sign = _mm256_set1_pd(-0.0);

  const __m256d cos_off = _mm256_add_pd(_mm256_mul_pd(ct, m.cos_tmax), _mm256_mul_pd(st, m.sin_tmax));
  const __m256d sin_diff = _mm256_sub_pd(_mm256_mul_pd(m.sin_tmax, ct), _mm256_mul_pd(m.cos_tmax, st));
  const __m256d r = _mm256_mul_pd(m.r_max, cos_off);
  const __m256d p = _mm256_add_pd(m.p0, _mm256_mul_pd(m.s_r_max, sin_diff));
  bad = _mm256_or_pd(bad, _mm256_cmp_pd(cos_off, zero, _CMP_NGT_UQ));
  bad = _mm256_or_pd(bad, _mm256_cmp_pd(p, zero, _CMP_NGT_UQ));

  const __m256d l_ce = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(p, p), m.thickness2));
  const __m256d cos_phi = _mm256_div_pd(p, l_ce);
  const __m256d v = _mm256_mul_pd(
      _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(_mm256_xor_pd(m.s, sign), r), om), cos_phi), m.inv_l_o);

  const __m256d x = _mm256_mul_pd(_mm256_sub_pd(m.l_o, l_ce), m.inv_lo_w);
  const __m256d fl = exp_nonpositive(_mm256_mul_pd(_mm256_xor_pd(x, sign), x));

  const __m256d conc = _mm256_max_pd(
      _mm256_div_pd(_mm256_sub_pd(m.v_max, v), _mm256_add_pd(m.v_max, _mm256_mul_pd(m.K, v))), zero);
  const __m256d ecc = _mm256_add_pd(
      m.N, _mm256_div_pd(_mm256_mul_pd(_mm256_sub_pd(m.N, one), _mm256_add_pd(m.v_max, v)),
                         _mm256_sub_pd(_mm256_mul_pd(m.ecc_k, v), m.v_max)));
  const __m256d fv = _mm256_blendv_pd(ecc, conc, _mm256_cmp_pd(v, zero, _CMP_LT_OQ));

  const __m256d strain = _mm256_max_pd(_mm256_mul_pd(_mm256_sub_pd(l_ce, m.l_o), m.inv_lo_eps), zero);
  const __m256d active = _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(m.f_max, fl), fv), a);
  const __m256d passive = _mm256_mul_pd(_mm256_mul_pd(m.f_max, strain), strain);
  const __m256d force = _mm256_mul_pd(_mm256_add_pd(active, passive), cos_phi);
  return _mm256_mul_pd(force, r);
}

inline __m256d torque4(const LaneVec& d, const LaneVec& pl, const SampleView& s, std::size_t i, __m256d& bad) {
  const __m256d st = _mm256_loadu_pd(s.sin_theta.data() + i);
  const __m256d ct = _mm256_loadu_pd(s.cos_theta.data() + i);
  const __m256d om = _mm256_loadu_pd(s.omega.data() + i);
  const __m256d ad = _mm256_loadu_pd(s.a_dorsi.data() + i);
  const __m256d ap = _mm256_loadu_pd(s.a_plant.data() + i);
  return _mm256_sub_pd(muscle_torque4(d, st, ct, om, ad, bad), muscle_torque4(pl, st, ct, om, ap, bad));
}

}  // namespace

bool torque_batch_avx2(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& s,
                       std::span<double> out) {
  const LaneVec d(dorsi), p(plant);
  __m256d bad = _mm256_setzero_pd();
  const std::size_t n = s.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out.data() + i, torque4(d, p, s, i, bad));
  bool degenerate = _mm256_movemask_pd(bad) != 0;
  for (; i < n; ++i) {
    out[i] = muscle_torque(dorsi, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_dorsi[i], degenerate) -
             muscle_torque(plant, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_plant[i], degenerate);
  }
  return !degenerate;
}

ErrorSum squared_error_avx2(const MuscleLane& dorsi, const MuscleLane& plant, const SampleView& s,
                            std::span<const double> reference) {
  const LaneVec d(dorsi), p(plant);
  __m256d bad = _mm256_setzero_pd();
  __m256d acc = _mm256_setzero_pd();
  const std::size_t n = s.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = _mm256_sub_pd(torque4(d, p, s, i, bad), _mm256_loadu_pd(reference.data() + i));
    acc = _mm256_fmadd_pd(e, e, acc);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  ErrorSum out;
  out.sse = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  out.degenerate = _mm256_movemask_pd(bad) != 0;
  for (; i < n; ++i) {
    const double tau =
        muscle_torque(dorsi, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_dorsi[i], out.degenerate) -
        muscle_torque(plant, s.sin_theta[i], s.cos_theta[i], s.omega[i], s.a_plant[i], out.degenerate);
    const double e = tau - reference[i];
    out.sse += e * e;
  }
  return out;
}

}  // namespace ankle_msk::kernels::detail
