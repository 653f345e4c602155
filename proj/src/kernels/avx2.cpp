// AVX2 (256-bit, 4 x double) kernels. Compiled with -mavx2 only; no FMA so
// every lane rounds exactly like the scalar reference. Tails use the scalar
// code.

#include "taskgrasp/kernels/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

namespace taskgrasp::kernels::avx2 {
namespace {

constexpr std::size_t kLane = 4;

// Cephes-style exp: range reduction by ln 2 then a (3,4) rational
// approximation on [-ln2/2, ln2/2]. Valid for x in [-700, 0].
inline __m256d exp_pd(__m256d x) {
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
  const __m256d half = _mm256_set1_pd(0.5);

  const __m256d fx = _mm256_floor_pd(_mm256_add_pd(_mm256_mul_pd(x, log2e), half));
  x = _mm256_sub_pd(x, _mm256_mul_pd(fx, c1));
  x = _mm256_sub_pd(x, _mm256_mul_pd(fx, c2));
  const __m256d xx = _mm256_mul_pd(x, x);

  __m256d px = _mm256_add_pd(_mm256_mul_pd(p0, xx), p1);
  px = _mm256_add_pd(_mm256_mul_pd(px, xx), p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_add_pd(_mm256_mul_pd(q0, xx), q1);
  qx = _mm256_add_pd(_mm256_mul_pd(qx, xx), q2);
  qx = _mm256_add_pd(_mm256_mul_pd(qx, xx), q3);

  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_add_pd(one, _mm256_mul_pd(two, r));

  // 2^n from the exponent bits.
  const __m128i n32 = _mm256_cvtpd_epi32(fx);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  return _mm256_mul_pd(r, _mm256_castsi256_pd(n64));
}

inline __m256d abs_pd(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

}  // namespace

void fuse_gaussian(double* mean, double* var, const double* meas, const double* meas_var,
                   std::size_t n) {
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const __m256d m = _mm256_loadu_pd(mean + i);
    const __m256d v = _mm256_loadu_pd(var + i);
    const __m256d ms = _mm256_loadu_pd(meas + i);
    const __m256d vs = _mm256_loadu_pd(meas_var + i);
    const __m256d denom = _mm256_add_pd(v, vs);
    const __m256d num = _mm256_add_pd(_mm256_mul_pd(m, vs), _mm256_mul_pd(ms, v));
    _mm256_storeu_pd(mean + i, _mm256_div_pd(num, denom));
    _mm256_storeu_pd(var + i, _mm256_div_pd(_mm256_mul_pd(v, vs), denom));
  }
  scalar::fuse_gaussian(mean + i, var + i, meas + i, meas_var + i, n - i);
}

void mixture_density(const Gaussian2* comps, std::size_t k, const double* x0, const double* x1,
                     double* out, std::size_t n) {
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d neg_half = _mm256_set1_pd(-0.5);
  const __m256d cutoff = _mm256_set1_pd(-700.0);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const __m256d a = _mm256_loadu_pd(x0 + i);
    const __m256d b = _mm256_loadu_pd(x1 + i);
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t c = 0; c < k; ++c) {
      const Gaussian2& g = comps[c];
      const __m256d d0 = _mm256_sub_pd(a, _mm256_set1_pd(g.mean0));
      const __m256d d1 = _mm256_sub_pd(b, _mm256_set1_pd(g.mean1));
      __m256d q = _mm256_mul_pd(_mm256_mul_pd(d0, d0), _mm256_set1_pd(g.inv00));
      q = _mm256_add_pd(
          q, _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(two, d0), d1), _mm256_set1_pd(g.inv01)));
      q = _mm256_add_pd(q, _mm256_mul_pd(_mm256_mul_pd(d1, d1), _mm256_set1_pd(g.inv11)));
      const __m256d e = _mm256_mul_pd(neg_half, q);
      const __m256d keep = _mm256_cmp_pd(e, cutoff, _CMP_GE_OQ);
      const __m256d val =
          _mm256_mul_pd(_mm256_set1_pd(g.coeff), exp_pd(_mm256_max_pd(e, cutoff)));
      acc = _mm256_add_pd(acc, _mm256_and_pd(keep, val));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  scalar::mixture_density(comps, k, x0 + i, x1 + i, out + i, n - i);
}

void footprint_depth(const double* x, const double* y, const double* z, std::size_t n,
                     const Footprint& fp, double* out) {
  const double* r = fp.rot;
  const __m256d ox = _mm256_set1_pd(fp.origin[0]);
  const __m256d oy = _mm256_set1_pd(fp.origin[1]);
  const __m256d oz = _mm256_set1_pd(fp.origin[2]);
  const __m256d hw = _mm256_set1_pd(fp.half_width);
  const __m256d hh = _mm256_set1_pd(fp.half_height);
  const __m256d nan = _mm256_set1_pd(std::nan(""));
  __m256d rr[9];
  for (int j = 0; j < 9; ++j) rr[j] = _mm256_set1_pd(r[j]);

  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x + i), ox);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y + i), oy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(z + i), oz);
    const __m256d lx = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(rr[0], dx), _mm256_mul_pd(rr[3], dy)), _mm256_mul_pd(rr[6], dz));
    const __m256d ly = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(rr[1], dx), _mm256_mul_pd(rr[4], dy)), _mm256_mul_pd(rr[7], dz));
    const __m256d lz = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(rr[2], dx), _mm256_mul_pd(rr[5], dy)), _mm256_mul_pd(rr[8], dz));
    const __m256d in_y = _mm256_cmp_pd(abs_pd(ly), hw, _CMP_LE_OQ);
    const __m256d in_z = _mm256_cmp_pd(abs_pd(lz), hh, _CMP_LE_OQ);
    _mm256_storeu_pd(out + i, _mm256_blendv_pd(nan, lx, _mm256_and_pd(in_y, in_z)));
  }
  scalar::footprint_depth(x + i, y + i, z + i, n - i, fp, out + i);
}

}  // namespace taskgrasp::kernels::avx2

#else

namespace taskgrasp::kernels::avx2 {
// Non-x86 builds route everything to the scalar path; dispatch never selects
// these.
void fuse_gaussian(double* mean, double* var, const double* meas, const double* meas_var,
                   std::size_t n) {
  scalar::fuse_gaussian(mean, var, meas, meas_var, n);
}
void mixture_density(const Gaussian2* comps, std::size_t k, const double* x0, const double* x1,
                     double* out, std::size_t n) {
  scalar::mixture_density(comps, k, x0, x1, out, n);
}
void footprint_depth(const double* x, const double* y, const double* z, std::size_t n,
                     const Footprint& fp, double* out) {
  scalar::footprint_depth(x, y, z, n, fp, out);
}
}  // namespace taskgrasp::kernels::avx2

#endif
