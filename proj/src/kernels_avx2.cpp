#include "gspot/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define GSPOT_X86 1
#else
#define GSPOT_X86 0
#endif

#if GSPOT_X86
#include <immintrin.h>

namespace gspot::kern {
namespace {

inline double hsum256(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum256(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scal_avx2(double alpha, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double out = hsum256(acc);
  for (; i < n; ++i) out += x[i];
  return out;
}

double sqdws_avx2(double ux, double uy, const double* gx, const double* gy,
                  const double* w, std::size_t n) {
  const __m256d vux = _mm256_set1_pd(ux);
  const __m256d vuy = _mm256_set1_pd(uy);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(vux, _mm256_loadu_pd(gx + i));
    const __m256d dy = _mm256_sub_pd(vuy, _mm256_loadu_pd(gy + i));
    const __m256d d2 = _mm256_fmadd_pd(dy, dy, _mm256_mul_pd(dx, dx));
    acc = _mm256_fmadd_pd(d2, _mm256_loadu_pd(w + i), acc);
  }
  double out = hsum256(acc);
  for (; i < n; ++i) {
    const double dx = ux - gx[i];
    const double dy = uy - gy[i];
    out += (dx * dx + dy * dy) * w[i];
  }
  return out;
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{dot_avx2, axpy_avx2, scal_avx2, sum_avx2, sqdws_avx2};
  return ops;
}

}  // namespace gspot::kern

#else  // !GSPOT_X86

namespace gspot::kern {
// Non-x86 build: avx2_ops() is never selected; alias the reference kernels
// so the symbol exists.
const Ops& avx2_ops() { return scalar_ops(); }
}  // namespace gspot::kern

#endif
