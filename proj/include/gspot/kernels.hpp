#pragma once

#include <cstddef>

// Data-parallel inner-loop kernels. Every kernel has a scalar reference
// implementation and an AVX2 variant; the active backend is selected once at
// runtime (cpuid + GLYPHSPOT_KERNELS env override) and the two are
// equivalence-tested against each other. All higher-level linear algebra
// (conv im2col products, graph projections, loss reductions) funnels through
// this surface.
namespace gspot::kern {

enum class Backend { Scalar, Avx2 };

struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  // sum_i ((ux - gx[i])^2 + (uy - gy[i])^2) * w[i]
  double (*sq_dist_weighted_sum)(double, double, const double*, const double*,
                                 const double*, std::size_t);
};

const Ops& scalar_ops();
const Ops& avx2_ops();  // valid only if supports_avx2()

bool supports_avx2();
Backend active();
const char* backend_name();
void force(Backend b);      // throws std::runtime_error if unsupported
void reset_to_default();    // cpuid + GLYPHSPOT_KERNELS

inline double dot(const double* a, const double* b, std::size_t n);
inline void axpy(double alpha, const double* x, double* y, std::size_t n);
inline void scal(double alpha, double* x, std::size_t n);
inline double sum(const double* x, std::size_t n);
inline double sq_dist_weighted_sum(double ux, double uy, const double* gx,
                                   const double* gy, const double* w, std::size_t n);

namespace detail {
const Ops& current();
}

inline double dot(const double* a, const double* b, std::size_t n) {
  return detail::current().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  detail::current().axpy(alpha, x, y, n);
}
inline void scal(double alpha, double* x, std::size_t n) {
  detail::current().scal(alpha, x, n);
}
inline double sum(const double* x, std::size_t n) {
  return detail::current().sum(x, n);
}
inline double sq_dist_weighted_sum(double ux, double uy, const double* gx,
                                   const double* gy, const double* w, std::size_t n) {
  return detail::current().sq_dist_weighted_sum(ux, uy, gx, gy, w, n);
}

// ---- matrix products built on dot/axpy ----
// C (MxN) = or += A (MxK) * B (KxN)
void matmul_nn(const double* A, const double* B, double* C, int M, int K, int N,
               bool accumulate = false);
// C (MxN) = or += A^T (A is KxM) * B (KxN)
void matmul_tn(const double* A, const double* B, double* C, int M, int K, int N,
               bool accumulate = false);
// C (MxN) = or += A (MxK) * B^T (B is NxK)
void matmul_nt(const double* A, const double* B, double* C, int M, int K, int N,
               bool accumulate = false);

}  // namespace gspot::kern
