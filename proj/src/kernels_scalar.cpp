#include "gspot/kernels.hpp"

// Reference kernels. These are the ground truth the SIMD variants are
// checked against; keep them obviously correct.
namespace gspot::kern {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scal_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sqdws_scalar(double ux, double uy, const double* gx, const double* gy,
                    const double* w, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = ux - gx[i];
    const double dy = uy - gy[i];
    acc += (dx * dx + dy * dy) * w[i];
  }
  return acc;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{dot_scalar, axpy_scalar, scal_scalar, sum_scalar, sqdws_scalar};
  return ops;
}

}  // namespace gspot::kern
