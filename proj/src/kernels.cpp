#include "gspot/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace gspot::kern {
namespace {

Backend g_backend = Backend::Scalar;
bool g_initialized = false;

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend default_backend() {
  const char* env = std::getenv("GLYPHSPOT_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_has_avx2())
        throw std::runtime_error("GLYPHSPOT_KERNELS=avx2 but CPU lacks AVX2/FMA");
      return Backend::Avx2;
    }
    throw std::runtime_error("GLYPHSPOT_KERNELS must be 'scalar' or 'avx2'");
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

void ensure_init() {
  if (!g_initialized) {
    g_backend = default_backend();
    g_initialized = true;
  }
}

}  // namespace

bool supports_avx2() { return cpu_has_avx2(); }

Backend active() {
  ensure_init();
  return g_backend;
}

const char* backend_name() {
  return active() == Backend::Avx2 ? "avx2" : "scalar";
}

void force(Backend b) {
  if (b == Backend::Avx2 && !cpu_has_avx2())
    throw std::runtime_error("kern::force: AVX2/FMA not supported on this CPU");
  g_backend = b;
  g_initialized = true;
}

void reset_to_default() {
  g_backend = default_backend();
  g_initialized = true;
}

namespace detail {
const Ops& current() {
  ensure_init();
  return g_backend == Backend::Avx2 ? avx2_ops() : scalar_ops();
}
}  // namespace detail

void matmul_nn(const double* A, const double* B, double* C, int M, int K, int N,
               bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < static_cast<int64_t>(M) * N; ++i) C[i] = 0.0;
  for (int i = 0; i < M; ++i) {
    const double* arow = A + static_cast<int64_t>(i) * K;
    double* crow = C + static_cast<int64_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const double a = arow[k];
      if (a != 0.0) axpy(a, B + static_cast<int64_t>(k) * N, crow, static_cast<std::size_t>(N));
    }
  }
}

void matmul_tn(const double* A, const double* B, double* C, int M, int K, int N,
               bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < static_cast<int64_t>(M) * N; ++i) C[i] = 0.0;
  for (int k = 0; k < K; ++k) {
    const double* arow = A + static_cast<int64_t>(k) * M;
    const double* brow = B + static_cast<int64_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      const double a = arow[i];
      if (a != 0.0) axpy(a, brow, C + static_cast<int64_t>(i) * N, static_cast<std::size_t>(N));
    }
  }
}

void matmul_nt(const double* A, const double* B, double* C, int M, int K, int N,
               bool accumulate) {
  for (int i = 0; i < M; ++i) {
    const double* arow = A + static_cast<int64_t>(i) * K;
    double* crow = C + static_cast<int64_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const double v = dot(arow, B + static_cast<int64_t>(j) * K, static_cast<std::size_t>(K));
      if (accumulate)
        crow[j] += v;
      else
        crow[j] = v;
    }
  }
}

}  // namespace gspot::kern
