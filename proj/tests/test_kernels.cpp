#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "gspot/kernels.hpp"
#include "gspot/rng.hpp"

using namespace gspot;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

bool close_rel(double a, double b, double tol) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= tol * scale;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree on random inputs") {
  if (!kern::supports_avx2()) {
    MESSAGE("AVX2 not supported on this CPU; equivalence suite skipped");
    return;
  }
  const kern::Ops& sc = kern::scalar_ops();
  const kern::Ops& vx = kern::avx2_ops();
  Rng rng(1234);
  // odd lengths exercise the remainder loops
  for (size_t n : {1u, 3u, 4u, 7u, 8u, 17u, 64u, 129u, 1000u}) {
    auto a = random_vec(n, rng);
    auto b = random_vec(n, rng);
    CHECK(close_rel(sc.dot(a.data(), b.data(), n), vx.dot(a.data(), b.data(), n), 1e-12));
    CHECK(close_rel(sc.sum(a.data(), n), vx.sum(a.data(), n), 1e-12));

    auto y1 = random_vec(n, rng);
    auto y2 = y1;
    sc.axpy(0.37, a.data(), y1.data(), n);
    vx.axpy(0.37, a.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(close_rel(y1[i], y2[i], 1e-12));

    auto z1 = random_vec(n, rng);
    auto z2 = z1;
    sc.scal(-1.75, z1.data(), n);
    vx.scal(-1.75, z2.data(), n);
    for (size_t i = 0; i < n; ++i) CHECK(z1[i] == z2[i]);

    auto gx = random_vec(n, rng, 0.0, 1.0);
    auto gy = random_vec(n, rng, 0.0, 1.0);
    auto w = random_vec(n, rng, 0.0, 1.0);
    CHECK(close_rel(sc.sq_dist_weighted_sum(0.3, 0.7, gx.data(), gy.data(), w.data(), n),
                    vx.sq_dist_weighted_sum(0.3, 0.7, gx.data(), gy.data(), w.data(), n),
                    1e-12));
  }
}

TEST_CASE("backend selection") {
  kern::reset_to_default();
  kern::force(kern::Backend::Scalar);
  CHECK(std::string(kern::backend_name()) == "scalar");
  if (kern::supports_avx2()) {
    kern::force(kern::Backend::Avx2);
    CHECK(std::string(kern::backend_name()) == "avx2");
  }
  kern::reset_to_default();
}

TEST_CASE("matmul variants match naive triple loops") {
  Rng rng(99);
  const int M = 7, K = 5, N = 9;
  auto A = random_vec(static_cast<size_t>(M) * K, rng);
  auto B = random_vec(static_cast<size_t>(K) * N, rng);
  auto At = std::vector<double>(static_cast<size_t>(K) * M);
  auto Bt = std::vector<double>(static_cast<size_t>(N) * K);
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) At[k * M + i] = A[i * K + k];
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < N; ++j) Bt[j * K + k] = B[k * N + j];

  std::vector<double> ref(static_cast<size_t>(M) * N, 0.0);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < K; ++k) ref[i * N + j] += A[i * K + k] * B[k * N + j];

  std::vector<double> c1(static_cast<size_t>(M) * N), c2 = c1, c3 = c1;
  kern::matmul_nn(A.data(), B.data(), c1.data(), M, K, N);
  kern::matmul_tn(At.data(), B.data(), c2.data(), M, K, N);
  kern::matmul_nt(A.data(), Bt.data(), c3.data(), M, K, N);
  for (size_t i = 0; i < ref.size(); ++i) {
    CHECK(close_rel(c1[i], ref[i], 1e-12));
    CHECK(close_rel(c2[i], ref[i], 1e-12));
    CHECK(close_rel(c3[i], ref[i], 1e-12));
  }

  // accumulate mode adds on top
  kern::matmul_nn(A.data(), B.data(), c1.data(), M, K, N, /*accumulate=*/true);
  for (size_t i = 0; i < ref.size(); ++i) CHECK(close_rel(c1[i], 2.0 * ref[i], 1e-12));
}

TEST_CASE("rng determinism and uniform bounds") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform(0.25, 0.75);
    CHECK(u >= 0.25);
    CHECK(u < 0.75);
  }
}
