#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "gspot/gpm.hpp"
#include "gspot/kernels.hpp"
#include "gspot/nn.hpp"
#include "gspot/rng.hpp"
#include "gspot/tensor.hpp"
#include "gspot/transforms.hpp"

using namespace gspot;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double fd(Tensor& t, int64_t i, const std::function<double()>& f, double h = 1e-5) {
  double orig = t[i];
  t[i] = orig + h;
  double lp = f();
  t[i] = orig - h;
  double lm = f();
  t[i] = orig;
  return (lp - lm) / (2.0 * h);
}

// random per-channel distributions (positive, unit mass)
Tensor random_maps(int s, int k, Rng& rng) {
  Tensor m({s, s, k});
  for (int ch = 0; ch < k; ++ch) {
    double mass = 0;
    for (int p = 0; p < s * s; ++p) {
      double v = rng.uniform(0.01, 1.0);
      m[static_cast<int64_t>(p) * k + ch] = v;
      mass += v;
    }
    for (int p = 0; p < s * s; ++p) m[static_cast<int64_t>(p) * k + ch] /= mass;
  }
  return m;
}

double proj(const Tensor& y, const Tensor& r) { return kern::dot(y.data(), r.data(), y.numel()); }

}  // namespace

TEST_CASE("landmark net maps a 70x70xD patch to 35x35xK unit-mass channels") {
  Rng rng(31);
  gpm::GpmNet net;
  net.init(6, 6, 16, rng);
  Tensor h = randn({70, 70, 6}, rng);
  gpm::GpmNet::Cache cache;
  Tensor m = net.forward(h, cache);
  REQUIRE(m.ndim() == 3);
  CHECK(m.dim(0) == 35);
  CHECK(m.dim(1) == 35);
  CHECK(m.dim(2) == 16);
  for (int ch = 0; ch < 16; ++ch) {
    double mass = 0;
    for (int p = 0; p < 35 * 35; ++p) {
      double v = m[static_cast<int64_t>(p) * 16 + ch];
      CHECK(v >= 0.0);
      mass += v;
    }
    CHECK(std::abs(mass - 1.0) < 1e-5);
  }
  CHECK_THROWS(net.forward(randn({12, 10, 6}, rng), cache));
}

TEST_CASE("landmark net width is independent of the input depth") {
  Rng rng(45);
  gpm::GpmNet net;
  net.init(1, 16, 8, rng);  // raw glyph images as single-channel patches
  Tensor h = randn({70, 70, 1}, rng);
  gpm::GpmNet::Cache cache;
  Tensor m = net.forward(h, cache);
  CHECK(m.dim(0) == 35);
  CHECK(m.dim(2) == 8);
  CHECK(net.conv1.cout == 16);
}

TEST_CASE("soft-argmax of a one-hot map returns that cell's coordinates") {
  Tensor m({35, 35, 2});
  m.zero_();
  m.at(10, 20, 0) = 1.0;
  m.at(0, 34, 1) = 1.0;
  auto c = gpm::soft_argmax(m);
  CHECK(c[0].x == doctest::Approx(20.0 / 34.0).epsilon(1e-12));
  CHECK(c[0].y == doctest::Approx(10.0 / 34.0).epsilon(1e-12));
  CHECK(c[1].x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c[1].y == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("soft-argmax of a uniform map is the patch center") {
  Tensor m({9, 9, 3});
  m.fill(1.0 / 81.0);
  for (const Vec2& c : gpm::soft_argmax(m)) {
    CHECK(c.x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.y == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("soft-argmax backward matches finite differences") {
  Rng rng(32);
  Tensor m = random_maps(7, 2, rng);
  std::vector<Vec2> dc{{0.7, -1.3}, {0.2, 0.9}};
  Tensor dm = gpm::soft_argmax_backward(m, dc);
  auto loss = [&]() {
    auto c = gpm::soft_argmax(m);
    double acc = 0;
    for (size_t r = 0; r < c.size(); ++r) acc += dc[r].x * c[r].x + dc[r].y * c[r].y;
    return acc;
  };
  for (int64_t i = 0; i < m.numel(); ++i) CHECK(rel_err(dm[i], fd(m, i, loss)) < 1e-8);
}

TEST_CASE("hard-argmax takes the first maximum on ties") {
  Tensor m({3, 3, 1});
  m.zero_();
  m.at(1, 0, 0) = 0.5;
  m.at(2, 2, 0) = 0.5;
  auto c = gpm::hard_argmax(m);
  CHECK(c[0].x == 0.0);
  CHECK(c[0].y == 0.5);
}

TEST_CASE("landmark feature extraction: exact cells, constants, midpoints") {
  Rng rng(33);
  Tensor h = randn({5, 5, 3}, rng);

  // exact grid coordinate reads the row exactly
  Tensor f = gpm::extract_landmark_features(h, {{2.0 / 4.0, 3.0 / 4.0}});
  for (int c = 0; c < 3; ++c) CHECK(f.at(0, c) == h.at(3, 2, c));

  // constant patch yields the constant at any coordinate
  Tensor flat({5, 5, 2});
  flat.fill(1.75);
  Tensor fc = gpm::extract_landmark_features(flat, {{0.33, 0.77}, {0.0, 1.0}});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) CHECK(fc.at(r, c) == doctest::Approx(1.75).epsilon(1e-12));

  // midpoint between two horizontal neighbors averages them
  Tensor fm = gpm::extract_landmark_features(h, {{1.5 / 4.0, 2.0 / 4.0}});
  for (int c = 0; c < 3; ++c)
    CHECK(fm.at(0, c) == doctest::Approx(0.5 * (h.at(2, 1, c) + h.at(2, 2, c))).epsilon(1e-12));

  CHECK_THROWS(gpm::extract_landmark_features(randn({4, 5, 3}, rng), {{0.5, 0.5}}));
}

TEST_CASE("landmark feature extraction gradients match finite differences") {
  Rng rng(34);
  Tensor h = randn({6, 6, 4}, rng);
  std::vector<Vec2> coords{{0.23, 0.71}, {0.55, 0.12}, {0.9, 0.42}};
  Tensor r = randn({3, 4}, rng);

  Tensor dh(h.shape());
  dh.zero_();
  std::vector<Vec2> dc;
  gpm::extract_landmark_features_backward(h, coords, r, &dh, &dc);

  auto loss = [&]() { return proj(gpm::extract_landmark_features(h, coords), r); };
  for (int64_t i = 0; i < h.numel(); ++i) CHECK(rel_err(dh[i], fd(h, i, loss)) < 1e-8);

  for (size_t j = 0; j < coords.size(); ++j) {
    auto fd_coord = [&](double Vec2::* axis) {
      const double orig = coords[j].*axis;
      const double h_step = 1e-6;
      coords[j].*axis = orig + h_step;
      double lp = loss();
      coords[j].*axis = orig - h_step;
      double lm = loss();
      coords[j].*axis = orig;
      return (lp - lm) / (2.0 * h_step);
    };
    CHECK(rel_err(dc[j].x, fd_coord(&Vec2::x)) < 1e-6);
    CHECK(rel_err(dc[j].y, fd_coord(&Vec2::y)) < 1e-6);
  }
}

TEST_CASE("alignment of two separated unit masses under identity is 0.09") {
  const int s = 21, k = 3;
  Tensor m({s, s, k}), mhat({s, s, k});
  m.zero_();
  mhat.zero_();
  for (int ch = 0; ch < k; ++ch) {
    m.at(4, 4, ch) = 1.0;      // (0.2, 0.2)
    mhat.at(10, 4, ch) = 1.0;  // (0.2, 0.5)
  }
  CHECK(gpm::alignment_loss(m, mhat, Transform::identity()) ==
        doctest::Approx(0.09).epsilon(1e-12));
  CHECK(gpm::alignment_loss_quadratic(m, mhat, Transform::identity()) ==
        doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("alignment vanishes when the second map sits at the transformed landmark") {
  const int s = 21;
  Transform t;
  t.translation = {2.0 / 20.0, 1.0 / 20.0};
  Tensor m({s, s, 1}), mhat({s, s, 1});
  m.zero_();
  mhat.zero_();
  m.at(4, 4, 0) = 1.0;   // (0.2, 0.2)
  mhat.at(5, 6, 0) = 1.0;  // (0.3, 0.25) = t.apply((0.2, 0.2))
  CHECK(gpm::alignment_loss(m, mhat, t) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(gpm::alignment_loss_quadratic(m, mhat, t)) < 1e-12);
}

TEST_CASE("linear decomposition matches the quadratic oracle on random triples") {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const int s = 6 + static_cast<int>(rng.uniform_int(5));
    const int k = 1 + static_cast<int>(rng.uniform_int(4));
    Tensor m = random_maps(s, k, rng);
    Tensor mhat = random_maps(s, k, rng);
    TransformRanges ranges;
    Transform t = sample_transform(ranges, rng.next_u64());
    const double quad = gpm::alignment_loss_quadratic(m, mhat, t);
    const double lin = gpm::alignment_loss(m, mhat, t);
    CHECK(rel_err(lin, quad) < 1e-6);
  }
}

TEST_CASE("alignment loss rejects channels off unit mass") {
  Rng rng(36);
  Tensor m = random_maps(8, 2, rng);
  Tensor mhat = random_maps(8, 2, rng);
  for (int p = 0; p < 64; ++p) m[static_cast<int64_t>(p) * 2] *= 1.5;
  CHECK_THROWS(gpm::alignment_loss(m, mhat, Transform::identity()));
  // the quadratic oracle carries no such constraint
  CHECK(gpm::alignment_loss_quadratic(m, mhat, Transform::identity()) >= 0.0);
}

TEST_CASE("alignment gradients match finite differences") {
  Rng rng(37);
  Tensor m = random_maps(7, 2, rng);
  Tensor mhat = random_maps(7, 2, rng);
  Transform t;
  t.rotation = 0.4;
  t.translation = {0.05, -0.1};
  t.scaling = 1.15;

  Tensor dm, dmhat;
  gpm::alignment_loss(m, mhat, t, &dm, &dmhat);
  auto loss = [&]() { return gpm::alignment_loss(m, mhat, t); };
  for (int64_t i = 0; i < m.numel(); ++i) {
    CHECK(rel_err(dm[i], fd(m, i, loss)) < 1e-7);
    CHECK(rel_err(dmhat[i], fd(mhat, i, loss)) < 1e-7);
  }
}

TEST_CASE("diversity is zero for separated landmarks, K-1 for collapsed ones") {
  const int s = 8, k = 4;
  Tensor sep({s, s, k});
  sep.zero_();
  sep.at(0, 0, 0) = 1.0;
  sep.at(0, 4, 1) = 1.0;
  sep.at(4, 0, 2) = 1.0;
  sep.at(4, 4, 3) = 1.0;
  CHECK(gpm::diversity_loss(sep, nullptr, 2) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor col({s, s, k});
  col.zero_();
  for (int ch = 0; ch < k; ++ch) col.at(3, 3, ch) = 1.0;
  CHECK(gpm::diversity_loss(col, nullptr, 2) == doctest::Approx(k - 1.0).epsilon(1e-12));
}

TEST_CASE("diversity of uniform 8x8 maps pooled 2x2 is K-1") {
  const int k = 5;
  Tensor m({8, 8, k});
  m.fill(1.0 / 64.0);
  CHECK(gpm::diversity_loss(m, nullptr, 2) == doctest::Approx(k - 1.0).epsilon(1e-12));
}

TEST_CASE("diversity stays within [0, K-1] on random maps") {
  Rng rng(38);
  for (int trial = 0; trial < 100; ++trial) {
    const int s = 5 + static_cast<int>(rng.uniform_int(31));
    const int k = 1 + static_cast<int>(rng.uniform_int(16));
    Tensor m = random_maps(s, k, rng);
    const double v = gpm::diversity_loss(m);
    CHECK(v >= -1e-12);
    CHECK(v <= k - 1.0 + 1e-12);
  }
}

TEST_CASE("diversity subgradient matches finite differences away from ties") {
  Rng rng(39);
  Tensor m = random_maps(8, 3, rng);
  Tensor dm;
  gpm::diversity_loss(m, &dm, 4);
  auto loss = [&]() { return gpm::diversity_loss(m, nullptr, 4); };
  for (int64_t i = 0; i < m.numel(); ++i) CHECK(std::abs(dm[i] - fd(m, i, loss, 1e-7)) < 1e-5);
}

TEST_CASE("pooled cell indices on the padded 35-grid") {
  auto cells = gpm::pooled_cell_of({{0.0, 0.0}, {1.0, 1.0}, {0.5, 0.5}}, 35, 4);
  REQUIRE(cells.size() == 3);
  CHECK(cells[0] == 0);
  CHECK(cells[1] == 8 * 9 + 8);
  CHECK(cells[2] == 4 * 9 + 4);
}

TEST_CASE("landmark net input gradient matches finite differences") {
  Rng rng(40);
  gpm::GpmNet net;
  net.init(3, 3, 2, rng);
  Tensor h = randn({8, 8, 3}, rng, 0.5);
  gpm::GpmNet::Cache cache;
  Tensor m = net.forward(h, cache);
  Tensor r = randn(m.shape(), rng);
  auto loss = [&]() {
    gpm::GpmNet::Cache c;
    return proj(net.forward(h, c), r);
  };
  nn::Sgd::zero_grads(net.params());
  Tensor dh = net.backward(r, cache);
  for (int64_t i = 0; i < h.numel(); ++i) CHECK(rel_err(dh[i], fd(h, i, loss)) < 1e-5);
}

TEST_CASE("unsupervised step parameter gradients match finite differences") {
  Rng rng(41);
  gpm::GpmNet net;
  net.init(4, 4, 2, rng);
  Tensor h = randn({8, 8, 4}, rng, 0.7);
  TransformRanges ranges;
  const double lambda = 0.5;
  const uint64_t seed = 777;

  auto params = net.params();
  nn::Sgd::zero_grads(params);
  gpm::GpmStepResult res = gpm::gpm_train_step(h, net, ranges, lambda, seed);
  CHECK(res.loss == doctest::Approx(res.align + lambda * res.div).epsilon(1e-12));
  CHECK(res.div >= 0.0);
  CHECK(res.div <= 1.0 + 1e-12);  // K-1 with K=2

  // snapshot analytic grads, then probe every parameter
  std::vector<Tensor> analytic;
  for (auto& p : params) analytic.push_back(*p.grad);
  auto loss = [&]() { return gpm::gpm_train_step(h, net, ranges, lambda, seed).loss; };
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = *params[pi].value;
    for (int64_t i = 0; i < value.numel(); ++i) {
      INFO(params[pi].name, "[", i, "]");
      CHECK(rel_err(analytic[pi][i], fd(value, i, loss)) < 1e-4);
    }
  }
}

TEST_CASE("step losses are deterministic in the seed and reject negative lambda") {
  Rng rng(42);
  gpm::GpmNet net;
  net.init(3, 3, 2, rng);
  Tensor h = randn({8, 8, 3}, rng);
  TransformRanges ranges;
  auto a = gpm::gpm_train_step(h, net, ranges, 0.25, 99);
  auto b = gpm::gpm_train_step(h, net, ranges, 0.25, 99);
  CHECK(a.loss == b.loss);
  CHECK(a.align == b.align);
  CHECK_THROWS(gpm::gpm_train_step(h, net, ranges, -0.1, 99));
}

TEST_CASE("equivariance displacement is zero under the identity transform") {
  Rng rng(43);
  gpm::GpmNet net;
  net.init(3, 3, 4, rng);
  Tensor h = randn({12, 12, 3}, rng);
  CHECK(gpm::mean_equivariance_displacement(net, h, Transform::identity()) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("linear alignment runs faster than the quadratic oracle") {
  Rng rng(44);
  const int s = 35, k = 4;
  Tensor m = random_maps(s, k, rng);
  Tensor mhat = random_maps(s, k, rng);
  TransformRanges ranges;
  Transform t = sample_transform(ranges, 5);

  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;

  auto t0 = clock::now();
  for (int rep = 0; rep < 20; ++rep) sink = sink + gpm::alignment_loss(m, mhat, t);
  auto t1 = clock::now();
  for (int rep = 0; rep < 2; ++rep) sink = sink + gpm::alignment_loss_quadratic(m, mhat, t);
  auto t2 = clock::now();

  const double lin = std::chrono::duration<double>(t1 - t0).count() / 20.0;
  const double quad = std::chrono::duration<double>(t2 - t1).count() / 2.0;
  CHECK(quad / lin > 1.0);
  CHECK(sink != 0.0);
}
