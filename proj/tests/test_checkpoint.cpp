#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gspot/checkpoint.hpp"
#include "gspot/nn.hpp"
#include "gspot/rng.hpp"
#include "gspot/tensor.hpp"

using namespace gspot;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  fs::path dir = fs::temp_directory_path() / "gspot_ckpt_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint round trip preserves names, shapes and values") {
  Rng rng(21);
  Checkpoint ck;
  Tensor a = randn({3, 4}, rng);
  Tensor b = randn({2, 2, 5}, rng);
  Tensor c = randn({7}, rng);
  ck.put("model.w", a);
  ck.put("model.b", b);
  ck.put("opt.v", c);

  fs::path path = scratch_dir() / "roundtrip.ckpt";
  ck.save(path.string());
  Checkpoint back = Checkpoint::load(path.string());

  REQUIRE(back.size() == 3);
  REQUIRE(back.has("model.w"));
  REQUIRE(back.has("opt.v"));
  const Tensor& a2 = back.get("model.w");
  REQUIRE(a2.same_shape(a));
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a2[i] == a[i]);
  const Tensor& b2 = back.get("model.b");
  REQUIRE(b2.same_shape(b));
  for (int64_t i = 0; i < b.numel(); ++i) CHECK(b2[i] == b[i]);
  fs::remove(path);
}

TEST_CASE("get of a missing tensor names it in the error") {
  Checkpoint ck;
  Tensor t({1});
  ck.put("present", t);
  CHECK(ck.has("present"));
  CHECK_FALSE(ck.has("absent"));
  try {
    ck.get("absent");
    FAIL("expected a throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
}

TEST_CASE("load rejects a bad magic") {
  fs::path path = scratch_dir() / "badmagic.ckpt";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPTgarbage-bytes-here";
  }
  CHECK_THROWS(Checkpoint::load(path.string()));
  fs::remove(path);
}

TEST_CASE("load rejects a truncated file") {
  Rng rng(22);
  Checkpoint ck;
  ck.put("w", randn({8, 8}, rng));
  fs::path path = scratch_dir() / "trunc.ckpt";
  ck.save(path.string());
  std::string bytes = slurp(path);
  REQUIRE(bytes.size() > 40);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS(Checkpoint::load(path.string()));
  fs::remove(path);
}

TEST_CASE("load rejects a missing file") {
  CHECK_THROWS(Checkpoint::load((scratch_dir() / "never_written.ckpt").string()));
}

TEST_CASE("save replaces an existing file and leaves no temp behind") {
  Rng rng(23);
  fs::path path = scratch_dir() / "replace.ckpt";
  Checkpoint first;
  first.put("x", randn({4}, rng));
  first.save(path.string());

  Checkpoint second;
  Tensor t({2});
  t[0] = 1.5;
  t[1] = -2.5;
  second.put("y", t);
  second.save(path.string());

  Checkpoint back = Checkpoint::load(path.string());
  REQUIRE(back.size() == 1);
  CHECK(back.has("y"));
  CHECK_FALSE(back.has("x"));
  CHECK(back.get("y")[1] == -2.5);

  bool temp_left = false;
  for (const auto& entry : fs::directory_iterator(scratch_dir()))
    if (entry.path().string().find(".tmp") != std::string::npos) temp_left = true;
  CHECK_FALSE(temp_left);
  fs::remove(path);
}

TEST_CASE("content hash is order-independent and value-sensitive") {
  Rng rng(24);
  Tensor a = randn({3}, rng);
  Tensor b = randn({2, 2}, rng);

  Checkpoint x;
  x.put("alpha", a);
  x.put("beta", b);
  Checkpoint y;
  y.put("beta", b);
  y.put("alpha", a);
  CHECK(x.content_hash() == y.content_hash());

  Checkpoint z;
  Tensor a2 = a;
  a2[0] += 1e-9;
  z.put("alpha", a2);
  z.put("beta", b);
  CHECK(z.content_hash() != x.content_hash());

  Checkpoint renamed;
  renamed.put("alpha2", a);
  renamed.put("beta", b);
  CHECK(renamed.content_hash() != x.content_hash());
}

TEST_CASE("tensor hash distinguishes shape even with equal raw data") {
  Tensor a({2, 3});
  Tensor b({3, 2});
  for (int64_t i = 0; i < 6; ++i) {
    a[i] = static_cast<double>(i);
    b[i] = static_cast<double>(i);
  }
  CHECK(tensor_hash(a) != tensor_hash(b));
  Tensor c = a;
  CHECK(tensor_hash(a) == tensor_hash(c));
  c[5] = -1.0;
  CHECK(tensor_hash(a) != tensor_hash(c));
}

TEST_CASE("store and load params round trip a layer") {
  Rng rng(25);
  nn::Conv2d src, dst;
  src.init(3, 3, 2, 4, 1, 1, true, rng);
  dst.init(3, 3, 2, 4, 1, 1, true, rng);

  std::vector<nn::ParamRef> sp, dp;
  src.params("conv", sp);
  dst.params("conv", dp);
  CHECK(params_hash(sp) != params_hash(dp));  // different random init

  Checkpoint ck;
  store_params(ck, sp);
  load_params(ck, dp);
  CHECK(params_hash(sp) == params_hash(dp));
  for (int64_t i = 0; i < src.w.numel(); ++i) CHECK(dst.w[i] == src.w[i]);
}

TEST_CASE("load_params rejects shape mismatches and missing names") {
  Rng rng(26);
  nn::Linear small, big;
  small.init(3, 2, true, rng);
  big.init(4, 2, true, rng);

  std::vector<nn::ParamRef> sp, bp;
  small.params("head", sp);
  big.params("head", bp);

  Checkpoint ck;
  store_params(ck, sp);
  try {
    load_params(ck, bp);
    FAIL("expected a throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("head.w") != std::string::npos);
  }

  Checkpoint empty;
  CHECK_THROWS(load_params(empty, sp));
}

TEST_CASE("params hash tracks value changes") {
  Rng rng(27);
  nn::Linear lin;
  lin.init(3, 3, false, rng);
  std::vector<nn::ParamRef> ps;
  lin.params("lin", ps);
  uint64_t before = params_hash(ps);
  CHECK(params_hash(ps) == before);  // stable
  lin.w[0] += 0.25;
  CHECK(params_hash(ps) != before);
}
