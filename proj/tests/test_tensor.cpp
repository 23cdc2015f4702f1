#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ovvis/ovtf.hpp"
#include "ovvis/rng.hpp"
#include "ovvis/tensor.hpp"

using namespace ovvis;

namespace {

Tensor random_tensor(std::vector<size_t> shape, uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and selector") {
  Tape t;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor out = t.matmul(eye, m);
  CHECK(out.values() == std::vector<double>{1, 2, 3, 4});

  Tensor row({1, 2}, {1, 0});
  Tensor col({2, 1}, {5, 7});
  Tensor sel = t.matmul(row, col);
  CHECK(sel.numel() == 1);
  CHECK(sel.at(0) == 5.0);
}

TEST_CASE("matmul shape error names both shapes") {
  Tape t;
  Tensor a({2, 3});
  Tensor b({2, 2});
  try {
    t.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[2, 2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum equals ones.b^T and passes FD") {
  Tensor a = random_tensor({3, 4}, 11);
  Tensor b = random_tensor({4, 2}, 12);
  a.set_requires_grad(true);
  {
    Tape t;
    Tensor c = t.matmul(a, b);
    Tensor loss = t.reduce_sum(c);
    t.backward(loss);
  }
  // d(sum)/dA = ones(3x2) . B^T
  for (size_t i = 0; i < 3; ++i)
    for (size_t l = 0; l < 4; ++l) {
      double expect = 0.0;
      for (size_t j = 0; j < 2; ++j) expect += b.at(l, j);
      CHECK(a.grad().at(i, l) == doctest::Approx(expect).epsilon(1e-12));
    }

  Tensor bc = b.clone();
  double err = grad_check(
      [&](Tape& t, const Tensor& x) { return t.matmul(x, bc); }, a.detach());
  CHECK(err < 1e-6);
}

TEST_CASE("softmax uniform, stability, high-precision oracle") {
  Tape t;
  Tensor z({3}, {0, 0, 0});
  Tensor s = t.softmax(z);
  for (size_t i = 0; i < 3; ++i) CHECK(s.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor big({2}, {1000, 0});
  Tensor sb = t.softmax(big);
  CHECK(sb.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sb.at(1) < 1e-300);

  Tensor x({3}, {1, 2, 3});
  Tensor sx = t.softmax(x);
  // Independent long-double evaluation.
  long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
  long double denom = e1 + e2 + e3;
  CHECK(sx.at(0) == doctest::Approx(static_cast<double>(e1 / denom)).epsilon(1e-12));
  CHECK(sx.at(1) == doctest::Approx(static_cast<double>(e2 / denom)).epsilon(1e-12));
  CHECK(sx.at(2) == doctest::Approx(static_cast<double>(e3 / denom)).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for random inputs") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    Tensor x = random_tensor({4, 7}, 100 + seed, -30.0, 30.0);
    Tape t;
    Tensor s = t.softmax(x);
    for (size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (size_t j = 0; j < 7; ++j) {
        CHECK(s.at(r, j) >= 0.0);
        sum += s.at(r, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("sigmoid values") {
  Tape t;
  Tensor x({3}, {0.0, 1000.0, -std::log(3.0)});
  Tensor y = t.sigmoid(x);
  CHECK(y.at(0) == 0.5);
  CHECK(y.at(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.at(2) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("l2_normalize and layer_norm basics") {
  Tape t;
  Tensor v({2}, {3, 4});
  Tensor n = t.l2_normalize(v);
  CHECK(n.at(0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(n.at(1) == doctest::Approx(0.8).epsilon(1e-12));

  Tensor c = Tensor::full({5}, 2.5);
  Tensor gamma = Tensor::full({5}, 1.0);
  Tensor beta = Tensor::zeros({5});
  Tensor ln = t.layer_norm(c, gamma, beta);
  for (size_t i = 0; i < 5; ++i) CHECK(ln.at(i) == 0.0);
}

TEST_CASE("reduce_mean gradient is 1/n broadcast") {
  Tensor x = random_tensor({6}, 21);
  double err = grad_check(
      [](Tape& t, const Tensor& v) { return t.reduce_mean(v); }, x);
  CHECK(err < 1e-7);
  Tensor y = x.clone();
  y.set_requires_grad(true);
  Tape t;
  t.backward(t.reduce_mean(y));
  for (size_t i = 0; i < 6; ++i)
    CHECK(y.grad().at(i) == doctest::Approx(1.0 / 6).epsilon(1e-12));
}

TEST_CASE("backward on sum and half square norm") {
  Tensor x({3}, {1.5, -2.0, 0.25});
  x.set_requires_grad(true);
  {
    Tape t;
    t.backward(t.reduce_sum(x));
    for (size_t i = 0; i < 3; ++i) CHECK(x.grad().at(i) == 1.0);
  }
  x.zero_grad();
  {
    Tape t;
    Tensor sq = t.mul(x, x);
    Tensor loss = t.scale(t.reduce_sum(sq), 0.5);
    t.backward(loss);
    for (size_t i = 0; i < 3; ++i) CHECK(x.grad().at(i) == doctest::Approx(x.at(i)));
  }
}

TEST_CASE("leaf used twice accumulates both path gradients") {
  Tensor x({2}, {0.7, -0.3});
  x.set_requires_grad(true);
  Tape t;
  // loss = sum(x) + sum(2x): grad should be exactly 3.
  Tensor loss = t.add(t.reduce_sum(x), t.reduce_sum(t.scale(x, 2.0)));
  t.backward(loss);
  CHECK(x.grad().at(0) == 3.0);
  CHECK(x.grad().at(1) == 3.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape t;
  Tensor y = t.scale(x, 2.0);
  CHECK_THROWS_AS(t.backward(y), ShapeError);
}

TEST_CASE("grad_check reference cases") {
  Tensor x = random_tensor({5}, 31);
  double e1 = grad_check([](Tape& t, const Tensor& v) { return t.sigmoid(v); }, x);
  CHECK(e1 < 1e-7);

  Tensor w = random_tensor({4, 3}, 32);
  double e2 = grad_check(
      [&](Tape& t, const Tensor& v) { return t.softmax(t.matmul(v, w)); },
      random_tensor({2, 4}, 33));
  CHECK(e2 < 1e-6);

  double e3 = grad_check(
      [](Tape& t, const Tensor& v) {
        (void)v;
        return Tensor::scalar(4.25);
      },
      x);
  CHECK(e3 == 0.0);
}

TEST_CASE("every differentiable op passes grad_check over 100 seeds") {
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    Tensor a = random_tensor({3, 4}, seed * 7 + 1);
    Tensor b = random_tensor({3, 4}, seed * 7 + 2);
    Tensor v = random_tensor({4}, seed * 7 + 3);
    Tensor g = random_tensor({4}, seed * 7 + 4, 0.5, 1.5);
    Tensor bounded = random_tensor({3, 4}, seed * 7 + 5, 0.05, 0.95);
    Tensor target({3, 4});
    {
      Rng r(seed * 7 + 6);
      for (size_t i = 0; i < target.numel(); ++i) target.at(i) = r.uniform() < 0.5 ? 0.0 : 1.0;
    }
    auto check = [&](const char* name, const TensorFn& f, const Tensor& x,
                     double tol = 1e-5) {
      const double err = grad_check(f, x);
      INFO(name << " seed " << seed << " err " << err);
      CHECK(err < tol);
    };
    check("add", [&](Tape& t, const Tensor& x) { return t.add(x, b); }, a);
    check("add_vec", [&](Tape& t, const Tensor& x) { return t.add(x, v); }, a);
    check("sub", [&](Tape& t, const Tensor& x) { return t.sub(b, x); }, a);
    check("mul", [&](Tape& t, const Tensor& x) { return t.mul(x, b); }, a);
    check("div", [&](Tape& t, const Tensor& x) { return t.div(x, g); }, a);
    check("div_den", [&](Tape& t, const Tensor& x) { return t.div(a, x); },
          random_tensor({3, 4}, seed * 7 + 7, 0.5, 2.0));
    check("scale", [&](Tape& t, const Tensor& x) { return t.scale(x, -1.7); }, a);
    check("add_scalar", [&](Tape& t, const Tensor& x) { return t.add_scalar(x, 3.1); }, a);
    check("relu", [&](Tape& t, const Tensor& x) { return t.relu(x); }, a);
    check("gelu", [&](Tape& t, const Tensor& x) { return t.gelu(x); }, a);
    check("sigmoid", [&](Tape& t, const Tensor& x) { return t.sigmoid(x); }, a);
    check("softmax", [&](Tape& t, const Tensor& x) { return t.softmax(x); }, a);
    check("layer_norm",
          [&](Tape& t, const Tensor& x) {
            Tensor gamma = Tensor::full({4}, 1.2);
            Tensor beta = Tensor::full({4}, -0.1);
            return t.layer_norm(x, gamma, beta);
          },
          a);
    check("layer_norm_gamma",
          [&](Tape& t, const Tensor& x) {
            Tensor beta = Tensor::zeros({4});
            return t.layer_norm(a, x, beta);
          },
          g);
    check("transpose", [&](Tape& t, const Tensor& x) { return t.transpose(x); }, a);
    check("permute",
          [&](Tape& t, const Tensor& x) {
            return t.permute(t.reshape(x, {3, 2, 2}), {2, 0, 1});
          },
          a);
    check("reshape", [&](Tape& t, const Tensor& x) { return t.reshape(x, {4, 3}); }, a);
    check("reduce_sum", [&](Tape& t, const Tensor& x) { return t.reduce_sum(x); }, a);
    check("concat",
          [&](Tape& t, const Tensor& x) { return t.concat({x, b}, 1); }, a);
    check("l2_normalize", [&](Tape& t, const Tensor& x) { return t.l2_normalize(x); },
          random_tensor({3, 4}, seed * 7 + 8, 0.2, 1.0));
    check("slice_index", [&](Tape& t, const Tensor& x) { return t.slice_index(x, 1); }, a);
    check("slice_cols", [&](Tape& t, const Tensor& x) { return t.slice_cols(x, 1, 2); }, a);
    check("bce", [&](Tape& t, const Tensor& x) { return t.bce_mean(x, target); },
          bounded);
    check("matmul_rhs",
          [&](Tape& t, const Tensor& x) { return t.matmul(a, t.reshape(x, {4, 3})); },
          random_tensor({3, 4}, seed * 7 + 9));
    check("conv2d",
          [&](Tape& t, const Tensor& x) {
            Tensor w = random_tensor({2, 1, 3, 3}, seed * 7 + 10, -0.5, 0.5);
            Tensor bias = random_tensor({2}, seed * 7 + 11);
            return t.conv2d(t.reshape(x, {1, 1, 3, 4}), w, bias, 1, 1);
          },
          a);
    check("conv2d_w",
          [&](Tape& t, const Tensor& x) {
            Tensor img = random_tensor({1, 3, 6, 6}, seed * 7 + 12);
            Tensor bias = Tensor::zeros({2});
            return t.conv2d(img, t.reshape(x, {2, 3, 1, 2}), bias, 2, 0);
          },
          random_tensor({3, 4}, seed * 7 + 13));
  }
}

TEST_CASE("forward results are bit-identical across runs") {
  auto run = [] {
    Tensor x = random_tensor({4, 4}, 99);
    Tensor w = random_tensor({4, 4}, 98);
    Tape t;
    Tensor y = t.softmax(t.matmul(t.sigmoid(x), w));
    return y.values();
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite op outputs raise NumericError") {
  Tape t;
  Tensor a({2}, {1.0, 1.0});
  Tensor z({2}, {0.0, 1.0});
  CHECK_THROWS_AS(t.div(a, z), NumericError);
}

TEST_CASE("broadcast rules are restricted") {
  Tape t;
  Tensor a({2, 3});
  Tensor bad({2});
  CHECK_THROWS_AS(t.add(a, bad), ShapeError);
  // Trailing-axis vector and scalar are the allowed exceptions.
  CHECK_NOTHROW(t.add(a, Tensor({3})));
  CHECK_NOTHROW(t.add(a, Tensor::scalar(2.0)));
}

TEST_CASE("OVTF round-trip is bit-exact") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "ovtf_test";
  fs::create_directories(dir);
  Tensor t = random_tensor({2, 3, 4}, 7);
  const std::string p64 = (dir / "t64.ovtf").string();
  save_ovtf(p64, t, OvtfDtype::kF64);
  Tensor back = load_ovtf(p64);
  CHECK(back.shape() == t.shape());
  CHECK(back.values() == t.values());

  // f32 files survive load -> save byte-for-byte.
  const std::string p32 = (dir / "t32.ovtf").string();
  save_ovtf(p32, t, OvtfDtype::kF32);
  Tensor t32 = load_ovtf(p32);
  const std::string p32b = (dir / "t32b.ovtf").string();
  save_ovtf(p32b, t32, OvtfDtype::kF32);
  std::ifstream f1(p32, std::ios::binary), f2(p32b, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(ovtf_dtype(p32) == OvtfDtype::kF32);
  CHECK(ovtf_dtype(p64) == OvtfDtype::kF64);

  CHECK_THROWS_AS(load_ovtf((dir / "missing.ovtf").string()), IoError);
  fs::remove_all(dir);
}
