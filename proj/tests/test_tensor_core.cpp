#include <numeric>
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "nalu/error.hpp"
#include "nalu/grad_check.hpp"
#include "nalu/ntsr.hpp"
#include "nalu/ops.hpp"
#include "nalu/rng.hpp"
#include "nalu/tape.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"

using namespace nalu;
using ops::UnaryKind;

namespace {

Tensor run(const std::function<Var(Tape&)>& build) {
  Tape t;
  return t.value(build(t));
}

}  // namespace

TEST_CASE("matmul matches identity, hand sums and the triple-loop oracle") {
  Tape t;
  const Var eye = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var v = t.constant(Tensor::matrix({{5}, {7}}));
  CHECK(t.value(ops::matmul(t, eye, v)).storage() == std::vector<float>{5, 7});

  const Var a = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var ones = t.constant(Tensor::matrix({{1}, {1}}));
  CHECK(t.value(ops::matmul(t, a, ones)).storage() == std::vector<float>{3, 7});

  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const Tensor x = oracle::random_tensor({4, 3}, rng);
    const Tensor y = oracle::random_tensor({3, 2}, rng);
    const Tensor got = t.value(ops::matmul(t, t.constant(x), t.constant(y)));
    CHECK(max_abs_diff(got, oracle::matmul(x, y)) < 1e-6f);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  const Var a = t.constant(Tensor({2, 3}));
  const Var b = t.constant(Tensor({2, 2}));
  try {
    ops::matmul(t, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(2,2)") != std::string::npos);
  }
}

TEST_CASE("conv2d identity kernel and hand-computed all-ones case") {
  Rng rng(3);
  const Tensor img = oracle::random_tensor({1, 1, 5, 5}, rng);
  Tensor k({1, 1, 3, 3});
  k.at({0, 0, 1, 1}) = 1.0f;
  const Tensor same = run([&](Tape& t) {
    return ops::conv2d(t, t.constant(img), t.constant(k), ops::Padding::Same);
  });
  CHECK(max_abs_diff(same, img) == 0.0f);

  const Tensor out = run([&](Tape& t) {
    return ops::conv2d(t, t.constant(Tensor::ones({1, 1, 4, 4})), t.constant(Tensor::ones({1, 1, 3, 3})),
                       ops::Padding::Same);
  });
  const float expected[4][4] = {{4, 6, 6, 4}, {6, 9, 9, 6}, {6, 9, 9, 6}, {4, 6, 6, 4}};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(out.at({0, 0, y, x}) == expected[y][x]);
}

TEST_CASE("conv2d equals the naive loop oracle") {
  Rng rng(5);
  for (int rep = 0; rep < 4; ++rep) {
    const Tensor x = oracle::random_tensor({2, 3, 7, 6}, rng);
    const Tensor k = oracle::random_tensor({4, 3, 3, 3}, rng);
    for (bool same : {true, false}) {
      const Tensor got = run([&](Tape& t) {
        return ops::conv2d(t, t.constant(x), t.constant(k),
                           same ? ops::Padding::Same : ops::Padding::Valid);
      });
      CHECK(max_abs_diff(got, oracle::conv2d(x, k, same)) < 1e-5f);
    }
  }
}

TEST_CASE("conv2d errors") {
  Tape t;
  CHECK_THROWS_AS(ops::conv2d(t, t.constant(Tensor({1, 2, 4, 4})), t.constant(Tensor({1, 3, 3, 3})),
                              ops::Padding::Same),
                  DimensionError);
  CHECK_THROWS_AS(ops::conv2d(t, t.constant(Tensor({1, 1, 2, 2})), t.constant(Tensor({1, 1, 3, 3})),
                              ops::Padding::Valid),
                  DimensionError);
  CHECK_THROWS_AS(ops::conv2d(t, t.constant(Tensor({1, 1, 4, 4})), t.constant(Tensor({1, 1, 2, 2})),
                              ops::Padding::Same),
                  DimensionError);
}

TEST_CASE("maxpool2 values, tie rule and odd-size error") {
  Tape t;
  const Var x = t.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(t.value(ops::maxpool2(t, x)).item() == 4.0f);

  const Tensor c = run([](Tape& tp) { return ops::maxpool2(tp, tp.constant(Tensor({1, 2, 4, 6}, 2.5f))); });
  CHECK(c.shape() == Shape{1, 2, 2, 3});
  for (float v : c.data()) CHECK(v == 2.5f);

  Tape tie;
  const Var tx = tie.leaf(Tensor({1, 1, 2, 2}, 5.0f));
  tie.backward(ops::sum(tie, ops::maxpool2(tie, tx)));
  CHECK(tie.grad(tx).storage() == std::vector<float>{1, 0, 0, 0});

  CHECK_THROWS_AS(ops::maxpool2(t, t.constant(Tensor({1, 1, 3, 4}))), DimensionError);
}

TEST_CASE("upsample_repeat replicates blocks") {
  const Tensor src({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor id = run([&](Tape& t) { return ops::upsample_repeat(t, t.constant(src), 1); });
  CHECK(max_abs_diff(id, src) == 0.0f);

  const Tensor up = run([&](Tape& t) { return ops::upsample_repeat(t, t.constant(src), 2); });
  CHECK(up.storage() == std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});

  Rng rng(9);
  const Tensor r = oracle::random_tensor({2, 3, 3, 5}, rng);
  const Tensor r3 = run([&](Tape& t) { return ops::upsample_repeat(t, t.constant(r), 3); });
  CHECK(r3.sum() == doctest::Approx(9.0 * r.sum()).epsilon(1e-6));

  Tape t;
  CHECK_THROWS_AS(ops::upsample_repeat(t, t.constant(src), 0), DimensionError);
}

TEST_CASE("batchnorm normalization and running statistics") {
  Rng rng(21);
  const std::size_t c = 3;
  Tensor x({4, c, 5, 5});
  for (float& v : x.data()) v = static_cast<float>(rng.normal(2.0, 3.0));

  SUBCASE("standardized input passes through") {
    // Standardize each channel exactly so gamma=1, beta=0 is the identity.
    Tensor z = x;
    const std::size_t hw = 25;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, ss = 0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < hw; ++i) s += z[(n * c + ch) * hw + i];
      const double mu = s / 100.0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = z[(n * c + ch) * hw + i] - mu;
          ss += d * d;
        }
      const double sd = std::sqrt(ss / 100.0);
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
          float& v = z[(n * c + ch) * hw + i];
          v = static_cast<float>((v - mu) / sd);
        }
    }
    ops::BatchNormState st(c);
    const Tensor y = run([&](Tape& t) {
      return ops::batchnorm(t, t.constant(z), t.constant(Tensor::ones({c})),
                            t.constant(Tensor::zeros({c})), st, ops::Mode::Train);
    });
    CHECK(max_abs_diff(y, z) < 1e-4f);
  }

  SUBCASE("constant channel collapses to beta") {
    ops::BatchNormState st(1);
    const Tensor y = run([&](Tape& t) {
      return ops::batchnorm(t, t.constant(Tensor({2, 1, 3, 3}, 7.0f)), t.constant(Tensor::scalar(2.0f)),
                            t.constant(Tensor::scalar(0.75f)), st, ops::Mode::Train);
    });
    // (x - mu) / sqrt(0 + eps) * gamma + beta with x == mu
    for (float v : y.data()) CHECK(v == doctest::Approx(0.75f).epsilon(1e-6));
  }

  SUBCASE("train-mode moments") {
    ops::BatchNormState st(c);
    const Tensor y = run([&](Tape& t) {
      return ops::batchnorm(t, t.constant(x), t.constant(Tensor::ones({c})),
                            t.constant(Tensor::zeros({c})), st, ops::Mode::Train);
    });
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, ss = 0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 25; ++i) s += y[(n * c + ch) * 25 + i];
      const double mu = s / 100.0;
      for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < 25; ++i) ss += std::pow(y[(n * c + ch) * 25 + i] - mu, 2);
      CHECK(std::fabs(mu) < 1e-5);
      CHECK(ss / 100.0 >= 0.99);
      CHECK(ss / 100.0 <= 1.01);
    }
    // Running stats moved 10% of the way from (0, 1) toward the batch moments.
    CHECK(st.running_mean[0] != 0.0f);
    CHECK(std::fabs(st.running_mean[0]) < 1.0f);
  }

  SUBCASE("infer mode uses running statistics") {
    ops::BatchNormState st(1);
    st.running_mean[0] = 1.0f;
    st.running_var[0] = 4.0f;
    const Tensor y = run([&](Tape& t) {
      return ops::batchnorm(t, t.constant(Tensor({1, 1, 1, 2}, {1.0f, 3.0f})),
                            t.constant(Tensor::ones({1})), t.constant(Tensor::zeros({1})), st,
                            ops::Mode::Infer);
    });
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)));
    CHECK(st.running_mean[0] == 1.0f);
  }

  SUBCASE("channel mismatch") {
    ops::BatchNormState st(c);
    Tape t;
    CHECK_THROWS_AS(ops::batchnorm(t, t.constant(x), t.constant(Tensor::ones({2})),
                                   t.constant(Tensor::zeros({2})), st, ops::Mode::Train),
                    DimensionError);
  }
}

TEST_CASE("concat_channels layout, empty operand and split round trip") {
  Rng rng(4);
  const Tensor a = oracle::random_tensor({1, 3, 8, 8}, rng);
  const Tensor b = oracle::random_tensor({1, 5, 8, 8}, rng);
  const Tensor ab = run([&](Tape& t) { return ops::concat_channels(t, t.constant(a), t.constant(b)); });
  CHECK(ab.shape() == Shape{1, 8, 8, 8});
  const auto [sa, sb] = ops::split_channels(ab, 3);
  CHECK(sa.storage() == a.storage());
  CHECK(sb.storage() == b.storage());

  const Tensor e = run([&](Tape& t) {
    return ops::concat_channels(t, t.constant(a), t.constant(Tensor({1, 0, 8, 8})));
  });
  CHECK(e.shape() == a.shape());
  CHECK(e.storage() == a.storage());

  Tape t;
  CHECK_THROWS_AS(ops::concat_channels(t, t.constant(a), t.constant(Tensor({1, 2, 4, 8}))),
                  DimensionError);
  CHECK_THROWS_AS(ops::concat_channels(t, t.constant(a), t.constant(Tensor({2, 2, 8, 8}))),
                  DimensionError);
}

TEST_CASE("unary activation definitions") {
  auto eval = [](UnaryKind k, float x) {
    return run([&](Tape& t) { return ops::unary(t, t.constant(Tensor::scalar(x)), k); }).item();
  };
  CHECK(eval(UnaryKind::Sigmoid, 0.0f) == 0.5f);
  CHECK(eval(UnaryKind::HardSigmoid, -5.0f) == 0.0f);
  CHECK(eval(UnaryKind::HardSigmoid, 5.0f) == 1.0f);
  CHECK(eval(UnaryKind::HardSigmoid, 0.0f) == 0.5f);
  CHECK(eval(UnaryKind::Elu, -1.0f) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-6));
  CHECK(eval(UnaryKind::LeakyRelu, -2.0f) == doctest::Approx(-0.02f));
  CHECK(eval(UnaryKind::Relu, -2.0f) == 0.0f);
  CHECK(eval(UnaryKind::Linear, -2.0f) == -2.0f);
  CHECK(eval(UnaryKind::Abs, -2.0f) == 2.0f);
  CHECK(eval(UnaryKind::Tanh, 0.5f) == doctest::Approx(std::tanh(0.5)));

  Tape t;
  CHECK_THROWS_AS(ops::unary(t, t.constant(Tensor::scalar(0.0f)), UnaryKind::Log), NumericError);
  CHECK_THROWS_AS(ops::unary(t, t.constant(Tensor::scalar(-1.0f)), UnaryKind::Log), NumericError);
  CHECK_THROWS_AS(ops::unary(t, t.constant(Tensor::scalar(100.0f)), UnaryKind::Exp), NumericError);
  CHECK_THROWS_AS(ops::parse_unary_kind("swish"), ConfigError);

  Tape p;
  const Var y = ops::prelu(p, p.constant(Tensor({1, 2}, {-2.0f, 3.0f})),
                           p.constant(Tensor({2}, ops::kPreluInit)));
  CHECK(p.value(y).storage() == std::vector<float>{-0.5f, 3.0f});
}

TEST_CASE("relu and abs use a zero subgradient at zero") {
  for (UnaryKind k : {UnaryKind::Relu, UnaryKind::Abs}) {
    Tape t;
    const Var x = t.leaf(Tensor::scalar(0.0f));
    t.backward(ops::sum(t, ops::unary(t, x, k)));
    CHECK(t.grad(x).item() == 0.0f);
  }
}

TEST_CASE("backward basics") {
  Rng rng(1);
  const Tensor xv = oracle::random_tensor({3, 4}, rng);
  {
    Tape t;
    const Var x = t.leaf(xv);
    t.backward(ops::sum(t, x));
    const Tensor g = t.grad(x);
    for (float v : g.data()) CHECK(v == 1.0f);
  }
  {
    Tape t;
    const Var x = t.leaf(xv);
    t.backward(ops::sum(t, ops::mul(t, x, x)));
    const Tensor g = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx(2.0f * xv[i]));
  }
  {
    Tape t;
    const Var x = t.leaf(xv);
    CHECK_THROWS_AS(t.backward(ops::scale(t, x, 2.0f)), DimensionError);
  }
}

TEST_CASE("fan-out accumulates the sum of path gradients") {
  Rng rng(2);
  const Tensor xv = oracle::random_tensor({2, 3}, rng);
  const Tensor wv = oracle::random_tensor({3, 3}, rng);
  // y used twice: loss = sum(tanh(y) * y), y = x W.
  Tape shared;
  const Var x1 = shared.leaf(xv);
  const Var y = ops::matmul(shared, x1, shared.constant(wv));
  shared.backward(ops::sum(shared, ops::mul(shared, ops::unary(shared, y, UnaryKind::Tanh), y)));

  // Duplicated-variable construction: two independent copies of x.
  Tape dup;
  const Var xa = dup.leaf(xv);
  const Var xb = dup.leaf(xv);
  const Var ya = ops::matmul(dup, xa, dup.constant(wv));
  const Var yb = ops::matmul(dup, xb, dup.constant(wv));
  dup.backward(ops::sum(dup, ops::mul(dup, ops::unary(dup, ya, UnaryKind::Tanh), yb)));

  const Tensor g = shared.grad(x1);
  const Tensor ga = dup.grad(xa);
  const Tensor gb = dup.grad(xb);
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-5));
}

TEST_CASE("gradient shapes match value shapes after backward") {
  Rng rng(8);
  Tape t;
  const Var x = t.leaf(oracle::random_tensor({1, 2, 4, 4}, rng));
  const Var k = t.leaf(oracle::random_tensor({3, 2, 3, 3}, rng));
  const Var y = ops::maxpool2(t, ops::conv2d(t, x, k, ops::Padding::Same));
  t.backward(ops::mean(t, y));
  for (std::size_t id = 0; id < t.size(); ++id) {
    CHECK(t.grad(Var{id}).shape() == t.value(Var{id}).shape());
    for (std::size_t in : t.inputs(Var{id})) CHECK(in < id);
  }
}

TEST_CASE("grad_check of a constant graph reports zero") {
  const GradCheckResult r = grad_check(
      [](Tape& t, Var) { return t.constant(Tensor::scalar(3.0f)); }, Tensor({4}, 1.0f));
  CHECK(r.max_rel_error == 0.0);
  CHECK(r.analytic == 0.0);
  CHECK(r.numeric == 0.0);
}

TEST_CASE("grad_check of sum(matmul(W, x))") {
  Rng rng(12);
  for (int seed = 0; seed < 10; ++seed) {
    const Tensor w = oracle::random_tensor({3, 4}, rng, 0.1, 1.0);
    const Tensor x = oracle::random_tensor({4, 2}, rng);
    const GradCheckResult r = grad_check(
        [&](Tape& t, Var in) { return ops::sum(t, ops::matmul(t, t.constant(w), in)); }, x);
    CHECK(r.max_rel_error < 1e-3);
  }
}

// Every differentiable op, at 10 seeded points each, with respect to each of
// its differentiable inputs.
TEST_CASE("grad_check passes for every differentiable op") {
  for (const oracle::GradCase& c : oracle::op_grad_cases()) {
    const double worst = oracle::worst_grad_error(c);
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst >= 0.0);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("non-finite results surface as NumericError") {
  Tape t;
  const Var big = t.constant(Tensor::scalar(3e38f));
  CHECK_THROWS_AS(ops::add(t, big, big), NumericError);
  Tensor bad({2}, 1.0f);
  bad[1] = std::nanf("");
  CHECK_THROWS_AS(t.leaf(bad), NumericError);
}

TEST_CASE("Rng determinism and split streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(42);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 64; ++k) firsts.insert(base.split(k).next_u64());
  CHECK(firsts.size() == 64);

  // Splitting does not depend on draws already made from the parent.
  Rng used(42);
  for (int i = 0; i < 10; ++i) used.next_u64();
  CHECK(used.split(3).next_u64() == Rng(42).split(3).next_u64());

  Rng u(7);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    mean += v / 20000.0;
  }
  CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) {
    const auto k = u.uniform_int(2, 5);
    CHECK(k >= 2);
    CHECK(k <= 5);
  }
}

TEST_CASE("NTSR container layout") {
  const Tensor t({2, 1}, {1.0f, -2.5f});
  const std::string bytes = ntsr::encode(t);
  REQUIRE(bytes.size() == 4 + 1 + 1 + 2 + 2 * 4 + 2 * 4);
  CHECK(bytes.substr(0, 4) == "NTSR");
  CHECK(bytes[4] == 0x01);
  CHECK(bytes[5] == 0x00);
  CHECK(static_cast<unsigned char>(bytes[6]) == 2);
  CHECK(bytes[7] == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 1);
  // 1.0f = 0x3F800000 little-endian
  CHECK(static_cast<unsigned char>(bytes[16]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[19]) == 0x3F);

  Rng rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    Shape s;
    const auto rank = rng.uniform_int(0, 4);
    for (std::int64_t i = 0; i < rank; ++i) s.push_back(static_cast<std::size_t>(rng.uniform_int(1, 4)));
    const Tensor x = oracle::random_tensor(s, rng, -1e3, 1e3);
    const Tensor y = ntsr::decode(ntsr::encode(x));
    CHECK(y.shape() == x.shape());
    CHECK(y.storage() == x.storage());
  }

  CHECK_THROWS_AS(ntsr::decode("NOPE\x01\x00\x00\x00"), IoError);
  std::string truncated = bytes.substr(0, bytes.size() - 1);
  CHECK_THROWS_AS(ntsr::decode(truncated), IoError);
  std::string v2 = bytes;
  v2[4] = 0x02;
  CHECK_THROWS_AS(ntsr::decode(v2), IoError);
}

TEST_CASE("reshape keeps row-major order") {
  Tape t;
  Tensor a({2, 3});
  std::iota(a.data().begin(), a.data().end(), 0.0f);
  const Var r = ops::reshape(t, t.constant(a), {3, 2});
  CHECK(t.value(r).shape() == Shape{3, 2});
  for (std::size_t i = 0; i < 6; ++i) CHECK(t.value(r)[i] == float(i));
  CHECK_THROWS_AS(ops::reshape(t, t.constant(a), {4, 2}), DimensionError);
}
