#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <vector>

#include "sepassure/numerics/checkpoint.hpp"
#include "sepassure/numerics/gradcheck.hpp"
#include "sepassure/numerics/layers.hpp"
#include "sepassure/numerics/optim.hpp"
#include "sepassure/numerics/tensor.hpp"

using namespace sepassure;
using namespace sepassure::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = n(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Taylor series of erf; independent of std::erf / std::erfc.
double erf_series(double x) {
  double sum = 0.0, term = x;  // term = (-1)^n x^(2n+1) / n!
  for (int n = 0; n < 60; ++n) {
    sum += term / (2.0 * n + 1.0);
    term *= -x * x / (n + 1.0);
  }
  return 2.0 / std::sqrt(M_PI) * sum;
}

// Random projection of an op output down to a scalar loss.
Tensor project(const Tensor& y, std::mt19937_64& rng) {
  auto w = random_tensor(y.shape(), rng, false);
  return sum(mul(y, w));
}

}  // namespace

TEST(Tensor, RejectsShapeMismatchAndNonFinite) {
  EXPECT_THROW(Tensor(Shape{2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::vector({1.0, NAN}), NumericError);
  EXPECT_THROW(Tensor::vector({INFINITY}), NumericError);
}

TEST(Matmul, IdentityAndScalar) {
  auto I = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto B = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  auto C = matmul(I, B);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(C[i], B[i]);
  EXPECT_EQ(matmul(Tensor::matrix(1, 1, {2}), Tensor::matrix(1, 1, {3})).item(), 6.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(7);
  auto a = random_tensor({4, 5}, rng, false);
  auto b = random_tensor({5, 3}, rng, false);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a.at(i, k) * b.at(k, j);
      EXPECT_NEAR(c.at(i, j), s, 1e-12);
    }
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  EXPECT_THROW(matmul(Tensor::zeros({3}), Tensor::zeros({3, 1})), DimensionError);
}

TEST(Gelu, Values) {
  EXPECT_EQ(gelu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_NEAR(gelu(Tensor::scalar(10.0)).item(), 10.0, 1e-9);
  const double phi1 = 0.5 * (1.0 + erf_series(1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(phi1, 0.8413447460685429, 1e-15);
  EXPECT_NEAR(gelu(Tensor::scalar(1.0)).item(), phi1, 1e-14);
}

TEST(Gelu, GradientAtZeroIsHalf) {
  auto x = Tensor::scalar(0.0, true);
  backward(gelu(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
}

TEST(LayerNorm, HandComputedRow) {
  auto y = layer_norm(Tensor::matrix(1, 3, {1, 2, 3}), Tensor::filled({3}, 1.0),
                      Tensor::zeros({3}), 0.0);
  const double s = 1.0 / std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(y[0], -s, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_NEAR(y[2], s, 1e-12);
  EXPECT_NEAR(s, 1.2247448713915890, 1e-15);
}

TEST(LayerNorm, ConstantRowIsZero) {
  auto y = layer_norm(Tensor::filled({2, 4}, 3.5), Tensor::filled({4}, 1.0), Tensor::zeros({4}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, PreAffineRowsStandardized) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({5, 16}, rng, false, 3.0);
    auto y = layer_norm(x, Tensor::filled({16}, 1.0), Tensor::zeros({16}), 1e-5);
    for (std::size_t r = 0; r < 5; ++r) {
      double mu = 0.0, var = 0.0, xv = 0.0, xm = 0.0;
      for (std::size_t c = 0; c < 16; ++c) mu += y.at(r, c);
      mu /= 16;
      for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
      var /= 16;
      for (std::size_t c = 0; c < 16; ++c) xm += x.at(r, c);
      xm /= 16;
      for (std::size_t c = 0; c < 16; ++c) xv += (x.at(r, c) - xm) * (x.at(r, c) - xm);
      xv /= 16;
      EXPECT_LT(std::abs(mu), 1e-9);
      EXPECT_NEAR(var, xv / (xv + 1e-5), 1e-9);
    }
  }
}

TEST(Softmax, Values) {
  auto u = softmax(Tensor::vector({0, 0, 0}));
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto p = softmax(Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}));
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndSimplex) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-500, 500);
  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_tensor({7}, rng, false, 5.0);
    const double c = shift(rng);
    auto p = softmax(x);
    auto q = softmax(add_scalar(x, c));
    double s = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      EXPECT_GE(p[i], 0.0);
      EXPECT_NEAR(p[i], q[i], 1e-12);
      s += p[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SelfAttention, SingleTokenIsProjectedValue) {
  std::mt19937_64 rng(5);
  auto w = make_attention(8, rng);
  auto x = random_tensor({1, 8}, rng, false);
  auto y = self_attention(x, w, 2);
  auto expected = w.output(w.value(x));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y[i], expected[i], 1e-14);
}

TEST(SelfAttention, HeadsMustDivideWidth) {
  std::mt19937_64 rng(5);
  auto w = make_attention(10, rng);
  EXPECT_THROW(self_attention(Tensor::zeros({2, 10}), w, 4), ConfigError);
}

TEST(SelfAttention, PermutationEquivariant) {
  std::mt19937_64 rng(9);
  auto w = make_attention(128, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 9;
    auto x = random_tensor({n, 128}, rng, false);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto y = self_attention(x, w, 16);
    auto yp = self_attention(gather_rows(x, perm), w, 16);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < 128; ++c) EXPECT_NEAR(yp.at(r, c), y.at(perm[r], c), 1e-10);
  }
}

TEST(SelfAttention, GroupsAreIndependent) {
  std::mt19937_64 rng(13);
  auto w = make_attention(12, rng);
  auto a = random_tensor({3, 12}, rng, false);
  auto b = random_tensor({3, 12}, rng, false);
  auto joint = self_attention(concat_rows({a, b}), w, 3, 3);
  auto ya = self_attention(a, w, 3);
  auto yb = self_attention(b, w, 3);
  for (std::size_t i = 0; i < 36; ++i) {
    EXPECT_EQ(joint[i], ya[i]);
    EXPECT_EQ(joint[36 + i], yb[i]);
  }
}

TEST(Backward, SquareAndScalarContract) {
  auto x = Tensor::scalar(3.0, true);
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  auto v = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(square(v)), ContractError);
  EXPECT_THROW(backward(Tensor::scalar(1.0)), ContractError);
}

TEST(Backward, TensorUsedTwiceAccumulates) {
  std::mt19937_64 rng(17);
  auto x = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 4}, rng);
  std::vector<Tensor> params{x, w};
  // x feeds both the matmul and the elementwise product.
  auto loss = [&] { return sum(mul(gelu(matmul(x, w)), x)); };
  auto res = finite_diff_check(loss, params);
  EXPECT_LT(res.max_rel_error, 1e-6);
  backward(sum(add(x, x)));  // grads accumulate on top of the check's grads
}

TEST(Backward, NoGradGuardSkipsGraph) {
  auto x = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  auto y = square(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, LinearFunctionRoundOffOnly) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({6}, rng);
  auto c = random_tensor({6}, rng, false);
  std::vector<Tensor> params{x};
  auto res = finite_diff_check([&] { return sum(mul(x, c)); }, params);
  EXPECT_LT(res.max_rel_error, 1e-9);
}

TEST(GradCheck, SoftmaxCrossEntropyToy) {
  std::mt19937_64 rng(2);
  auto W = random_tensor({4, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto X = random_tensor({5, 4}, rng, false);
  std::vector<std::size_t> labels{0, 2, 1, 1, 0};
  std::vector<Tensor> params{W, b};
  auto res = finite_diff_check(
      [&] { return scale(sum(pick(log_softmax(linear(X, W, b)), labels)), -1.0 / 5); }, params);
  EXPECT_LT(res.max_rel_error, 1e-6);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({5}, rng);
  std::vector<Tensor> params{x};
  for (auto& p : params) p.zero_grad();
  auto f = [&] { return sum(square(x)); };
  backward(f());
  std::vector<std::vector<double>> doubled{{}};
  for (double g : x.grad()) doubled[0].push_back(2.0 * g);
  auto res = compare_with_finite_differences(
      [&] {
        NoGradGuard ng;
        return f().item();
      },
      params, doubled);
  // |2g - g| / max(1,|2g|) is ~0.5 for large g, so planted bugs show as O(1).
  EXPECT_GT(res.max_rel_error, 0.3);
}

// Every differentiable op, 100 seeds each.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, CentralDifferencesAgree) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) * 7919 + 1);
  const GradCheckOptions opt{1e-5, 0, 0};
  auto check = [&](const char* name, std::vector<Tensor> params, auto&& f) {
    auto proj_seed = rng();
    auto loss = [&, proj_seed] {
      std::mt19937_64 r(proj_seed);
      return project(f(), r);
    };
    auto res = finite_diff_check(loss, params, opt);
    EXPECT_LT(res.max_rel_error, 1e-4) << name << " seed " << GetParam();
  };
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  check("matmul", {a, b}, [&] { return matmul(a, b); });
  auto c = random_tensor({3, 4}, rng), bias = random_tensor({4}, rng);
  check("add_row", {c, bias}, [&] { return add_row(c, bias); });
  auto e = random_tensor({3, 4}, rng);
  check("add", {c, e}, [&] { return add(c, e); });
  check("sub", {c, e}, [&] { return sub(c, e); });
  check("mul", {c, e}, [&] { return mul(c, e); });
  check("scale", {c}, [&] { return scale(c, -1.7); });
  check("exp", {c}, [&] { return exp(c); });
  check("square", {c}, [&] { return square(c); });
  check("gelu", {c}, [&] { return gelu(c); });
  check("softmax", {c}, [&] { return softmax(c); });
  check("log_softmax", {c}, [&] { return log_softmax(c); });
  check("row_sum", {c}, [&] { return row_sum(c); });
  check("mean", {c}, [&] { return mean(c); });
  auto g = random_tensor({4}, rng), h = random_tensor({4}, rng);
  check("layer_norm", {c, g, h}, [&] { return layer_norm(c, g, h); });
  check("concat_rows", {c, e}, [&] { return concat_rows({c, e}); });
  check("concat_cols", {c, a}, [&] { return concat_cols(c, a); });
  check("gather_rows", {c}, [&] { return gather_rows(c, {2, 0, 2, 1}); });
  check("repeat_rows", {g}, [&] { return repeat_rows(g, 3); });
  check("pick", {c}, [&] { return pick(c, {3, 0, 1}); });
  check("reshape", {c}, [&] { return reshape(c, {4, 3}); });
  // Piecewise ops: random inputs sit away from kinks with probability one.
  check("clamp", {c}, [&] { return clamp(c, -0.5, 0.5); });
  check("minimum", {c, e}, [&] { return minimum(c, e); });
  check("maximum", {c, e}, [&] { return maximum(c, e); });
  auto q = random_tensor({6, 8}, rng), k = random_tensor({6, 8}, rng),
       v = random_tensor({6, 8}, rng);
  check("attention_core", {q, k, v}, [&] { return attention_core(q, k, v, 3, 2); });
  auto w = make_attention(8, rng);
  auto x = random_tensor({4, 8}, rng);
  check("self_attention",
        {x, w.query.weight, w.query.bias, w.key.weight, w.value.weight, w.output.weight,
         w.output.bias},
        [&] { return self_attention(x, w, 4); });
}

INSTANTIATE_TEST_SUITE_P(HundredSeeds, OpGradients, ::testing::Range(0, 100));

TEST(Adam, ZeroLearningRateLeavesParametersBitExact) {
  std::mt19937_64 rng(21);
  auto w = random_tensor({3, 3}, rng);
  const std::vector<double> before(w.data().begin(), w.data().end());
  Adam opt({w}, AdamConfig{0.0});
  backward(sum(square(w)));
  opt.step();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(w[i], before[i]);
}

TEST(ClipGradNorm, BoundsGlobalNorm) {
  std::mt19937_64 rng(23);
  auto a = random_tensor({10}, rng), b = random_tensor({4, 4}, rng);
  std::vector<Tensor> params{a, b};
  backward(add(scale(sum(square(a)), 50.0), sum(square(b))));
  const double before = clip_grad_norm(params, 0.5);
  EXPECT_GT(before, 0.5);
  EXPECT_LE(global_grad_norm(params), 0.5 + 1e-9);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(31);
  Checkpoint out;
  out.metadata = R"({"note":"x"})";
  out.tensors.push_back({"w", random_tensor({3, 5}, rng, false, 1e3)});
  out.tensors.push_back({"b", random_tensor({7}, rng, false, 1e-200)});
  out.tensors.push_back({"empty", Tensor::zeros({0, 4})});
  const auto path = (std::filesystem::temp_directory_path() / "sepassure_ckpt_test.bin").string();
  save_checkpoint(path, out);
  const auto in = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(in.metadata, out.metadata);
  ASSERT_EQ(in.tensors.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(in.tensors[k].name, out.tensors[k].name);
    EXPECT_EQ(in.tensors[k].tensor.shape(), out.tensors[k].tensor.shape());
    EXPECT_EQ(std::memcmp(in.tensors[k].tensor.data().data(), out.tensors[k].tensor.data().data(),
                          out.tensors[k].tensor.size() * sizeof(double)),
              0);
  }
}

TEST(Checkpoint, RejectsForeignFile) {
  const auto path = (std::filesystem::temp_directory_path() / "sepassure_not_ckpt.bin").string();
  {
    std::ofstream os(path);
    os << "hello world, definitely not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}
