#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "primitive_cases.hpp"
#include "support.hpp"

#include "assimlab/autodiff.hpp"
#include "assimlab/lorenz96.hpp"
#include "assimlab/optim.hpp"

using namespace assimlab;
using namespace testing_support;

TEST(Grad, SquareAtThree) {
  std::vector<Tensor> at{Tensor::scalar(3.0)};
  auto g = ad::grad([](ad::Graph&, std::span<const ad::Var> v) { return v[0] * v[0]; }, at);
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Grad, ProductRule) {
  std::vector<Tensor> at{Tensor::scalar(2.0), Tensor::scalar(5.0)};
  auto g = ad::grad([](ad::Graph&, std::span<const ad::Var> v) { return v[0] * v[1]; }, at);
  EXPECT_DOUBLE_EQ(g[0].item(), 5.0);
  EXPECT_DOUBLE_EQ(g[1].item(), 2.0);
}

TEST(Grad, EveryPrimitiveMatchesFiniteDifferencesAtTwentyPoints) {
  for (const auto& pc : primitive_cases()) {
    for (std::uint64_t point = 0; point < 20; ++point) {
      std::vector<Tensor> at;
      for (std::size_t k = 0; k < pc.shapes.size(); ++k) {
        at.push_back(random_tensor(pc.shapes[k], derive_seed(point, pc.name, k), pc.lo, pc.hi));
      }
      const double err = gradient_check(pc.f, at);
      EXPECT_LT(err, 1e-6) << pc.name << " at point " << point;
    }
  }
}

TEST(Grad, RungeKuttaStepSquaredNormMatchesFiniteDifferences) {
  l96::Lorenz96Config cfg;
  const auto tr = l96::simulate(cfg, std::nullopt, 0, 42);
  std::vector<Tensor> at{Tensor(Shape{40}, std::vector<double>(tr.states.data().begin(), tr.states.data().end()))};
  Builder f = [&](ad::Graph&, std::span<const ad::Var> v) { return ad::squared_norm(l96::rk4_step(v[0], cfg)); };
  EXPECT_LT(gradient_check(f, at), 1e-6);
}

TEST(Grad, FusedTendencyAgreesWithCompositeRoute) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<Tensor> at{random_tensor({3, 10}, s, -5, 10)};
    auto fused = ad::value_and_grad(
        [](ad::Graph&, std::span<const ad::Var> v) { return weighted_sum(l96::tendency(v[0], 8.0), 99); }, at);
    auto comp = ad::value_and_grad(
        [](ad::Graph&, std::span<const ad::Var> v) { return weighted_sum(l96::tendency_composite(v[0], 8.0), 99); }, at);
    EXPECT_NEAR(fused.value, comp.value, 1e-10 * std::abs(comp.value));
    EXPECT_LT(relative_error(fused.grads, comp.grads), 1e-12);
  }
}

TEST(Grad, LinearityOfSums) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<Tensor> at{random_tensor({4, 3}, s), random_tensor({3, 2}, s + 100)};
    Builder f1 = [](ad::Graph&, std::span<const ad::Var> v) {
      return ad::squared_norm(ad::tanh(ad::matmul(v[0], v[1])));
    };
    Builder f2 = [](ad::Graph&, std::span<const ad::Var> v) {
      return ad::sum(ad::exp(v[0] * 0.5)) + ad::mean(ad::softplus(v[1]));
    };
    Builder both = [&](ad::Graph& g, std::span<const ad::Var> v) { return f1(g, v) + f2(g, v); };
    auto g1 = ad::grad(f1, at), g2 = ad::grad(f2, at), g12 = ad::grad(both, at);
    for (std::size_t k = 0; k < at.size(); ++k)
      for (std::size_t i = 0; i < at[k].size(); ++i) EXPECT_NEAR(g12[k][i], g1[k][i] + g2[k][i], 1e-13);
  }
}

TEST(Grad, ReplayIsBitIdentical) {
  std::vector<Tensor> at{random_tensor({2, 3, 8}, 1), random_tensor({4, 3, 5}, 2), random_tensor({4}, 3)};
  Builder f = [](ad::Graph&, std::span<const ad::Var> v) {
    ad::Var y = ad::tanh(ad::conv1d_circular(v[0], v[1], v[2]));
    return ad::squared_norm(y) + ad::sum(y * y * y);
  };
  auto a = ad::value_and_grad(f, at);
  auto b = ad::value_and_grad(f, at);
  EXPECT_EQ(a.value, b.value);
  for (std::size_t k = 0; k < at.size(); ++k) EXPECT_TRUE(a.grads[k] == b.grads[k]);
}

TEST(Grad, UnusedInputGetsZeros) {
  std::vector<Tensor> at{Tensor::scalar(1.0), random_tensor({3}, 4)};
  auto g = ad::grad([](ad::Graph&, std::span<const ad::Var> v) { return v[0] * 2.0; }, at);
  EXPECT_EQ(g[1].shape(), (Shape{3}));
  for (double v : g[1].data()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, NonFinitePrimalNamesTheNode) {
  std::vector<Tensor> at{Tensor::vector({-1.0, 2.0})};
  try {
    ad::grad([](ad::Graph&, std::span<const ad::Var> v) { return ad::sum(ad::log(v[0])); }, at);
    FAIL() << "expected a differentiation error";
  } catch (const DifferentiationError& e) {
    EXPECT_EQ(e.node_kind(), "log");
  }
}

TEST(Grad, NonFiniteGradientNamesTheNode) {
  // 1/x at x = 1e-200 is finite, its derivative -1/x^2 overflows.
  std::vector<Tensor> at{Tensor::scalar(1e-200)};
  try {
    ad::grad([](ad::Graph& g, std::span<const ad::Var> v) { return g.constant(Tensor::scalar(1.0)) / v[0]; }, at);
    FAIL() << "expected a differentiation error";
  } catch (const DifferentiationError& e) {
    EXPECT_EQ(e.node_kind(), "div");
  }
}

TEST(Grad, NonScalarLossIsAContractError) {
  ad::Graph g;
  ad::Var x = g.parameter(random_tensor({3}, 1));
  std::array<ad::Var, 1> wrt{x};
  EXPECT_THROW(g.backward(x * 2.0, wrt), ContractError);
}

TEST(Grad, BroadcastRejectsMismatchedShapes) {
  ad::Graph g;
  ad::Var a = g.constant(Tensor(Shape{3}));
  ad::Var b = g.constant(Tensor(Shape{4}));
  EXPECT_THROW(a + b, ContractError);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  std::vector<Tensor> p{random_tensor({5}, 1)};
  const Tensor before = p[0];
  std::vector<Tensor> g{Tensor(Shape{5})};
  AdamState st;
  adam_step(p, g, st);
  EXPECT_TRUE(p[0] == before);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesEachCoordinateByLr) {
  std::vector<Tensor> p{Tensor::vector({1.0, -2.0, 3.0})};
  std::vector<Tensor> g{Tensor::vector({0.3, -4.0, 1e-3})};
  AdamState st;
  st.lr = 0.01;
  st.eps = 0.0;
  adam_step(p, g, st);
  EXPECT_NEAR(p[0][0], 1.0 - 0.01, 1e-15);
  EXPECT_NEAR(p[0][1], -2.0 + 0.01, 1e-15);
  EXPECT_NEAR(p[0][2], 3.0 - 0.01, 1e-15);
}

TEST(Adam, HundredStepsOnSquaredNormShrinkByMoreThanTen) {
  std::vector<Tensor> p{random_tensor({10}, 9, 1.0, 3.0)};
  auto norm = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
  };
  const double n0 = norm(p[0]);
  AdamState st;
  st.lr = 0.1;
  for (int k = 0; k < 100; ++k) {
    auto g = ad::grad([](ad::Graph&, std::span<const ad::Var> v) { return ad::squared_norm(v[0]); },
                      std::vector<Tensor>{p[0]});
    adam_step(p, g, st);
  }
  EXPECT_GT(n0 / norm(p[0]), 10.0);
}

TEST(Adam, ShapeMismatchIsAContractError) {
  std::vector<Tensor> p{Tensor(Shape{3})};
  std::vector<Tensor> g{Tensor(Shape{4})};
  AdamState st;
  EXPECT_THROW(adam_step(p, g, st), ContractError);
}

TEST(Adam, SecondMomentStaysNonNegative) {
  std::vector<Tensor> p{random_tensor({6}, 2)};
  AdamState st;
  for (int k = 0; k < 20; ++k) {
    std::vector<Tensor> g{random_tensor({6}, 100 + k)};
    adam_step(p, g, st);
    for (double v : st.v[0].data()) EXPECT_GE(v, 0.0);
  }
}

// ---------------------------------------------------------------------------
// L-BFGS

namespace {

std::pair<double, Tensor> shifted_quadratic(const Tensor& x, const Tensor& c) {
  Tensor g(x.shape());
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - c[i];
    f += d * d;
    g[i] = 2.0 * d;
  }
  return {f, g};
}

}  // namespace

TEST(Lbfgs, QuadraticReachesItsCenter) {
  const Tensor c = random_tensor({12}, 5, -3, 3);
  auto r = lbfgs_minimize([&](const Tensor& x) { return shifted_quadratic(x, c); }, random_tensor({12}, 6, -10, 10));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(r.x[i], c[i], 1e-8);
  EXPECT_FALSE(r.line_search_failed);
}

TEST(Lbfgs, RosenbrockFromClassicStart) {
  auto rosen = [](const Tensor& x) {
    const double a = x[0], b = x[1];
    Tensor g(Shape{2});
    g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
    g[1] = 200.0 * (b - a * a);
    return std::pair{(1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a), g};
  };
  LbfgsOptions opt;
  opt.grad_tol = 1e-12;
  auto r = lbfgs_minimize(rosen, Tensor::vector({-1.2, 1.0}), opt);
  EXPECT_NEAR(r.x[0], 1.0, 1e-5);
  EXPECT_NEAR(r.x[1], 1.0, 1e-5);
}

TEST(Lbfgs, RandomPositiveDefiniteQuadraticsConvergeWithin200Iterations) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const std::size_t d = 5 + (s * 7) % 46;
    Tensor q = random_tensor({d, d}, 10 + s);
    // A = Q Q^T + I: symmetric positive definite.
    std::vector<double> A(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < d; ++k) A[i * d + j] += q(i, k) * q(j, k);
        if (i == j) A[i * d + j] += 1.0;
      }
    const Tensor b = random_tensor({d}, 20 + s);
    auto f = [&](const Tensor& x) {
      Tensor g(x.shape());
      double v = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double ax = 0.0;
        for (std::size_t j = 0; j < d; ++j) ax += A[i * d + j] * x[j];
        g[i] = ax - b[i];
        v += 0.5 * x[i] * ax - b[i] * x[i];
      }
      return std::pair{v, g};
    };
    LbfgsOptions opt;
    opt.max_iters = 200;
    opt.grad_tol = 1e-8;
    auto r = lbfgs_minimize(f, Tensor(Shape{d}), opt);
    EXPECT_LT(r.grad_inf_norm, 1e-8) << "dimension " << d;
    EXPECT_LE(r.iterations, 200u);
  }
}

TEST(Lbfgs, TraceIsMonotoneAndEndsBelowStart) {
  const Tensor c = random_tensor({6}, 8);
  auto r = lbfgs_minimize([&](const Tensor& x) { return shifted_quadratic(x, c); }, random_tensor({6}, 9));
  ASSERT_GE(r.trace.size(), 2u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1] + 1e-12);
  EXPECT_LE(r.value, r.trace.front());
}

TEST(Lbfgs, UnsatisfiableLineSearchReturnsWithWarning) {
  // The reported gradient points uphill, so no step can satisfy Armijo.
  auto lying = [](const Tensor& x) {
    Tensor g(x.shape());
    g[0] = -1.0;
    return std::pair{x[0] * x[0] + 1.0, g};
  };
  LbfgsResult r;
  EXPECT_NO_THROW(r = lbfgs_minimize(lying, Tensor::vector({0.0})));
  EXPECT_TRUE(r.line_search_failed);
  EXPECT_EQ(r.x[0], 0.0);
}

TEST(Lbfgs, EvaluationErrorsCountAsRejectedTrials) {
  // Non-finite region beyond x > 1: the unit step from the scaled first direction lands there.
  auto f = [](const Tensor& x) {
    if (x[0] > 1.0) throw NumericalError("outside domain");
    Tensor g(x.shape());
    g[0] = 2.0 * (x[0] - 0.9);
    return std::pair{(x[0] - 0.9) * (x[0] - 0.9), g};
  };
  LbfgsOptions opt;
  opt.grad_tol = 1e-10;
  auto r = lbfgs_minimize(f, Tensor::vector({-50.0}), opt);
  EXPECT_NEAR(r.x[0], 0.9, 1e-8);
}
