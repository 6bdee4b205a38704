#include "oldroyd/errors.hpp"
#include "oldroyd/memory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace oldroyd;
using namespace oldroyd::memory;

namespace {

double run_scalar(const KernelParams& p, double k, double T, double (*g)(double), MemoryRule rule) {
  const int n = static_cast<int>(std::lround(T / k));
  Vector g0(1);
  g0[0] = g(0.0);
  MemoryState s = MemoryState::begin(p, k, 0.0, g0, rule);
  for (int i = 1; i <= n; ++i) {
    Vector gi(1);
    gi[0] = g(i * k);
    s = advance(s, i * k, gi);
  }
  return s.integral[0];
}

double one(double) { return 1.0; }
double ramp(double s) { return s; }
double wave(double s) { return std::sin(3.0 * s); }

}  // namespace

TEST(Kernel, DeriveExamples) {
  const KernelParams a = KernelParams::derive(1.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(a.mu, 1.0);
  EXPECT_DOUBLE_EQ(a.gamma, 1.0);
  EXPECT_DOUBLE_EQ(a.delta, 1.0);
  const KernelParams b = KernelParams::derive(1.0, 0.5, 2.0);
  EXPECT_DOUBLE_EQ(b.gamma, 3.0);
  // gamma vanishes exactly at nu = kappa / lambda.
  EXPECT_THROW(KernelParams::derive(2.0, 1.0, 0.5), NonPositiveGamma);
  EXPECT_THROW(KernelParams::derive(2.0, 1.0, 0.4), NonPositiveGamma);
  EXPECT_DOUBLE_EQ(KernelParams::derive(2.0, 1.0, 1.0).gamma, 0.5);
  EXPECT_THROW(KernelParams::derive(-1.0, 1.0, 1.0), InvalidArgument);
  const KernelParams c = KernelParams::from_coefficients(1.0, 3.0, 1.0);
  EXPECT_NEAR(c.nu, 2.0, 1e-15);
  EXPECT_NEAR(c.kappa, 0.5, 1e-15);
}

TEST(Kernel, Evaluation) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(kernel_eval(p, 0.0), 1.0);
  EXPECT_NEAR(kernel_eval(p, 1.0), std::exp(-1.0), 1e-15);
  EXPECT_THROW(kernel_eval(p, -0.1), InvalidArgument);
  // Composite Simpson on [0, 50] for the total mass gamma/delta.
  const KernelParams q = KernelParams::from_coefficients(1.0, 2.0, 0.7);
  const int n = 200000;
  const double h = 50.0 / n;
  double s = kernel_eval(q, 0.0) + kernel_eval(q, 50.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * kernel_eval(q, i * h);
  EXPECT_NEAR(s * h / 3.0, 2.0 / 0.7, 1e-8);
}

TEST(Memory, ConstantAndRampHistories) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  EXPECT_NEAR(run_scalar(p, 1e-3, 1.0, one, MemoryRule::kExponentialLinear), 1.0 - std::exp(-1.0), 1e-6);
  EXPECT_NEAR(run_scalar(p, 1e-3, 1.0, ramp, MemoryRule::kExponentialLinear), std::exp(-1.0), 1e-6);
}

TEST(Memory, ZeroGammaKeepsMemoryEmpty) {
  const KernelParams p = KernelParams::from_coefficients(1.0, 0.0, 1.0);
  EXPECT_EQ(run_scalar(p, 1e-2, 1.0, wave, MemoryRule::kExponentialLinear), 0.0);
}

TEST(Memory, SecondOrderInStep) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  const double exact = std::exp(-1.0) * ((std::exp(1.0) * (std::sin(3.0) - 3.0 * std::cos(3.0)) + 3.0) / 10.0);
  double prev = 0.0;
  for (double k : {0.1, 0.05, 0.025, 0.0125}) {
    const double err = std::abs(run_scalar(p, k, 1.0, wave, MemoryRule::kExponentialLinear) - exact);
    if (prev > 0.0) {
      EXPECT_GE(prev / err, 3.5);
      EXPECT_LE(prev / err, 4.5);
    }
    prev = err;
  }
}

TEST(Memory, RightRectangleIsFirstOrder) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  const double e1 = std::abs(run_scalar(p, 0.01, 1.0, one, MemoryRule::kRightRectangle) - (1.0 - std::exp(-1.0)));
  const double e2 = std::abs(run_scalar(p, 0.005, 1.0, one, MemoryRule::kRightRectangle) - (1.0 - std::exp(-1.0)));
  EXPECT_NEAR(e1 / e2, 2.0, 0.1);
}

TEST(Memory, RecursionMatchesDirectConvolution) {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const KernelParams p = KernelParams::from_coefficients(1.0, 0.5 + (trial % 4), 0.2 + 0.3 * (trial % 5));
    const double k = (trial % 2) ? 1e-2 : 1e-3;
    for (MemoryRule rule : {MemoryRule::kExponentialLinear, MemoryRule::kRightRectangle}) {
      std::vector<Vector> g;
      for (int i = 0; i <= 150; ++i) {
        Vector v(3);
        for (int c = 0; c < 3; ++c) v[c] = d(gen);
        g.push_back(v);
      }
      MemoryState s = MemoryState::begin(p, k, 0.5, g[0], rule);
      for (int i = 1; i <= 150; ++i) s = advance(s, 0.5 + i * k, g[static_cast<std::size_t>(i)]);
      const Vector direct = direct_convolution(p, k, g, rule);
      EXPECT_LE((s.integral - direct).norm(), 1e-12 * direct.norm()) << trial;
    }
  }
}

TEST(Memory, HistoryDoesNotSeeFuture) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  Vector g0 = Vector::Ones(2);
  MemoryState s = MemoryState::begin(p, 0.1, 0.0, g0);
  const Vector h = s.history_part();
  MemoryState a = advance(s, 0.1, Vector::Ones(2));
  MemoryState b = advance(s, 0.1, Vector::Zero(2));
  EXPECT_NEAR((a.integral - b.integral).norm(), s.weights.w_new * std::sqrt(2.0), 1e-15);
  EXPECT_NEAR((b.integral - h).norm(), 0.0, 1e-15);
}

TEST(Memory, NonUniformStepRejected) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  MemoryState s = MemoryState::begin(p, 0.1, 0.0, Vector::Zero(1));
  EXPECT_THROW(advance(s, 0.15, Vector::Zero(1)), InvalidArgument);
  EXPECT_THROW(advance(s, 0.1, Vector::Zero(2)), DimensionMismatch);
}

TEST(Memory, AdvanceWithStiffness) {
  const KernelParams p = KernelParams::derive(1.0, 0.5, 1.0);
  linalg::SparseMatrix a(2, 2);
  a.insert(0, 0) = 2.0;
  a.insert(1, 1) = 3.0;
  MemoryState s = MemoryState::begin(p, 0.1, 0.0, Vector::Zero(2));
  s = advance_memory(s, a, Vector::Ones(2), 0.1);
  EXPECT_NEAR(s.integral[1] / s.integral[0], 1.5, 1e-15);
}

TEST(Positivity, ClosedFormAndZero) {
  EXPECT_EQ(positivity_quadrature(std::vector<double>(101, 0.0), 1.0, 0.01), 0.0);
  const int n = 1000;
  EXPECT_NEAR(positivity_quadrature(std::vector<double>(n + 1, 1.0), 1.0, 1.0 / n), std::exp(-1.0), 1e-6);
  std::vector<Vector> f(n + 1, Vector::Ones(2));
  EXPECT_NEAR(positivity_quadrature(f, 1.0, 1.0 / n), 2.0 * std::exp(-1.0), 2e-6);
}

TEST(Positivity, RandomPiecewiseLinearHistories) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::uniform_int_distribution<int> knots(2, 40);
  const double k = 1e-2;
  for (double alpha : {0.3, 1.0, 3.0}) {
    for (int trial = 0; trial < 30; ++trial) {
      const int m = knots(gen);
      std::vector<double> kv(static_cast<std::size_t>(m + 1));
      for (double& v : kv) v = d(gen);
      std::vector<double> phi(201);
      for (int i = 0; i <= 200; ++i) {
        const double t = i * k / 2.0 * m;  // position in knot units over [0, 2]
        const int j = std::min(static_cast<int>(t), m - 1);
        phi[static_cast<std::size_t>(i)] = kv[static_cast<std::size_t>(j)] * (j + 1 - t) + kv[static_cast<std::size_t>(j + 1)] * (t - j);
      }
      EXPECT_GE(positivity_quadrature(phi, alpha, k), -1e-10);
    }
  }
}
