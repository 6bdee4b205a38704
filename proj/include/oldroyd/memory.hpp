#pragma once

// Oldroyd kernel beta(t) = gamma exp(-delta t) and the recursive time
// quadrature of the Volterra term int beta(t - s) g(s) ds.

#include "oldroyd/linalg.hpp"

#include <vector>

namespace oldroyd::memory {

using linalg::SparseMatrix;
using linalg::Vector;

struct KernelParams {
  double lambda = 1.0;  // relaxation time
  double kappa = 0.5;
  double nu = 1.0;
  double mu = 1.0;
  double gamma = 1.0;
  double delta = 1.0;

  /// mu = 2 kappa / lambda, gamma = 2 (nu - kappa / lambda) / lambda,
  /// delta = 1 / lambda. Throws NonPositiveGamma when nu <= kappa / lambda
  /// and InvalidArgument for non-positive lambda or kappa.
  static KernelParams derive(double lambda, double kappa, double nu);

  /// Kernel given directly by (mu, gamma, delta); gamma = 0 is allowed here
  /// (memory switched off). lambda, kappa, nu are back-computed.
  static KernelParams from_coefficients(double mu, double gamma, double delta);
};

/// gamma exp(-delta t); t < 0 raises InvalidArgument.
double kernel_eval(const KernelParams& p, double t);

enum class MemoryRule {
  kExponentialLinear,  // exact exponential weights on the linear interpolant (order 2)
  kRightRectangle,     // beta(0) k g_n per step (order 1)
};

/// One-step recursion I_n = decay I_{n-1} + w_prev g_{n-1} + w_new g_n.
struct MemoryWeights {
  double decay = 1.0;
  double w_prev = 0.0;
  double w_new = 0.0;
};

MemoryWeights memory_weights(const KernelParams& p, double k, MemoryRule rule);

/// Accumulated convolution of a vector-valued history with the kernel.
/// The history g can be anything linear in the field (the field itself, or
/// A u); only the recursion is stored here.
struct MemoryState {
  Vector integral;   // I_n
  Vector previous;   // g_n (needed by the next increment)
  double time = 0.0;
  double start = 0.0;
  double k = 0.0;
  int steps = 0;
  MemoryWeights weights;
  MemoryRule rule = MemoryRule::kExponentialLinear;

  /// Empty memory at `start` with first history value g0.
  static MemoryState begin(const KernelParams& p, double k, double start, const Vector& g0,
                           MemoryRule rule = MemoryRule::kExponentialLinear);

  /// Part of I_{n+1} known before g_{n+1}: decay I_n + w_prev g_n.
  Vector history_part() const;
};

/// Advances by one step to time `t_new` with history value g_new. Any step
/// other than state.k (relative 1e-9) raises InvalidArgument.
MemoryState advance(const MemoryState& state, double t_new, const Vector& g_new);

/// Same, with g = A u.
MemoryState advance_memory(const MemoryState& state, const SparseMatrix& a, const Vector& u_new, double t_new);

/// O(n^2) oracle: direct interval-by-interval integration of the same
/// piecewise-linear (or right-rectangle) reconstruction of the samples
/// g_0..g_n on a uniform grid of step k. Returns I_n.
Vector direct_convolution(const KernelParams& p, double k, const std::vector<Vector>& samples,
                          MemoryRule rule = MemoryRule::kExponentialLinear);

/// Composite trapezoid value of int_0^T (int_0^t e^{-alpha (t-s)} phi(s) ds) phi(t) dt
/// for samples phi_0..phi_N on a uniform grid of step k.
double positivity_quadrature(const std::vector<double>& phi, double alpha, double k);

/// Field-valued variant; the product phi(s) phi(t) is the Euclidean inner product.
double positivity_quadrature(const std::vector<Vector>& phi, double alpha, double k);

}  // namespace oldroyd::memory
