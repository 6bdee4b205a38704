#include "oldroyd/memory.hpp"

#include "oldroyd/errors.hpp"

#include <cmath>
#include <string>

namespace oldroyd::memory {

namespace {

// (1 - e^{-x}) / x
double phi0(double x) {
  if (x < 1e-3) {
    double term = 1.0, sum = 0.0;
    for (int m = 0; m < 12; ++m) {
      sum += term / (m + 1);
      term *= -x / (m + 1);
    }
    return sum;
  }
  return -std::expm1(-x) / x;
}

// (1 - e^{-x}(1 + x)) / x^2 = sum_{m>=2} (-1)^m (m-1)/m! x^{m-2}
double phi1(double x) {
  if (x < 0.1) {
    double fact = 2.0, pw = 1.0, sum = 0.0;
    for (int m = 2; m < 24; ++m) {
      sum += ((m % 2 == 0) ? 1.0 : -1.0) * (m - 1) / fact * pw;
      pw *= x;
      fact *= m + 1;
    }
    return sum;
  }
  return (-std::expm1(-x) - x * std::exp(-x)) / (x * x);
}

// (e^x - 1) / x = sum x^m / (m+1)!
double growth0(double x) {
  if (x < 1e-3) {
    double term = 1.0, sum = 0.0;
    for (int m = 0; m < 12; ++m) {
      sum += term / (m + 1);
      term *= x / (m + 1);
    }
    return sum;
  }
  return std::expm1(x) / x;
}

// int_0^1 u e^{xu} du = sum x^m / (m! (m+2))
double growth1(double x) {
  if (x < 1e-3) {
    double term = 1.0, sum = 0.0;
    for (int m = 0; m < 12; ++m) {
      sum += term / (m + 2);
      term *= x / (m + 1);
    }
    return sum;
  }
  const double em1 = std::expm1(x);
  return (x * em1 + x - em1) / (x * x);
}

void check_step(const MemoryState& s, double t_new) {
  const double step = t_new - s.time;
  if (!(std::abs(step - s.k) <= 1e-9 * s.k)) {
    throw InvalidArgument("memory recursion needs uniform steps: expected " + std::to_string(s.k) +
                          ", got " + std::to_string(step));
  }
}

}  // namespace

KernelParams KernelParams::derive(double lambda, double kappa, double nu) {
  if (!(lambda > 0.0) || !(kappa > 0.0)) {
    throw InvalidArgument("kernel parameters need lambda > 0 and kappa > 0");
  }
  KernelParams p;
  p.lambda = lambda;
  p.kappa = kappa;
  p.nu = nu;
  p.mu = 2.0 * kappa / lambda;
  p.gamma = 2.0 / lambda * (nu - kappa / lambda);
  p.delta = 1.0 / lambda;
  if (!(p.gamma > 0.0)) {
    throw NonPositiveGamma("nu <= kappa/lambda gives gamma = " + std::to_string(p.gamma) +
                           "; the model is not of Oldroyd type");
  }
  return p;
}

KernelParams KernelParams::from_coefficients(double mu, double gamma, double delta) {
  if (!(mu > 0.0) || !(delta > 0.0) || gamma < 0.0) {
    throw InvalidArgument("kernel coefficients need mu > 0, delta > 0, gamma >= 0");
  }
  KernelParams p;
  p.mu = mu;
  p.gamma = gamma;
  p.delta = delta;
  p.lambda = 1.0 / delta;
  p.kappa = mu * p.lambda / 2.0;
  p.nu = gamma * p.lambda / 2.0 + p.kappa / p.lambda;
  return p;
}

double kernel_eval(const KernelParams& p, double t) {
  if (t < 0.0) throw InvalidArgument("kernel evaluated at negative time");
  return p.gamma * std::exp(-p.delta * t);
}

MemoryWeights memory_weights(const KernelParams& p, double k, MemoryRule rule) {
  if (!(k > 0.0)) throw InvalidArgument("time step must be positive");
  const double x = p.delta * k;
  MemoryWeights w;
  w.decay = std::exp(-x);
  if (rule == MemoryRule::kRightRectangle) {
    w.w_new = p.gamma * k;
    return w;
  }
  const double e0 = k * phi0(x);      // int_0^k e^{-delta tau} d tau
  const double e1 = k * k * phi1(x);  // int_0^k tau e^{-delta tau} d tau
  w.w_prev = p.gamma * e1 / k;
  w.w_new = p.gamma * (e0 - e1 / k);
  return w;
}

MemoryState MemoryState::begin(const KernelParams& p, double k, double start, const Vector& g0,
                               MemoryRule rule) {
  MemoryState s;
  s.integral = Vector::Zero(g0.size());
  s.previous = g0;
  s.time = start;
  s.start = start;
  s.k = k;
  s.rule = rule;
  s.weights = memory_weights(p, k, rule);
  return s;
}

Vector MemoryState::history_part() const { return weights.decay * integral + weights.w_prev * previous; }

MemoryState advance(const MemoryState& state, double t_new, const Vector& g_new) {
  check_step(state, t_new);
  if (g_new.size() != state.previous.size()) {
    throw DimensionMismatch("memory history length", state.previous.size(), g_new.size());
  }
  MemoryState next = state;
  next.integral = state.history_part() + state.weights.w_new * g_new;
  next.previous = g_new;
  next.time = t_new;
  next.steps = state.steps + 1;
  return next;
}

MemoryState advance_memory(const MemoryState& state, const SparseMatrix& a, const Vector& u_new, double t_new) {
  if (a.cols() != u_new.size()) throw DimensionMismatch("stiffness/field size", a.cols(), u_new.size());
  return advance(state, t_new, a * u_new);
}

Vector direct_convolution(const KernelParams& p, double k, const std::vector<Vector>& samples, MemoryRule rule) {
  if (samples.empty()) throw InvalidArgument("empty history");
  const int n = static_cast<int>(samples.size()) - 1;
  Vector out = Vector::Zero(samples.front().size());
  const double x = p.delta * k;
  for (int j = 1; j <= n; ++j) {
    if (rule == MemoryRule::kRightRectangle) {
      out += p.gamma * k * std::exp(-p.delta * (n - j) * k) * samples[static_cast<std::size_t>(j)];
      continue;
    }
    // s = t_{j-1} + sigma; kernel gamma e^{-delta (t_n - t_{j-1})} e^{delta sigma}
    const double scale = p.gamma * std::exp(-p.delta * (n - j + 1) * k);
    const double p0 = k * growth0(x);
    const double p1 = k * k * growth1(x);
    out += scale * ((p0 - p1 / k) * samples[static_cast<std::size_t>(j - 1)] +
                    (p1 / k) * samples[static_cast<std::size_t>(j)]);
  }
  return out;
}

double positivity_quadrature(const std::vector<double>& phi, double alpha, double k) {
  if (!(alpha > 0.0) || !(k > 0.0)) throw InvalidArgument("positivity quadrature needs alpha > 0, k > 0");
  if (phi.size() < 2) return 0.0;
  const double e = std::exp(-alpha * k);
  double inner = 0.0, total = 0.0;
  const std::size_t last = phi.size() - 1;
  for (std::size_t n = 1; n <= last; ++n) {
    inner = e * inner + 0.5 * k * (e * phi[n - 1] + phi[n]);
    total += (n == last ? 0.5 : 1.0) * k * inner * phi[n];
  }
  return total;
}

double positivity_quadrature(const std::vector<Vector>& phi, double alpha, double k) {
  if (!(alpha > 0.0) || !(k > 0.0)) throw InvalidArgument("positivity quadrature needs alpha > 0, k > 0");
  if (phi.size() < 2) return 0.0;
  const double e = std::exp(-alpha * k);
  Vector inner = Vector::Zero(phi.front().size());
  double total = 0.0;
  const std::size_t last = phi.size() - 1;
  for (std::size_t n = 1; n <= last; ++n) {
    inner = e * inner + 0.5 * k * (e * phi[n - 1] + phi[n]);
    total += (n == last ? 0.5 : 1.0) * k * inner.dot(phi[n]);
  }
  return total;
}

}  // namespace oldroyd::memory
