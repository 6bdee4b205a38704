#include "oldroyd/mms.hpp"

#include "oldroyd/errors.hpp"

#include <cmath>
#include <numbers>

namespace oldroyd::mms {

namespace {

// t (1 - e^{-x}) / x with x = a t, continuous through a = 0.
double decay_gap(double a, double t) {
  const double x = a * t;
  if (std::abs(x) < 1e-8) return t * (1.0 - 0.5 * x);
  return -std::expm1(-x) / a;
}

}  // namespace

ManufacturedSolution::ManufacturedSolution(std::string id, Profile profile, TimeFactor time)
    : id_(std::move(id)), profile_(profile), time_(time) {}

std::string ManufacturedSolution::description() const {
  std::string s = profile_ == Profile::kPolynomial ? "curl(x^2(1-x)^2 y^2(1-y)^2)" : "curl(sin^2(pi x) sin^2(pi y))";
  return s + (time_ == TimeFactor::kDecay ? " * exp(-t)" : " * (1+t)");
}

double ManufacturedSolution::phi(double t) const { return time_ == TimeFactor::kDecay ? std::exp(-t) : 1.0 + t; }

double ManufacturedSolution::phi_dot(double t) const { return time_ == TimeFactor::kDecay ? -std::exp(-t) : 1.0; }

double ManufacturedSolution::memory_factor(const memory::KernelParams& p, double t) const {
  const double d = p.delta;
  if (time_ == TimeFactor::kDecay) {
    // gamma e^{-delta t} int_0^t e^{(delta-1)s} ds = gamma e^{-t} (1 - e^{-(delta-1)t})/(delta-1)
    return p.gamma * std::exp(-t) * decay_gap(d - 1.0, t);
  }
  // gamma int_0^t e^{-delta tau} (1 + t - tau) d tau
  const double e0 = decay_gap(d, t);
  const double x = d * t;
  double e1;  // int_0^t tau e^{-delta tau} d tau
  if (x < 0.1) {
    double fact = 2.0, pw = 1.0, sum = 0.0;
    for (int m = 2; m < 24; ++m) {
      sum += ((m % 2 == 0) ? 1.0 : -1.0) * (m - 1) / fact * pw;
      pw *= x;
      fact *= m + 1;
    }
    e1 = t * t * sum;
  } else {
    e1 = (-std::expm1(-x) - x * std::exp(-x)) / (d * d);
  }
  return p.gamma * ((1.0 + t) * e0 - e1);
}

std::array<double, 4> ManufacturedSolution::profile(double s) const {
  if (profile_ == Profile::kPolynomial) {
    const double s2 = s * s;
    return {s2 * (1.0 - s) * (1.0 - s), 2.0 * s - 6.0 * s2 + 4.0 * s2 * s, 2.0 - 12.0 * s + 12.0 * s2, -12.0 + 24.0 * s};
  }
  constexpr double pi = std::numbers::pi;
  const double sn = std::sin(pi * s);
  const double s2 = std::sin(2.0 * pi * s), c2 = std::cos(2.0 * pi * s);
  return {sn * sn, pi * s2, 2.0 * pi * pi * c2, -4.0 * pi * pi * pi * s2};
}

Vec2 ManufacturedSolution::velocity(double x, double y, double t) const {
  const auto gx = profile(x), gy = profile(y);
  const double f = phi(t);
  return {f * gx[0] * gy[1], -f * gx[1] * gy[0]};
}

Mat2 ManufacturedSolution::gradient(double x, double y, double t) const {
  const auto gx = profile(x), gy = profile(y);
  const double f = phi(t);
  return {{{f * gx[1] * gy[1], f * gx[0] * gy[2]}, {-f * gx[2] * gy[0], -f * gx[1] * gy[1]}}};
}

Vec2 ManufacturedSolution::laplacian(double x, double y, double t) const {
  const auto gx = profile(x), gy = profile(y);
  const double f = phi(t);
  return {f * (gx[2] * gy[1] + gx[0] * gy[3]), -f * (gx[3] * gy[0] + gx[1] * gy[2])};
}

double ManufacturedSolution::pressure(double x, double y, double t) const {
  if (time_ == TimeFactor::kDecay) return std::exp(-t) * (x - 0.5) * (y - 0.5);
  return (1.0 + t) * std::cos(std::numbers::pi * x) * std::cos(std::numbers::pi * y);
}

Vec2 ManufacturedSolution::pressure_gradient(double x, double y, double t) const {
  if (time_ == TimeFactor::kDecay) {
    const double e = std::exp(-t);
    return {e * (y - 0.5), e * (x - 0.5)};
  }
  constexpr double pi = std::numbers::pi;
  return {-(1.0 + t) * pi * std::sin(pi * x) * std::cos(pi * y), -(1.0 + t) * pi * std::cos(pi * x) * std::sin(pi * y)};
}

Vec2 forcing(const ManufacturedSolution& sol, const memory::KernelParams& p, double x, double y, double t) {
  const double f = sol.phi(t);
  const Vec2 u = sol.velocity(x, y, t);
  const Mat2 g = sol.gradient(x, y, t);
  const Vec2 lap = sol.laplacian(x, y, t);
  const Vec2 gp = sol.pressure_gradient(x, y, t);
  const double mem = f != 0.0 ? sol.memory_factor(p, t) / f : 0.0;  // lap applies to U = u / phi
  const double ratio = f != 0.0 ? sol.phi_dot(t) / f : 0.0;
  Vec2 out{};
  for (int c = 0; c < 2; ++c) {
    out[c] = ratio * u[c] + u[0] * g[c][0] + u[1] * g[c][1] - p.mu * lap[c] - mem * lap[c] + gp[c];
  }
  return out;
}

fe::ForceFunction forcing_function(const ManufacturedSolution& sol, const memory::KernelParams& p) {
  return [sol, p](double x, double y, double t) { return forcing(sol, p, x, y, t); };
}

fe::VectorFunction initial_velocity(const ManufacturedSolution& sol) {
  return [sol](double x, double y) { return sol.velocity(x, y, 0.0); };
}

const std::vector<ManufacturedSolution>& list_solutions() {
  static const std::vector<ManufacturedSolution> catalogue = {
      ManufacturedSolution("S1", ManufacturedSolution::Profile::kPolynomial, ManufacturedSolution::TimeFactor::kDecay),
      ManufacturedSolution("S2", ManufacturedSolution::Profile::kTrigonometric, ManufacturedSolution::TimeFactor::kGrowth),
  };
  return catalogue;
}

const ManufacturedSolution& solution_by_id(const std::string& id) {
  for (const auto& s : list_solutions()) {
    if (s.id() == id) return s;
  }
  throw InvalidArgument("unknown manufactured solution '" + id + "'");
}

ErrorNorms field_errors(const fe::QuadratureBackend& backend, const linalg::Vector& stacked,
                        const ManufacturedSolution& sol, double t) {
  const fe::Samples s = backend.sample_stacked(stacked);
  double l2 = 0.0, h1 = 0.0;
  for (int p = 0; p < backend.num_points(); ++p) {
    const mesh::Point x = backend.point(p);
    const Vec2 u = sol.velocity(x.x, x.y, t);
    const Mat2 g = sol.gradient(x.x, x.y, t);
    const auto i = static_cast<std::size_t>(p);
    double el = 0.0, eh = 0.0;
    for (int c = 0; c < 2; ++c) {
      el += (u[c] - s.value[i][c]) * (u[c] - s.value[i][c]);
      for (int d = 0; d < 2; ++d) eh += (g[c][d] - s.grad[i][c][d]) * (g[c][d] - s.grad[i][c][d]);
    }
    l2 += backend.weight(p) * el;
    h1 += backend.weight(p) * eh;
  }
  return {t, std::sqrt(l2), std::sqrt(h1)};
}

std::vector<ErrorNorms> exact_errors(const steppers::Trajectory& trajectory, const ManufacturedSolution& sol,
                                     const std::vector<double>& times, int degree) {
  std::vector<int> idx;
  for (double t : times) idx.push_back(trajectory.index_of(t));
  const auto backend = trajectory.backend(degree);
  std::vector<ErrorNorms> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = trajectory.times[static_cast<std::size_t>(idx[i])];
    out.push_back(field_errors(*backend, trajectory.u[static_cast<std::size_t>(idx[i])], sol, t));
  }
  return out;
}

}  // namespace oldroyd::mms
