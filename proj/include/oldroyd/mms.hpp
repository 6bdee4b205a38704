#pragma once

// Manufactured solutions u = phi(t) curl(g(x) g(y)), closed-form memory
// factors and the resulting forcing, plus exact-error evaluation.

#include "oldroyd/assembly.hpp"
#include "oldroyd/memory.hpp"
#include "oldroyd/trajectory.hpp"

#include <array>
#include <string>
#include <vector>

namespace oldroyd::mms {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;  // [c][d] = d u_c / d x_d

class ManufacturedSolution {
 public:
  enum class Profile { kPolynomial, kTrigonometric };  // s^2 (1-s)^2 | sin^2(pi s)
  enum class TimeFactor { kDecay, kGrowth };            // e^{-t} | 1 + t

  ManufacturedSolution(std::string id, Profile profile, TimeFactor time);

  const std::string& id() const { return id_; }
  std::string description() const;

  double phi(double t) const;
  double phi_dot(double t) const;
  /// int_0^t gamma e^{-delta (t-s)} phi(s) ds in closed form.
  double memory_factor(const memory::KernelParams& p, double t) const;

  Vec2 velocity(double x, double y, double t) const;
  Mat2 gradient(double x, double y, double t) const;
  Vec2 laplacian(double x, double y, double t) const;
  double pressure(double x, double y, double t) const;
  Vec2 pressure_gradient(double x, double y, double t) const;

 private:
  // profile g and its derivatives g, g', g'', g'''
  std::array<double, 4> profile(double s) const;

  std::string id_;
  Profile profile_;
  TimeFactor time_;
};

/// f = u_t + (u.grad)u - mu lap u - (int beta(t-s) phi(s) ds) lap U + grad p.
Vec2 forcing(const ManufacturedSolution& sol, const memory::KernelParams& p, double x, double y, double t);

fe::ForceFunction forcing_function(const ManufacturedSolution& sol, const memory::KernelParams& p);
fe::VectorFunction initial_velocity(const ManufacturedSolution& sol);

/// Catalogue: S1 (polynomial, e^{-t}), S2 (trigonometric, 1 + t).
const std::vector<ManufacturedSolution>& list_solutions();
/// InvalidArgument for an unknown id.
const ManufacturedSolution& solution_by_id(const std::string& id);

struct ErrorNorms {
  double time = 0.0;
  double l2 = 0.0;
  double h1 = 0.0;  // H1 seminorm of the error
};

/// Errors of a stacked coefficient vector of `backend` against the exact solution at t.
ErrorNorms field_errors(const fe::QuadratureBackend& backend, const linalg::Vector& stacked,
                        const ManufacturedSolution& sol, double t);

/// Errors at the requested times (quadrature degree 6 or 8). A time without
/// a snapshot raises InvalidArgument.
std::vector<ErrorNorms> exact_errors(const steppers::Trajectory& trajectory, const ManufacturedSolution& sol,
                                     const std::vector<double>& times, int degree = 6);

}  // namespace oldroyd::mms
