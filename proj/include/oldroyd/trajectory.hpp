#pragma once

// Time-indexed snapshots produced by the steppers.

#include "oldroyd/assembly.hpp"
#include "oldroyd/fespace.hpp"

#include <memory>
#include <string>
#include <vector>

namespace oldroyd::steppers {

using linalg::Vector;

enum class Scheme { kCgm, kNlg1, kNlg2 };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);  // "cgm" | "nlg1" | "nlg2"

/// Per-step record. `energy` is the discrete energy
///   |u_n|^2 + 2k sum_j [mu |grad u_j|^2 + a(I_j, u_j) - (f_j, u_j)]
/// (|y_n|^2 for the two-level schemes), which backward Euler dissipates
/// exactly; `plain_energy` is |u_n|^2 + 2 mu k sum |grad u_j|^2.
struct StepRecord {
  double time = 0.0;
  int picard_iterations = 0;
  int linear_iterations = 0;
  double increment = 0.0;
  double energy = 0.0;
  double plain_energy = 0.0;
  double memory_norm = 0.0;  // L2 norm of the memory field
  double indicator = 0.0;    // mu - |log h| |y|^2 (|u|^2 for CGM)
};

struct Trajectory {
  Scheme scheme = Scheme::kCgm;
  std::shared_ptr<const fe::FeSpace> fine;
  // Two-level schemes only. With h = H the complement is empty; coarse then
  // aliases fine and the layout is the single-level one.
  std::shared_ptr<const fe::FeSpace> coarse;
  std::vector<int> ancestor;                  // fine triangle -> coarse triangle

  std::vector<double> times;
  std::vector<Vector> u;  // CGM: fine coefficients; two-level: stacked [coarse | fine]
  std::vector<Vector> y;  // coarse coefficients
  std::vector<Vector> z;  // stacked complement
  std::vector<StepRecord> steps;

  bool stacked() const { return coarse != nullptr && coarse != fine; }

  /// Snapshot index at time t (within 1e-9 relative); InvalidArgument if absent.
  int index_of(double t) const;

  /// Quadrature backend on the fine mesh matching the layout of u.
  std::shared_ptr<const fe::QuadratureBackend> backend(int degree = 6) const;
};

}  // namespace oldroyd::steppers
