#pragma once

// Backward-Euler time stepping for the classical Galerkin scheme and the two
// nonlinear Galerkin variants.
//
// Everything is posed on the velocity/pressure saddle form, so divergence-free
// bases are never formed. The two-level step couples four velocity blocks:
//   y  coarse field in J_H (the evolved part),
//   v  fine field in J_h with z = v - P_H v,
//   g  = P_H v, imposed through its own coarse saddle block,
//   l  coarse Riesz representative of the z-residual on J_H.
// Testing with (I - P_H) w for w in J_h is then a fine equation minus the
// coarse multiplier l, which keeps every block sparse.

#include "oldroyd/assembly.hpp"
#include "oldroyd/divfree.hpp"
#include "oldroyd/fespace.hpp"
#include "oldroyd/memory.hpp"
#include "oldroyd/mesh.hpp"
#include "oldroyd/trajectory.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace oldroyd::steppers {

using linalg::SparseMatrix;

/// Where the NLG memory integral starts. kCarry continues the bootstrap
/// history (the continuous model integrates from 0); kSwitchTime restarts it
/// at t0.
enum class MemoryOrigin { kCarry, kSwitchTime };

/// z at t0: solve the z-equation with y = P_H u_h(t0), or take (I - P_H) u_h(t0).
enum class ZStart { kSolve, kProject };

struct SchemeConfig {
  Scheme scheme = Scheme::kCgm;
  double k = 1e-3;
  double t0 = 0.1;
  double T = 0.5;
  double picard_tol = 1e-10;
  int picard_maxit = 50;
  double convection = 1.0;  // scale on b(.,.,.); 0 makes the problem linear
  memory::KernelParams kernel = memory::KernelParams::from_coefficients(1.0, 1.0, 1.0);
  memory::MemoryRule memory_rule = memory::MemoryRule::kExponentialLinear;
  MemoryOrigin memory_origin = MemoryOrigin::kCarry;
  ZStart z_start = ZStart::kSolve;
  // Snapshots: the listed times if non-empty, otherwise every `stride` steps
  // plus the last one.
  std::vector<double> sample_times;
  int snapshot_stride = 1;

  /// InvalidArgument unless 0 < k <= t0 < T with t0, T multiples of k (the
  /// t0 conditions are skipped for CGM).
  void validate() const;
  int steps_to(double t) const;
};

/// Data of one run; empty functions mean zero.
struct Problem {
  fe::ForceFunction forcing;
  fe::VectorFunction initial;
};

/// A space with its operators and a single-level assembler.
struct Level {
  std::shared_ptr<const fe::FeSpace> space;
  fe::DiscreteOperatorSet ops;
  std::shared_ptr<const fe::StackedAssembler> assembler;

  static Level build(std::shared_ptr<const mesh::Mesh> mesh);
};

/// Coarse and fine level of one hierarchy plus the cross-level machinery.
struct TwoLevelContext {
  std::shared_ptr<const mesh::MeshHierarchy> hierarchy;
  Level coarse;
  Level fine;
  std::vector<int> ancestor;
  std::shared_ptr<const fe::StackedAssembler> stacked;  // null when h = H
  std::shared_ptr<const divfree::CoarseProjector> projector;

  bool degenerate() const { return stacked == nullptr; }
  double H() const { return coarse.space->mesh().mesh_size(); }
  double h() const { return fine.space->mesh().mesh_size(); }

  /// Coarse mesh with n cells per side refined `refinements` times (h = H / 2^r).
  static TwoLevelContext build(int coarse_cells, int refinements);

  /// Stacked [-P_H v | v] = (I - P_H) v for fine coefficients v.
  Vector complement_of(const Vector& fine) const;
};

/// L2 projection of the initial velocity onto J_h.
Vector project_initial(const Level& level, const fe::VectorFunction& u0);

Trajectory run_cgm(const Level& level, const SchemeConfig& config, const Problem& problem);

/// NLG I or II (config.scheme) with a CGM bootstrap on (0, t0]. With h = H
/// the complement is empty and the run reduces to the CGM recursion.
Trajectory run_nlg(const TwoLevelContext& ctx, const SchemeConfig& config, const Problem& problem);

/// Unknown blocks of the two-level step (pressures included, first pressure
/// dof of every block pinned).
struct NlgState {
  Vector y, v, g, l;
  Vector p1, p2, p3, p4;

  static NlgState zeros(const TwoLevelContext& ctx);
  Vector z_stacked() const;  // [-g | v]
  Vector u_stacked() const;  // [y - g | v]
};

/// Time-level data entering one step: previous y, memory history part (a
/// stacked field, A applied later), implicit memory weight and load.
struct StepData {
  Vector y_prev;
  Vector history;
  double memory_weight = 0.0;
  Vector load;
  double k = 0.0;
};

struct PicardResult {
  NlgState state;
  int iterations = 0;
  int linear_iterations = 0;
  double increment = 0.0;
  double residual = 0.0;  // max-norm residual relative to the right-hand side
  bool converged = false;
};

/// Joint fixed point on (y, z) with frozen transport fields, started from
/// `guess`. Raises StepFailure after picard_maxit sweeps.
PicardResult picard_coupled(const TwoLevelContext& ctx, const SchemeConfig& config, const StepData& data,
                            const NlgState& guess);

/// z-equation alone for a given y (y rows replaced by identities); nonlinear
/// for NLG I, linear for NLG II.
PicardResult solve_z(const TwoLevelContext& ctx, const SchemeConfig& config, const Vector& y,
                     const StepData& data);

/// NLG II z-solve; InvalidArgument for other schemes. One linear solve.
PicardResult solve_z_linear(const TwoLevelContext& ctx, const SchemeConfig& config, const Vector& y,
                            const StepData& data);

/// Relative max-norm residual of the two-level equations at a state.
double nlg_residual(const TwoLevelContext& ctx, const SchemeConfig& config, const StepData& data,
                    const NlgState& state, bool y_fixed = false);

struct RunDiagnostics {
  std::vector<double> times;
  std::vector<double> indicator;
  std::vector<double> energy;
  std::vector<double> plain_energy;
  std::vector<double> snapshot_times;
  std::vector<double> z_norm;  // |z^h| for NLG snapshots, |(I - P_H) u_h| for CGM with a context
  std::vector<double> z_h1;    // same, H1 seminorm
  int worst_step = -1;         // largest energy increase
  double max_energy_increase = 0.0;
  int nonpositive_indicator_steps = 0;
};

/// Series over the step records and snapshots. `ctx` is needed only for the
/// complement norm of CGM trajectories.
RunDiagnostics diagnostics(const Trajectory& trajectory, const TwoLevelContext* ctx = nullptr);

/// L2 and H1-seminorm of u_a - u_b between two snapshots on the same fine
/// space; layouts may differ (single-level or stacked).
struct DifferenceNorms {
  double l2 = 0.0;
  double h1 = 0.0;
};
DifferenceNorms snapshot_difference(const Trajectory& a, int ia, const Trajectory& b, int ib);

/// CSV: one row per snapshot, "time,c0,c1,...".
void export_snapshots_csv(const Trajectory& trajectory, const std::filesystem::path& path);
/// Legacy VTK (ASCII unstructured grid) of u at snapshot i, point data on
/// fine-mesh vertices.
void export_vtk(const Trajectory& trajectory, int snapshot, const std::filesystem::path& path);

}  // namespace oldroyd::steppers
