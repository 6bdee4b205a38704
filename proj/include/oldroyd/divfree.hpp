#pragma once

// Discretely divergence-free subspaces, the L2 projection onto the coarse one
// and the complement (I - P_H) J_h, with the spectral constants of the
// splitting. Bases are dense; the sparse projector below serves time
// stepping, where only the action of P_H is needed.

#include "oldroyd/assembly.hpp"
#include "oldroyd/fespace.hpp"
#include "oldroyd/linalg.hpp"

#include <memory>

namespace oldroyd::divfree {

using linalg::DenseMatrix;
using linalg::SparseMatrix;
using linalg::Vector;

/// M-orthonormal basis of {v : B v = 0}.
struct DivFreeBasis {
  std::shared_ptr<const fe::FeSpace> space;
  DenseMatrix phi;      // velocity coefficients, one column per basis function
  SparseMatrix mass;    // velocity mass matrix of the space
  SparseMatrix stiffness;

  int dimension() const { return static_cast<int>(phi.cols()); }
};

/// Null space of B through a sparse Cholesky of M and a rank-revealing QR.
/// Throws DimensionMismatch when the rank differs from (pressure dofs - 1).
DivFreeBasis nullspace_basis(const std::shared_ptr<const fe::FeSpace>& space, const fe::DiscreteOperatorSet& ops);

/// Two-level split. Coordinates: a fine field is Phi a, a coarse field Psi c.
/// P_H (Phi a) = Psi X a. The complement is spanned by
/// chi(a) = Phi a - Psi X a for a in the range of `complement_coords()`.
struct TwoLevelSplit {
  DivFreeBasis coarse;
  DivFreeBasis fine;
  fe::CrossOperators cross;  // rows coarse, columns fine

  DenseMatrix x;        // coarse coordinates of P_H applied to the fine basis
  DenseMatrix s_coarse; // Psi^T A_H Psi
  DenseMatrix s_fine;   // Phi^T A_h Phi
  DenseMatrix y;        // Psi^T A_cross Phi

  /// Fine-basis coordinates of the complement generators (dim J_h x dim
  /// complement). Empty storage means the identity (nothing pruned).
  DenseMatrix coords;
  bool coords_identity = true;
  int pruned = 0;

  DenseMatrix gram_l2;     // complement L2 Gram
  DenseMatrix gram_h1;     // complement H1-seminorm Gram
  DenseMatrix cross_h1;    // a(psi_i, chi_j), coarse x complement

  int dim_coarse() const { return coarse.dimension(); }
  int dim_fine() const { return fine.dimension(); }
  int dim_complement() const;

  /// Complement coordinates -> fine-basis coordinates a.
  Vector complement_to_fine(const Vector& c) const;
  DenseMatrix complement_to_fine(const DenseMatrix& c) const;

  /// Stacked [coarse | fine] coefficients of chi(a) for fine-basis coordinates a.
  Vector complement_stacked(const Vector& a) const;
};

/// Singular-value pruning threshold on 1 - sigma_i(X)^2.
inline constexpr double kPruneThreshold = 1e-10;

/// Requires bases on nested levels. A coarse Gram condition above 1e12
/// raises ConditioningError; bases are re-orthonormalized internally.
TwoLevelSplit build_two_level_split(const DivFreeBasis& coarse, const DivFreeBasis& fine,
                                    const fe::CrossOperators& cross);

struct ProjectionParts {
  Vector coarse;      // y_H velocity coefficients on the coarse space
  Vector complement;  // z_h as stacked [coarse | fine] coefficients
};

/// v (fine velocity coefficients in J_h) = P_H v + (I - P_H) v.
ProjectionParts apply_PH(const TwoLevelSplit& split, const Vector& v);

/// max |(psi_i, chi_j)| over coarse basis / complement generators.
double orthogonality_defect(const TwoLevelSplit& split);

struct SubspaceConstants {
  double c_h = 0.0;            // sup |chi| / |chi|_1 on the complement
  double one_minus_rho = 0.0;  // sup a(psi, chi) / (|psi|_1 |chi|_1)
  double lambda_1 = 0.0;       // smallest Stokes eigenvalue on J_h
  int dim_coarse = 0;
  int dim_complement = 0;
};

/// Empty complement gives c_h = one_minus_rho = 0.
SubspaceConstants subspace_constants(const TwoLevelSplit& split);

/// Saddle-point block [[M, B~^T], [B~, 0]] with the first pressure row of B
/// dropped (the constants are in the kernel of B^T).
SparseMatrix saddle_matrix(const SparseMatrix& m, const SparseMatrix& b);

/// Sparse realization of P_H: coarse coefficients g in J_H with
/// (g, psi) = (v, psi) for all psi in J_H, from fine coefficients v.
class CoarseProjector {
 public:
  CoarseProjector(const fe::DiscreteOperatorSet& coarse_ops, SparseMatrix cross_mass);

  Vector apply(const Vector& fine) const;
  /// L2 projection of an already assembled coarse load (f, psi_i).
  Vector apply_load(const Vector& coarse_load) const;

 private:
  int nc_ = 0;
  int np_ = 0;
  SparseMatrix cross_mass_;
  std::shared_ptr<linalg::Factorization> solver_;
};

}  // namespace oldroyd::divfree
