#pragma once

// Numerical backend: sparse assembly containers, direct solves, null spaces
// and symmetric (generalized) eigenvalue extraction. Everything delegates to
// Eigen; this layer pins the tolerances and failure modes the rest of the
// library relies on.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace oldroyd::linalg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Compressed matrix from unordered triplets; duplicate entries are summed.
SparseMatrix from_triplets(Index rows, Index cols, const std::vector<Triplet>& triplets);

/// max |A - A^T| <= tol * max |A|.
bool is_symmetric(const SparseMatrix& a, double tol = 1e-12);
bool is_symmetric(const DenseMatrix& a, double tol = 1e-12);

/// Rough 1-norm condition estimate (Hager's method) of a factorized operator.
double condition_estimate(const SparseMatrix& a,
                          const std::function<Vector(const Vector&)>& solve);

/// A factorized square operator reusable across right-hand sides.
/// Solves are checked: the relative residual must stay below 1e-10.
class Factorization {
 public:
  explicit Factorization(const SparseMatrix& a);
  explicit Factorization(const DenseMatrix& a);

  Index rows() const { return rows_; }

  /// Throws SolveFailure when the relative residual exceeds 1e-10.
  Vector solve(const Vector& rhs) const;
  DenseMatrix solve(const DenseMatrix& rhs) const;

  /// Solve without the residual check (used by inner iterations that check
  /// their own convergence).
  Vector solve_unchecked(const Vector& rhs) const;

 private:
  Index rows_ = 0;
  std::shared_ptr<const SparseMatrix> sparse_;
  std::shared_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> sparse_lu_;
  std::shared_ptr<const DenseMatrix> dense_;
  std::shared_ptr<Eigen::PartialPivLU<DenseMatrix>> dense_lu_;

  void check_residual(const Vector& x, const Vector& rhs) const;
};

Vector solve_direct(const SparseMatrix& a, const Vector& rhs);
Vector solve_direct(const DenseMatrix& a, const Vector& rhs);

/// Orthonormal basis (columns) of ker(A). The rank is taken from the
/// singular values with threshold 1e-10 * sigma_max; a gap ratio below 10
/// between the straddling singular values raises DimensionAmbiguity. When
/// `expected_dim` is given and disagrees, DimensionMismatch is raised.
DenseMatrix nullspace(const DenseMatrix& a, std::optional<Index> expected_dim = std::nullopt);

enum class Which { kSmallest, kLargest };

struct EigenPairs {
  Vector values;        // ascending for kSmallest, descending for kLargest
  DenseMatrix vectors;  // B-orthonormal columns
};

/// `count` extremal eigenpairs of A x = theta B x, A symmetric, B SPD.
/// Raises InvalidArgument when B is not positive definite.
EigenPairs generalized_symmetric_eigs(const DenseMatrix& a, const DenseMatrix& b, Which which,
                                      int count);

/// Extremal eigenvalues of a symmetric operator given only by its action,
/// via Lanczos with full reorthogonalization.
Vector lanczos_extremal(const std::function<Vector(const Vector&)>& apply, Index n,
                        Which which, int count, double tol = 1e-11, int max_steps = 400);

}  // namespace oldroyd::linalg
