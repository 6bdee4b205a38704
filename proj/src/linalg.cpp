#include "oldroyd/linalg.hpp"

#include "oldroyd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace oldroyd::linalg {

namespace {

constexpr double kResidualTolerance = 1e-10;

double max_abs_entry(const SparseMatrix& a) {
  double m = 0.0;
  for (Index k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

double norm1(const SparseMatrix& a) {
  double m = 0.0;
  for (Index k = 0; k < a.outerSize(); ++k) {
    double col = 0.0;
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) col += std::abs(it.value());
    m = std::max(m, col);
  }
  return m;
}

Vector deterministic_start(Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::cos(0.37 * static_cast<double>(i) + 0.1);
  return v.normalized();
}

struct RitzResult {
  Vector values;
  DenseMatrix vectors;
};

// Lanczos with full reorthogonalization. Returns the `count` wanted Ritz
// pairs once their residual bounds |beta_j s_ji| drop below tol * scale.
RitzResult lanczos_impl(const std::function<Vector(const Vector&)>& apply, Index n, Which which,
                        int count, double tol, int max_steps, bool want_vectors) {
  if (count <= 0 || count > n) {
    throw InvalidArgument("lanczos: eigenpair count must be in [1, n]");
  }
  const Index m_max = std::min<Index>(n, std::max(max_steps, 2 * count + 10));
  DenseMatrix basis(n, m_max + 1);
  Vector alpha = Vector::Zero(m_max);
  Vector beta = Vector::Zero(m_max);
  basis.col(0) = deterministic_start(n);

  Index steps = 0;
  Eigen::SelfAdjointEigenSolver<DenseMatrix> tri;
  bool converged = false;
  for (Index j = 0; j < m_max; ++j) {
    Vector w = apply(basis.col(j));
    alpha[j] = basis.col(j).dot(w);
    w -= alpha[j] * basis.col(j);
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
    for (int pass = 0; pass < 2; ++pass) {
      const Vector coeffs = basis.leftCols(j + 1).transpose() * w;
      w.noalias() -= basis.leftCols(j + 1) * coeffs;
    }
    beta[j] = w.norm();
    steps = j + 1;
    const bool invariant = beta[j] <= 1e-13 * std::max(1.0, std::abs(alpha[j]));
    if (steps >= count && (steps % 5 == 0 || invariant || steps == m_max)) {
      DenseMatrix t = DenseMatrix::Zero(steps, steps);
      for (Index i = 0; i < steps; ++i) {
        t(i, i) = alpha[i];
        if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[i];
      }
      tri.compute(t);
      const Vector& theta = tri.eigenvalues();
      const double scale = std::max(theta.cwiseAbs().maxCoeff(), 1e-300);
      bool ok = true;
      for (int c = 0; c < count; ++c) {
        const Index idx = which == Which::kSmallest ? c : steps - 1 - c;
        const double res = std::abs(beta[j] * tri.eigenvectors()(steps - 1, idx));
        if (res > tol * scale) ok = false;
      }
      if (ok || invariant) {
        converged = true;
        break;
      }
    }
    if (!invariant) basis.col(j + 1) = w / beta[j];
  }
  if (!converged) {
    throw DiagnosticsError("lanczos: no convergence after " + std::to_string(steps) + " steps");
  }
  RitzResult out;
  out.values.resize(count);
  if (want_vectors) out.vectors.resize(n, count);
  for (int c = 0; c < count; ++c) {
    const Index idx = which == Which::kSmallest ? c : steps - 1 - c;
    out.values[c] = tri.eigenvalues()[idx];
    if (want_vectors) {
      out.vectors.col(c) = basis.leftCols(steps) * tri.eigenvectors().col(idx);
    }
  }
  return out;
}

void check_pairs(const DenseMatrix& a, const DenseMatrix& b, const EigenPairs& pairs) {
  const double na = a.norm();
  const double nb = b.norm();
  for (Index c = 0; c < pairs.values.size(); ++c) {
    const Vector x = pairs.vectors.col(c);
    const double theta = pairs.values[c];
    const double res = (a * x - theta * (b * x)).norm();
    const double scale = (na + std::abs(theta) * nb) * x.norm();
    if (res > 1e-8 * scale) {
      throw DiagnosticsError("generalized eigensolver residual " + std::to_string(res / scale) +
                             " exceeds 1e-8");
    }
  }
}

}  // namespace

SparseMatrix from_triplets(Index rows, Index cols, const std::vector<Triplet>& triplets) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

bool is_symmetric(const SparseMatrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const SparseMatrix diff = a - SparseMatrix(a.transpose());
  return max_abs_entry(diff) <= tol * std::max(max_abs_entry(a), 1e-300);
}

bool is_symmetric(const DenseMatrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <=
         tol * std::max(a.cwiseAbs().maxCoeff(), 1e-300);
}

double condition_estimate(const SparseMatrix& a,
                          const std::function<Vector(const Vector&)>& solve) {
  const Index n = a.rows();
  double inv_norm = 0.0;
  Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 3; ++it) {
    const Vector y = solve(x);
    if (!y.allFinite()) return std::numeric_limits<double>::infinity();
    inv_norm = std::max(inv_norm, y.lpNorm<1>() / x.lpNorm<1>());
    Index j = 0;
    y.cwiseAbs().maxCoeff(&j);
    x = Vector::Zero(n);
    x[j] = 1.0;
  }
  return norm1(a) * inv_norm;
}

Factorization::Factorization(const SparseMatrix& a) : rows_(a.rows()) {
  if (a.rows() != a.cols()) throw InvalidArgument("factorization requires a square matrix");
  sparse_ = std::make_shared<const SparseMatrix>(a);
  sparse_lu_ = std::make_shared<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
  sparse_lu_->analyzePattern(*sparse_);
  sparse_lu_->factorize(*sparse_);
  if (sparse_lu_->info() != Eigen::Success) {
    throw SolveFailure("sparse LU factorization failed: " + sparse_lu_->lastErrorMessage(),
                       std::numeric_limits<double>::infinity());
  }
}

Factorization::Factorization(const DenseMatrix& a) : rows_(a.rows()) {
  if (a.rows() != a.cols()) throw InvalidArgument("factorization requires a square matrix");
  dense_ = std::make_shared<const DenseMatrix>(a);
  dense_lu_ = std::make_shared<Eigen::PartialPivLU<DenseMatrix>>(a);
  const double rcond = dense_lu_->rcond();
  if (!(rcond > std::numeric_limits<double>::epsilon())) {
    throw SolveFailure("dense matrix is singular to working precision", 1.0 / rcond);
  }
}

Vector Factorization::solve_unchecked(const Vector& rhs) const {
  if (rhs.size() != rows_) throw DimensionMismatch("right-hand side size", rows_, rhs.size());
  if (sparse_lu_) return sparse_lu_->solve(rhs);
  return dense_lu_->solve(rhs);
}

void Factorization::check_residual(const Vector& x, const Vector& rhs) const {
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) {
    if (x.allFinite() && x.norm() == 0.0) return;
  }
  const Vector r = sparse_ ? Vector(*sparse_ * x - rhs) : Vector(*dense_ * x - rhs);
  const double rel = r.norm() / std::max(bnorm, 1e-300);
  if (!(rel <= kResidualTolerance)) {
    double cond = std::numeric_limits<double>::infinity();
    if (sparse_) {
      cond = condition_estimate(*sparse_, [this](const Vector& b) { return solve_unchecked(b); });
    } else {
      cond = 1.0 / dense_lu_->rcond();
    }
    throw SolveFailure("direct solve residual " + std::to_string(rel) + " exceeds 1e-10", cond);
  }
}

Vector Factorization::solve(const Vector& rhs) const {
  Vector x = solve_unchecked(rhs);
  check_residual(x, rhs);
  return x;
}

DenseMatrix Factorization::solve(const DenseMatrix& rhs) const {
  DenseMatrix x(rows_, rhs.cols());
  for (Index c = 0; c < rhs.cols(); ++c) x.col(c) = solve(Vector(rhs.col(c)));
  return x;
}

Vector solve_direct(const SparseMatrix& a, const Vector& rhs) {
  return Factorization(a).solve(rhs);
}

Vector solve_direct(const DenseMatrix& a, const Vector& rhs) {
  return Factorization(a).solve(rhs);
}

DenseMatrix nullspace(const DenseMatrix& a, std::optional<Index> expected_dim) {
  const Index m = a.rows();
  const Index n = a.cols();
  if (n == 0) return DenseMatrix(0, 0);

  Vector sv;
  if (m > 0) {
    Eigen::BDCSVD<DenseMatrix> svd(a);
    sv = svd.singularValues();
  }
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  Index rank = 0;
  if (smax > 0.0) {
    const double threshold = 1e-10 * smax;
    while (rank < sv.size() && sv[rank] > threshold) ++rank;
    if (rank < sv.size()) {
      const double below = sv[rank];
      if (below > 0.0 && sv[rank - 1] / below < 10.0) {
        throw DimensionAmbiguity("null space rank is ambiguous: singular values " +
                                 std::to_string(sv[rank - 1]) + " and " + std::to_string(below) +
                                 " straddle the threshold");
      }
    }
  }
  const Index dim = n - rank;
  if (expected_dim && *expected_dim != dim) {
    throw DimensionMismatch("null space dimension", *expected_dim, dim);
  }
  if (dim == 0) return DenseMatrix(n, 0);
  if (rank == 0) return DenseMatrix::Identity(n, n);

  // ker(A) is the orthogonal complement of range(A^T); the trailing columns
  // of the full Q factor of A^T span it.
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(a.transpose());
  DenseMatrix basis = DenseMatrix::Zero(n, dim);
  basis.bottomRows(dim).setIdentity();
  basis = qr.householderQ() * basis;
  return basis;
}

EigenPairs generalized_symmetric_eigs(const DenseMatrix& a, const DenseMatrix& b, Which which,
                                      int count) {
  const Index n = a.rows();
  if (a.cols() != n || b.rows() != n || b.cols() != n) {
    throw InvalidArgument("generalized eigenproblem requires square matrices of equal size");
  }
  if (count < 1 || count > n) throw InvalidArgument("eigenpair count must be in [1, n]");
  if (!is_symmetric(a, 1e-10) || !is_symmetric(b, 1e-10)) {
    throw InvalidArgument("generalized eigenproblem requires symmetric matrices");
  }
  Eigen::LLT<DenseMatrix> llt_b(b);
  if (llt_b.info() != Eigen::Success) {
    throw InvalidArgument("generalized eigenproblem: B is not positive definite");
  }

  EigenPairs out;
  out.values.resize(count);
  out.vectors.resize(n, count);

  constexpr Index kDenseLimit = 800;
  if (n <= kDenseLimit) {
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> es(a, b);
    if (es.info() != Eigen::Success) throw DiagnosticsError("generalized eigensolver failed");
    for (int c = 0; c < count; ++c) {
      const Index idx = which == Which::kSmallest ? c : n - 1 - c;
      out.values[c] = es.eigenvalues()[idx];
      out.vectors.col(c) = es.eigenvectors().col(idx);
    }
    check_pairs(a, b, out);
    return out;
  }

  // Implicit C = L^{-1} A L^{-T}; eigenvectors map back through x = L^{-T} y.
  const auto& lower = llt_b.matrixL();
  const auto& upper = llt_b.matrixU();
  RitzResult ritz;
  if (which == Which::kLargest) {
    ritz = lanczos_impl([&](const Vector& x) { return Vector(lower.solve(a * upper.solve(x))); }, n, which,
                        count, 1e-11, 400, true);
  } else {
    Eigen::LLT<DenseMatrix> llt_a(a);
    if (llt_a.info() == Eigen::Success) {
      // Shift-invert at zero: C^{-1} = L^T A^{-1} L.
      ritz = lanczos_impl([&](const Vector& x) { return Vector(upper * llt_a.solve(lower * x)); }, n,
                          Which::kLargest, count, 1e-12, 400, true);
      for (Index c = 0; c < ritz.values.size(); ++c) ritz.values[c] = 1.0 / ritz.values[c];
    } else {
      DenseMatrix c_mat = lower.solve(a);
      c_mat = lower.solve(DenseMatrix(c_mat.transpose()));
      c_mat = 0.5 * (c_mat + c_mat.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<DenseMatrix> es(c_mat);
      ritz.values = es.eigenvalues().head(count);
      ritz.vectors = es.eigenvectors().leftCols(count);
    }
  }
  out.values = ritz.values;
  out.vectors = llt_b.matrixU().solve(ritz.vectors);
  check_pairs(a, b, out);
  return out;
}

Vector lanczos_extremal(const std::function<Vector(const Vector&)>& apply, Index n, Which which,
                        int count, double tol, int max_steps) {
  return lanczos_impl(apply, n, which, count, tol, max_steps, false).values;
}

}  // namespace oldroyd::linalg
