#include "oldroyd/divfree.hpp"

#include "oldroyd/errors.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace oldroyd::divfree {

namespace {

using linalg::Index;

// Cheap probe of B-orthonormality: |Phi^T M Phi r - r| for a fixed r.
bool looks_orthonormal(const DenseMatrix& phi, const SparseMatrix& m) {
  if (phi.cols() == 0) return true;
  Vector r = Vector::LinSpaced(phi.cols(), -1.0, 1.0);
  r /= r.norm() > 0 ? r.norm() : 1.0;
  const Vector g = phi.transpose() * (m * (phi * r));
  return (g - r).norm() <= 1e-10;
}

DivFreeBasis orthonormalized(const DivFreeBasis& b, bool check_condition) {
  if (!check_condition && looks_orthonormal(b.phi, b.mass)) return b;
  DenseMatrix gram = b.phi.transpose() * (b.mass * b.phi);
  gram = 0.5 * (gram + gram.transpose()).eval();
  if (gram.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12) {
      throw ConditioningError("basis Gram matrix condition " + std::to_string(lo > 0.0 ? hi / lo : INFINITY) +
                              " exceeds 1e12");
    }
  }
  Eigen::LLT<DenseMatrix> llt(gram);
  if (llt.info() != Eigen::Success) throw ConditioningError("basis Gram matrix is not positive definite");
  DivFreeBasis out = b;
  // Phi L^{-T}
  out.phi = llt.matrixU().solve<Eigen::OnTheRight>(b.phi);
  return out;
}

}  // namespace

DivFreeBasis nullspace_basis(const std::shared_ptr<const fe::FeSpace>& space, const fe::DiscreteOperatorSet& ops) {
  if (!space) throw InvalidArgument("nullspace_basis: null space");
  const Index nv = space->num_velocity_dofs();
  const Index np = space->num_pressure_dofs();
  if (ops.mass.rows() != nv || ops.divergence.rows() != np || ops.divergence.cols() != nv) {
    throw DimensionMismatch("operators do not match the space", nv, ops.mass.rows());
  }
  Eigen::SimplicialLLT<SparseMatrix> llt(ops.mass);
  if (llt.info() != Eigen::Success) throw AssemblyFailure("velocity mass matrix is not positive definite");

  // M = P^T L L^T P; with v = P^T L^{-T} w the constraint reads (L^{-1} P B^T)^T w = 0.
  DenseMatrix ct = llt.permutationP() * DenseMatrix(ops.divergence.transpose());
  llt.matrixL().solveInPlace(ct);
  DenseMatrix w = linalg::nullspace(ct.transpose(), nv - (np - 1));
  llt.matrixU().solveInPlace(w);

  DivFreeBasis basis;
  basis.space = space;
  basis.phi = llt.permutationPinv() * w;
  basis.mass = ops.mass;
  basis.stiffness = ops.stiffness;
  return basis;
}

int TwoLevelSplit::dim_complement() const {
  return coords_identity ? dim_fine() : static_cast<int>(coords.cols());
}

Vector TwoLevelSplit::complement_to_fine(const Vector& c) const {
  if (c.size() != dim_complement()) throw DimensionMismatch("complement coordinates", dim_complement(), c.size());
  return coords_identity ? c : Vector(coords * c);
}

DenseMatrix TwoLevelSplit::complement_to_fine(const DenseMatrix& c) const {
  if (c.rows() != dim_complement()) throw DimensionMismatch("complement coordinates", dim_complement(), c.rows());
  return coords_identity ? c : DenseMatrix(coords * c);
}

Vector TwoLevelSplit::complement_stacked(const Vector& a) const {
  if (a.size() != dim_fine()) throw DimensionMismatch("fine-basis coordinates", dim_fine(), a.size());
  const Index nc = coarse.phi.rows(), nf = fine.phi.rows();
  Vector out(nc + nf);
  out.head(nc) = -(coarse.phi * (x * a));
  out.tail(nf) = fine.phi * a;
  return out;
}

TwoLevelSplit build_two_level_split(const DivFreeBasis& coarse_in, const DivFreeBasis& fine_in,
                                    const fe::CrossOperators& cross) {
  if (cross.mass.rows() != coarse_in.phi.rows() || cross.mass.cols() != fine_in.phi.rows()) {
    throw DimensionMismatch("cross operators do not match the bases", coarse_in.phi.rows(), cross.mass.rows());
  }
  TwoLevelSplit s;
  s.coarse = orthonormalized(coarse_in, true);
  s.fine = orthonormalized(fine_in, false);
  s.cross = cross;
  const DenseMatrix& psi = s.coarse.phi;
  const DenseMatrix& phi = s.fine.phi;
  const Index dh = phi.cols();

  s.x.noalias() = psi.transpose() * (cross.mass * phi);
  s.y.noalias() = psi.transpose() * (cross.stiffness * phi);
  s.s_coarse.noalias() = psi.transpose() * (s.coarse.stiffness * psi);
  s.s_coarse = 0.5 * (s.s_coarse + s.s_coarse.transpose()).eval();
  {
    const DenseMatrix aphi = s.fine.stiffness * phi;
    s.s_fine.noalias() = phi.transpose() * aphi;
  }
  s.s_fine = 0.5 * (s.s_fine + s.s_fine.transpose()).eval();

  // Directions of J_h that P_H reproduces isometrically have no complement part.
  DenseMatrix xxt = s.x * s.x.transpose();
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(xxt);
  std::vector<Index> pruned;
  for (Index i = 0; i < xxt.rows(); ++i) {
    if (1.0 - es.eigenvalues()[i] < kPruneThreshold) pruned.push_back(i);
  }
  s.pruned = static_cast<int>(pruned.size());
  if (!pruned.empty()) {
    DenseMatrix vp(dh, static_cast<Index>(pruned.size()));
    for (std::size_t j = 0; j < pruned.size(); ++j) {
      const double sigma = std::sqrt(es.eigenvalues()[pruned[j]]);
      vp.col(static_cast<Index>(j)) = s.x.transpose() * es.eigenvectors().col(pruned[j]) / sigma;
    }
    Eigen::HouseholderQR<DenseMatrix> qr(vp);
    const Index keep = dh - vp.cols();
    s.coords = qr.householderQ() * DenseMatrix::Identity(dh, dh).rightCols(keep);
    s.coords_identity = false;
  }

  DenseMatrix gl = -(s.x.transpose() * s.x);
  gl.diagonal().array() += 1.0;
  const DenseMatrix sx = s.s_coarse * s.x;
  DenseMatrix ga = s.s_fine;
  const DenseMatrix xty = s.x.transpose() * s.y;
  ga -= xty;
  ga -= xty.transpose();
  ga.noalias() += s.x.transpose() * sx;
  DenseMatrix kc = s.y - sx;
  if (s.coords_identity) {
    s.gram_l2 = std::move(gl);
    s.gram_h1 = std::move(ga);
    s.cross_h1 = std::move(kc);
  } else {
    s.gram_l2 = s.coords.transpose() * gl * s.coords;
    s.gram_h1 = s.coords.transpose() * ga * s.coords;
    s.cross_h1 = kc * s.coords;
  }
  s.gram_l2 = 0.5 * (s.gram_l2 + s.gram_l2.transpose()).eval();
  s.gram_h1 = 0.5 * (s.gram_h1 + s.gram_h1.transpose()).eval();
  return s;
}

ProjectionParts apply_PH(const TwoLevelSplit& split, const Vector& v) {
  const Index nc = split.coarse.phi.rows(), nf = split.fine.phi.rows();
  if (v.size() != nf) throw DimensionMismatch("fine coefficient count", nf, v.size());
  const Vector a = split.fine.phi.transpose() * (split.fine.mass * v);
  ProjectionParts out;
  out.coarse = split.coarse.phi * (split.x * a);
  out.complement.resize(nc + nf);
  out.complement.head(nc) = -out.coarse;
  out.complement.tail(nf) = v;
  return out;
}

double orthogonality_defect(const TwoLevelSplit& split) {
  const DenseMatrix& psi = split.coarse.phi;
  const DenseMatrix z = psi.transpose() * (split.cross.mass * split.fine.phi);
  const DenseMatrix gc = psi.transpose() * (split.coarse.mass * psi);
  DenseMatrix d = z - gc * split.x;
  if (!split.coords_identity) d = d * split.coords;
  return d.size() == 0 ? 0.0 : d.cwiseAbs().maxCoeff();
}

SubspaceConstants subspace_constants(const TwoLevelSplit& split) {
  SubspaceConstants c;
  c.dim_coarse = split.dim_coarse();
  c.dim_complement = split.dim_complement();
  try {
    const DenseMatrix eye = DenseMatrix::Identity(split.dim_fine(), split.dim_fine());
    c.lambda_1 = linalg::generalized_symmetric_eigs(split.s_fine, eye, linalg::Which::kSmallest, 1).values[0];
    if (c.dim_complement == 0) return c;
    const auto top = linalg::generalized_symmetric_eigs(split.gram_l2, split.gram_h1, linalg::Which::kLargest, 1);
    c.c_h = std::sqrt(std::max(0.0, top.values[0]));

    Eigen::LLT<DenseMatrix> lc(split.s_coarse), la(split.gram_h1);
    if (lc.info() != Eigen::Success || la.info() != Eigen::Success) {
      throw DiagnosticsError("stiffness Gram matrices are not positive definite");
    }
    DenseMatrix w = la.matrixL().solve(DenseMatrix(split.cross_h1.transpose()));  // L_A^{-1} K^T
    DenseMatrix t = lc.matrixL().solve(DenseMatrix(w.transpose()));             // L_c^{-1} K L_A^{-T}
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(DenseMatrix(t * t.transpose()), Eigen::EigenvaluesOnly);
    c.one_minus_rho = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  } catch (const DiagnosticsError&) {
    throw;
  } catch (const Error& e) {
    throw DiagnosticsError(std::string("subspace constants: ") + e.what());
  }
  return c;
}

SparseMatrix saddle_matrix(const SparseMatrix& m, const SparseMatrix& b) {
  const Index nv = m.rows(), np = b.rows() - 1;
  std::vector<linalg::Triplet> t;
  t.reserve(static_cast<std::size_t>(m.nonZeros() + 2 * b.nonZeros()));
  for (Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (Index c = 0; c < b.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(b, c); it; ++it) {
      if (it.row() == 0) continue;
      t.emplace_back(nv + it.row() - 1, it.col(), it.value());
      t.emplace_back(it.col(), nv + it.row() - 1, it.value());
    }
  }
  return linalg::from_triplets(nv + np, nv + np, t);
}

CoarseProjector::CoarseProjector(const fe::DiscreteOperatorSet& coarse_ops, SparseMatrix cross_mass)
    : nc_(static_cast<int>(coarse_ops.mass.rows())),
      np_(static_cast<int>(coarse_ops.divergence.rows()) - 1),
      cross_mass_(std::move(cross_mass)) {
  if (cross_mass_.rows() != nc_) throw DimensionMismatch("cross mass rows", nc_, cross_mass_.rows());
  solver_ = std::make_shared<linalg::Factorization>(saddle_matrix(coarse_ops.mass, coarse_ops.divergence));
}

Vector CoarseProjector::apply_load(const Vector& coarse_load) const {
  if (coarse_load.size() != nc_) throw DimensionMismatch("coarse load size", nc_, coarse_load.size());
  Vector rhs = Vector::Zero(nc_ + np_);
  rhs.head(nc_) = coarse_load;
  return solver_->solve(rhs).head(nc_);
}

Vector CoarseProjector::apply(const Vector& fine) const {
  if (fine.size() != cross_mass_.cols()) throw DimensionMismatch("fine coefficient count", cross_mass_.cols(), fine.size());
  return apply_load(cross_mass_ * fine);
}

}  // namespace oldroyd::divfree
