#include "oldroyd/fespace.hpp"

#include "oldroyd/assembly.hpp"
#include "oldroyd/errors.hpp"
#include "oldroyd/quadrature.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace oldroyd::fe {

ShapeValues mini_shape(const std::array<double, 3>& l, const ElementGeometry& g) {
  ShapeValues s;
  for (int i = 0; i < 3; ++i) {
    s.value[i] = l[i];
    s.grad[i] = g.grad_lambda[i];
  }
  s.value[3] = 27.0 * l[0] * l[1] * l[2];
  const double c0 = 27.0 * l[1] * l[2];
  const double c1 = 27.0 * l[0] * l[2];
  const double c2 = 27.0 * l[0] * l[1];
  for (int d = 0; d < 2; ++d) {
    s.grad[3][d] = c0 * g.grad_lambda[0][d] + c1 * g.grad_lambda[1][d] + c2 * g.grad_lambda[2][d];
  }
  return s;
}

FeSpace::FeSpace(std::shared_ptr<const mesh::Mesh> mesh, BoundaryTreatment treatment)
    : mesh_(std::move(mesh)), treatment_(treatment) {
  if (!mesh_) throw InvalidArgument("FeSpace: null mesh");
  vertex_dof_.assign(static_cast<std::size_t>(mesh_->num_vertices()), -1);
  for (int v = 0; v < mesh_->num_vertices(); ++v) {
    if (treatment_ == BoundaryTreatment::kKeep || !mesh_->is_boundary_vertex(v)) {
      vertex_dof_[static_cast<std::size_t>(v)] = num_vertex_dofs_++;
    }
  }
  geometry_.resize(static_cast<std::size_t>(mesh_->num_triangles()));
  for (int t = 0; t < mesh_->num_triangles(); ++t) {
    const auto& tri = mesh_->triangles()[static_cast<std::size_t>(t)];
    const mesh::Point a = mesh_->vertices()[static_cast<std::size_t>(tri[0])];
    const mesh::Point b = mesh_->vertices()[static_cast<std::size_t>(tri[1])];
    const mesh::Point c = mesh_->vertices()[static_cast<std::size_t>(tri[2])];
    const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    ElementGeometry& g = geometry_[static_cast<std::size_t>(t)];
    g.area = 0.5 * det;
    if (det != 0.0) {
      g.grad_lambda[0] = {(b.y - c.y) / det, (c.x - b.x) / det};
      g.grad_lambda[1] = {(c.y - a.y) / det, (a.x - c.x) / det};
      g.grad_lambda[2] = {(a.y - b.y) / det, (b.x - a.x) / det};
    }
  }
}

std::array<int, 4> FeSpace::local_scalar_dofs(int t) const {
  const auto& tri = mesh_->triangles()[static_cast<std::size_t>(t)];
  return {vertex_dof(tri[0]), vertex_dof(tri[1]), vertex_dof(tri[2]), bubble_dof(t)};
}

FieldValue evaluate(const FeSpace& space, const Vector& coeffs, int triangle, mesh::Point p) {
  if (coeffs.size() != space.num_velocity_dofs()) {
    throw DimensionMismatch("field coefficient count", space.num_velocity_dofs(), coeffs.size());
  }
  const ShapeValues s = mini_shape(space.mesh().barycentric(triangle, p), space.geometry(triangle));
  const auto dofs = space.local_scalar_dofs(triangle);
  FieldValue out;
  for (int c = 0; c < 2; ++c) {
    for (int a = 0; a < 4; ++a) {
      if (dofs[a] < 0) continue;
      const double coef = coeffs[space.velocity_index(c, dofs[a])];
      out.value[c] += coef * s.value[a];
      out.grad[c][0] += coef * s.grad[a][0];
      out.grad[c][1] += coef * s.grad[a][1];
    }
  }
  return out;
}

Vector interpolate(const FeSpace& space, const VectorFunction& u) {
  const mesh::Mesh& m = space.mesh();
  Vector coeffs = Vector::Zero(space.num_velocity_dofs());
  for (int v = 0; v < m.num_vertices(); ++v) {
    const int dof = space.vertex_dof(v);
    if (dof < 0) continue;
    const mesh::Point p = m.vertices()[static_cast<std::size_t>(v)];
    const auto val = u(p.x, p.y);
    coeffs[space.velocity_index(0, dof)] = val[0];
    coeffs[space.velocity_index(1, dof)] = val[1];
  }
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto dofs = space.local_scalar_dofs(t);
    const auto& tri = m.triangles()[static_cast<std::size_t>(t)];
    mesh::Point centroid{0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      centroid.x += m.vertices()[static_cast<std::size_t>(tri[k])].x / 3.0;
      centroid.y += m.vertices()[static_cast<std::size_t>(tri[k])].y / 3.0;
    }
    const auto val = u(centroid.x, centroid.y);
    for (int c = 0; c < 2; ++c) {
      double linear = 0.0;
      for (int k = 0; k < 3; ++k) {
        if (dofs[k] >= 0) linear += coeffs[space.velocity_index(c, dofs[k])] / 3.0;
      }
      coeffs[space.velocity_index(c, dofs[3])] = val[c] - linear;
    }
  }
  return coeffs;
}

DiscreteOperatorSet assemble_operators(const FeSpace& space) {
  const mesh::Mesh& m = space.mesh();
  const TriangleRule& rule = triangle_rule(6);
  const int nv = space.num_velocity_dofs();
  std::vector<linalg::Triplet> mass, stiff, div;
  mass.reserve(static_cast<std::size_t>(m.num_triangles()) * 32);
  stiff.reserve(static_cast<std::size_t>(m.num_triangles()) * 32);
  div.reserve(static_cast<std::size_t>(m.num_triangles()) * 24);

  for (int t = 0; t < m.num_triangles(); ++t) {
    const ElementGeometry& g = space.geometry(t);
    if (!(g.area > 1e-14)) {
      throw AssemblyFailure("degenerate triangle " + std::to_string(t) + " (area " +
                            std::to_string(g.area) + ")");
    }
    double lm[4][4] = {};
    double lk[4][4] = {};
    double lb[3][2][4] = {};  // pressure k, component c, scalar a
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const ShapeValues s = mini_shape(rule.points[q], g);
      const double w = rule.weights[q] * g.area;
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          lm[a][b] += w * s.value[a] * s.value[b];
          lk[a][b] += w * (s.grad[a][0] * s.grad[b][0] + s.grad[a][1] * s.grad[b][1]);
        }
        for (int k = 0; k < 3; ++k) {
          for (int c = 0; c < 2; ++c) lb[k][c][a] += w * rule.points[q][static_cast<std::size_t>(k)] * s.grad[a][c];
        }
      }
    }
    const auto dofs = space.local_scalar_dofs(t);
    const auto& tri = m.triangles()[static_cast<std::size_t>(t)];
    for (int c = 0; c < 2; ++c) {
      for (int a = 0; a < 4; ++a) {
        if (dofs[a] < 0) continue;
        const int i = space.velocity_index(c, dofs[a]);
        for (int b = 0; b < 4; ++b) {
          if (dofs[b] < 0) continue;
          const int j = space.velocity_index(c, dofs[b]);
          mass.emplace_back(i, j, lm[a][b]);
          stiff.emplace_back(i, j, lk[a][b]);
        }
        for (int k = 0; k < 3; ++k) div.emplace_back(tri[k], i, lb[k][c][a]);
      }
    }
  }
  DiscreteOperatorSet ops;
  ops.mass = linalg::from_triplets(nv, nv, mass);
  ops.stiffness = linalg::from_triplets(nv, nv, stiff);
  ops.divergence = linalg::from_triplets(space.num_pressure_dofs(), nv, div);
  return ops;
}

Vector assemble_load(const FeSpace& space, const ForceFunction& f, double t) {
  const mesh::Mesh& m = space.mesh();
  const TriangleRule& rule = triangle_rule(6);
  Vector load = Vector::Zero(space.num_velocity_dofs());
  for (int e = 0; e < m.num_triangles(); ++e) {
    const ElementGeometry& g = space.geometry(e);
    const auto dofs = space.local_scalar_dofs(e);
    const auto& tri = m.triangles()[static_cast<std::size_t>(e)];
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      double x = 0.0, y = 0.0;
      for (int k = 0; k < 3; ++k) {
        x += l[static_cast<std::size_t>(k)] * m.vertices()[static_cast<std::size_t>(tri[k])].x;
        y += l[static_cast<std::size_t>(k)] * m.vertices()[static_cast<std::size_t>(tri[k])].y;
      }
      const auto fv = f(x, y, t);
      const ShapeValues s = mini_shape(l, g);
      const double w = rule.weights[q] * g.area;
      for (int a = 0; a < 4; ++a) {
        if (dofs[a] < 0) continue;
        for (int c = 0; c < 2; ++c) load[space.velocity_index(c, dofs[a])] += w * fv[c] * s.value[a];
      }
    }
  }
  return load;
}

SparseMatrix assemble_convection(const std::shared_ptr<const FeSpace>& space, const Vector& v) {
  auto backend = std::make_shared<const QuadratureBackend>(space);
  StackedAssembler assembler(backend);
  return assembler.transport(backend->sample_stacked(v));
}

FieldNorms field_norms(const Vector& v, const DiscreteOperatorSet& ops) {
  if (v.size() != ops.mass.rows()) {
    throw DimensionMismatch("field_norms coefficient count", ops.mass.rows(), v.size());
  }
  FieldNorms n;
  n.l2 = std::sqrt(std::max(0.0, v.dot(ops.mass * v)));
  const Vector av = ops.stiffness * v;
  n.h1_semi = std::sqrt(std::max(0.0, v.dot(av)));
  if (av.squaredNorm() > 0.0) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(ops.mass);
    if (ldlt.info() != Eigen::Success) throw AssemblyFailure("mass matrix is not positive definite");
    const Vector lap = ldlt.solve(av);
    n.discrete_laplacian = std::sqrt(std::max(0.0, av.dot(lap)));
  }
  return n;
}

}  // namespace oldroyd::fe
