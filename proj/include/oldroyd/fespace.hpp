#pragma once

// MINI element spaces: continuous P1 plus one cubic bubble per triangle for
// each velocity component, continuous P1 for the pressure.

#include "oldroyd/linalg.hpp"
#include "oldroyd/mesh.hpp"

#include <array>
#include <functional>
#include <memory>

namespace oldroyd::fe {

using linalg::SparseMatrix;
using linalg::Vector;

enum class BoundaryTreatment {
  kEliminate,  // homogeneous Dirichlet: boundary vertex dofs removed
  kKeep,       // all vertex dofs kept (used for patch tests)
};

struct ElementGeometry {
  double area = 0.0;
  std::array<std::array<double, 2>, 3> grad_lambda{};  // gradients of barycentrics
};

/// Local scalar basis: three vertex hats followed by the bubble 27 l0 l1 l2.
struct ShapeValues {
  std::array<double, 4> value{};
  std::array<std::array<double, 2>, 4> grad{};
};

ShapeValues mini_shape(const std::array<double, 3>& lambda, const ElementGeometry& geom);

class FeSpace {
 public:
  explicit FeSpace(std::shared_ptr<const mesh::Mesh> mesh,
                   BoundaryTreatment treatment = BoundaryTreatment::kEliminate);

  const mesh::Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const mesh::Mesh>& mesh_ptr() const { return mesh_; }
  BoundaryTreatment boundary_treatment() const { return treatment_; }

  /// Scalar dofs per velocity component: retained vertices, then bubbles.
  int num_scalar_dofs() const { return num_vertex_dofs_ + mesh_->num_triangles(); }
  int num_velocity_dofs() const { return 2 * num_scalar_dofs(); }
  int num_pressure_dofs() const { return mesh_->num_vertices(); }

  /// Scalar dof of a vertex, or -1 when the vertex is eliminated.
  int vertex_dof(int v) const { return vertex_dof_[static_cast<std::size_t>(v)]; }
  int bubble_dof(int t) const { return num_vertex_dofs_ + t; }

  /// Scalar dofs of triangle t in local basis order (-1 for eliminated).
  std::array<int, 4> local_scalar_dofs(int t) const;

  /// Global velocity index of (component, scalar dof).
  int velocity_index(int component, int scalar_dof) const {
    return component * num_scalar_dofs() + scalar_dof;
  }

  const ElementGeometry& geometry(int t) const { return geometry_[static_cast<std::size_t>(t)]; }

 private:
  std::shared_ptr<const mesh::Mesh> mesh_;
  BoundaryTreatment treatment_;
  int num_vertex_dofs_ = 0;
  std::vector<int> vertex_dof_;
  std::vector<ElementGeometry> geometry_;
};

/// Coefficients of a velocity field on a space.
struct FieldCoefficients {
  std::shared_ptr<const FeSpace> space;
  Vector values;
};

struct FieldValue {
  std::array<double, 2> value{};
  std::array<std::array<double, 2>, 2> grad{};  // grad[c][d] = d u_c / d x_d
};

/// Point evaluation inside triangle t.
FieldValue evaluate(const FeSpace& space, const Vector& coeffs, int triangle, mesh::Point p);

using VectorFunction = std::function<std::array<double, 2>(double x, double y)>;
using ForceFunction = std::function<std::array<double, 2>(double x, double y, double t)>;

/// Nodal interpolant: vertex values at retained vertices, bubble chosen so
/// the interpolant matches the function at each barycenter.
Vector interpolate(const FeSpace& space, const VectorFunction& u);

/// Mass, stiffness and pressure-divergence matrices. Rows of the divergence
/// matrix are pressure dofs: B(q, j) = (q_h, div phi_j).
struct DiscreteOperatorSet {
  SparseMatrix mass;
  SparseMatrix stiffness;
  SparseMatrix divergence;
};

DiscreteOperatorSet assemble_operators(const FeSpace& space);

/// Load vector (f(., t), phi_i) with the degree-6 rule.
Vector assemble_load(const FeSpace& space, const ForceFunction& f, double t);

/// N(v)(i, j) = b(v, phi_j, phi_i).
SparseMatrix assemble_convection(const std::shared_ptr<const FeSpace>& space, const Vector& v);

struct FieldNorms {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double discrete_laplacian = 0.0;  // ||M^{-1} A v||_M
};

FieldNorms field_norms(const Vector& v, const DiscreteOperatorSet& ops);

}  // namespace oldroyd::fe
