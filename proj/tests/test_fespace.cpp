#include "oldroyd/errors.hpp"
#include "oldroyd/fespace.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace oldroyd;
using namespace oldroyd::fe;

namespace {

std::shared_ptr<const FeSpace> make_space(int n, BoundaryTreatment bt = BoundaryTreatment::kEliminate) {
  return std::make_shared<const FeSpace>(std::make_shared<const mesh::Mesh>(mesh::Mesh::unit_square(n)), bt);
}

}  // namespace

TEST(FeSpace, DofCounts) {
  const auto s = make_space(4);
  EXPECT_EQ(s->num_scalar_dofs(), 9 + 32);
  EXPECT_EQ(s->num_velocity_dofs(), 2 * 41);
  EXPECT_EQ(s->num_pressure_dofs(), 25);
  const auto k = make_space(4, BoundaryTreatment::kKeep);
  EXPECT_EQ(k->num_scalar_dofs(), 25 + 32);
  EXPECT_EQ(s->vertex_dof(0), -1);
  EXPECT_EQ(s->bubble_dof(0), 9);
}

TEST(FeSpace, ShapeFunctionsPartitionAndBubblePeak) {
  const auto s = make_space(2);
  const auto& g = s->geometry(0);
  const ShapeValues c = mini_shape({1.0 / 3, 1.0 / 3, 1.0 / 3}, g);
  EXPECT_NEAR(c.value[3], 1.0, 1e-15);
  EXPECT_NEAR(c.grad[3][0], 0.0, 1e-14);
  EXPECT_NEAR(c.grad[3][1], 0.0, 1e-14);
  const ShapeValues v = mini_shape({0.2, 0.5, 0.3}, g);
  EXPECT_NEAR(v.value[0] + v.value[1] + v.value[2], 1.0, 1e-15);
  EXPECT_NEAR(v.grad[0][0] + v.grad[1][0] + v.grad[2][0], 0.0, 1e-13);
}

TEST(FeSpace, MassOfConstantField) {
  const auto s = make_space(4, BoundaryTreatment::kKeep);
  const auto ops = assemble_operators(*s);
  const Vector one = interpolate(*s, [](double, double) { return std::array<double, 2>{1.0, 1.0}; });
  EXPECT_NEAR(one.dot(ops.mass * one), 2.0, 1e-13);
  EXPECT_NEAR((ops.stiffness * one).norm(), 0.0, 1e-12);
  EXPECT_TRUE(linalg::is_symmetric(ops.mass));
  EXPECT_TRUE(linalg::is_symmetric(ops.stiffness));
}

TEST(FeSpace, DivergenceOfLinearField) {
  const auto s = make_space(4, BoundaryTreatment::kKeep);
  const auto ops = assemble_operators(*s);
  const Vector u = interpolate(*s, [](double x, double y) { return std::array<double, 2>{2.0 * x, -0.5 * y}; });
  const Vector bu = ops.divergence * u;
  // (q, div u) = 1.5 * integral of q; the hats sum to one.
  EXPECT_NEAR(bu.sum(), 1.5, 1e-13);
  const Vector r = interpolate(*s, [](double x, double y) { return std::array<double, 2>{-y, x}; });
  EXPECT_NEAR((ops.divergence * r).norm(), 0.0, 1e-13);
}

TEST(FeSpace, InterpolationMatchesAtBarycenter) {
  const auto s = make_space(3);
  auto f = [](double x, double y) {
    return std::array<double, 2>{std::sin(std::numbers::pi * x) * y * (1 - y), x * x * (1 - x) * std::sin(std::numbers::pi * y)};
  };
  const Vector c = interpolate(*s, f);
  const auto& m = s->mesh();
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tri = m.triangles()[t];
    mesh::Point p{0, 0};
    for (int k = 0; k < 3; ++k) {
      p.x += m.vertices()[tri[k]].x / 3;
      p.y += m.vertices()[tri[k]].y / 3;
    }
    const FieldValue v = evaluate(*s, c, t, p);
    EXPECT_NEAR(v.value[0], f(p.x, p.y)[0], 1e-14);
    EXPECT_NEAR(v.value[1], f(p.x, p.y)[1], 1e-14);
  }
}

TEST(FeSpace, NormsConvergeForSmoothField) {
  // u = (sin(pi x) sin(pi y), 0): ||u||^2 = 1/4, |u|_1^2 = pi^2/2.
  auto f = [](double x, double y) {
    return std::array<double, 2>{std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y), 0.0};
  };
  const auto s = make_space(32);
  const auto ops = assemble_operators(*s);
  const FieldNorms n = field_norms(interpolate(*s, f), ops);
  EXPECT_NEAR(n.l2, 0.5, 2e-3);
  EXPECT_NEAR(n.h1_semi, std::numbers::pi / std::sqrt(2.0), 5e-2);
  EXPECT_GT(n.discrete_laplacian, n.h1_semi);
  EXPECT_THROW(field_norms(Vector::Zero(3), ops), DimensionMismatch);
}

TEST(FeSpace, LoadAgreesWithMassForLinearForce) {
  const auto s = make_space(4);
  const auto ops = assemble_operators(*s);
  const Vector load = assemble_load(*s, [](double x, double y, double t) { return std::array<double, 2>{1.0 + x, t * y}; }, 2.0);
  const auto sk = make_space(4, BoundaryTreatment::kKeep);
  // Against an interpolant on the keep space, restricted to interior rows.
  const auto opk = assemble_operators(*sk);
  const Vector fk = interpolate(*sk, [](double x, double y) { return std::array<double, 2>{1.0 + x, 2.0 * y}; });
  const Vector lk = opk.mass * fk;
  const Vector direct = assemble_load(*sk, [](double x, double y, double) { return std::array<double, 2>{1.0 + x, 2.0 * y}; }, 0.0);
  EXPECT_NEAR((lk - direct).norm(), 0.0, 1e-14);
  EXPECT_EQ(load.size(), s->num_velocity_dofs());
  (void)ops;
}

TEST(FeSpace, ConvectionIsSkew) {
  const auto s = make_space(4);
  const Vector v = Vector::LinSpaced(s->num_velocity_dofs(), -1.0, 2.0);
  const SparseMatrix n = assemble_convection(s, v);
  EXPECT_NEAR(SparseMatrix(n + SparseMatrix(n.transpose())).norm(), 0.0, 1e-14);
  EXPECT_GT(n.norm(), 0.0);
}

TEST(FeSpace, EvaluateRejectsWrongSize) {
  const auto s = make_space(2);
  EXPECT_THROW(evaluate(*s, Vector::Zero(1), 0, {0.1, 0.1}), DimensionMismatch);
}
