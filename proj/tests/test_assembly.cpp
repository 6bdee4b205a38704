#include "oldroyd/assembly.hpp"
#include "oldroyd/errors.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace oldroyd;
using namespace oldroyd::fe;

namespace {

struct TwoLevel {
  mesh::MeshHierarchy hierarchy{2, 2};
  std::shared_ptr<const FeSpace> coarse = std::make_shared<const FeSpace>(hierarchy.level_ptr(0));
  std::shared_ptr<const FeSpace> fine = std::make_shared<const FeSpace>(hierarchy.level_ptr(2));
  std::vector<int> anc = hierarchy.ancestors(2, 0);
  std::shared_ptr<const QuadratureBackend> backend = std::make_shared<const QuadratureBackend>(coarse, fine, anc);
};

Vector random_vector(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = d(gen);
  return v;
}

}  // namespace

TEST(Assembly, SingleLevelMatchesOperators) {
  auto space = std::make_shared<const FeSpace>(std::make_shared<const mesh::Mesh>(mesh::Mesh::unit_square(4)));
  StackedAssembler a(std::make_shared<const QuadratureBackend>(space));
  const auto ops = assemble_operators(*space);
  EXPECT_NEAR(SparseMatrix(a.mass() - ops.mass).norm(), 0.0, 1e-14);
  EXPECT_NEAR(SparseMatrix(a.stiffness() - ops.stiffness).norm(), 0.0, 1e-12);
}

TEST(Assembly, TwoLevelDiagonalBlocksMatchLevelOperators) {
  TwoLevel t;
  StackedAssembler a(t.backend);
  const int nc = t.coarse->num_velocity_dofs(), nf = t.fine->num_velocity_dofs();
  EXPECT_EQ(t.backend->stacked_size(), nc + nf);
  const auto oc = assemble_operators(*t.coarse);
  const auto of = assemble_operators(*t.fine);
  EXPECT_NEAR(SparseMatrix(block(a.mass(), 0, nc, 0, nc) - oc.mass).norm(), 0.0, 1e-14);
  EXPECT_NEAR(SparseMatrix(block(a.stiffness(), 0, nc, 0, nc) - oc.stiffness).norm(), 0.0, 1e-12);
  EXPECT_NEAR(SparseMatrix(block(a.mass(), nc, nf, nc, nf) - of.mass).norm(), 0.0, 1e-14);
  const CrossOperators x = cross_level_operators(a);
  const CrossOperators y = cross_level_operators(t.coarse, t.fine, t.hierarchy);
  EXPECT_EQ(x.mass.rows(), nc);
  EXPECT_EQ(x.mass.cols(), nf);
  EXPECT_NEAR(SparseMatrix(x.mass - y.mass).norm(), 0.0, 0.0);
  EXPECT_NEAR(SparseMatrix(x.mass - SparseMatrix(block(a.mass(), nc, nf, 0, nc).transpose())).norm(), 0.0, 1e-15);
}

TEST(Assembly, CoarseP1FieldIsReproducedOnFineMesh) {
  TwoLevel t;
  StackedAssembler a(t.backend);
  // A coarse field without bubbles equals its fine nodal interpolant.
  Vector c = random_vector(t.coarse->num_velocity_dofs(), 1);
  for (int tri = 0; tri < t.coarse->mesh().num_triangles(); ++tri) {
    for (int comp = 0; comp < 2; ++comp) c[t.coarse->velocity_index(comp, t.coarse->bubble_dof(tri))] = 0.0;
  }
  const Samples sc = t.backend->sample_layer(0, c);
  Vector f = Vector::Zero(t.fine->num_velocity_dofs());
  const auto& fm = t.fine->mesh();
  for (int v = 0; v < fm.num_vertices(); ++v) {
    const int d = t.fine->vertex_dof(v);
    if (d < 0) continue;
    // locate via samples: evaluate coarse field at vertex
    for (int tri = 0; tri < t.coarse->mesh().num_triangles(); ++tri) {
      const auto l = t.coarse->mesh().barycentric(tri, fm.vertices()[v]);
      if (l[0] >= -1e-12 && l[1] >= -1e-12 && l[2] >= -1e-12) {
        const FieldValue val = evaluate(*t.coarse, c, tri, fm.vertices()[v]);
        f[t.fine->velocity_index(0, d)] = val.value[0];
        f[t.fine->velocity_index(1, d)] = val.value[1];
        break;
      }
    }
  }
  const Samples sf = t.backend->sample_layer(1, f);
  for (std::size_t p = 0; p < sc.value.size(); ++p) {
    EXPECT_NEAR(sc.value[p][0], sf.value[p][0], 1e-13);
    EXPECT_NEAR(sc.grad[p][1][0], sf.grad[p][1][0], 1e-12);
  }
}

TEST(Assembly, TransportIsSkewAndMatchesTrilinear) {
  TwoLevel t;
  StackedAssembler a(t.backend);
  const int n = t.backend->stacked_size();
  const Vector w = random_vector(n, 2), x = random_vector(n, 3), y = random_vector(n, 4);
  const Samples sw = t.backend->sample_stacked(w), sx = t.backend->sample_stacked(x), sy = t.backend->sample_stacked(y);
  const SparseMatrix nm = a.transport(sw);
  EXPECT_NEAR(SparseMatrix(nm + SparseMatrix(nm.transpose())).norm(), 0.0, 1e-13);
  // y^T N(w) x = b(w, x, y)
  EXPECT_NEAR(y.dot(nm * x), trilinear_b(sw, sx, sy, *t.backend), 1e-12);
  const SparseMatrix r = a.reaction(sw);
  // y^T R(w) x = b(x, w, y)
  EXPECT_NEAR(y.dot(r * x), trilinear_b(sx, sw, sy, *t.backend), 1e-12);
  EXPECT_NEAR(trilinear_b(sx, sy, sy, *t.backend), 0.0, 1e-13);
}

TEST(Assembly, PatternIsStableAcrossReassembly) {
  TwoLevel t;
  StackedAssembler a(t.backend);
  const Samples s1 = t.backend->sample_stacked(random_vector(t.backend->stacked_size(), 5));
  const SparseMatrix m1 = a.transport(s1);
  const SparseMatrix m2 = a.reaction(s1);
  EXPECT_EQ(m1.nonZeros(), a.zero_pattern().nonZeros());
  EXPECT_EQ(m2.nonZeros(), a.zero_pattern().nonZeros());
}

TEST(Assembly, FieldCoefficientsAndUnknownSpace) {
  TwoLevel t;
  const FieldCoefficients c{t.coarse, random_vector(t.coarse->num_velocity_dofs(), 6)};
  const FieldCoefficients f{t.fine, random_vector(t.fine->num_velocity_dofs(), 7)};
  const double b1 = trilinear_b(*t.backend, c, f, f);
  EXPECT_NEAR(b1, 0.0, 1e-13);
  const double b2 = trilinear_b(*t.backend, f, c, f);
  EXPECT_NEAR(b2, -trilinear_b(*t.backend, f, f, c), 1e-13);
  auto other = std::make_shared<const FeSpace>(t.hierarchy.level_ptr(1));
  const FieldCoefficients o{other, Vector::Zero(other->num_velocity_dofs())};
  EXPECT_THROW(trilinear_b(*t.backend, o, f, f), InvalidArgument);
}

TEST(Assembly, NonNestedMeshesRejected) {
  TwoLevel t;
  std::vector<int> wrong(t.anc.size(), 0);
  EXPECT_THROW(QuadratureBackend(t.coarse, t.fine, wrong), InvalidArgument);
  const mesh::Mesh alien = mesh::Mesh::unit_square(3);
  EXPECT_THROW(nested_ancestors(alien, t.fine->mesh(), t.hierarchy), InvalidArgument);
}

TEST(Assembly, StackedLoadMatchesLevelLoads) {
  TwoLevel t;
  StackedAssembler a(t.backend);
  auto f = [](double x, double y, double tt) { return std::array<double, 2>{x * y + tt, 1.0 - x}; };
  const Vector l = a.load(f, 0.3);
  EXPECT_NEAR((t.backend->layer_part(0, l) - assemble_load(*t.coarse, f, 0.3)).norm(), 0.0, 1e-14);
  EXPECT_NEAR((t.backend->layer_part(1, l) - assemble_load(*t.fine, f, 0.3)).norm(), 0.0, 1e-14);
}
