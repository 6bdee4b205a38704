#include "oldroyd/errors.hpp"
#include "oldroyd/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace oldroyd;
using namespace oldroyd::mesh;

TEST(Mesh, UnitSquareCounts) {
  for (int n : {2, 3, 8}) {
    const Mesh m = Mesh::unit_square(n);
    EXPECT_EQ(m.num_vertices(), (n + 1) * (n + 1));
    EXPECT_EQ(m.num_triangles(), 2 * n * n);
    EXPECT_EQ(m.num_boundary_vertices(), 4 * n);
    EXPECT_NEAR(m.total_area(), 1.0, 1e-14);
    EXPECT_NEAR(m.mesh_size(), std::sqrt(2.0) / n, 1e-14);
    for (int t = 0; t < m.num_triangles(); ++t) EXPECT_GT(m.signed_area(t), 0.0);
  }
}

TEST(Mesh, RejectsTooCoarse) { EXPECT_THROW(Mesh::unit_square(1), InvalidArgument); }

TEST(Mesh, VerticesAreLexicographic) {
  const Mesh m = Mesh::unit_square(4);
  for (int v = 1; v < m.num_vertices(); ++v) {
    const Point a = m.vertices()[v - 1], b = m.vertices()[v];
    EXPECT_TRUE(a.y < b.y || (a.y == b.y && a.x < b.x));
  }
}

TEST(Mesh, RefinementMatchesDirectConstruction) {
  const Refinement r = refine_red(Mesh::unit_square(4));
  const Mesh direct = Mesh::unit_square(8);
  EXPECT_EQ(r.fine.vertices().size(), direct.vertices().size());
  EXPECT_EQ(r.fine.num_triangles(), direct.num_triangles());
  for (int v = 0; v < direct.num_vertices(); ++v) EXPECT_EQ(r.fine.vertices()[v], direct.vertices()[v]);
  EXPECT_NEAR(r.fine.total_area(), 1.0, 1e-14);
  EXPECT_NEAR(r.fine.mesh_size(), direct.mesh_size(), 1e-15);
}

TEST(Mesh, ParentContainsChild) {
  const Mesh coarse = Mesh::unit_square(2);
  const Refinement r = refine_red(coarse);
  for (int t = 0; t < r.fine.num_triangles(); ++t) {
    EXPECT_EQ(r.parent[t], t / 4);
    const auto& tri = r.fine.triangles()[t];
    for (int k = 0; k < 3; ++k) {
      for (double l : coarse.barycentric(r.parent[t], r.fine.vertices()[tri[k]])) EXPECT_GE(l, -1e-14);
    }
    EXPECT_NEAR(r.fine.signed_area(t), coarse.signed_area(r.parent[t]) / 4.0, 1e-15);
  }
}

TEST(Mesh, HierarchyAncestors) {
  const MeshHierarchy h(2, 2);
  ASSERT_EQ(h.num_levels(), 3);
  EXPECT_EQ(h.level_with_cells(8), 2);
  EXPECT_THROW(h.level_with_cells(5), InvalidArgument);
  const auto anc = h.ancestors(2, 0);
  ASSERT_EQ(static_cast<int>(anc.size()), h.level(2).num_triangles());
  for (int t = 0; t < h.level(2).num_triangles(); ++t) EXPECT_EQ(anc[t], t / 16);
  const auto same = h.ancestors(1, 1);
  for (int t = 0; t < static_cast<int>(same.size()); ++t) EXPECT_EQ(same[t], t);
}

TEST(Mesh, BarycentricReproducesPoint) {
  const Mesh m = Mesh::unit_square(3);
  const Point p{0.4, 0.35};
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto l = m.barycentric(t, p);
    EXPECT_NEAR(l[0] + l[1] + l[2], 1.0, 1e-14);
    const auto& tri = m.triangles()[t];
    double x = 0, y = 0;
    for (int k = 0; k < 3; ++k) {
      x += l[k] * m.vertices()[tri[k]].x;
      y += l[k] * m.vertices()[tri[k]].y;
    }
    EXPECT_NEAR(x, p.x, 1e-14);
    EXPECT_NEAR(y, p.y, 1e-14);
  }
}

TEST(Mesh, WritesNodeAndEle) {
  const auto dir = std::filesystem::temp_directory_path() / "oldroyd_mesh_test";
  std::filesystem::create_directories(dir);
  write_mesh(Mesh::unit_square(2), dir / "m");
  std::ifstream node(dir / "m.node"), ele(dir / "m.ele");
  int lines = 0;
  for (std::string s; std::getline(node, s);) ++lines;
  EXPECT_EQ(lines, 9);
  lines = 0;
  for (std::string s; std::getline(ele, s);) ++lines;
  EXPECT_EQ(lines, 8);
  std::filesystem::remove_all(dir);
}
