#pragma once

// Nested uniform triangulations of the unit square.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace oldroyd::mesh {

struct Point {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point&) const = default;
};

using Triangle = std::array<int, 3>;

/// Uniform right-triangle mesh of [0,1]^2. Vertices are ordered
/// lexicographically by (y, x); triangles are counterclockwise.
class Mesh {
 public:
  /// n x n cells, each split along its (0,0)-(1,1) diagonal. Requires n >= 2.
  static Mesh unit_square(int n);

  std::span<const Point> vertices() const { return vertices_; }
  std::span<const Triangle> triangles() const { return triangles_; }
  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }

  bool is_boundary_vertex(int v) const { return boundary_[static_cast<std::size_t>(v)] != 0; }
  int num_boundary_vertices() const;

  int level() const { return level_; }
  int cells_per_side() const { return cells_per_side_; }

  /// Signed area of triangle t (positive for counterclockwise ordering).
  double signed_area(int t) const;
  double total_area() const;

  /// Largest edge length over all triangles.
  double mesh_size() const;

  /// Barycentric coordinates of p with respect to triangle t.
  std::array<double, 3> barycentric(int t, Point p) const;

  bool operator==(const Mesh&) const = default;

 private:
  friend struct RefinementBuilder;
  Mesh() = default;

  std::vector<Point> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<std::uint8_t> boundary_;
  int level_ = 0;
  int cells_per_side_ = 0;
};

/// Result of one red refinement: the fine mesh and, for every fine triangle,
/// the coarse triangle containing it. Children of coarse triangle T are
/// 4T (corner at vertex 0), 4T+1 (corner 1), 4T+2 (corner 2), 4T+3 (center).
struct Refinement {
  Mesh fine;
  std::vector<int> parent;
};

Refinement refine_red(const Mesh& coarse);

double mesh_size(const Mesh& mesh);

/// Meshes ordered coarsest first, with parent maps between adjacent levels.
class MeshHierarchy {
 public:
  MeshHierarchy(int coarse_cells_per_side, int num_refinements);

  int num_levels() const { return static_cast<int>(meshes_.size()); }
  const Mesh& level(int l) const { return *meshes_.at(static_cast<std::size_t>(l)); }
  std::shared_ptr<const Mesh> level_ptr(int l) const { return meshes_.at(static_cast<std::size_t>(l)); }

  /// parent_of(l)[t] is the triangle of level l-1 containing triangle t of level l.
  std::span<const int> parent_of(int l) const;

  /// Containing triangle on level `coarse_level` for every triangle of
  /// `fine_level` (identity when the levels coincide).
  std::vector<int> ancestors(int fine_level, int coarse_level) const;

  /// Index of the level with the given cells per side; throws if absent.
  int level_with_cells(int cells_per_side) const;

 private:
  std::vector<std::shared_ptr<const Mesh>> meshes_;
  std::vector<std::vector<int>> parents_;
};

/// Writes `<stem>.node` ("x y flag" per vertex) and `<stem>.ele` ("i j k"
/// per triangle).
void write_mesh(const Mesh& mesh, const std::filesystem::path& stem);

}  // namespace oldroyd::mesh
