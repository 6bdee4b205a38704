#include "oldroyd/mesh.hpp"

#include "oldroyd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>

namespace oldroyd::mesh {

namespace {

bool on_unit_square_boundary(Point p) {
  return p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0;
}

double edge_length(Point a, Point b) { return std::hypot(b.x - a.x, b.y - a.y); }

}  // namespace

struct RefinementBuilder {
  static Mesh make(std::vector<Point> vertices, std::vector<Triangle> triangles, int level,
                   int cells_per_side) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.triangles_ = std::move(triangles);
    m.level_ = level;
    m.cells_per_side_ = cells_per_side;
    m.boundary_.resize(m.vertices_.size());
    for (std::size_t i = 0; i < m.vertices_.size(); ++i) {
      m.boundary_[i] = on_unit_square_boundary(m.vertices_[i]) ? 1 : 0;
    }
    return m;
  }
};

Mesh Mesh::unit_square(int n) {
  if (n < 2) throw InvalidArgument("unit_square: cells per side must be >= 2, got " + std::to_string(n));
  std::vector<Point> vertices;
  vertices.reserve(static_cast<std::size_t>((n + 1) * (n + 1)));
  const double h = 1.0 / n;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      // i == n written as exactly 1.0 so boundary tests stay exact.
      vertices.push_back({i == n ? 1.0 : i * h, j == n ? 1.0 : j * h});
    }
  }
  std::vector<Triangle> triangles;
  triangles.reserve(static_cast<std::size_t>(2 * n * n));
  const auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return RefinementBuilder::make(std::move(vertices), std::move(triangles), 0, n);
}

int Mesh::num_boundary_vertices() const {
  return static_cast<int>(std::count(boundary_.begin(), boundary_.end(), std::uint8_t{1}));
}

double Mesh::signed_area(int t) const {
  const Triangle& tri = triangles_[static_cast<std::size_t>(t)];
  const Point a = vertices_[static_cast<std::size_t>(tri[0])];
  const Point b = vertices_[static_cast<std::size_t>(tri[1])];
  const Point c = vertices_[static_cast<std::size_t>(tri[2])];
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

double Mesh::total_area() const {
  double sum = 0.0;
  for (int t = 0; t < num_triangles(); ++t) sum += signed_area(t);
  return sum;
}

double Mesh::mesh_size() const {
  double h = 0.0;
  for (const Triangle& tri : triangles_) {
    for (int e = 0; e < 3; ++e) {
      h = std::max(h, edge_length(vertices_[static_cast<std::size_t>(tri[e])],
                                  vertices_[static_cast<std::size_t>(tri[(e + 1) % 3])]));
    }
  }
  return h;
}

std::array<double, 3> Mesh::barycentric(int t, Point p) const {
  const Triangle& tri = triangles_[static_cast<std::size_t>(t)];
  const Point a = vertices_[static_cast<std::size_t>(tri[0])];
  const Point b = vertices_[static_cast<std::size_t>(tri[1])];
  const Point c = vertices_[static_cast<std::size_t>(tri[2])];
  const double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
  const double l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
  const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
  return {1.0 - l1 - l2, l1, l2};
}

Refinement refine_red(const Mesh& coarse) {
  std::vector<Point> vertices(coarse.vertices().begin(), coarse.vertices().end());
  std::map<std::pair<int, int>, int> midpoint;
  const auto mid = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const Point pa = vertices[static_cast<std::size_t>(a)];
    const Point pb = vertices[static_cast<std::size_t>(b)];
    vertices.push_back({0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)});
    const int id = static_cast<int>(vertices.size()) - 1;
    midpoint.emplace(key, id);
    return id;
  };

  std::vector<Triangle> children;
  children.reserve(coarse.triangles().size() * 4);
  for (const Triangle& t : coarse.triangles()) {
    const int a = t[0], b = t[1], c = t[2];
    const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
    children.push_back({a, ab, ca});
    children.push_back({ab, b, bc});
    children.push_back({ca, bc, c});
    children.push_back({ab, bc, ca});
  }

  // Renumber vertices lexicographically by (y, x).
  std::vector<int> order(vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const Point p = vertices[static_cast<std::size_t>(i)];
    const Point q = vertices[static_cast<std::size_t>(j)];
    return p.y != q.y ? p.y < q.y : p.x < q.x;
  });
  std::vector<int> new_id(vertices.size());
  std::vector<Point> sorted(vertices.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    new_id[static_cast<std::size_t>(order[k])] = static_cast<int>(k);
    sorted[k] = vertices[static_cast<std::size_t>(order[k])];
  }
  for (Triangle& t : children) {
    for (int& v : t) v = new_id[static_cast<std::size_t>(v)];
  }

  Refinement out{RefinementBuilder::make(std::move(sorted), std::move(children), coarse.level() + 1,
                                         coarse.cells_per_side() * 2),
                 {}};
  out.parent.resize(out.fine.triangles().size());
  for (std::size_t f = 0; f < out.parent.size(); ++f) out.parent[f] = static_cast<int>(f / 4);
  return out;
}

double mesh_size(const Mesh& mesh) { return mesh.mesh_size(); }

MeshHierarchy::MeshHierarchy(int coarse_cells_per_side, int num_refinements) {
  if (num_refinements < 0) throw InvalidArgument("MeshHierarchy: negative refinement count");
  meshes_.push_back(std::make_shared<const Mesh>(Mesh::unit_square(coarse_cells_per_side)));
  parents_.emplace_back();
  for (int r = 0; r < num_refinements; ++r) {
    Refinement ref = refine_red(*meshes_.back());
    meshes_.push_back(std::make_shared<const Mesh>(std::move(ref.fine)));
    parents_.push_back(std::move(ref.parent));
  }
}

std::span<const int> MeshHierarchy::parent_of(int l) const {
  if (l <= 0 || l >= num_levels()) throw InvalidArgument("parent_of: level has no parent");
  return parents_[static_cast<std::size_t>(l)];
}

std::vector<int> MeshHierarchy::ancestors(int fine_level, int coarse_level) const {
  if (coarse_level > fine_level || coarse_level < 0 || fine_level >= num_levels()) {
    throw InvalidArgument("ancestors: levels are not nested");
  }
  std::vector<int> anc(static_cast<std::size_t>(level(fine_level).num_triangles()));
  std::iota(anc.begin(), anc.end(), 0);
  for (int l = fine_level; l > coarse_level; --l) {
    const auto parent = parent_of(l);
    for (int& t : anc) t = parent[static_cast<std::size_t>(t)];
  }
  return anc;
}

int MeshHierarchy::level_with_cells(int cells_per_side) const {
  for (int l = 0; l < num_levels(); ++l) {
    if (level(l).cells_per_side() == cells_per_side) return l;
  }
  throw InvalidArgument("hierarchy has no level with " + std::to_string(cells_per_side) +
                        " cells per side");
}

void write_mesh(const Mesh& mesh, const std::filesystem::path& stem) {
  std::filesystem::path node = stem;
  node += ".node";
  std::filesystem::path ele = stem;
  ele += ".ele";
  std::ofstream nf(node);
  std::ofstream ef(ele);
  if (!nf || !ef) throw ExportError("cannot open mesh dump files at " + stem.string());
  nf.precision(17);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const Point p = mesh.vertices()[static_cast<std::size_t>(v)];
    nf << p.x << ' ' << p.y << ' ' << (mesh.is_boundary_vertex(v) ? 1 : 0) << '\n';
  }
  for (const Triangle& t : mesh.triangles()) ef << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!nf || !ef) throw ExportError("failed writing mesh dump " + stem.string());
}

}  // namespace oldroyd::mesh
