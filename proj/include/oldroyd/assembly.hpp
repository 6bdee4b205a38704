#pragma once

// Fine-mesh quadrature backend shared by all nonlinear and cross-level
// forms. A backend holds one or two "layers": the fine space alone, or a
// coarse space plus the fine space it was refined into. Coarse shape
// functions are evaluated at fine quadrature points through the parent
// (containment) map, so every integral is exact for nested meshes.
//
// Layer fields are combined in a stacked coefficient vector
// [coarse velocity dofs | fine velocity dofs]; a stacked vector represents
// the sum of its layer fields.

#include "oldroyd/fespace.hpp"
#include "oldroyd/quadrature.hpp"

#include <memory>
#include <span>
#include <vector>

namespace oldroyd::fe {

/// Field values and gradients at every quadrature point of the backend.
struct Samples {
  std::vector<std::array<double, 2>> value;
  std::vector<std::array<std::array<double, 2>, 2>> grad;  // grad[c][d]

  static Samples zeros(std::size_t n);
  Samples& operator+=(const Samples& other);
};

class QuadratureBackend {
 public:
  /// Single-level backend on `fine`.
  explicit QuadratureBackend(std::shared_ptr<const FeSpace> fine, int degree = 6);

  /// Two-level backend; `ancestor[t]` is the coarse triangle containing fine
  /// triangle t. Throws InvalidArgument when the meshes are not nested.
  QuadratureBackend(std::shared_ptr<const FeSpace> coarse, std::shared_ptr<const FeSpace> fine,
                    std::span<const int> ancestor, int degree = 6);

  int num_layers() const { return static_cast<int>(layers_.size()); }
  const FeSpace& layer_space(int layer) const { return *layers_.at(static_cast<std::size_t>(layer)).space; }
  const std::shared_ptr<const FeSpace>& layer_space_ptr(int layer) const {
    return layers_.at(static_cast<std::size_t>(layer)).space;
  }
  int fine_layer() const { return num_layers() - 1; }

  /// Layer index of a space registered in this backend; InvalidArgument otherwise.
  int layer_of(const FeSpace& space) const;

  int offset(int layer) const { return layers_.at(static_cast<std::size_t>(layer)).offset; }
  int layer_size(int layer) const { return layer_space(layer).num_velocity_dofs(); }
  int stacked_size() const { return stacked_size_; }

  int num_elements() const { return num_elements_; }
  int points_per_element() const { return static_cast<int>(rule_->size()); }
  int num_points() const { return num_elements_ * points_per_element(); }
  int quadrature_degree() const { return rule_->degree; }

  double weight(int point) const { return weights_[static_cast<std::size_t>(point)]; }
  mesh::Point point(int p) const { return points_[static_cast<std::size_t>(p)]; }

  /// Shape functions of `layer` at a global quadrature point.
  const ShapeValues& shape(int layer, int point) const {
    return layers_[static_cast<std::size_t>(layer)].shapes[static_cast<std::size_t>(point)];
  }

  /// Scalar dofs of `layer` active on fine element e.
  const std::array<int, 4>& element_dofs(int layer, int element) const {
    return layers_[static_cast<std::size_t>(layer)].dofs[static_cast<std::size_t>(element)];
  }

  Samples sample_stacked(const Vector& stacked) const;
  Samples sample_layer(int layer, const Vector& coeffs) const;
  Samples sample(const FieldCoefficients& field) const;

  /// Embeds layer coefficients into a stacked vector (other layers zero).
  Vector embed(int layer, const Vector& coeffs) const;
  Vector layer_part(int layer, const Vector& stacked) const;

 private:
  struct Layer {
    std::shared_ptr<const FeSpace> space;
    int offset = 0;
    std::vector<ShapeValues> shapes;        // per global quadrature point
    std::vector<std::array<int, 4>> dofs;   // per fine element
  };

  void add_layer(std::shared_ptr<const FeSpace> space, std::span<const int> ancestor);

  const TriangleRule* rule_;
  int num_elements_ = 0;
  int stacked_size_ = 0;
  std::vector<double> weights_;
  std::vector<mesh::Point> points_;
  std::vector<Layer> layers_;
};

/// Assembles bilinear forms over the stacked index space of a backend. The
/// sparsity pattern is computed once; transport/reaction matrices are then
/// written directly into it, so repeated assembly inside nonlinear loops is
/// cheap.
class StackedAssembler {
 public:
  explicit StackedAssembler(std::shared_ptr<const QuadratureBackend> backend);

  const QuadratureBackend& backend() const { return *backend_; }
  const std::shared_ptr<const QuadratureBackend>& backend_ptr() const { return backend_; }

  const SparseMatrix& mass() const { return mass_; }
  const SparseMatrix& stiffness() const { return stiffness_; }

  /// N(w)(i, j) = b(w, phi_j, phi_i): w in the transport slot.
  SparseMatrix transport(const Samples& w) const;
  /// R(w)(i, j) = b(phi_j, w, phi_i): w in the transported slot.
  SparseMatrix reaction(const Samples& w) const;

  /// (f(., t), phi_i) for every stacked basis function.
  Vector load(const ForceFunction& f, double t) const;

  /// Zero matrix with the full pattern.
  SparseMatrix zero_pattern() const;

 private:
  enum class Form { kMass, kStiffness, kTransport, kReaction };
  SparseMatrix assemble(Form form, const Samples* w) const;

  std::shared_ptr<const QuadratureBackend> backend_;
  SparseMatrix pattern_;
  // For element e, local stacked dofs i, j: index into the value array (-1 if eliminated).
  std::vector<int> scatter_;
  int local_size_ = 0;
  std::vector<int> local_global_;  // per element, per local dof: stacked index or -1
  SparseMatrix mass_;
  SparseMatrix stiffness_;
};

/// b(v, w, phi) = 1/2 (v.grad w, phi) - 1/2 (v.grad phi, w) by quadrature.
double trilinear_b(const Samples& v, const Samples& w, const Samples& phi,
                   const QuadratureBackend& backend);

/// b(v, w, phi) for fields registered in the backend. Fields living on a
/// space the backend does not know raise InvalidArgument.
double trilinear_b(const QuadratureBackend& backend, const FieldCoefficients& v,
                   const FieldCoefficients& w, const FieldCoefficients& phi);

/// L2 and H1-seminorm pairings (coarse basis_i, fine basis_j), rows coarse.
struct CrossOperators {
  SparseMatrix mass;
  SparseMatrix stiffness;
};

CrossOperators cross_level_operators(const StackedAssembler& two_level);

/// Convenience: build the two-level backend and cross operators from a
/// hierarchy. Requires coarse and fine spaces on hierarchy levels.
CrossOperators cross_level_operators(const std::shared_ptr<const FeSpace>& coarse,
                                     const std::shared_ptr<const FeSpace>& fine,
                                     const mesh::MeshHierarchy& hierarchy);

/// Containing-triangle map from fine to coarse for two meshes of a hierarchy;
/// throws InvalidArgument when the meshes are not nested levels of it.
std::vector<int> nested_ancestors(const mesh::Mesh& coarse, const mesh::Mesh& fine,
                                  const mesh::MeshHierarchy& hierarchy);

/// Extracts the block rows [r0, r0+nr) x cols [c0, c0+nc).
SparseMatrix block(const SparseMatrix& m, int r0, int nr, int c0, int nc);

}  // namespace oldroyd::fe
