#include "oldroyd/assembly.hpp"

#include "oldroyd/errors.hpp"

#include <algorithm>
#include <string>

namespace oldroyd::fe {

Samples Samples::zeros(std::size_t n) {
  Samples s;
  s.value.assign(n, {0.0, 0.0});
  s.grad.assign(n, {});
  return s;
}

Samples& Samples::operator+=(const Samples& other) {
  if (other.value.size() != value.size()) {
    throw DimensionMismatch("Samples +=", static_cast<long>(value.size()), static_cast<long>(other.value.size()));
  }
  for (std::size_t p = 0; p < value.size(); ++p) {
    for (int c = 0; c < 2; ++c) {
      value[p][c] += other.value[p][c];
      grad[p][c][0] += other.grad[p][c][0];
      grad[p][c][1] += other.grad[p][c][1];
    }
  }
  return *this;
}

QuadratureBackend::QuadratureBackend(std::shared_ptr<const FeSpace> fine, int degree)
    : rule_(&triangle_rule(degree)) {
  if (!fine) throw InvalidArgument("QuadratureBackend: null space");
  const mesh::Mesh& m = fine->mesh();
  num_elements_ = m.num_triangles();
  for (int e = 0; e < num_elements_; ++e) {
    const auto& tri = m.triangles()[static_cast<std::size_t>(e)];
    const double area = fine->geometry(e).area;
    for (std::size_t q = 0; q < rule_->size(); ++q) {
      const auto& l = rule_->points[q];
      mesh::Point p{0.0, 0.0};
      for (int k = 0; k < 3; ++k) {
        p.x += l[static_cast<std::size_t>(k)] * m.vertices()[static_cast<std::size_t>(tri[k])].x;
        p.y += l[static_cast<std::size_t>(k)] * m.vertices()[static_cast<std::size_t>(tri[k])].y;
      }
      points_.push_back(p);
      weights_.push_back(rule_->weights[q] * area);
    }
  }
  add_layer(std::move(fine), {});
}

QuadratureBackend::QuadratureBackend(std::shared_ptr<const FeSpace> coarse,
                                     std::shared_ptr<const FeSpace> fine,
                                     std::span<const int> ancestor, int degree)
    : QuadratureBackend(fine, degree) {
  if (!coarse) throw InvalidArgument("QuadratureBackend: null coarse space");
  if (static_cast<int>(ancestor.size()) != num_elements_) {
    throw InvalidArgument("ancestor map has " + std::to_string(ancestor.size()) +
                          " entries, fine mesh has " + std::to_string(num_elements_) + " triangles");
  }
  // Re-stack: coarse first, fine second.
  Layer fine_layer = std::move(layers_.back());
  layers_.clear();
  stacked_size_ = 0;
  add_layer(std::move(coarse), ancestor);
  fine_layer.offset = stacked_size_;
  stacked_size_ += fine_layer.space->num_velocity_dofs();
  layers_.push_back(std::move(fine_layer));
}

void QuadratureBackend::add_layer(std::shared_ptr<const FeSpace> space, std::span<const int> ancestor) {
  Layer layer;
  layer.space = std::move(space);
  layer.offset = stacked_size_;
  const FeSpace& s = *layer.space;
  const int npe = points_per_element();
  layer.shapes.resize(static_cast<std::size_t>(num_points()));
  layer.dofs.resize(static_cast<std::size_t>(num_elements_));
  for (int e = 0; e < num_elements_; ++e) {
    const int owner = ancestor.empty() ? e : ancestor[static_cast<std::size_t>(e)];
    if (owner < 0 || owner >= s.mesh().num_triangles()) {
      throw InvalidArgument("ancestor index out of range for triangle " + std::to_string(e));
    }
    layer.dofs[static_cast<std::size_t>(e)] = s.local_scalar_dofs(owner);
    for (int q = 0; q < npe; ++q) {
      const int p = e * npe + q;
      std::array<double, 3> l;
      if (ancestor.empty()) {
        l = rule_->points[static_cast<std::size_t>(q)];
      } else {
        l = s.mesh().barycentric(owner, points_[static_cast<std::size_t>(p)]);
        for (double li : l) {
          if (li < -1e-10) {
            throw InvalidArgument("meshes are not nested: fine triangle " + std::to_string(e) +
                                  " leaves coarse triangle " + std::to_string(owner));
          }
        }
      }
      layer.shapes[static_cast<std::size_t>(p)] = mini_shape(l, s.geometry(owner));
    }
  }
  stacked_size_ += s.num_velocity_dofs();
  layers_.push_back(std::move(layer));
}

int QuadratureBackend::layer_of(const FeSpace& space) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].space.get() == &space) return static_cast<int>(l);
  }
  throw InvalidArgument("field space is not registered in this quadrature backend");
}

Samples QuadratureBackend::sample_layer(int layer, const Vector& coeffs) const {
  const Layer& L = layers_.at(static_cast<std::size_t>(layer));
  const FeSpace& s = *L.space;
  if (coeffs.size() != s.num_velocity_dofs()) {
    throw DimensionMismatch("layer coefficient count", s.num_velocity_dofs(), coeffs.size());
  }
  Samples out = Samples::zeros(static_cast<std::size_t>(num_points()));
  const int npe = points_per_element();
  for (int e = 0; e < num_elements_; ++e) {
    const auto& dofs = L.dofs[static_cast<std::size_t>(e)];
    double cf[2][4];
    for (int c = 0; c < 2; ++c) {
      for (int a = 0; a < 4; ++a) cf[c][a] = dofs[a] < 0 ? 0.0 : coeffs[s.velocity_index(c, dofs[a])];
    }
    for (int q = 0; q < npe; ++q) {
      const auto p = static_cast<std::size_t>(e * npe + q);
      const ShapeValues& sh = L.shapes[p];
      for (int c = 0; c < 2; ++c) {
        for (int a = 0; a < 4; ++a) {
          out.value[p][c] += cf[c][a] * sh.value[a];
          out.grad[p][c][0] += cf[c][a] * sh.grad[a][0];
          out.grad[p][c][1] += cf[c][a] * sh.grad[a][1];
        }
      }
    }
  }
  return out;
}

Samples QuadratureBackend::sample_stacked(const Vector& stacked) const {
  if (stacked.size() != stacked_size_) {
    throw DimensionMismatch("stacked coefficient count", stacked_size_, stacked.size());
  }
  Samples out = sample_layer(0, layer_part(0, stacked));
  for (int l = 1; l < num_layers(); ++l) out += sample_layer(l, layer_part(l, stacked));
  return out;
}

Samples QuadratureBackend::sample(const FieldCoefficients& field) const {
  if (!field.space) throw InvalidArgument("field without a space");
  return sample_layer(layer_of(*field.space), field.values);
}

Vector QuadratureBackend::embed(int layer, const Vector& coeffs) const {
  if (coeffs.size() != layer_size(layer)) {
    throw DimensionMismatch("embed coefficient count", layer_size(layer), coeffs.size());
  }
  Vector out = Vector::Zero(stacked_size_);
  out.segment(offset(layer), layer_size(layer)) = coeffs;
  return out;
}

Vector QuadratureBackend::layer_part(int layer, const Vector& stacked) const {
  if (stacked.size() != stacked_size_) {
    throw DimensionMismatch("stacked coefficient count", stacked_size_, stacked.size());
  }
  return stacked.segment(offset(layer), layer_size(layer));
}

StackedAssembler::StackedAssembler(std::shared_ptr<const QuadratureBackend> backend)
    : backend_(std::move(backend)) {
  if (!backend_) throw InvalidArgument("StackedAssembler: null backend");
  const QuadratureBackend& b = *backend_;
  local_size_ = 8 * b.num_layers();
  const int ne = b.num_elements();
  local_global_.assign(static_cast<std::size_t>(ne * local_size_), -1);
  std::vector<linalg::Triplet> trips;
  trips.reserve(static_cast<std::size_t>(ne) * static_cast<std::size_t>(local_size_ * local_size_));
  for (int e = 0; e < ne; ++e) {
    int* lg = &local_global_[static_cast<std::size_t>(e * local_size_)];
    for (int l = 0; l < b.num_layers(); ++l) {
      const auto& dofs = b.element_dofs(l, e);
      const FeSpace& s = b.layer_space(l);
      for (int c = 0; c < 2; ++c) {
        for (int a = 0; a < 4; ++a) {
          if (dofs[a] >= 0) lg[l * 8 + c * 4 + a] = b.offset(l) + s.velocity_index(c, dofs[a]);
        }
      }
    }
    for (int i = 0; i < local_size_; ++i) {
      if (lg[i] < 0) continue;
      for (int j = 0; j < local_size_; ++j) {
        if (lg[j] >= 0) trips.emplace_back(lg[i], lg[j], 0.0);
      }
    }
  }
  pattern_ = linalg::from_triplets(b.stacked_size(), b.stacked_size(), trips);
  pattern_.makeCompressed();

  scatter_.assign(static_cast<std::size_t>(ne * local_size_ * local_size_), -1);
  const int* outer = pattern_.outerIndexPtr();
  const int* inner = pattern_.innerIndexPtr();
  for (int e = 0; e < ne; ++e) {
    const int* lg = &local_global_[static_cast<std::size_t>(e * local_size_)];
    for (int i = 0; i < local_size_; ++i) {
      if (lg[i] < 0) continue;
      for (int j = 0; j < local_size_; ++j) {
        if (lg[j] < 0) continue;
        // column-major: column lg[j], row lg[i]
        const int* begin = inner + outer[lg[j]];
        const int* end = inner + outer[lg[j] + 1];
        const int* it = std::lower_bound(begin, end, lg[i]);
        scatter_[static_cast<std::size_t>((e * local_size_ + i) * local_size_ + j)] =
            static_cast<int>(it - inner);
      }
    }
  }
  mass_ = assemble(Form::kMass, nullptr);
  stiffness_ = assemble(Form::kStiffness, nullptr);
}

SparseMatrix StackedAssembler::zero_pattern() const { return pattern_; }

SparseMatrix StackedAssembler::assemble(Form form, const Samples* w) const {
  const QuadratureBackend& b = *backend_;
  if (w && static_cast<int>(w->value.size()) != b.num_points()) {
    throw DimensionMismatch("samples per backend point", b.num_points(), static_cast<long>(w->value.size()));
  }
  SparseMatrix out = pattern_;
  double* values = out.valuePtr();
  std::fill(values, values + out.nonZeros(), 0.0);
  const int npe = b.points_per_element();
  const int nl = b.num_layers();
  std::vector<double> local(static_cast<std::size_t>(local_size_ * local_size_));
  // Flat local shapes: index l*4 + a
  std::vector<double> sv(static_cast<std::size_t>(4 * nl));
  std::vector<std::array<double, 2>> sg(static_cast<std::size_t>(4 * nl));

  for (int e = 0; e < b.num_elements(); ++e) {
    std::fill(local.begin(), local.end(), 0.0);
    for (int q = 0; q < npe; ++q) {
      const int p = e * npe + q;
      const double wt = b.weight(p);
      for (int l = 0; l < nl; ++l) {
        const ShapeValues& sh = b.shape(l, p);
        for (int a = 0; a < 4; ++a) {
          sv[static_cast<std::size_t>(l * 4 + a)] = sh.value[a];
          sg[static_cast<std::size_t>(l * 4 + a)] = sh.grad[a];
        }
      }
      const int ns = 4 * nl;
      switch (form) {
        case Form::kMass:
        case Form::kStiffness:
        case Form::kTransport: {
          double wd[2] = {0.0, 0.0};
          if (form == Form::kTransport) {
            const auto& wv = w->value[static_cast<std::size_t>(p)];
            wd[0] = wv[0];
            wd[1] = wv[1];
          }
          for (int si = 0; si < ns; ++si) {
            const double vi = sv[static_cast<std::size_t>(si)];
            const auto& gi = sg[static_cast<std::size_t>(si)];
            const double wgi = wd[0] * gi[0] + wd[1] * gi[1];
            for (int sj = 0; sj < ns; ++sj) {
              const double vj = sv[static_cast<std::size_t>(sj)];
              const auto& gj = sg[static_cast<std::size_t>(sj)];
              double val;
              if (form == Form::kMass) {
                val = vi * vj;
              } else if (form == Form::kStiffness) {
                val = gi[0] * gj[0] + gi[1] * gj[1];
              } else {
                const double wgj = wd[0] * gj[0] + wd[1] * gj[1];
                val = 0.5 * (wgj * vi - wgi * vj);
              }
              val *= wt;
              const int li = (si / 4) * 8 + si % 4;
              const int lj = (sj / 4) * 8 + sj % 4;
              for (int c = 0; c < 2; ++c) {
                local[static_cast<std::size_t>((li + 4 * c) * local_size_ + lj + 4 * c)] += val;
              }
            }
          }
          break;
        }
        case Form::kReaction: {
          const auto& wv = w->value[static_cast<std::size_t>(p)];
          const auto& wg = w->grad[static_cast<std::size_t>(p)];
          for (int si = 0; si < ns; ++si) {
            const double vi = sv[static_cast<std::size_t>(si)];
            const auto& gi = sg[static_cast<std::size_t>(si)];
            for (int sj = 0; sj < ns; ++sj) {
              const double vj = sv[static_cast<std::size_t>(sj)];
              const int li = (si / 4) * 8 + si % 4;
              const int lj = (sj / 4) * 8 + sj % 4;
              for (int ci = 0; ci < 2; ++ci) {
                for (int cj = 0; cj < 2; ++cj) {
                  const double val = 0.5 * wt * vj * (wg[ci][cj] * vi - gi[cj] * wv[ci]);
                  local[static_cast<std::size_t>((li + 4 * ci) * local_size_ + lj + 4 * cj)] += val;
                }
              }
            }
          }
          break;
        }
      }
    }
    const int* sc = &scatter_[static_cast<std::size_t>(e * local_size_ * local_size_)];
    for (int k = 0; k < local_size_ * local_size_; ++k) {
      if (sc[k] >= 0) values[sc[k]] += local[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

SparseMatrix StackedAssembler::transport(const Samples& w) const { return assemble(Form::kTransport, &w); }

SparseMatrix StackedAssembler::reaction(const Samples& w) const { return assemble(Form::kReaction, &w); }

Vector StackedAssembler::load(const ForceFunction& f, double t) const {
  const QuadratureBackend& b = *backend_;
  Vector out = Vector::Zero(b.stacked_size());
  const int npe = b.points_per_element();
  for (int e = 0; e < b.num_elements(); ++e) {
    const int* lg = &local_global_[static_cast<std::size_t>(e * local_size_)];
    for (int q = 0; q < npe; ++q) {
      const int p = e * npe + q;
      const mesh::Point x = b.point(p);
      const auto fv = f(x.x, x.y, t);
      const double wt = b.weight(p);
      for (int l = 0; l < b.num_layers(); ++l) {
        const ShapeValues& sh = b.shape(l, p);
        for (int c = 0; c < 2; ++c) {
          for (int a = 0; a < 4; ++a) {
            const int g = lg[l * 8 + c * 4 + a];
            if (g >= 0) out[g] += wt * fv[c] * sh.value[a];
          }
        }
      }
    }
  }
  return out;
}

double trilinear_b(const Samples& v, const Samples& w, const Samples& phi, const QuadratureBackend& backend) {
  const auto n = static_cast<std::size_t>(backend.num_points());
  if (v.value.size() != n || w.value.size() != n || phi.value.size() != n) {
    throw DimensionMismatch("trilinear_b samples", static_cast<long>(n), static_cast<long>(v.value.size()));
  }
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double t = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double vgw = v.value[p][0] * w.grad[p][c][0] + v.value[p][1] * w.grad[p][c][1];
      const double vgp = v.value[p][0] * phi.grad[p][c][0] + v.value[p][1] * phi.grad[p][c][1];
      t += vgw * phi.value[p][c] - vgp * w.value[p][c];
    }
    sum += 0.5 * backend.weight(static_cast<int>(p)) * t;
  }
  return sum;
}

double trilinear_b(const QuadratureBackend& backend, const FieldCoefficients& v, const FieldCoefficients& w,
                   const FieldCoefficients& phi) {
  return trilinear_b(backend.sample(v), backend.sample(w), backend.sample(phi), backend);
}

CrossOperators cross_level_operators(const StackedAssembler& two_level) {
  const QuadratureBackend& b = two_level.backend();
  if (b.num_layers() != 2) throw InvalidArgument("cross-level operators need a two-level backend");
  const int nc = b.layer_size(0);
  const int nf = b.layer_size(1);
  return {block(two_level.mass(), 0, nc, nc, nf), block(two_level.stiffness(), 0, nc, nc, nf)};
}

CrossOperators cross_level_operators(const std::shared_ptr<const FeSpace>& coarse,
                                     const std::shared_ptr<const FeSpace>& fine,
                                     const mesh::MeshHierarchy& hierarchy) {
  const auto anc = nested_ancestors(coarse->mesh(), fine->mesh(), hierarchy);
  auto backend = std::make_shared<const QuadratureBackend>(coarse, fine, anc);
  return cross_level_operators(StackedAssembler(backend));
}

std::vector<int> nested_ancestors(const mesh::Mesh& coarse, const mesh::Mesh& fine,
                                  const mesh::MeshHierarchy& hierarchy) {
  const int cl = hierarchy.level_with_cells(coarse.cells_per_side());
  const int fl = hierarchy.level_with_cells(fine.cells_per_side());
  if (fl < cl) throw InvalidArgument("fine mesh is coarser than the coarse mesh");
  if (!(hierarchy.level(cl) == coarse) || !(hierarchy.level(fl) == fine)) {
    throw InvalidArgument("meshes are not levels of the hierarchy");
  }
  return hierarchy.ancestors(fl, cl);
}

SparseMatrix block(const SparseMatrix& m, int r0, int nr, int c0, int nc) {
  if (r0 < 0 || c0 < 0 || r0 + nr > m.rows() || c0 + nc > m.cols()) {
    throw DimensionMismatch("block extent", m.rows(), r0 + nr);
  }
  SparseMatrix out = m.block(r0, c0, nr, nc);
  out.makeCompressed();
  return out;
}

}  // namespace oldroyd::fe
