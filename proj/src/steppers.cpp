#include "oldroyd/steppers.hpp"

#include "oldroyd/errors.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>

namespace oldroyd::steppers {

namespace {

using linalg::Factorization;
using linalg::Index;
using linalg::Triplet;

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_multiple(double t, double k) {
  const double r = t / k;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

// Action and (on demand) matrix of a linearized step operator.
struct LinearOp {
  std::function<Vector(const Vector&)> apply;
  std::function<SparseMatrix()> assemble;
};

// Solves op x = rhs by defect correction preconditioned with the
// convection-free factorization; falls back to a direct solve when the
// correction stalls.
Vector defect_correction(const Factorization& k0, const LinearOp& op, const Vector& rhs, Vector x, int& iterations) {
  const double rhs_norm = rhs.lpNorm<Eigen::Infinity>();
  double previous = kInf;
  for (int it = 0; it < 40; ++it) {
    const Vector r = rhs - op.apply(x);
    const double rn = r.lpNorm<Eigen::Infinity>();
    if (rn <= 1e-14 * rhs_norm || rn == 0.0) return x;
    const Vector d = k0.solve_unchecked(r);
    x += d;
    ++iterations;
    const double dn = d.lpNorm<Eigen::Infinity>();
    if (dn <= 1e-13 * x.lpNorm<Eigen::Infinity>()) return x;
    if (!std::isfinite(dn) || (it >= 2 && dn > 0.5 * previous)) break;
    previous = dn;
  }
  ++iterations;
  const Factorization direct(op.assemble());
  return direct.solve(rhs);
}

struct PicardOutcome {
  Vector x;
  int iterations = 0;
  int linear_iterations = 0;
  double increment = 0.0;
  bool converged = false;
};

PicardOutcome picard(const Vector& guess, const Vector& rhs, const std::function<LinearOp(const Vector&)>& linearize,
                     const Factorization& k0, const std::function<double(const Vector&)>& increment_norm,
                     double tol, int maxit, bool linear) {
  PicardOutcome out;
  out.x = guess;
  for (int it = 1; it <= maxit; ++it) {
    const LinearOp op = linearize(out.x);
    Vector next = defect_correction(k0, op, rhs, out.x, out.linear_iterations);
    out.increment = increment_norm(next - out.x);
    out.x = std::move(next);
    out.iterations = it;
    if (linear || out.increment < tol) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

void append(std::vector<Triplet>& t, const SparseMatrix& m, Index r0, Index c0, double scale = 1.0) {
  for (Index c = 0; c < m.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(m, c); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), scale * it.value());
}

void append_identity(std::vector<Triplet>& t, Index r0, Index n) {
  for (Index i = 0; i < n; ++i) t.emplace_back(r0 + i, r0 + i, 1.0);
}

// Divergence with the first pressure row dropped.
SparseMatrix reduced_divergence(const SparseMatrix& b) { return fe::block(b, 1, static_cast<int>(b.rows()) - 1, 0, static_cast<int>(b.cols())); }

Vector zero_load_or(const fe::StackedAssembler& a, const fe::ForceFunction& f, double t) {
  if (!f) return Vector::Zero(a.backend().stacked_size());
  return a.load(f, t);
}

bool keep_snapshot(const SchemeConfig& cfg, int n, int last, double t) {
  if (!cfg.sample_times.empty()) {
    for (double s : cfg.sample_times)
      if (std::abs(s - t) <= 1e-9 * std::max(1.0, std::abs(t))) return true;
    return false;
  }
  return n == last || n % std::max(1, cfg.snapshot_stride) == 0;
}

double log_h(const fe::FeSpace& s) { return std::abs(std::log(s.mesh().mesh_size())); }

// ---------------------------------------------------------------------------
// Single-level Galerkin stepping.

class SingleRunner {
 public:
  SingleRunner(const Level& level, const SchemeConfig& cfg, const Problem& problem)
      : level_(level), cfg_(cfg), problem_(problem) {
    nv_ = level.space->num_velocity_dofs();
    bt_ = reduced_divergence(level.ops.divergence);
    np_ = static_cast<int>(bt_.rows());
    bt_ = SparseMatrix(bt_.transpose());
    b_ = reduced_divergence(level.ops.divergence);
    weights_ = memory::memory_weights(cfg.kernel, cfg.k, cfg.memory_rule);
    mu_eff_ = cfg.kernel.mu + weights_.w_new;
    const SparseMatrix& m = mass();
    const SparseMatrix& a = stiffness();
    base_ = SparseMatrix(m / cfg.k + mu_eff_ * a);
    k0_ = std::make_unique<Factorization>(divfree::saddle_matrix(base_, level.ops.divergence));
  }

  const SparseMatrix& mass() const { return level_.assembler->mass(); }
  const SparseMatrix& stiffness() const { return level_.assembler->stiffness(); }

  void start() {
    u_ = project_initial(level_, problem_.initial);
    p_ = Vector::Zero(np_);
    mem_ = memory::MemoryState::begin(cfg_.kernel, cfg_.k, 0.0, u_, cfg_.memory_rule);
    sum_ = plain_sum_ = 0.0;
    StepRecord r;
    r.energy = r.plain_energy = u_.dot(mass() * u_);
    r.indicator = cfg_.kernel.mu - log_h(*level_.space) * r.energy;
    record_ = r;
  }

  void step(int n) {
    const double t = n * cfg_.k;
    const Vector load = zero_load_or(*level_.assembler, problem_.forcing, t);
    Vector rhs = Vector::Zero(nv_ + np_);
    rhs.head(nv_) = mass() * u_ / cfg_.k + load - stiffness() * mem_.history_part();
    Vector guess(nv_ + np_);
    guess << u_, p_;
    const double c = cfg_.convection;
    auto linearize = [&](const Vector& x) {
      auto n_mat = std::make_shared<SparseMatrix>();
      if (c != 0.0) *n_mat = c * level_.assembler->transport(level_.assembler->backend().sample_stacked(x.head(nv_)));
      LinearOp op;
      op.apply = [this, n_mat, c](const Vector& v) {
        Vector out(nv_ + np_);
        const auto u = v.head(nv_);
        out.head(nv_) = base_ * u + bt_ * v.tail(np_);
        if (c != 0.0) out.head(nv_) += *n_mat * u;
        out.tail(np_) = b_ * u;
        return out;
      };
      op.assemble = [this, n_mat, c] {
        return divfree::saddle_matrix(c != 0.0 ? SparseMatrix(base_ + *n_mat) : base_, level_.ops.divergence);
      };
      return op;
    };
    auto increment = [&](const Vector& d) {
      const auto du = d.head(nv_);
      return std::sqrt(std::max(0.0, du.dot(mass() * du)));
    };
    PicardOutcome res;
    try {
      res = picard(guess, rhs, linearize, *k0_, increment, cfg_.picard_tol, cfg_.picard_maxit, c == 0.0);
    } catch (const SolveFailure& e) {
      throw StepFailure(std::string("linear solve failed: ") + e.what(), n, kInf);
    }
    if (!res.converged) throw StepFailure("Picard iteration did not converge", n, res.increment);
    u_ = res.x.head(nv_);
    p_ = res.x.tail(np_);
    mem_ = memory::advance(mem_, t, u_);
    const Vector au = stiffness() * u_;
    const double grad2 = u_.dot(au);
    sum_ += 2.0 * cfg_.k * (cfg_.kernel.mu * grad2 + (stiffness() * mem_.integral).dot(u_) - load.dot(u_));
    plain_sum_ += 2.0 * cfg_.k * cfg_.kernel.mu * grad2;
    StepRecord r;
    r.time = t;
    r.picard_iterations = res.iterations;
    r.linear_iterations = res.linear_iterations;
    r.increment = res.increment;
    const double l2 = u_.dot(mass() * u_);
    r.energy = l2 + sum_;
    r.plain_energy = l2 + plain_sum_;
    r.memory_norm = std::sqrt(std::max(0.0, mem_.integral.dot(mass() * mem_.integral)));
    r.indicator = cfg_.kernel.mu - log_h(*level_.space) * l2;
    record_ = r;
  }

  const Vector& u() const { return u_; }
  const memory::MemoryState& memory_state() const { return mem_; }
  double sum() const { return sum_; }
  double plain_sum() const { return plain_sum_; }
  const StepRecord& record() const { return record_; }

 private:
  const Level& level_;
  const SchemeConfig& cfg_;
  const Problem& problem_;
  int nv_ = 0, np_ = 0;
  SparseMatrix b_, bt_, base_;
  memory::MemoryWeights weights_;
  double mu_eff_ = 0.0;
  std::unique_ptr<Factorization> k0_;
  Vector u_, p_;
  memory::MemoryState mem_;
  double sum_ = 0.0, plain_sum_ = 0.0;
  StepRecord record_;
};

Trajectory run_single(const Level& level, const SchemeConfig& cfg, const Problem& problem, Scheme label) {
  Trajectory tr;
  tr.scheme = label;
  tr.fine = level.space;
  const int last = cfg.steps_to(cfg.T);
  SingleRunner runner(level, cfg, problem);
  runner.start();
  tr.steps.push_back(runner.record());
  auto store = [&](double t) {
    tr.times.push_back(t);
    tr.u.push_back(runner.u());
  };
  if (keep_snapshot(cfg, 0, last, 0.0)) store(0.0);
  for (int n = 1; n <= last; ++n) {
    runner.step(n);
    tr.steps.push_back(runner.record());
    if (keep_snapshot(cfg, n, last, n * cfg.k)) store(n * cfg.k);
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Two-level block system.

struct Layout {
  Index nc = 0, nf = 0, pc = 0, pf = 0;
  Index oy = 0, ov = 0, og = 0, ol = 0, op1 = 0, op2 = 0, op3 = 0, op4 = 0, size = 0;

  explicit Layout(const TwoLevelContext& ctx) {
    nc = ctx.coarse.space->num_velocity_dofs();
    nf = ctx.fine.space->num_velocity_dofs();
    pc = ctx.coarse.space->num_pressure_dofs() - 1;
    pf = ctx.fine.space->num_pressure_dofs() - 1;
    oy = 0;
    ov = oy + nc;
    og = ov + nf;
    ol = og + nc;
    op1 = ol + nc;
    op2 = op1 + pc;
    op3 = op2 + pf;
    op4 = op3 + pc;
    size = op4 + pc;
  }

  Vector pack(const NlgState& s) const {
    Vector x(size);
    x << s.y, s.v, s.g, s.l, s.p1, s.p2, s.p3, s.p4;
    return x;
  }

  NlgState unpack(const Vector& x) const {
    NlgState s;
    s.y = x.segment(oy, nc);
    s.v = x.segment(ov, nf);
    s.g = x.segment(og, nc);
    s.l = x.segment(ol, nc);
    s.p1 = x.segment(op1, pc);
    s.p2 = x.segment(op2, pf);
    s.p3 = x.segment(op3, pc);
    s.p4 = x.segment(op4, pc);
    return s;
  }
};

// Frozen operators of one Picard sweep, all on the stacked index space.
struct Frozen {
  SparseMatrix k1;    // y-equation operator on u
  SparseMatrix kz_u;  // z-equation operator on u
  SparseMatrix kz_z;  // z-equation operator on z (NLG II only)
  bool has_k1 = true;
  bool has_kz_z = false;
};

class NlgSystem {
 public:
  NlgSystem(const TwoLevelContext& ctx, const SchemeConfig& cfg, double mu_eff, double k, bool y_fixed)
      : ctx_(ctx), cfg_(cfg), lay_(ctx), mu_eff_(mu_eff), k_(k), y_fixed_(y_fixed) {
    if (ctx.degenerate()) throw InvalidArgument("two-level system needs h < H");
    if (cfg.scheme == Scheme::kCgm) throw InvalidArgument("two-level system needs an NLG scheme");
    const auto nc = static_cast<int>(lay_.nc), nf = static_cast<int>(lay_.nf);
    const SparseMatrix& m = ctx.stacked->mass();
    mcc_ = fe::block(m, 0, nc, 0, nc);
    mcf_ = fe::block(m, 0, nc, nc, nf);
    mfc_ = fe::block(m, nc, nf, 0, nc);
    bc_ = reduced_divergence(ctx.coarse.ops.divergence);
    bf_ = reduced_divergence(ctx.fine.ops.divergence);
    bct_ = bc_.transpose();
    bft_ = bf_.transpose();
    base_ = SparseMatrix(mu_eff_ * ctx.stacked->stiffness());
    Frozen f0;
    f0.k1 = base_;
    f0.kz_u = base_;
    f0.has_k1 = !y_fixed;
    k0_ = std::make_unique<Factorization>(assemble(f0));
  }

  const Layout& layout() const { return lay_; }
  const Factorization& k0() const { return *k0_; }

  Frozen freeze(const Vector& x) const {
    Frozen f;
    const double c = cfg_.convection;
    const auto& sa = *ctx_.stacked;
    const auto& be = sa.backend();
    const NlgState s = lay_.unpack(x);
    f.has_k1 = !y_fixed_;
    if (c == 0.0) {
      f.k1 = base_;
      f.kz_u = base_;
      return f;
    }
    if (f.has_k1 || cfg_.scheme == Scheme::kNlg1) {
      f.k1 = base_ + c * sa.transport(be.sample_stacked(s.u_stacked()));
    }
    if (cfg_.scheme == Scheme::kNlg1) {
      f.kz_u = f.k1;
    } else {
      const fe::Samples ys = be.sample_layer(0, s.y);
      f.kz_u = base_ + c * sa.reaction(ys);
      f.kz_z = c * sa.transport(ys);
      f.has_kz_z = true;
    }
    return f;
  }

  Vector apply(const Frozen& f, const Vector& x) const {
    const NlgState s = lay_.unpack(x);
    const Vector u = s.u_stacked();
    Vector kzu = f.kz_u * u;
    if (f.has_kz_z) kzu += f.kz_z * s.z_stacked();
    Vector out(lay_.size);
    if (y_fixed_) {
      out.segment(lay_.oy, lay_.nc) = s.y;
      out.segment(lay_.op1, lay_.pc) = s.p1;
    } else {
      const Vector k1u = f.k1 * u;
      out.segment(lay_.oy, lay_.nc) = mcc_ * s.y / k_ + k1u.head(lay_.nc) + bct_ * s.p1;
      out.segment(lay_.op1, lay_.pc) = bc_ * s.y;
    }
    out.segment(lay_.ov, lay_.nf) = kzu.tail(lay_.nf) - mfc_ * s.l + bft_ * s.p2;
    out.segment(lay_.og, lay_.nc) = mcc_ * s.g - mcf_ * s.v + bct_ * s.p3;
    out.segment(lay_.ol, lay_.nc) = mcc_ * s.l - kzu.head(lay_.nc) + bct_ * s.p4;
    out.segment(lay_.op2, lay_.pf) = bf_ * s.v;
    out.segment(lay_.op3, lay_.pc) = bc_ * s.g;
    out.segment(lay_.op4, lay_.pc) = bc_ * s.l;
    return out;
  }

  SparseMatrix assemble(const Frozen& f) const {
    const auto nc = static_cast<int>(lay_.nc), nf = static_cast<int>(lay_.nf);
    auto cc = [&](const SparseMatrix& m) { return fe::block(m, 0, nc, 0, nc); };
    auto cf = [&](const SparseMatrix& m) { return fe::block(m, 0, nc, nc, nf); };
    auto fc = [&](const SparseMatrix& m) { return fe::block(m, nc, nf, 0, nc); };
    auto ff = [&](const SparseMatrix& m) { return fe::block(m, nc, nf, nc, nf); };
    const SparseMatrix kv = f.has_kz_z ? SparseMatrix(f.kz_u + f.kz_z) : f.kz_u;
    const SparseMatrix& ky = f.kz_u;
    std::vector<Triplet> t;
    if (y_fixed_) {
      append_identity(t, lay_.oy, lay_.nc);
      append_identity(t, lay_.op1, lay_.pc);
    } else {
      const SparseMatrix k1cc = cc(f.k1);
      append(t, SparseMatrix(k1cc + mcc_ / k_), lay_.oy, lay_.oy);
      append(t, cf(f.k1), lay_.oy, lay_.ov);
      append(t, k1cc, lay_.oy, lay_.og, -1.0);
      append(t, bct_, lay_.oy, lay_.op1);
      append(t, bc_, lay_.op1, lay_.oy);
    }
    // E2: fine rows of the z-equation.
    append(t, fc(ky), lay_.ov, lay_.oy);
    append(t, ff(kv), lay_.ov, lay_.ov);
    append(t, fc(kv), lay_.ov, lay_.og, -1.0);
    append(t, mfc_, lay_.ov, lay_.ol, -1.0);
    append(t, bft_, lay_.ov, lay_.op2);
    // E3: g = P_H v.
    append(t, mcc_, lay_.og, lay_.og);
    append(t, mcf_, lay_.og, lay_.ov, -1.0);
    append(t, bct_, lay_.og, lay_.op3);
    // E4: l represents the coarse rows of the z-residual.
    append(t, cc(ky), lay_.ol, lay_.oy, -1.0);
    append(t, cf(kv), lay_.ol, lay_.ov, -1.0);
    append(t, cc(kv), lay_.ol, lay_.og);
    append(t, mcc_, lay_.ol, lay_.ol);
    append(t, bct_, lay_.ol, lay_.op4);
    append(t, bf_, lay_.op2, lay_.ov);
    append(t, bc_, lay_.op3, lay_.og);
    append(t, bc_, lay_.op4, lay_.ol);
    return linalg::from_triplets(lay_.size, lay_.size, t);
  }

  Vector rhs(const StepData& d, const Vector& y_given) const {
    const Vector am = d.history.size() > 0 ? Vector(ctx_.stacked->stiffness() * d.history)
                                           : Vector::Zero(lay_.nc + lay_.nf);
    Vector r = Vector::Zero(lay_.size);
    if (y_fixed_) {
      r.segment(lay_.oy, lay_.nc) = y_given;
    } else {
      r.segment(lay_.oy, lay_.nc) = mcc_ * d.y_prev / k_ + d.load.head(lay_.nc) - am.head(lay_.nc);
    }
    r.segment(lay_.ov, lay_.nf) = d.load.tail(lay_.nf) - am.tail(lay_.nf);
    r.segment(lay_.ol, lay_.nc) = am.head(lay_.nc) - d.load.head(lay_.nc);
    return r;
  }

  double increment_norm(const Vector& dx) const {
    const NlgState s = lay_.unpack(dx);
    const Vector dz = s.z_stacked();
    const double dy = s.y.dot(mcc_ * s.y);
    return std::sqrt(std::max(0.0, dy + dz.dot(ctx_.stacked->mass() * dz)));
  }

  PicardResult solve(const StepData& d, const NlgState& guess, const Vector& y_given, long step) const {
    const Vector b = rhs(d, y_given);
    auto linearize = [this](const Vector& x) {
      auto f = std::make_shared<Frozen>(freeze(x));
      LinearOp op;
      op.apply = [this, f](const Vector& v) { return apply(*f, v); };
      op.assemble = [this, f] { return assemble(*f); };
      return op;
    };
    auto inc = [this](const Vector& dx) { return increment_norm(dx); };
    const bool linear = cfg_.convection == 0.0 || (y_fixed_ && cfg_.scheme == Scheme::kNlg2);
    PicardOutcome res;
    try {
      res = picard(lay_.pack(guess), b, linearize, *k0_, inc, cfg_.picard_tol, cfg_.picard_maxit, linear);
    } catch (const SolveFailure& e) {
      throw StepFailure(std::string("linear solve failed: ") + e.what(), step, kInf);
    }
    if (!res.converged) throw StepFailure("coupled (y, z) iteration did not converge", step, res.increment);
    PicardResult out;
    out.state = lay_.unpack(res.x);
    out.iterations = res.iterations;
    out.linear_iterations = res.linear_iterations;
    out.increment = res.increment;
    out.converged = true;
    out.residual = residual(d, res.x, y_given);
    return out;
  }

  // Max-norm residual relative to the right-hand side (absolute when it vanishes).
  double residual(const StepData& d, const Vector& x, const Vector& y_given) const {
    const Vector b = rhs(d, y_given);
    const double r = (b - apply(freeze(x), x)).lpNorm<Eigen::Infinity>();
    const double bn = b.lpNorm<Eigen::Infinity>();
    return bn > 0.0 ? r / bn : r;
  }

 private:
  const TwoLevelContext& ctx_;
  const SchemeConfig& cfg_;
  Layout lay_;
  double mu_eff_, k_;
  bool y_fixed_;
  SparseMatrix mcc_, mcf_, mfc_, bc_, bf_, bct_, bft_, base_;
  std::unique_ptr<Factorization> k0_;
};

void check_step_data(const TwoLevelContext& ctx, const StepData& d, bool need_y_prev) {
  const Layout lay(ctx);
  if (d.load.size() != lay.nc + lay.nf) throw DimensionMismatch("stacked load", lay.nc + lay.nf, d.load.size());
  if (d.history.size() != 0 && d.history.size() != lay.nc + lay.nf)
    throw DimensionMismatch("stacked memory history", lay.nc + lay.nf, d.history.size());
  if (need_y_prev && d.y_prev.size() != lay.nc) throw DimensionMismatch("previous y", lay.nc, d.y_prev.size());
  if (!(d.k > 0.0)) throw InvalidArgument("step data needs k > 0");
}

}  // namespace

// ---------------------------------------------------------------------------

void SchemeConfig::validate() const {
  if (!(k > 0.0)) throw InvalidArgument("time step k must be positive");
  if (!(T > 0.0) || !is_multiple(T, k)) throw InvalidArgument("T must be a positive multiple of k");
  if (scheme != Scheme::kCgm) {
    if (!(t0 >= k) || !(t0 < T)) throw InvalidArgument("need k <= t0 < T");
    if (!is_multiple(t0, k)) throw InvalidArgument("t0 must be a multiple of k");
  }
  if (!(picard_tol > 0.0)) throw InvalidArgument("picard_tol must be positive");
  if (picard_maxit < 1) throw InvalidArgument("picard_maxit must be at least 1");
  if (snapshot_stride < 1) throw InvalidArgument("snapshot stride must be at least 1");
  if (!(kernel.mu > 0.0) || kernel.gamma < 0.0 || !(kernel.delta > 0.0))
    throw InvalidArgument("kernel needs mu > 0, gamma >= 0, delta > 0");
}

int SchemeConfig::steps_to(double t) const { return static_cast<int>(std::lround(t / k)); }

Level Level::build(std::shared_ptr<const mesh::Mesh> mesh) {
  Level l;
  l.space = std::make_shared<const fe::FeSpace>(std::move(mesh));
  l.ops = fe::assemble_operators(*l.space);
  l.assembler = std::make_shared<const fe::StackedAssembler>(std::make_shared<const fe::QuadratureBackend>(l.space));
  return l;
}

TwoLevelContext TwoLevelContext::build(int coarse_cells, int refinements) {
  if (refinements < 0) throw InvalidArgument("refinements must be >= 0");
  TwoLevelContext c;
  c.hierarchy = std::make_shared<const mesh::MeshHierarchy>(coarse_cells, refinements);
  c.coarse = Level::build(c.hierarchy->level_ptr(0));
  if (refinements == 0) {
    c.fine = c.coarse;
    return c;
  }
  c.fine = Level::build(c.hierarchy->level_ptr(refinements));
  c.ancestor = c.hierarchy->ancestors(refinements, 0);
  c.stacked = std::make_shared<const fe::StackedAssembler>(
      std::make_shared<const fe::QuadratureBackend>(c.coarse.space, c.fine.space, c.ancestor));
  const int nc = c.coarse.space->num_velocity_dofs(), nf = c.fine.space->num_velocity_dofs();
  c.projector = std::make_shared<const divfree::CoarseProjector>(c.coarse.ops, fe::block(c.stacked->mass(), 0, nc, nc, nf));
  return c;
}

Vector TwoLevelContext::complement_of(const Vector& fine_coeffs) const {
  if (degenerate()) return Vector::Zero(fine_coeffs.size());
  const Vector g = projector->apply(fine_coeffs);
  Vector out(g.size() + fine_coeffs.size());
  out << -g, fine_coeffs;
  return out;
}

Vector project_initial(const Level& level, const fe::VectorFunction& u0) {
  const int nv = level.space->num_velocity_dofs();
  if (!u0) return Vector::Zero(nv);
  const Vector load = level.assembler->load([&](double x, double y, double) { return u0(x, y); }, 0.0);
  const divfree::CoarseProjector self(fe::DiscreteOperatorSet{level.assembler->mass(), level.assembler->stiffness(),
                                                              level.ops.divergence},
                                      level.assembler->mass());
  return self.apply_load(load);
}

Trajectory run_cgm(const Level& level, const SchemeConfig& config, const Problem& problem) {
  config.validate();
  return run_single(level, config, problem, Scheme::kCgm);
}

NlgState NlgState::zeros(const TwoLevelContext& ctx) {
  const Layout lay(ctx);
  return lay.unpack(Vector::Zero(lay.size));
}

Vector NlgState::z_stacked() const {
  Vector z(g.size() + v.size());
  z << -g, v;
  return z;
}

Vector NlgState::u_stacked() const {
  Vector u(g.size() + v.size());
  u << y - g, v;
  return u;
}

PicardResult picard_coupled(const TwoLevelContext& ctx, const SchemeConfig& config, const StepData& data,
                            const NlgState& guess) {
  check_step_data(ctx, data, true);
  const NlgSystem sys(ctx, config, config.kernel.mu + data.memory_weight, data.k, false);
  return sys.solve(data, guess, Vector(), 0);
}

PicardResult solve_z(const TwoLevelContext& ctx, const SchemeConfig& config, const Vector& y, const StepData& data) {
  check_step_data(ctx, data, false);
  const NlgSystem sys(ctx, config, config.kernel.mu + data.memory_weight, data.k, true);
  NlgState guess = NlgState::zeros(ctx);
  guess.y = y;
  return sys.solve(data, guess, y, 0);
}

PicardResult solve_z_linear(const TwoLevelContext& ctx, const SchemeConfig& config, const Vector& y,
                            const StepData& data) {
  if (config.scheme != Scheme::kNlg2) throw InvalidArgument("the linear z-solve belongs to NLG II");
  return solve_z(ctx, config, y, data);
}

double nlg_residual(const TwoLevelContext& ctx, const SchemeConfig& config, const StepData& data,
                    const NlgState& state, bool y_fixed) {
  check_step_data(ctx, data, !y_fixed);
  const NlgSystem sys(ctx, config, config.kernel.mu + data.memory_weight, data.k, y_fixed);
  return sys.residual(data, sys.layout().pack(state), state.y);
}

Trajectory run_nlg(const TwoLevelContext& ctx, const SchemeConfig& config, const Problem& problem) {
  config.validate();
  if (config.scheme == Scheme::kCgm) throw InvalidArgument("run_nlg needs scheme nlg1 or nlg2");
  if (ctx.degenerate()) {
    // Empty complement: z = 0 and the y-equation is the Galerkin system on J_H = J_h.
    Trajectory tr = run_single(ctx.fine, config, problem, config.scheme);
    tr.coarse = ctx.fine.space;
    tr.y = tr.u;
    for (const Vector& u : tr.u) tr.z.push_back(Vector::Zero(u.size()));
    std::size_t first = 0;
    while (first < tr.times.size() && tr.times[first] < config.t0 - 1e-9 * config.T) ++first;
    auto drop = [first](auto& v) { v.erase(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(first)); };
    drop(tr.times);
    drop(tr.u);
    drop(tr.y);
    drop(tr.z);
    return tr;
  }

  const double k = config.k;
  const int n0 = config.steps_to(config.t0);
  const int last = config.steps_to(config.T);
  const auto& sa = *ctx.stacked;
  const auto& be = sa.backend();

  Trajectory tr;
  tr.scheme = config.scheme;
  tr.fine = ctx.fine.space;
  tr.coarse = ctx.coarse.space;
  tr.ancestor = ctx.ancestor;

  SingleRunner boot(ctx.fine, config, problem);
  boot.start();
  tr.steps.push_back(boot.record());
  for (int n = 1; n <= n0; ++n) {
    boot.step(n);
    tr.steps.push_back(boot.record());
  }

  // Handoff at t0: y = P_H u_h(t0).
  const double t0 = n0 * k;
  const Vector& uh = boot.u();
  const Vector y0 = ctx.projector->apply(uh);
  memory::MemoryState mem = boot.memory_state();
  mem.integral = be.embed(1, mem.integral);
  mem.previous = be.embed(1, mem.previous);

  NlgState state = NlgState::zeros(ctx);
  int z_iterations = 0;
  if (config.z_start == ZStart::kProject) {
    state.y = y0;
    state.g = y0;
    state.v = uh;
  } else {
    StepData d;
    d.k = k;
    d.load = zero_load_or(sa, problem.forcing, t0);
    if (config.memory_origin == MemoryOrigin::kCarry) d.history = mem.integral;
    const NlgSystem zsys(ctx, config, config.kernel.mu, k, true);
    NlgState guess = NlgState::zeros(ctx);
    guess.y = y0;
    guess.g = y0;
    guess.v = uh;
    const PicardResult zr = zsys.solve(d, guess, y0, n0);
    state = zr.state;
    z_iterations = zr.iterations;
  }
  if (config.memory_origin == MemoryOrigin::kSwitchTime) {
    mem = memory::MemoryState::begin(config.kernel, k, t0, state.u_stacked(), config.memory_rule);
  }

  double sum = boot.sum(), plain_sum = boot.plain_sum();
  const double lh = log_h(*ctx.fine.space);
  const SparseMatrix& m = sa.mass();
  const SparseMatrix& a = sa.stiffness();
  const SparseMatrix mcc = fe::block(m, 0, static_cast<int>(y0.size()), 0, static_cast<int>(y0.size()));
  auto y_norm2 = [&](const Vector& y) { return y.dot(mcc * y); };
  {
    StepRecord& r = tr.steps.back();
    const double y2 = y_norm2(state.y);
    r.energy = y2 + sum;
    r.plain_energy = y2 + plain_sum;
    r.indicator = config.kernel.mu - lh * y2;
    r.picard_iterations += z_iterations;
  }
  auto store = [&](double t) {
    tr.times.push_back(t);
    tr.u.push_back(state.u_stacked());
    tr.y.push_back(state.y);
    tr.z.push_back(state.z_stacked());
  };
  // The handoff state is always kept unless explicit sample times exclude it.
  if (config.sample_times.empty() || keep_snapshot(config, n0, last, t0)) store(t0);

  const NlgSystem sys(ctx, config, config.kernel.mu + mem.weights.w_new, k, false);
  for (int n = n0 + 1; n <= last; ++n) {
    const double t = n * k;
    StepData d;
    d.k = k;
    d.y_prev = state.y;
    d.history = mem.history_part();
    d.memory_weight = mem.weights.w_new;
    d.load = zero_load_or(sa, problem.forcing, t);
    const PicardResult res = sys.solve(d, state, Vector(), n);
    state = res.state;
    const Vector u = state.u_stacked();
    mem = memory::advance(mem, t, u);
    const double grad2 = u.dot(a * u);
    sum += 2.0 * k * (config.kernel.mu * grad2 + (a * mem.integral).dot(u) - d.load.dot(u));
    plain_sum += 2.0 * k * config.kernel.mu * grad2;
    StepRecord r;
    r.time = t;
    r.picard_iterations = res.iterations;
    r.linear_iterations = res.linear_iterations;
    r.increment = res.increment;
    const double y2 = y_norm2(state.y);
    r.energy = y2 + sum;
    r.plain_energy = y2 + plain_sum;
    r.memory_norm = std::sqrt(std::max(0.0, mem.integral.dot(m * mem.integral)));
    r.indicator = config.kernel.mu - lh * y2;
    tr.steps.push_back(r);
    if (keep_snapshot(config, n, last, t)) store(t);
  }
  return tr;
}

// ---------------------------------------------------------------------------

RunDiagnostics diagnostics(const Trajectory& tr, const TwoLevelContext* ctx) {
  RunDiagnostics d;
  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    const StepRecord& r = tr.steps[i];
    d.times.push_back(r.time);
    d.indicator.push_back(r.indicator);
    d.energy.push_back(r.energy);
    d.plain_energy.push_back(r.plain_energy);
    if (r.indicator <= 0.0) ++d.nonpositive_indicator_steps;
    if (i > 0) {
      const double inc = r.energy - tr.steps[i - 1].energy;
      if (d.worst_step < 0 || inc > d.max_energy_increase) {
        d.max_energy_increase = inc;
        d.worst_step = static_cast<int>(i);
      }
    }
  }
  d.snapshot_times = tr.times;
  if (tr.stacked()) {
    const fe::StackedAssembler sa(tr.backend());
    for (const Vector& z : tr.z) {
      d.z_norm.push_back(std::sqrt(std::max(0.0, z.dot(sa.mass() * z))));
      d.z_h1.push_back(std::sqrt(std::max(0.0, z.dot(sa.stiffness() * z))));
    }
  } else if (tr.scheme == Scheme::kCgm && ctx != nullptr && !ctx->degenerate()) {
    if (tr.fine->mesh() != ctx->fine.space->mesh()) throw InvalidArgument("context and trajectory live on different meshes");
    for (const Vector& u : tr.u) {
      const Vector z = ctx->complement_of(u);
      d.z_norm.push_back(std::sqrt(std::max(0.0, z.dot(ctx->stacked->mass() * z))));
      d.z_h1.push_back(std::sqrt(std::max(0.0, z.dot(ctx->stacked->stiffness() * z))));
    }
  } else if (tr.coarse != nullptr) {
    d.z_norm.assign(tr.times.size(), 0.0);
    d.z_h1.assign(tr.times.size(), 0.0);
  }
  return d;
}

DifferenceNorms snapshot_difference(const Trajectory& a, int ia, const Trajectory& b, int ib) {
  if (!a.fine || !b.fine || a.fine->mesh() != b.fine->mesh())
    throw InvalidArgument("trajectories live on different fine spaces");
  const Vector& ua = a.u.at(static_cast<std::size_t>(ia));
  const Vector& ub = b.u.at(static_cast<std::size_t>(ib));
  const Trajectory& wide = a.stacked() ? a : b;
  const fe::StackedAssembler sa(wide.backend());
  const auto& be = sa.backend();
  auto lift = [&](const Trajectory& t, const Vector& u) -> Vector {
    if (t.stacked() == wide.stacked()) {
      if (t.stacked() && t.coarse->mesh() != wide.coarse->mesh()) throw InvalidArgument("different coarse spaces");
      return u;
    }
    return be.embed(be.fine_layer(), u);
  };
  const Vector d = lift(a, ua) - lift(b, ub);
  DifferenceNorms out;
  out.l2 = std::sqrt(std::max(0.0, d.dot(sa.mass() * d)));
  out.h1 = std::sqrt(std::max(0.0, d.dot(sa.stiffness() * d)));
  return out;
}

void export_snapshots_csv(const Trajectory& tr, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ExportError("cannot open " + path.string());
  out << std::setprecision(17);
  const std::size_t n = tr.u.empty() ? 0 : static_cast<std::size_t>(tr.u.front().size());
  out << "time";
  for (std::size_t i = 0; i < n; ++i) out << ",c" << i;
  out << '\n';
  for (std::size_t s = 0; s < tr.u.size(); ++s) {
    out << tr.times[s];
    for (Index i = 0; i < tr.u[s].size(); ++i) out << ',' << tr.u[s][i];
    out << '\n';
  }
  if (!out) throw ExportError("write failed for " + path.string());
}

void export_vtk(const Trajectory& tr, int snapshot, const std::filesystem::path& path) {
  const Vector& u = tr.u.at(static_cast<std::size_t>(snapshot));
  const mesh::Mesh& mesh = tr.fine->mesh();
  const auto verts = mesh.vertices();
  const auto tris = mesh.triangles();
  std::vector<std::array<double, 2>> values(verts.size(), {0.0, 0.0});
  std::vector<char> done(verts.size(), 0);
  const int nc = tr.stacked() ? tr.coarse->num_velocity_dofs() : 0;
  const Vector fine_part = u.tail(tr.fine->num_velocity_dofs());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int a = 0; a < 3; ++a) {
      const int v = tris[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)];
      if (done[static_cast<std::size_t>(v)]) continue;
      const mesh::Point p = verts[static_cast<std::size_t>(v)];
      fe::FieldValue f = fe::evaluate(*tr.fine, fine_part, t, p);
      if (tr.stacked()) {
        const fe::FieldValue c =
            fe::evaluate(*tr.coarse, u.head(nc), tr.ancestor[static_cast<std::size_t>(t)], p);
        f.value[0] += c.value[0];
        f.value[1] += c.value[1];
      }
      values[static_cast<std::size_t>(v)] = f.value;
      done[static_cast<std::size_t>(v)] = 1;
    }
  }
  std::ofstream out(path);
  if (!out) throw ExportError("cannot open " + path.string());
  out << std::setprecision(17);
  out << "# vtk DataFile Version 3.0\nvelocity t=" << tr.times.at(static_cast<std::size_t>(snapshot))
      << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << verts.size() << " double\n";
  for (const auto& p : verts) out << p.x << ' ' << p.y << " 0\n";
  out << "CELLS " << tris.size() << ' ' << 4 * tris.size() << '\n';
  for (const auto& t : tris) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "CELL_TYPES " << tris.size() << '\n';
  for (std::size_t i = 0; i < tris.size(); ++i) out << "5\n";
  out << "POINT_DATA " << verts.size() << "\nVECTORS velocity double\n";
  for (const auto& v : values) out << v[0] << ' ' << v[1] << " 0\n";
  if (!out) throw ExportError("write failed for " + path.string());
}

}  // namespace oldroyd::steppers
