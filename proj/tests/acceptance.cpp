// Acceptance suite: one PASS/FAIL line per criterion. Tolerances live here,
// not in the library. Usage: acceptance [criterion numbers...] (default all).

#include "oldroyd/divfree.hpp"
#include "oldroyd/harness.hpp"
#include "oldroyd/mms.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace oldroyd;
using harness::StudyConfig;
using harness::StudyKind;
using steppers::Scheme;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string orders_text(const std::vector<std::optional<double>>& o) {
  std::string s;
  for (const auto& x : o) s += (s.empty() ? "" : "/") + (x ? num(*x) : std::string("undef"));
  return s;
}

linalg::Vector random_vector(int n, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  linalg::Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = d(gen);
  return v;
}

harness::ConvergenceReport kernel_report() {
  StudyConfig c;
  c.kind = StudyKind::kKernelCheck;
  c.seed = 20240601;
  c.kernel_check.histories = 200;
  c.kernel_check.alphas = {0.3, 1.0, 3.0};
  c.kernel_check.k = 1e-3;
  c.kernel_check.span = 2.0;
  c.kernel_check.recursion_histories = 20;
  return harness::run_study(c);
}

Verdict kernel_positivity() {
  const double v = kernel_report().values("positivity_min").at(0);
  return {v >= -1e-10, "min quadrature value " + num(v) + " over 600 histories (>= -1e-10)"};
}

Verdict memory_recursion() {
  const auto r = kernel_report();
  const double rel = r.values("recursion_max_rel_error").at(0);
  const double lo = r.values("halving_ratio_min").at(0), hi = r.values("halving_ratio_max").at(0);
  return {rel <= 1e-12 && lo >= 3.5 && hi <= 4.5,
          "recursion vs direct " + num(rel) + " (<= 1e-12), halving ratios in [" + num(lo) + ", " + num(hi) + "]"};
}

Verdict trilinear_antisymmetry() {
  const auto space =
      std::make_shared<const fe::FeSpace>(std::make_shared<const mesh::Mesh>(mesh::Mesh::unit_square(8)));
  const auto ops = fe::assemble_operators(*space);
  const fe::QuadratureBackend backend(space);
  std::mt19937_64 gen(3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const linalg::Vector v = random_vector(space->num_velocity_dofs(), gen);
    const linalg::Vector w = random_vector(space->num_velocity_dofs(), gen);
    const double b = fe::trilinear_b(backend, {space, v}, {space, w}, {space, w});
    const auto nv = fe::field_norms(v, ops);
    const auto nw = fe::field_norms(w, ops);
    const double scale = nv.l2 * (nw.l2 * nw.l2 + nw.h1_semi * nw.h1_semi);
    worst = std::max(worst, std::abs(b) / scale);
  }
  return {worst <= 1e-12, "max |b(v,w,w)| / (|v| |w|_1^2) = " + num(worst) + " over 50 triples (<= 1e-12)"};
}

struct SplitSetup {
  SplitSetup(int n, int refinements)
      : hierarchy(n, refinements),
        coarse(std::make_shared<const fe::FeSpace>(hierarchy.level_ptr(0))),
        fine(std::make_shared<const fe::FeSpace>(hierarchy.level_ptr(refinements))),
        coarse_ops(fe::assemble_operators(*coarse)),
        fine_ops(fe::assemble_operators(*fine)),
        cb(divfree::nullspace_basis(coarse, coarse_ops)),
        fb(divfree::nullspace_basis(fine, fine_ops)),
        split(divfree::build_two_level_split(cb, fb, fe::cross_level_operators(coarse, fine, hierarchy))),
        refinements(refinements) {}

  mesh::MeshHierarchy hierarchy;
  std::shared_ptr<const fe::FeSpace> coarse, fine;
  fe::DiscreteOperatorSet coarse_ops, fine_ops;
  divfree::DivFreeBasis cb, fb;
  divfree::TwoLevelSplit split;
  int refinements;
};

Verdict bases_and_split() {
  const SplitSetup s(4, 2);  // H = 1/4, h = 1/16
  const double div_c = linalg::DenseMatrix(s.coarse_ops.divergence * s.cb.phi).cwiseAbs().maxCoeff();
  const double div_f = linalg::DenseMatrix(s.fine_ops.divergence * s.fb.phi).cwiseAbs().maxCoeff();
  const double ortho = divfree::orthogonality_defect(s.split);

  const auto anc = s.hierarchy.ancestors(s.refinements, 0);
  const auto be = std::make_shared<const fe::QuadratureBackend>(s.coarse, s.fine, anc);
  const fe::StackedAssembler sa(be);
  std::mt19937_64 gen(4);
  double idem = 0.0, recon = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    linalg::Vector v = s.fb.phi * random_vector(s.fb.dimension(), gen);
    v /= std::sqrt(v.dot(s.fine_ops.mass * v));
    const auto parts = divfree::apply_PH(s.split, v);
    const linalg::Vector again = s.split.coarse.phi * (s.split.coarse.phi.transpose() * (s.coarse_ops.mass * parts.coarse));
    const linalg::Vector d1 = again - parts.coarse;
    idem = std::max(idem, std::sqrt(std::abs(d1.dot(s.coarse_ops.mass * d1))));
    const linalg::Vector d2 = be->embed(0, parts.coarse) + parts.complement - be->embed(1, v);
    recon = std::max(recon, std::sqrt(std::abs(d2.dot(sa.mass() * d2))));
  }
  const bool ok = div_c <= 1e-9 && div_f <= 1e-9 && ortho <= 1e-9 && idem <= 1e-10 && recon <= 1e-10;
  return {ok, "|B Phi| " + num(std::max(div_c, div_f)) + ", orthogonality " + num(ortho) + ", idempotence " +
                  num(idem) + ", reconstruction " + num(recon) + " at (1/4, 1/16)"};
}

Verdict subspace_inequalities() {
  const auto a = divfree::subspace_constants(SplitSetup(4, 2).split);  // (1/4, 1/16)
  const auto b = divfree::subspace_constants(SplitSetup(8, 2).split);  // (1/8, 1/32)
  const double ratio = a.c_h / b.c_h;
  const bool ok = a.one_minus_rho < 1.0 && b.one_minus_rho < 1.0 && std::abs(a.one_minus_rho - b.one_minus_rho) <= 0.1 &&
                  ratio >= 1.6 && ratio <= 2.4;
  return {ok, "1-rho " + num(a.one_minus_rho) + " / " + num(b.one_minus_rho) + ", c_H " + num(a.c_h) + " / " +
                  num(b.c_h) + " (ratio " + num(ratio) + ")"};
}

Verdict galerkin_convergence() {
  StudyConfig c;
  c.kind = StudyKind::kGalerkinRates;
  c.levels = {4, 8, 16};
  c.scheme.k = 1e-3;
  c.scheme.T = 0.5;
  c.sample_times = {0.5};
  const auto r = harness::run_study(c);
  const double l2 = *r.fits_of("l2_error", 0.5).at(0), h1 = *r.fits_of("h1_error", 0.5).at(0);
  return {l2 >= 1.8 && h1 >= 0.9, "fitted orders L2 " + num(l2) + " (>= 1.8), H1 " + num(h1) +
                                      " (>= 0.9); pairs L2 " + orders_text(r.orders_of("l2_error", 0.5)) + ", H1 " +
                                      orders_text(r.orders_of("h1_error", 0.5))};
}

Verdict complement_magnitude() {
  // |(I - P_H) u_h| from the Galerkin solution, h = H / 4.
  std::vector<double> l2, h1;
  const auto& sol = mms::solution_by_id("S1");
  steppers::SchemeConfig sc;
  sc.k = 1e-3;
  sc.T = 0.5;
  sc.sample_times = {0.5};
  const steppers::Problem problem{mms::forcing_function(sol, sc.kernel), mms::initial_velocity(sol)};
  for (int n : {2, 4, 8}) {
    const auto ctx = steppers::TwoLevelContext::build(n, 2);
    const auto tr = steppers::run_cgm(ctx.fine, sc, problem);
    const auto d = steppers::diagnostics(tr, &ctx);
    l2.push_back(d.z_norm.back());
    h1.push_back(d.z_h1.back());
  }
  const double ol = *harness::fitted_order(l2, {2.0, 2.0}), oh = *harness::fitted_order(h1, {2.0, 2.0});
  return {ol >= 1.6 && oh >= 0.8, "fitted orders L2 " + num(ol) + " (>= 1.6), H1 " + num(oh) + " (>= 0.8); pairs L2 " +
                                      orders_text(harness::estimate_rates(l2, 2.0)) + ", H1 " +
                                      orders_text(harness::estimate_rates(h1, 2.0))};
}

Verdict nlg_closeness() {
  StudyConfig c;
  c.kind = StudyKind::kNlgCompare;
  c.levels = {2, 4, 8};
  c.h_ratio = 4;
  c.variants = {Scheme::kNlg1, Scheme::kNlg2};
  c.scheme.k = 5e-4;
  c.scheme.t0 = 0.1;
  c.scheme.T = 0.5;
  const auto r = harness::run_study(c);
  bool primary = true, fallback = true;
  std::ostringstream text;
  for (Scheme s : c.variants) {
    const std::string p = steppers::to_string(s);
    for (double t : c.effective_sample_times()) {
      const auto ol = r.orders_of(p + "_diff_l2", t);
      const auto oh = r.orders_of(p + "_diff_h1", t);
      const auto diff = r.values(p + "_diff_l2", t);
      const auto err = r.values("cgm_l2_error", t);
      primary = primary && ol.back() && *ol.back() >= 3.2 && oh.back() && *oh.back() >= 2.3;
      for (std::size_t i = 0; i + 1 < ol.size(); ++i)
        fallback = fallback && ol[i] && ol[i + 1] && *ol[i + 1] > *ol[i] && oh[i] && oh[i + 1] && *oh[i + 1] > *oh[i];
      for (std::size_t i = 0; i < diff.size(); ++i) fallback = fallback && diff[i] <= err[i];
      text << p << " t=" << num(t) << " L2 " << orders_text(ol) << " H1 " << orders_text(oh) << "; ";
    }
  }
  const std::string which = primary ? "primary threshold met" : fallback ? "fallback property met (primary not met)"
                                                                         : "neither primary nor fallback met";
  return {primary || fallback, which + ": " + text.str()};
}

Verdict degenerate_split() {
  const auto ctx = steppers::TwoLevelContext::build(8, 0);
  const auto& sol = mms::solution_by_id("S1");
  steppers::SchemeConfig sc;
  sc.k = 1e-3;
  sc.t0 = 0.1;
  sc.T = 0.3;
  sc.snapshot_stride = 20;
  const steppers::Problem problem{mms::forcing_function(sol, sc.kernel), mms::initial_velocity(sol)};
  const auto cgm = steppers::run_cgm(ctx.fine, sc, problem);
  double worst = 0.0;
  int compared = 0;
  for (Scheme s : {Scheme::kNlg1, Scheme::kNlg2}) {
    sc.scheme = s;
    const auto tr = steppers::run_nlg(ctx, sc, problem);
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      worst = std::max(worst, steppers::snapshot_difference(cgm, cgm.index_of(tr.times[i]), tr, static_cast<int>(i)).l2);
      ++compared;
    }
  }
  return {compared > 0 && worst <= 1e-9,
          "max L2 difference " + num(worst) + " over " + std::to_string(compared) + " snapshots (<= 1e-9)"};
}

Verdict energy_dissipation() {
  StudyConfig c;
  c.kind = StudyKind::kSingleRun;
  c.levels = {4};
  c.h_ratio = 4;
  c.variants = {Scheme::kCgm, Scheme::kNlg1, Scheme::kNlg2};
  c.solution = "S2";
  c.unforced = true;
  c.scheme.k = 1e-2;
  c.scheme.t0 = 0.1;
  c.scheme.T = 0.5;
  const auto r = harness::run_study(c);
  double worst = -std::numeric_limits<double>::infinity();
  std::string text;
  for (const char* p : {"cgm", "nlg1", "nlg2"}) {
    const double v = r.values(std::string(p) + "_max_energy_increase").at(0);
    worst = std::max(worst, v);
    text += std::string(p) + " " + num(v) + " ";
  }
  return {worst <= 1e-10, "largest per-step energy change: " + text + "(<= 1e-10)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria{
      {1, {"kernel positivity", kernel_positivity}},
      {2, {"memory recursion", memory_recursion}},
      {3, {"trilinear antisymmetry", trilinear_antisymmetry}},
      {4, {"divergence-free bases and split", bases_and_split}},
      {5, {"subspace inequalities", subspace_inequalities}},
      {6, {"Galerkin convergence", galerkin_convergence}},
      {7, {"coarse-complement magnitude", complement_magnitude}},
      {8, {"two-level vs Galerkin closeness", nlg_closeness}},
      {9, {"degenerate-split equivalence", degenerate_split}},
      {10, {"energy dissipation", energy_dissipation}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (!criteria.count(n)) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty())
    for (const auto& [n, c] : criteria) selected.push_back(n);

  int failed = 0;
  for (int n : selected) {
    const auto& [name, run] = criteria.at(n);
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.passed ? "PASS" : "FAIL", n, name.c_str(), v.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += v.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
