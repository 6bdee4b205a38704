#include "oldroyd/harness.hpp"

#include "oldroyd/divfree.hpp"
#include "oldroyd/mms.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace oldroyd::harness {

using nlohmann::json;
using steppers::Scheme;

namespace {

bool on_grid(double t, double k) {
  const double r = t / k;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

bool is_rate_study(StudyKind k) {
  return k == StudyKind::kGalerkinRates || k == StudyKind::kNlgCompare || k == StudyKind::kSubspaceDiagnostics;
}

int log2_exact(int r) {
  int l = 0;
  while ((1 << l) < r) ++l;
  return (1 << l) == r ? l : -1;
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- strict JSON reading ---------------------------------------------------

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidArgument(where_ + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) throw InvalidArgument(where_ + "." + key + ": expected a number");
    return v.get<double>();
  }
  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw InvalidArgument(where_ + "." + key + ": expected an integer");
    return v.get<int>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw InvalidArgument(where_ + "." + key + ": expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) throw InvalidArgument(where_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    if (!has(key)) return out;
    const json& v = j_.at(key);
    if (!v.is_array()) throw InvalidArgument(where_ + "." + key + ": expected an array");
    for (const json& e : v) {
      if (!e.is_number()) throw InvalidArgument(where_ + "." + key + ": expected numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw InvalidArgument(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

memory::MemoryRule rule_from_string(const std::string& s) {
  if (s == "exponential-linear") return memory::MemoryRule::kExponentialLinear;
  if (s == "right-rectangle") return memory::MemoryRule::kRightRectangle;
  throw InvalidArgument("unknown memory rule '" + s + "'");
}
std::string to_string(memory::MemoryRule r) {
  return r == memory::MemoryRule::kExponentialLinear ? "exponential-linear" : "right-rectangle";
}
steppers::MemoryOrigin origin_from_string(const std::string& s) {
  if (s == "carry") return steppers::MemoryOrigin::kCarry;
  if (s == "switch-time") return steppers::MemoryOrigin::kSwitchTime;
  throw InvalidArgument("unknown memory origin '" + s + "'");
}
std::string to_string(steppers::MemoryOrigin o) { return o == steppers::MemoryOrigin::kCarry ? "carry" : "switch-time"; }
steppers::ZStart zstart_from_string(const std::string& s) {
  if (s == "solve") return steppers::ZStart::kSolve;
  if (s == "project") return steppers::ZStart::kProject;
  throw InvalidArgument("unknown z start '" + s + "'");
}
std::string to_string(steppers::ZStart z) { return z == steppers::ZStart::kSolve ? "solve" : "project"; }

// JSON has no non-finite numbers; they travel as strings.
json number_out(double v) { return std::isfinite(v) ? json(v) : json(fmt17(v)); }
double number_in(const json& j) {
  if (j.is_string()) return std::stod(j.get<std::string>());
  return j.get<double>();
}
json optional_number(const std::optional<double>& v) { return v ? number_out(*v) : json(nullptr); }
std::optional<double> read_optional(const json& j) {
  if (j.is_null()) return std::nullopt;
  return number_in(j);
}

// --- study execution ---------------------------------------------------------

class Builder {
 public:
  explicit Builder(ConvergenceReport& r) : r_(r) {}

  void add(int level, std::optional<double> time, const std::string& metric, double value, bool rated) {
    const LevelInfo info = level >= 0 ? r_.levels.at(static_cast<std::size_t>(level)) : LevelInfo{-1, 0.0, 0.0};
    r_.rows.push_back(ReportRow{level, info.H, info.h, time, metric, value});
    if (rated && !rated_set_.count(metric)) {
      rated_set_.insert(metric);
      rated_.push_back(metric);
    }
  }

  // Orders for every rated (metric, time) present at all levels, in order of
  // first appearance.
  void finish_orders(const std::vector<double>& ratios) {
    for (const std::string& m : rated_) {
      std::vector<std::optional<double>> times;
      for (const ReportRow& row : r_.rows)
        if (row.metric == m && row.level == 0 &&
            std::find(times.begin(), times.end(), row.time) == times.end())
          times.push_back(row.time);
      for (const auto& t : times) {
        std::vector<double> vals = r_.values(m, t);
        if (vals.size() != r_.levels.size()) continue;
        const auto orders = estimate_rates(vals, ratios);
        double total = 1.0;
        for (std::size_t i = 0; i < orders.size(); ++i) {
          r_.orders.push_back(OrderRow{m, t, static_cast<int>(i), static_cast<int>(i) + 1, ratios[i], orders[i], false});
          total *= ratios[i];
        }
        r_.orders.push_back(OrderRow{m, t, 0, static_cast<int>(ratios.size()), total, fitted_order(vals, ratios), true});
      }
    }
  }

 private:
  ConvergenceReport& r_;
  std::vector<std::string> rated_;
  std::set<std::string> rated_set_;
};

bool has_exact_solution(const StudyConfig& c) { return c.solution != "zero" && !c.unforced; }

steppers::Problem make_problem(const StudyConfig& c) {
  if (c.solution == "zero") return {};
  const auto& sol = mms::solution_by_id(c.solution);
  steppers::Problem p;
  p.initial = mms::initial_velocity(sol);
  if (!c.unforced) p.forcing = mms::forcing_function(sol, c.scheme.kernel);
  return p;
}

steppers::SchemeConfig scheme_config(const StudyConfig& c, Scheme s, const std::vector<double>& times) {
  steppers::SchemeConfig sc = c.scheme;
  sc.scheme = s;
  sc.sample_times = times;
  return sc;
}

void add_run_summary(Builder& b, int level, const std::string& prefix, const steppers::Trajectory& tr) {
  const steppers::RunDiagnostics d = steppers::diagnostics(tr);
  int picard = 0;
  double min_indicator = std::numeric_limits<double>::infinity();
  for (const auto& s : tr.steps) picard = std::max(picard, s.picard_iterations);
  for (double v : d.indicator) min_indicator = std::min(min_indicator, v);
  b.add(level, std::nullopt, prefix + "max_picard_iterations", picard, false);
  b.add(level, std::nullopt, prefix + "min_indicator", min_indicator, false);
  b.add(level, std::nullopt, prefix + "max_energy_increase", d.max_energy_increase, false);
}

void galerkin_level(const StudyConfig& c, Builder& b, int level, int n, const std::vector<double>& times) {
  const auto lvl = steppers::Level::build(std::make_shared<const mesh::Mesh>(mesh::Mesh::unit_square(n)));
  const auto tr = steppers::run_cgm(lvl, scheme_config(c, Scheme::kCgm, times), make_problem(c));
  if (has_exact_solution(c)) {
    for (const auto& e : mms::exact_errors(tr, mms::solution_by_id(c.solution), times, c.error_degree)) {
      b.add(level, e.time, "l2_error", e.l2, true);
      b.add(level, e.time, "h1_error", e.h1, true);
    }
  }
  add_run_summary(b, level, "", tr);
}

void nlg_compare_level(const StudyConfig& c, Builder& b, int level, int n, const std::vector<double>& times) {
  const auto ctx = steppers::TwoLevelContext::build(n, log2_exact(c.h_ratio));
  const steppers::Problem problem = make_problem(c);
  const auto cgm = steppers::run_cgm(ctx.fine, scheme_config(c, Scheme::kCgm, times), problem);
  const auto cd = steppers::diagnostics(cgm, &ctx);
  for (double t : times) {
    const auto i = static_cast<std::size_t>(cgm.index_of(t));
    b.add(level, t, "complement_l2", cd.z_norm.at(i), true);
    b.add(level, t, "complement_h1", cd.z_h1.at(i), true);
  }
  if (has_exact_solution(c)) {
    for (const auto& e : mms::exact_errors(cgm, mms::solution_by_id(c.solution), times, c.error_degree)) {
      b.add(level, e.time, "cgm_l2_error", e.l2, true);
      b.add(level, e.time, "cgm_h1_error", e.h1, true);
    }
  }
  add_run_summary(b, level, "cgm_", cgm);
  for (Scheme s : c.variants) {
    const auto tr = steppers::run_nlg(ctx, scheme_config(c, s, times), problem);
    if (tr.times != cgm.times) throw Error("Galerkin and two-level runs disagree on the snapshot grid");
    const std::string p = steppers::to_string(s) + "_";
    const auto d = steppers::diagnostics(tr);
    for (double t : times) {
      const int ia = cgm.index_of(t), ib = tr.index_of(t);
      const auto diff = steppers::snapshot_difference(cgm, ia, tr, ib);
      b.add(level, t, p + "diff_l2", diff.l2, true);
      b.add(level, t, p + "diff_h1", diff.h1, true);
      b.add(level, t, p + "z_l2", d.z_norm.at(static_cast<std::size_t>(ib)), true);
    }
    add_run_summary(b, level, p, tr);
  }
}

void subspace_level(const StudyConfig& c, Builder& b, int level, int n) {
  const int r = log2_exact(c.h_ratio);
  const mesh::MeshHierarchy hierarchy(n, r);
  const auto coarse = std::make_shared<const fe::FeSpace>(hierarchy.level_ptr(0));
  const auto fine = std::make_shared<const fe::FeSpace>(hierarchy.level_ptr(r));
  const auto cb = divfree::nullspace_basis(coarse, fe::assemble_operators(*coarse));
  const auto fb = divfree::nullspace_basis(fine, fe::assemble_operators(*fine));
  const auto split = divfree::build_two_level_split(cb, fb, fe::cross_level_operators(coarse, fine, hierarchy));
  const auto k = divfree::subspace_constants(split);
  b.add(level, std::nullopt, "dim_JH", k.dim_coarse, false);
  b.add(level, std::nullopt, "dim_JhH", k.dim_complement, false);
  b.add(level, std::nullopt, "c_H", k.c_h, true);
  b.add(level, std::nullopt, "one_minus_rho", k.one_minus_rho, false);
  b.add(level, std::nullopt, "lambda_1", k.lambda_1, false);
  b.add(level, std::nullopt, "orthogonality_defect", divfree::orthogonality_defect(split), false);
  b.add(level, std::nullopt, "pruned", split.pruned, false);
}

void single_run(const StudyConfig& c, Builder& b, const std::vector<double>& times) {
  const int n = c.levels.front();
  const auto ctx = steppers::TwoLevelContext::build(n, log2_exact(c.h_ratio));
  const steppers::Problem problem = make_problem(c);
  for (Scheme s : c.variants) {
    const auto sc = scheme_config(c, s, times);
    const auto tr = s == Scheme::kCgm ? steppers::run_cgm(ctx.fine, sc, problem) : steppers::run_nlg(ctx, sc, problem);
    const std::string p = steppers::to_string(s) + "_";
    if (has_exact_solution(c)) {
      for (const auto& e : mms::exact_errors(tr, mms::solution_by_id(c.solution), times, c.error_degree)) {
        b.add(0, e.time, p + "l2_error", e.l2, false);
        b.add(0, e.time, p + "h1_error", e.h1, false);
      }
    }
    const auto d = steppers::diagnostics(tr, &ctx);
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      if (!d.z_norm.empty()) b.add(0, tr.times[i], p + "z_l2", d.z_norm[i], false);
    }
    b.add(0, std::nullopt, p + "final_energy", tr.steps.back().energy, false);
    add_run_summary(b, 0, p, tr);
    if (!c.output.snapshots.empty()) {
      const std::filesystem::path dir(c.output.snapshots);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw ExportError("cannot create " + dir.string() + ": " + ec.message());
      steppers::export_snapshots_csv(tr, dir / (steppers::to_string(s) + "_snapshots.csv"));
      steppers::export_vtk(tr, static_cast<int>(tr.times.size()) - 1, dir / (steppers::to_string(s) + "_final.vtk"));
    }
  }
}

// sin(3 s) against gamma e^{-delta (t - s)} in closed form.
double wave_convolution(const memory::KernelParams& p, double t) {
  const double d = p.delta;
  return p.gamma * (d * std::sin(3.0 * t) - 3.0 * std::cos(3.0 * t) + 3.0 * std::exp(-d * t)) / (d * d + 9.0);
}

void kernel_check(const StudyConfig& c, Builder& b) {
  const KernelCheckConfig& kc = c.kernel_check;
  std::mt19937_64 gen(c.seed);
  std::uniform_real_distribution<double> value(-1.0, 1.0);
  std::uniform_int_distribution<int> knots(2, 40);

  // Positivity of the kernel quadrature on random piecewise-linear histories.
  const int samples = static_cast<int>(std::lround(kc.span / kc.k));
  double positivity = std::numeric_limits<double>::infinity();
  for (double alpha : kc.alphas) {
    for (int trial = 0; trial < kc.histories; ++trial) {
      const int m = knots(gen);
      std::vector<double> kv(static_cast<std::size_t>(m + 1));
      for (double& v : kv) v = value(gen);
      std::vector<double> phi(static_cast<std::size_t>(samples + 1));
      for (int i = 0; i <= samples; ++i) {
        const double s = static_cast<double>(i) / samples * m;
        const int j = std::min(static_cast<int>(s), m - 1);
        phi[static_cast<std::size_t>(i)] =
            kv[static_cast<std::size_t>(j)] * (j + 1 - s) + kv[static_cast<std::size_t>(j + 1)] * (s - j);
      }
      positivity = std::min(positivity, memory::positivity_quadrature(phi, alpha, kc.k));
    }
  }
  b.add(-1, std::nullopt, "positivity_min", positivity, false);

  // Recursion against the direct O(n^2) evaluation of the same quadrature.
  const memory::KernelParams& p = c.scheme.kernel;
  double rel = 0.0;
  for (int trial = 0; trial < kc.recursion_histories; ++trial) {
    std::vector<linalg::Vector> g;
    for (int i = 0; i <= 200; ++i) {
      linalg::Vector v(3);
      for (int comp = 0; comp < 3; ++comp) v[comp] = value(gen);
      g.push_back(v);
    }
    auto s = memory::MemoryState::begin(p, kc.k, 0.0, g[0], c.scheme.memory_rule);
    for (int i = 1; i <= 200; ++i) s = memory::advance(s, i * kc.k, g[static_cast<std::size_t>(i)]);
    const linalg::Vector direct = memory::direct_convolution(p, kc.k, g, c.scheme.memory_rule);
    rel = std::max(rel, (s.integral - direct).norm() / std::max(direct.norm(), std::numeric_limits<double>::min()));
  }
  b.add(-1, std::nullopt, "recursion_max_rel_error", rel, false);

  // Error against a closed-form convolution under step halving (t = 1).
  double prev = 0.0, lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double k : {0.1, 0.05, 0.025, 0.0125}) {
    const int n = static_cast<int>(std::lround(1.0 / k));
    linalg::Vector g(1);
    g[0] = 0.0;
    auto s = memory::MemoryState::begin(p, k, 0.0, g, c.scheme.memory_rule);
    for (int i = 1; i <= n; ++i) {
      g[0] = std::sin(3.0 * i * k);
      s = memory::advance(s, i * k, g);
    }
    const double err = std::abs(s.integral[0] - wave_convolution(p, 1.0));
    if (prev > 0.0) {
      lo = std::min(lo, prev / err);
      hi = std::max(hi, prev / err);
    }
    prev = err;
  }
  b.add(-1, std::nullopt, "halving_ratio_min", lo, false);
  b.add(-1, std::nullopt, "halving_ratio_max", hi, false);
}

}  // namespace

// --- config ------------------------------------------------------------------

std::string to_string(StudyKind k) {
  switch (k) {
    case StudyKind::kGalerkinRates: return "galerkin-rates";
    case StudyKind::kNlgCompare: return "nlg-compare";
    case StudyKind::kSubspaceDiagnostics: return "subspace-diagnostics";
    case StudyKind::kKernelCheck: return "kernel-check";
    case StudyKind::kSingleRun: return "single-run";
  }
  return "?";
}

StudyKind study_kind_from_string(const std::string& s) {
  for (StudyKind k : {StudyKind::kGalerkinRates, StudyKind::kNlgCompare, StudyKind::kSubspaceDiagnostics,
                      StudyKind::kKernelCheck, StudyKind::kSingleRun})
    if (to_string(k) == s) return k;
  throw InvalidArgument("unknown study kind '" + s + "'");
}

std::string to_string(OrderScope s) {
  switch (s) {
    case OrderScope::kAllPairs: return "all-pairs";
    case OrderScope::kFinestPair: return "finest-pair";
    case OrderScope::kFit: return "fit";
  }
  return "?";
}

OrderScope order_scope_from_string(const std::string& s) {
  for (OrderScope o : {OrderScope::kAllPairs, OrderScope::kFinestPair, OrderScope::kFit})
    if (to_string(o) == s) return o;
  throw InvalidArgument("unknown order scope '" + s + "'");
}

StudyConfig StudyConfig::with_defaults() const {
  StudyConfig c = *this;
  if (c.variants.empty()) {
    if (c.kind == StudyKind::kNlgCompare) c.variants = {Scheme::kNlg1, Scheme::kNlg2};
    if (c.kind == StudyKind::kSingleRun) c.variants = {Scheme::kCgm};
  }
  return c;
}

std::vector<double> StudyConfig::effective_sample_times() const {
  if (!sample_times.empty()) return sample_times;
  std::vector<double> t;
  const double first = std::round((scheme.t0 + 0.1) / scheme.k) * scheme.k;
  if (first < scheme.T * (1.0 - 1e-12)) t.push_back(first);
  t.push_back(scheme.T);
  return t;
}

void StudyConfig::validate() const {
  if (kind != StudyKind::kKernelCheck) {
    if (levels.empty()) throw InvalidArgument("at least one mesh level is required");
    if (is_rate_study(kind) && levels.size() < 3) throw InvalidArgument("a rate study needs at least 3 mesh levels");
    if (kind == StudyKind::kSingleRun && levels.size() != 1) throw InvalidArgument("single-run takes exactly one level");
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] < 2) throw InvalidArgument("mesh levels need at least 2 cells per side");
      if (i > 0 && levels[i] <= levels[i - 1]) throw InvalidArgument("mesh levels must be strictly increasing");
    }
    if (h_ratio < 1 || log2_exact(h_ratio) < 0) throw InvalidArgument("h_ratio must be a power of two");
    if (kind == StudyKind::kNlgCompare && h_ratio < 2) throw InvalidArgument("nlg-compare needs h_ratio >= 2");
    if (kind == StudyKind::kSubspaceDiagnostics && h_ratio < 2)
      throw InvalidArgument("subspace-diagnostics needs h_ratio >= 2");
    if (solution != "zero") mms::solution_by_id(solution);
    if (error_degree != 6 && error_degree != 8) throw InvalidArgument("error_degree must be 6 or 8");
  }
  const bool two_level = std::any_of(variants.begin(), variants.end(), [](Scheme s) { return s != Scheme::kCgm; });
  if (kind == StudyKind::kNlgCompare &&
      std::any_of(variants.begin(), variants.end(), [](Scheme s) { return s == Scheme::kCgm; }))
    throw InvalidArgument("nlg-compare variants must be two-level schemes (the Galerkin run is implicit)");
  steppers::SchemeConfig sc = scheme;
  sc.scheme = two_level || kind == StudyKind::kNlgCompare ? Scheme::kNlg1 : Scheme::kCgm;
  sc.validate();
  if (kind != StudyKind::kKernelCheck && kind != StudyKind::kSubspaceDiagnostics) {
    for (double t : effective_sample_times()) {
      if (!(t > 0.0) || t > scheme.T * (1.0 + 1e-12) || !on_grid(t, scheme.k))
        throw InvalidArgument("sample time " + fmt17(t) + " is not a grid time in (0, T]");
      if ((kind == StudyKind::kNlgCompare || two_level) && t < scheme.t0)
        throw InvalidArgument("sample time " + fmt17(t) + " precedes the switch time t0");
    }
  }
  if (kind == StudyKind::kKernelCheck) {
    const KernelCheckConfig& kc = kernel_check;
    if (kc.histories < 1 || kc.recursion_histories < 0 || kc.alphas.empty() || !(kc.k > 0.0) || !(kc.span > 0.0) ||
        !on_grid(kc.span, kc.k))
      throw InvalidArgument("kernel_check needs histories >= 1, alphas, k > 0 and span a multiple of k");
    for (double a : kc.alphas)
      if (!(a > 0.0)) throw InvalidArgument("kernel_check alphas must be positive");
  }
  for (const Check& ch : checks) {
    if (ch.metric.empty()) throw InvalidArgument("a check needs a metric");
    if (!ch.min_order && !ch.min && !ch.max) throw InvalidArgument("check on '" + ch.metric + "' has no bound");
    if (ch.min_order && (ch.min || ch.max))
      throw InvalidArgument("check on '" + ch.metric + "' mixes order and value bounds");
    if (!ch.min_order && ch.scope != OrderScope::kAllPairs)
      throw InvalidArgument("check on '" + ch.metric + "' has a scope but no order bound");
  }
}

StudyConfig study_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  Reader r(j, "config");
  StudyConfig c;
  c.kind = study_kind_from_string(r.string("study", to_string(c.kind)));
  for (double n : r.numbers("levels")) {
    if (n != std::floor(n)) throw InvalidArgument("config.levels: expected integers");
    c.levels.push_back(static_cast<int>(n));
  }
  c.h_ratio = r.integer("h_ratio", c.kind == StudyKind::kNlgCompare || c.kind == StudyKind::kSubspaceDiagnostics ? 4 : 1);
  if (r.has("variants")) {
    const json& v = r.at("variants");
    if (!v.is_array()) throw InvalidArgument("config.variants: expected an array");
    for (const json& e : v) {
      if (!e.is_string()) throw InvalidArgument("config.variants: expected strings");
      c.variants.push_back(steppers::scheme_from_string(e.get<std::string>()));
    }
  }
  auto& s = c.scheme;
  s.k = r.number("k", s.k);
  s.t0 = r.number("t0", s.t0);
  s.T = r.number("T", s.T);
  s.convection = r.number("convection", s.convection);
  s.snapshot_stride = r.integer("snapshot_stride", s.snapshot_stride);
  s.memory_rule = rule_from_string(r.string("memory_rule", to_string(s.memory_rule)));
  s.memory_origin = origin_from_string(r.string("memory_origin", to_string(s.memory_origin)));
  s.z_start = zstart_from_string(r.string("z_start", to_string(s.z_start)));
  if (r.has("picard")) {
    Reader p(r.at("picard"), "config.picard");
    s.picard_tol = p.number("tol", s.picard_tol);
    s.picard_maxit = p.integer("maxit", s.picard_maxit);
    p.finish();
  }
  if (r.has("kernel")) {
    Reader k(r.at("kernel"), "config.kernel");
    const bool physical = k.has("lambda") || k.has("kappa") || k.has("nu");
    const bool direct = k.has("mu") || k.has("gamma") || k.has("delta");
    if (physical && direct) throw InvalidArgument("config.kernel: give either (lambda, kappa, nu) or (mu, gamma, delta)");
    if (physical)
      s.kernel = memory::KernelParams::derive(k.number("lambda", 1.0), k.number("kappa", 0.5), k.number("nu", 1.0));
    else
      s.kernel = memory::KernelParams::from_coefficients(k.number("mu", 1.0), k.number("gamma", 1.0), k.number("delta", 1.0));
    k.finish();
  }
  c.solution = r.string("solution", c.solution);
  c.unforced = r.boolean("unforced", c.unforced);
  c.sample_times = r.numbers("sample_times");
  c.error_degree = r.integer("error_degree", c.error_degree);
  if (r.has("seed")) {
    const json& v = r.at("seed");
    if (!v.is_number_unsigned()) throw InvalidArgument("config.seed: expected a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  }
  if (r.has("kernel_check")) {
    Reader k(r.at("kernel_check"), "config.kernel_check");
    auto& kc = c.kernel_check;
    kc.histories = k.integer("histories", kc.histories);
    if (k.has("alphas")) kc.alphas = k.numbers("alphas");
    kc.k = k.number("k", kc.k);
    kc.span = k.number("span", kc.span);
    kc.recursion_histories = k.integer("recursion_histories", kc.recursion_histories);
    k.finish();
  }
  if (r.has("output")) {
    Reader o(r.at("output"), "config.output");
    c.output.csv = o.string("csv", "");
    c.output.json = o.string("json", "");
    c.output.snapshots = o.string("snapshots", "");
    o.finish();
  }
  if (r.has("checks")) {
    const json& v = r.at("checks");
    if (!v.is_array()) throw InvalidArgument("config.checks: expected an array");
    for (const json& e : v) {
      Reader ch(e, "config.checks[]");
      Check k;
      k.metric = ch.string("metric", "");
      if (ch.has("time")) k.time = ch.number("time", 0.0);
      if (ch.has("min_order")) k.min_order = ch.number("min_order", 0.0);
      if (ch.has("min")) k.min = ch.number("min", 0.0);
      if (ch.has("max")) k.max = ch.number("max", 0.0);
      k.scope = order_scope_from_string(ch.string("scope", to_string(k.scope)));
      ch.finish();
      c.checks.push_back(k);
    }
  }
  r.finish();
  return c.with_defaults();
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return study_config_from_json(ss.str());
}

namespace {

json config_json(const StudyConfig& c) {
  json j;
  j["study"] = to_string(c.kind);
  j["levels"] = c.levels;
  j["h_ratio"] = c.h_ratio;
  json v = json::array();
  for (Scheme s : c.variants) v.push_back(steppers::to_string(s));
  j["variants"] = v;
  const auto& s = c.scheme;
  j["k"] = s.k;
  j["t0"] = s.t0;
  j["T"] = s.T;
  j["convection"] = s.convection;
  j["snapshot_stride"] = s.snapshot_stride;
  j["memory_rule"] = to_string(s.memory_rule);
  j["memory_origin"] = to_string(s.memory_origin);
  j["z_start"] = to_string(s.z_start);
  j["picard"] = {{"tol", s.picard_tol}, {"maxit", s.picard_maxit}};
  j["kernel"] = {{"mu", s.kernel.mu}, {"gamma", s.kernel.gamma}, {"delta", s.kernel.delta}};
  j["solution"] = c.solution;
  j["unforced"] = c.unforced;
  j["sample_times"] = c.sample_times;
  j["error_degree"] = c.error_degree;
  j["seed"] = c.seed;
  const auto& kc = c.kernel_check;
  j["kernel_check"] = {{"histories", kc.histories},
                       {"alphas", kc.alphas},
                       {"k", kc.k},
                       {"span", kc.span},
                       {"recursion_histories", kc.recursion_histories}};
  j["output"] = {{"csv", c.output.csv}, {"json", c.output.json}, {"snapshots", c.output.snapshots}};
  json checks = json::array();
  for (const Check& ch : c.checks) {
    json e{{"metric", ch.metric}};
    if (ch.time) e["time"] = *ch.time;
    if (ch.min_order) e["min_order"] = *ch.min_order;
    if (ch.min) e["min"] = *ch.min;
    if (ch.max) e["max"] = *ch.max;
    if (ch.min_order) e["scope"] = to_string(ch.scope);
    checks.push_back(e);
  }
  j["checks"] = checks;
  return j;
}

}  // namespace

std::string study_config_to_json(const StudyConfig& config) { return config_json(config).dump(2); }

std::uint64_t config_hash(const StudyConfig& config) {
  // Output paths do not change the numbers.
  json j = config_json(config);
  j.erase("output");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// --- report ------------------------------------------------------------------

bool ConvergenceReport::all_checks_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {
bool same_time(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return !a && !b;
  return std::abs(*a - *b) <= 1e-9 * std::max(1.0, std::abs(*a));
}
}  // namespace

std::vector<double> ConvergenceReport::values(const std::string& metric, std::optional<double> time) const {
  std::vector<double> out;
  for (const ReportRow& r : rows)
    if (r.metric == metric && (!time || same_time(r.time, time))) out.push_back(r.value);
  return out;
}

std::vector<std::optional<double>> ConvergenceReport::orders_of(const std::string& metric,
                                                                std::optional<double> time) const {
  std::vector<std::optional<double>> out;
  for (const OrderRow& o : orders)
    if (!o.fit && o.metric == metric && (!time || same_time(o.time, time))) out.push_back(o.order);
  return out;
}

std::vector<std::optional<double>> ConvergenceReport::fits_of(const std::string& metric,
                                                              std::optional<double> time) const {
  std::vector<std::optional<double>> out;
  for (const OrderRow& o : orders)
    if (o.fit && o.metric == metric && (!time || same_time(o.time, time))) out.push_back(o.order);
  return out;
}

std::vector<std::optional<double>> estimate_rates(const std::vector<double>& errors, const std::vector<double>& ratios) {
  if (errors.size() < 2) throw InvalidArgument("rate estimation needs at least 2 levels");
  if (ratios.size() != errors.size() - 1) throw InvalidArgument("need one ratio per consecutive level pair");
  std::vector<std::optional<double>> out;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double a = errors[i], b = errors[i + 1];
    if (!(ratios[i] > 1.0) || !std::isfinite(ratios[i]))
      throw InvalidArgument("level size ratios must exceed 1");
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      out.push_back(std::nullopt);
    else
      out.push_back(std::log(a / b) / std::log(ratios[i]));
  }
  return out;
}

std::vector<std::optional<double>> estimate_rates(const std::vector<double>& errors, double ratio) {
  return estimate_rates(errors, std::vector<double>(errors.empty() ? 0 : errors.size() - 1, ratio));
}

std::optional<double> fitted_order(const std::vector<double>& errors, const std::vector<double>& ratios) {
  if (errors.size() < 2) throw InvalidArgument("rate estimation needs at least 2 levels");
  if (ratios.size() != errors.size() - 1) throw InvalidArgument("need one ratio per consecutive level pair");
  std::vector<double> x{0.0}, y;
  for (double r : ratios) {
    if (!(r > 1.0) || !std::isfinite(r)) throw InvalidArgument("level size ratios must exceed 1");
    x.push_back(x.back() + std::log(r));  // log(1 / size) up to a constant
  }
  for (double e : errors) {
    if (!(e > 0.0) || !std::isfinite(e)) return std::nullopt;
    y.push_back(-std::log(e));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

std::vector<CheckResult> evaluate_checks(const ConvergenceReport& report, const std::vector<Check>& checks) {
  std::vector<CheckResult> out;
  for (const Check& ch : checks) {
    CheckResult r{ch, 0.0, true, ""};
    if (ch.min_order) {
      std::vector<std::optional<double>> orders;
      if (ch.scope == OrderScope::kFit) {
        orders = report.fits_of(ch.metric, ch.time);
      } else {
        // Pair orders are stored time by time in level order.
        for (const OrderRow& o : report.orders) {
          if (o.fit || o.metric != ch.metric || (ch.time && !same_time(o.time, ch.time))) continue;
          if (ch.scope == OrderScope::kFinestPair && o.to != static_cast<int>(report.levels.size()) - 1) continue;
          orders.push_back(o.order);
        }
      }
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& o : orders) {
        if (!o) {
          r.passed = false;
          r.detail = "undefined order";
        } else {
          worst = std::min(worst, *o);
        }
      }
      if (orders.empty()) {
        r.passed = false;
        r.detail = "no orders for metric";
      }
      r.observed = worst;
      if (worst < *ch.min_order) r.passed = false;
    } else {
      const auto vals = report.values(ch.metric, ch.time);
      if (vals.empty()) {
        r.passed = false;
        r.detail = "metric not in report";
      }
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (double v : vals) {
        if (!std::isfinite(v)) r.passed = false;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (ch.min) {
        r.observed = lo;
        if (lo < *ch.min) r.passed = false;
      }
      if (ch.max) {
        if (!ch.min || hi > *ch.max) r.observed = hi;
        if (hi > *ch.max) r.passed = false;
      }
    }
    out.push_back(r);
  }
  return out;
}

ConvergenceReport run_study(const StudyConfig& input) {
  const StudyConfig c = input.with_defaults();
  c.validate();
  ConvergenceReport report;
  report.kind = c.kind;
  report.config_json = study_config_to_json(c);
  report.config_hash = config_hash(c);
  report.seed = c.seed;
  for (std::size_t i = 0; i < c.levels.size() && c.kind != StudyKind::kKernelCheck; ++i) {
    const double H = 1.0 / c.levels[i];
    report.levels.push_back(LevelInfo{static_cast<int>(i), H, H / c.h_ratio});
  }
  Builder b(report);
  const std::vector<double> times = c.effective_sample_times();

  if (c.kind == StudyKind::kKernelCheck) {
    kernel_check(c, b);
  } else {
    // Levels run in order; each level's rows are appended as it finishes.
    for (std::size_t i = 0; i < c.levels.size(); ++i) {
      const int level = static_cast<int>(i);
      const LevelInfo& info = report.levels[i];
      try {
        switch (c.kind) {
          case StudyKind::kGalerkinRates: galerkin_level(c, b, level, c.levels[i] * c.h_ratio, times); break;
          case StudyKind::kNlgCompare: nlg_compare_level(c, b, level, c.levels[i], times); break;
          case StudyKind::kSubspaceDiagnostics: subspace_level(c, b, level, c.levels[i]); break;
          case StudyKind::kSingleRun: single_run(c, b, times); break;
          case StudyKind::kKernelCheck: break;
        }
      } catch (const InvalidArgument&) {
        throw;
      } catch (const ExportError&) {
        throw;
      } catch (const Error& e) {
        throw LevelFailure(level, info.H, info.h, e.what());
      }
    }
    if (is_rate_study(c.kind)) {
      std::vector<double> ratios;
      for (std::size_t i = 0; i + 1 < c.levels.size(); ++i)
        ratios.push_back(static_cast<double>(c.levels[i + 1]) / c.levels[i]);
      b.finish_orders(ratios);
    }
  }
  report.checks = evaluate_checks(report, c.checks);
  return report;
}

std::string report_csv(const ConvergenceReport& r) {
  std::string out = "level,H,h,time,metric,value\n";
  auto line = [&](int level, double H, double h, const std::optional<double>& t, const std::string& m,
                  const std::string& v) {
    out += level >= 0 ? std::to_string(level) + "," + fmt17(H) + "," + fmt17(h) : std::string(",,");
    out += "," + (t ? fmt17(*t) : std::string()) + "," + m + "," + v + "\n";
  };
  for (const ReportRow& row : r.rows) line(row.level, row.H, row.h, row.time, row.metric, fmt17(row.value));
  for (const OrderRow& o : r.orders) {
    const LevelInfo& l = r.levels.at(static_cast<std::size_t>(o.to));
    line(o.to, l.H, l.h, o.time, o.metric + (o.fit ? ":fit_order" : ":order"), o.order ? fmt17(*o.order) : "nan");
  }
  return out;
}

std::string report_json(const ConvergenceReport& r) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.config_hash));
  json j;
  j["study"] = to_string(r.kind);
  j["config"] = json::parse(r.config_json);
  j["provenance"] = {{"config_hash", hash}, {"seed", r.seed}, {"version", "0.1.0"}};
  json levels = json::array();
  for (const LevelInfo& l : r.levels) levels.push_back({{"level", l.level}, {"H", l.H}, {"h", l.h}});
  j["levels"] = levels;
  json rows = json::array();
  for (const ReportRow& row : r.rows)
    rows.push_back({{"level", row.level}, {"H", row.H}, {"h", row.h}, {"time", optional_number(row.time)},
                    {"metric", row.metric}, {"value", number_out(row.value)}});
  j["rows"] = rows;
  json orders = json::array();
  for (const OrderRow& o : r.orders)
    orders.push_back({{"metric", o.metric}, {"time", optional_number(o.time)}, {"from", o.from}, {"to", o.to},
                      {"ratio", o.ratio}, {"order", optional_number(o.order)}, {"fit", o.fit}});
  j["orders"] = orders;
  json checks = json::array();
  for (const CheckResult& c : r.checks) {
    json e{{"metric", c.check.metric}, {"passed", c.passed}, {"observed", number_out(c.observed)}, {"detail", c.detail}};
    e["time"] = optional_number(c.check.time);
    e["min_order"] = optional_number(c.check.min_order);
    e["min"] = optional_number(c.check.min);
    e["max"] = optional_number(c.check.max);
    e["scope"] = to_string(c.check.scope);
    checks.push_back(e);
  }
  j["checks"] = checks;
  j["all_checks_passed"] = r.all_checks_passed();
  return j.dump(2);
}

ConvergenceReport report_from_json(const std::string& text) {
  ConvergenceReport r;
  try {
    const json j = json::parse(text);
    r.kind = study_kind_from_string(j.at("study").get<std::string>());
    r.config_json = j.at("config").dump(2);
    r.config_hash = std::stoull(j.at("provenance").at("config_hash").get<std::string>(), nullptr, 16);
    r.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    for (const json& l : j.at("levels"))
      r.levels.push_back({l.at("level").get<int>(), l.at("H").get<double>(), l.at("h").get<double>()});
    for (const json& row : j.at("rows"))
      r.rows.push_back({row.at("level").get<int>(), row.at("H").get<double>(), row.at("h").get<double>(),
                        read_optional(row.at("time")), row.at("metric").get<std::string>(), number_in(row.at("value"))});
    for (const json& o : j.at("orders"))
      r.orders.push_back({o.at("metric").get<std::string>(), read_optional(o.at("time")), o.at("from").get<int>(),
                          o.at("to").get<int>(), o.at("ratio").get<double>(), read_optional(o.at("order")),
                          o.at("fit").get<bool>()});
    for (const json& c : j.at("checks")) {
      Check ch{c.at("metric").get<std::string>(), read_optional(c.at("time")), read_optional(c.at("min_order")),
               read_optional(c.at("min")), read_optional(c.at("max")),
               order_scope_from_string(c.at("scope").get<std::string>())};
      r.checks.push_back({ch, number_in(c.at("observed")), c.at("passed").get<bool>(), c.at("detail").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed report: ") + e.what());
  }
  return r;
}

void export_report(const ConvergenceReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ExportError("cannot open " + path.string() + " for writing");
  out << (format == ReportFormat::kCsv ? report_csv(report) : report_json(report));
  if (format == ReportFormat::kJson) out << '\n';
  out.flush();
  if (!out) throw ExportError("write to " + path.string() + " failed");
}

}  // namespace oldroyd::harness
