#pragma once

// Convergence studies over mesh levels: configuration, execution, empirical
// orders and CSV/JSON reports.

#include "oldroyd/errors.hpp"
#include "oldroyd/memory.hpp"
#include "oldroyd/steppers.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace oldroyd::harness {

enum class StudyKind { kGalerkinRates, kNlgCompare, kSubspaceDiagnostics, kKernelCheck, kSingleRun };

std::string to_string(StudyKind k);
StudyKind study_kind_from_string(const std::string& s);

/// Which orders a `min_order` check looks at: every consecutive pair, the
/// finest pair only, or the least-squares fit over all levels.
enum class OrderScope { kAllPairs, kFinestPair, kFit };

std::string to_string(OrderScope s);
OrderScope order_scope_from_string(const std::string& s);

/// A requested check on the report. Either `min_order` constrains the orders
/// of `metric` (at `time` if given, within `scope`), or `min` / `max`
/// constrain every value of it.
struct Check {
  std::string metric;
  std::optional<double> time;
  std::optional<double> min_order;
  std::optional<double> min;
  std::optional<double> max;
  OrderScope scope = OrderScope::kAllPairs;
};

struct KernelCheckConfig {
  int histories = 200;          // random piecewise-linear histories per alpha
  std::vector<double> alphas{0.3, 1.0, 3.0};
  double k = 1e-3;
  double span = 2.0;            // histories live on [0, span]
  int recursion_histories = 20;
};

struct OutputConfig {
  std::string csv;
  std::string json;
  std::string snapshots;  // single-run: directory for snapshot CSV / VTK dumps
};

struct StudyConfig {
  StudyKind kind = StudyKind::kGalerkinRates;
  std::vector<int> levels;  // cells per side of the coarse (or only) mesh
  int h_ratio = 1;          // H / h, a power of two
  std::vector<steppers::Scheme> variants;
  steppers::SchemeConfig scheme;
  std::string solution = "S1";
  bool unforced = false;  // keep the solution's initial data, drop its forcing
  std::vector<double> sample_times;  // empty: {t0 + 0.1, T}
  int error_degree = 6;
  std::uint64_t seed = 1;
  KernelCheckConfig kernel_check;
  OutputConfig output;
  std::vector<Check> checks;

  /// InvalidArgument on any inconsistency (too few levels for a rate study,
  /// h-ratio < 2 for nlg-compare, off-grid sample times, ...).
  void validate() const;
  std::vector<double> effective_sample_times() const;
  /// Fills kind-dependent defaults (variants, h-ratio) where left empty.
  StudyConfig with_defaults() const;
};

/// Strict parse: unknown keys and wrong types raise InvalidArgument.
StudyConfig study_config_from_json(const std::string& text);
StudyConfig load_study_config(const std::filesystem::path& path);
std::string study_config_to_json(const StudyConfig& config);
/// FNV-1a of the canonical JSON form.
std::uint64_t config_hash(const StudyConfig& config);

struct LevelInfo {
  int level = 0;
  double H = 0.0;
  double h = 0.0;
};

struct ReportRow {
  int level = 0;  // -1 for level-independent rows (kernel checks)
  double H = 0.0;
  double h = 0.0;
  std::optional<double> time;
  std::string metric;
  double value = 0.0;
};

/// Order between consecutive levels, or (fit = true) the least-squares order
/// over levels from..to; nullopt marks an undefined order (non-positive or
/// non-finite error).
struct OrderRow {
  std::string metric;
  std::optional<double> time;
  int from = 0;
  int to = 1;
  double ratio = 2.0;  // size ratio between levels from and to
  std::optional<double> order;
  bool fit = false;
};

struct CheckResult {
  Check check;
  double observed = 0.0;  // worst value or order seen
  bool passed = false;
  std::string detail;
};

struct ConvergenceReport {
  StudyKind kind = StudyKind::kGalerkinRates;
  std::string config_json;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<LevelInfo> levels;
  std::vector<ReportRow> rows;
  std::vector<OrderRow> orders;
  std::vector<CheckResult> checks;

  bool all_checks_passed() const;
  /// Values of a metric in level order (at `time` if given).
  std::vector<double> values(const std::string& metric, std::optional<double> time = std::nullopt) const;
  /// Consecutive-pair orders in level order.
  std::vector<std::optional<double>> orders_of(const std::string& metric, std::optional<double> time = std::nullopt) const;
  std::vector<std::optional<double>> fits_of(const std::string& metric, std::optional<double> time = std::nullopt) const;
};

/// A level of a study failed numerically; wraps the original error.
class LevelFailure : public Error {
 public:
  LevelFailure(int level, double H, double h, const std::string& what)
      : Error("level " + std::to_string(level) + " (H = " + std::to_string(H) + ", h = " + std::to_string(h) +
              "): " + what),
        level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

ConvergenceReport run_study(const StudyConfig& config);

/// order_i = log(e_i / e_{i+1}) / log(ratio_i); nullopt where undefined.
std::vector<std::optional<double>> estimate_rates(const std::vector<double>& errors,
                                                  const std::vector<double>& ratios);
std::vector<std::optional<double>> estimate_rates(const std::vector<double>& errors, double ratio);
/// Least-squares slope of -log e against log(level size); nullopt if any
/// error is non-positive or non-finite.
std::optional<double> fitted_order(const std::vector<double>& errors, const std::vector<double>& ratios);

/// Evaluates the config's checks against the rows and orders.
std::vector<CheckResult> evaluate_checks(const ConvergenceReport& report, const std::vector<Check>& checks);

enum class ReportFormat { kCsv, kJson };

/// ExportError on I/O failure.
void export_report(const ConvergenceReport& report, ReportFormat format, const std::filesystem::path& path);
std::string report_csv(const ConvergenceReport& report);
std::string report_json(const ConvergenceReport& report);
ConvergenceReport report_from_json(const std::string& text);

}  // namespace oldroyd::harness
