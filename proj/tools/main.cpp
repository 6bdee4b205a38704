// Command-line driver: one subcommand per study kind. Config comes from an
// optional JSON file; flags override individual fields.
//
// Exit status: 0 all requested checks passed, 1 numerical failure or a failed
// check, 2 configuration error.

#include "oldroyd/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

using namespace oldroyd;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config;
  std::vector<int> levels;
  std::optional<double> k, t0, T;
  std::vector<std::string> variants;
  std::string solution;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* sub, Overrides& o, bool time_flags, bool level_flags) {
  sub->add_option("config", o.config, "JSON study config")->check(CLI::ExistingFile);
  if (level_flags) sub->add_option("--levels", o.levels, "cells per side of the (coarse) meshes")->delimiter(',');
  if (time_flags) {
    sub->add_option("--k", o.k, "time step");
    sub->add_option("--t0", o.t0, "switch time of the two-level schemes");
    sub->add_option("--T", o.T, "final time");
    sub->add_option("--variant", o.variants, "cgm, nlg1, nlg2 or both")->delimiter(',');
    sub->add_option("--solution", o.solution, "manufactured solution id (S1, S2) or zero");
  }
  sub->add_option("--out", o.out, "output prefix: writes <out>.csv and <out>.json");
  sub->add_flag("-q,--quiet", o.quiet, "only print check verdicts");
}

json load_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    json j = json::parse(ss.str());
    if (!j.is_object()) throw InvalidArgument(path + ": expected a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path + ": " + e.what());
  }
}

harness::StudyConfig build_config(const std::string& kind, const Overrides& o) {
  json j = load_json(o.config);
  j["study"] = kind;
  if (!o.levels.empty()) j["levels"] = o.levels;
  if (o.k) j["k"] = *o.k;
  if (o.t0) j["t0"] = *o.t0;
  if (o.T) j["T"] = *o.T;
  if (!o.solution.empty()) j["solution"] = o.solution;
  if (!o.variants.empty()) {
    json v = json::array();
    for (const std::string& s : o.variants) {
      if (s == "both") {
        v.push_back("nlg1");
        v.push_back("nlg2");
      } else {
        v.push_back(s);
      }
    }
    j["variants"] = v;
  }
  if (!o.out.empty()) {
    json out = j.contains("output") ? j["output"] : json::object();
    out["csv"] = o.out + ".csv";
    out["json"] = o.out + ".json";
    if (kind == "single-run") out["snapshots"] = o.out + "_fields";
    j["output"] = out;
  }
  harness::StudyConfig c = harness::study_config_from_json(j.dump());
  c.validate();
  return c;
}

std::string show(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_report(const harness::ConvergenceReport& r, bool quiet) {
  if (!quiet) {
    std::cout << "study " << harness::to_string(r.kind) << "\n";
    for (const auto& row : r.rows) {
      std::cout << "  ";
      if (row.level >= 0) std::cout << "level " << row.level << " H=" << show(row.H) << " h=" << show(row.h) << " ";
      if (row.time) std::cout << "t=" << show(*row.time) << " ";
      std::cout << row.metric << " = " << show(row.value) << "\n";
    }
    for (const auto& o : r.orders) {
      std::cout << "  order " << o.metric;
      if (o.time) std::cout << " t=" << show(*o.time);
      std::cout << " levels " << o.from << "->" << o.to << ": " << (o.order ? show(*o.order) : "undefined") << "\n";
    }
  }
  for (const auto& c : r.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.check.metric;
    if (c.check.time) std::cout << " t=" << show(*c.check.time);
    if (c.check.min_order) std::cout << " min order " << show(*c.check.min_order);
    if (c.check.min) std::cout << " min " << show(*c.check.min);
    if (c.check.max) std::cout << " max " << show(*c.check.max);
    std::cout << " observed " << show(c.observed);
    if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << "\n";
  }
}

int execute(const std::string& kind, const Overrides& o) {
  const harness::StudyConfig c = build_config(kind, o);
  const auto start = std::chrono::steady_clock::now();
  const harness::ConvergenceReport r = harness::run_study(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!c.output.csv.empty()) harness::export_report(r, harness::ReportFormat::kCsv, c.output.csv);
  if (!c.output.json.empty()) harness::export_report(r, harness::ReportFormat::kJson, c.output.json);
  print_report(r, o.quiet);
  std::cerr << "finished in " << show(secs) << " s\n";
  return r.all_checks_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Galerkin and nonlinear Galerkin solvers for Oldroyd order-one flow"};
  app.require_subcommand(1);

  const std::map<std::string, std::string> kinds{{"run", "single-run"},
                                                 {"rates", "galerkin-rates"},
                                                 {"nlg-compare", "nlg-compare"},
                                                 {"diagnostics", "subspace-diagnostics"},
                                                 {"kernel-check", "kernel-check"}};
  Overrides o;
  add_common(app.add_subcommand("run", "one run per variant on a single level"), o, true, true);
  add_common(app.add_subcommand("rates", "Galerkin convergence rates against a manufactured solution"), o, true, true);
  add_common(app.add_subcommand("nlg-compare", "two-level schemes against Galerkin on the same fine space"), o, true,
             true);
  add_common(app.add_subcommand("diagnostics", "subspace constants of the two-level split"), o, false, true);
  add_common(app.add_subcommand("kernel-check", "memory kernel positivity and recursion checks"), o, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string kind = kinds.at(app.get_subcommands().front()->get_name());
  try {
    return execute(kind, o);
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
}
