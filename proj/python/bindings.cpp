// Python bindings. Coefficient vectors cross as numpy arrays; studies cross
// as JSON text (the package wraps them into dicts).

#include "oldroyd/divfree.hpp"
#include "oldroyd/harness.hpp"
#include "oldroyd/mms.hpp"
#include "oldroyd/steppers.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace oldroyd;
using namespace oldroyd::steppers;

namespace {

steppers::Problem manufactured_problem(const std::string& id, const memory::KernelParams& kernel, bool unforced) {
  if (id == "zero") return {};
  const auto& sol = mms::solution_by_id(id);
  steppers::Problem p;
  p.initial = mms::initial_velocity(sol);
  if (!unforced) p.forcing = mms::forcing_function(sol, kernel);
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Galerkin and nonlinear Galerkin solvers for 2D Oldroyd order-one flow";

  static py::exception<StepFailure> step_failure(m, "StepFailure", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const StepFailure& e) {
      py::set_error(step_failure, e.what());
    } catch (const InvalidArgument& e) {
      py::set_error(PyExc_ValueError, e.what());
    } catch (const harness::LevelFailure& e) {
      py::set_error(PyExc_RuntimeError, e.what());
    } catch (const ExportError& e) {
      py::set_error(PyExc_OSError, e.what());
    }
  });

  // --- memory kernel ---------------------------------------------------------
  py::class_<memory::KernelParams>(m, "KernelParams")
      .def(py::init<>())
      .def_static("derive", &memory::KernelParams::derive, py::arg("lam"), py::arg("kappa"), py::arg("nu"))
      .def_static("from_coefficients", &memory::KernelParams::from_coefficients, py::arg("mu"), py::arg("gamma"),
                  py::arg("delta"))
      .def_readwrite("lam", &memory::KernelParams::lambda)
      .def_readwrite("kappa", &memory::KernelParams::kappa)
      .def_readwrite("nu", &memory::KernelParams::nu)
      .def_readwrite("mu", &memory::KernelParams::mu)
      .def_readwrite("gamma", &memory::KernelParams::gamma)
      .def_readwrite("delta", &memory::KernelParams::delta)
      .def("__repr__", [](const memory::KernelParams& p) {
        return "KernelParams(mu=" + std::to_string(p.mu) + ", gamma=" + std::to_string(p.gamma) +
               ", delta=" + std::to_string(p.delta) + ")";
      });
  py::register_exception<NonPositiveGamma>(m, "NonPositiveGamma", PyExc_ValueError);

  m.def("kernel_eval", &memory::kernel_eval, py::arg("params"), py::arg("t"));
  m.def("positivity_quadrature",
        py::overload_cast<const std::vector<double>&, double, double>(&memory::positivity_quadrature),
        py::arg("phi"), py::arg("alpha"), py::arg("k"));

  py::enum_<memory::MemoryRule>(m, "MemoryRule")
      .value("EXPONENTIAL_LINEAR", memory::MemoryRule::kExponentialLinear)
      .value("RIGHT_RECTANGLE", memory::MemoryRule::kRightRectangle);

  // --- schemes -------------------------------------------------------------------
  py::enum_<Scheme>(m, "Scheme").value("CGM", Scheme::kCgm).value("NLG1", Scheme::kNlg1).value("NLG2", Scheme::kNlg2);
  py::enum_<MemoryOrigin>(m, "MemoryOrigin")
      .value("CARRY", MemoryOrigin::kCarry)
      .value("SWITCH_TIME", MemoryOrigin::kSwitchTime);
  py::enum_<ZStart>(m, "ZStart").value("SOLVE", ZStart::kSolve).value("PROJECT", ZStart::kProject);

  py::class_<SchemeConfig>(m, "SchemeConfig")
      .def(py::init<>())
      .def_readwrite("scheme", &SchemeConfig::scheme)
      .def_readwrite("k", &SchemeConfig::k)
      .def_readwrite("t0", &SchemeConfig::t0)
      .def_readwrite("T", &SchemeConfig::T)
      .def_readwrite("picard_tol", &SchemeConfig::picard_tol)
      .def_readwrite("picard_maxit", &SchemeConfig::picard_maxit)
      .def_readwrite("convection", &SchemeConfig::convection)
      .def_readwrite("kernel", &SchemeConfig::kernel)
      .def_readwrite("memory_rule", &SchemeConfig::memory_rule)
      .def_readwrite("memory_origin", &SchemeConfig::memory_origin)
      .def_readwrite("z_start", &SchemeConfig::z_start)
      .def_readwrite("sample_times", &SchemeConfig::sample_times)
      .def_readwrite("snapshot_stride", &SchemeConfig::snapshot_stride)
      .def("validate", &SchemeConfig::validate);

  py::class_<Problem>(m, "Problem")
      .def(py::init<>())
      .def(py::init([](fe::ForceFunction f, fe::VectorFunction u0) { return Problem{std::move(f), std::move(u0)}; }),
           py::arg("forcing") = nullptr, py::arg("initial") = nullptr,
           "Python callables f(x, y, t) -> (fx, fy) and u0(x, y) -> (ux, uy); None means zero.")
      .def_static("manufactured", &manufactured_problem, py::arg("solution"), py::arg("kernel") = memory::KernelParams::from_coefficients(1.0, 1.0, 1.0),
                  py::arg("unforced") = false,
                  "Forcing and initial data of a catalogue solution ('S1', 'S2'), or 'zero'.");

  m.def("list_solutions", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : mms::list_solutions()) out.emplace_back(s.id(), s.description());
    return out;
  });

  py::class_<Level>(m, "Level")
      .def_static("unit_square",
                  [](int n) { return Level::build(std::make_shared<const mesh::Mesh>(mesh::Mesh::unit_square(n))); },
                  py::arg("n"))
      .def_property_readonly("num_velocity_dofs", [](const Level& l) { return l.space->num_velocity_dofs(); })
      .def_property_readonly("h", [](const Level& l) { return l.space->mesh().mesh_size(); });

  py::class_<TwoLevelContext>(m, "TwoLevelContext")
      .def_static("build", &TwoLevelContext::build, py::arg("coarse_cells"), py::arg("refinements"))
      .def_readonly("coarse", &TwoLevelContext::coarse)
      .def_readonly("fine", &TwoLevelContext::fine)
      .def_property_readonly("H", &TwoLevelContext::H)
      .def_property_readonly("h", &TwoLevelContext::h)
      .def_property_readonly("degenerate", &TwoLevelContext::degenerate)
      .def("complement_of", &TwoLevelContext::complement_of, py::arg("fine"));

  py::class_<StepRecord>(m, "StepRecord")
      .def_readonly("time", &StepRecord::time)
      .def_readonly("picard_iterations", &StepRecord::picard_iterations)
      .def_readonly("linear_iterations", &StepRecord::linear_iterations)
      .def_readonly("increment", &StepRecord::increment)
      .def_readonly("energy", &StepRecord::energy)
      .def_readonly("plain_energy", &StepRecord::plain_energy)
      .def_readonly("memory_norm", &StepRecord::memory_norm)
      .def_readonly("indicator", &StepRecord::indicator);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("scheme", &Trajectory::scheme)
      .def_readonly("times", &Trajectory::times)
      .def_readonly("u", &Trajectory::u)
      .def_readonly("y", &Trajectory::y)
      .def_readonly("z", &Trajectory::z)
      .def_readonly("steps", &Trajectory::steps)
      .def_property_readonly("stacked", &Trajectory::stacked)
      .def("index_of", &Trajectory::index_of, py::arg("t"));

  m.def("project_initial", &project_initial, py::arg("level"), py::arg("u0"));
  m.def("run_cgm", &run_cgm, py::arg("level"), py::arg("config"), py::arg("problem"));
  m.def("run_nlg", &run_nlg, py::arg("context"), py::arg("config"), py::arg("problem"));

  py::class_<RunDiagnostics>(m, "RunDiagnostics")
      .def_readonly("times", &RunDiagnostics::times)
      .def_readonly("indicator", &RunDiagnostics::indicator)
      .def_readonly("energy", &RunDiagnostics::energy)
      .def_readonly("plain_energy", &RunDiagnostics::plain_energy)
      .def_readonly("snapshot_times", &RunDiagnostics::snapshot_times)
      .def_readonly("z_norm", &RunDiagnostics::z_norm)
      .def_readonly("z_h1", &RunDiagnostics::z_h1)
      .def_readonly("worst_step", &RunDiagnostics::worst_step)
      .def_readonly("max_energy_increase", &RunDiagnostics::max_energy_increase)
      .def_readonly("nonpositive_indicator_steps", &RunDiagnostics::nonpositive_indicator_steps);

  m.def("diagnostics", [](const Trajectory& t, const TwoLevelContext* ctx) { return diagnostics(t, ctx); },
        py::arg("trajectory"), py::arg("context") = nullptr);
  m.def("snapshot_difference",
        [](const Trajectory& a, int ia, const Trajectory& b, int ib) {
          const auto d = snapshot_difference(a, ia, b, ib);
          return std::make_pair(d.l2, d.h1);
        },
        py::arg("a"), py::arg("ia"), py::arg("b"), py::arg("ib"), "(L2, H1-seminorm) of u_a - u_b.");
  m.def("exact_errors",
        [](const Trajectory& t, const std::string& id, const std::vector<double>& times, int degree) {
          std::vector<std::tuple<double, double, double>> out;
          for (const auto& e : mms::exact_errors(t, mms::solution_by_id(id), times, degree))
            out.emplace_back(e.time, e.l2, e.h1);
          return out;
        },
        py::arg("trajectory"), py::arg("solution"), py::arg("times"), py::arg("degree") = 6,
        "(time, L2, H1-seminorm) errors against a catalogue solution.");
  m.def("export_snapshots_csv", &export_snapshots_csv, py::arg("trajectory"), py::arg("path"));
  m.def("export_vtk", &export_vtk, py::arg("trajectory"), py::arg("snapshot"), py::arg("path"));

  // --- split diagnostics -----------------------------------------------------
  m.def("subspace_constants",
        [](int coarse_cells, int refinements) {
          const mesh::MeshHierarchy hierarchy(coarse_cells, refinements);
          const auto coarse = std::make_shared<const fe::FeSpace>(hierarchy.level_ptr(0));
          const auto fine = std::make_shared<const fe::FeSpace>(hierarchy.level_ptr(refinements));
          const auto cb = divfree::nullspace_basis(coarse, fe::assemble_operators(*coarse));
          const auto fb = divfree::nullspace_basis(fine, fe::assemble_operators(*fine));
          const auto split =
              divfree::build_two_level_split(cb, fb, fe::cross_level_operators(coarse, fine, hierarchy));
          const auto k = divfree::subspace_constants(split);
          py::dict d;
          d["c_H"] = k.c_h;
          d["one_minus_rho"] = k.one_minus_rho;
          d["lambda_1"] = k.lambda_1;
          d["dim_JH"] = k.dim_coarse;
          d["dim_JhH"] = k.dim_complement;
          d["orthogonality_defect"] = divfree::orthogonality_defect(split);
          return d;
        },
        py::arg("coarse_cells"), py::arg("refinements"));

  // --- harness -------------------------------------------------------------------
  m.def("estimate_rates",
        py::overload_cast<const std::vector<double>&, const std::vector<double>&>(&harness::estimate_rates),
        py::arg("errors"), py::arg("ratios"));
  m.def("estimate_rates", py::overload_cast<const std::vector<double>&, double>(&harness::estimate_rates),
        py::arg("errors"), py::arg("ratio"));
  m.def("fitted_order", &harness::fitted_order, py::arg("errors"), py::arg("ratios"));
  m.def("normalize_config",
        [](const std::string& text) {
          const auto c = harness::study_config_from_json(text);
          c.validate();
          return harness::study_config_to_json(c);
        },
        py::arg("config_json"), "Parses, validates and echoes a study config with defaults filled in.");
  m.def("run_study_json",
        [](const std::string& text) {
          const harness::StudyConfig c = harness::study_config_from_json(text);
          harness::ConvergenceReport r;
          {
            py::gil_scoped_release release;
            r = harness::run_study(c);
          }
          if (!c.output.csv.empty()) harness::export_report(r, harness::ReportFormat::kCsv, c.output.csv);
          if (!c.output.json.empty()) harness::export_report(r, harness::ReportFormat::kJson, c.output.json);
          return std::make_pair(harness::report_json(r), harness::report_csv(r));
        },
        py::arg("config_json"), "Runs a study; returns (report JSON, report CSV).");
}
