#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qpmc/cli_io.hpp"
#include "qpmc/errors.hpp"
#include "qpmc/foliation.hpp"
#include "qpmc/variation_checks.hpp"

namespace py = pybind11;
using namespace qpmc;

namespace {

GraphLeaf leaf_or_slice(const MetricField& m, const std::optional<std::vector<double>>& z, int n,
                        const std::string& mode) {
  Vec p = Vec::Zero(m.dim_k());
  if (z) {
    if (static_cast<int>(z->size()) != m.dim_k()) throw ConfigError("z has the wrong length");
    p = Eigen::Map<const Vec>(z->data(), m.dim_k());
  }
  return GraphLeaf::slice(p, FiberGrid(n, parse_diff_mode(mode)));
}

SolverConfig solver_config(double tol, int max_iters, const std::string& jacobian,
                           const std::string& rule) {
  SolverConfig cfg;
  cfg.tol_residual = tol;
  cfg.max_iters = max_iters;
  cfg.jacobian = parse_jacobian_mode(jacobian);
  cfg.spectral.rule = parse_cutoff_rule(rule);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "QPMC leaf solver and variation checks";
  m.attr("__version__") = version();

  auto base = py::register_exception<Error>(m, "QpmcError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DegenerateMetricError>(m, "DegenerateMetricError", base.ptr());
  py::register_exception<FrameDegeneracyError>(m, "FrameDegeneracyError", base.ptr());
  py::register_exception<GapCollapseError>(m, "GapCollapseError", base.ptr());
  py::register_exception<EigenSolverError>(m, "EigenSolverError", base.ptr());
  py::register_exception<SolverDivergenceError>(m, "SolverDivergenceError", base.ptr());
  py::register_exception<VerificationError>(m, "VerificationError", base.ptr());

  m.def("metric_eval", [](const std::string& spec, const std::vector<double>& p) {
        MetricField f = parse_metric_spec(spec);
        if (static_cast<int>(p.size()) != f.dim()) throw ConfigError("point has the wrong length");
        return Mat(f.eval(Eigen::Map<const Vec>(p.data(), f.dim())));
      }, py::arg("spec"), py::arg("point"));

  m.def("spectrum", [](const std::string& spec, std::optional<std::vector<double>> z, int n,
                       const std::string& mode, int count) {
        MetricField f = parse_metric_spec(spec);
        GraphLeaf leaf = leaf_or_slice(f, z, n, mode);
        NormalGeometry geo = compute_geometry(f, leaf);
        SpectralDecomposition sp = eigendecompose(assemble_laplacian(geo, normal_connection(geo)));
        return Vec(sp.eigenvalues.head(std::min(count, sp.count())));
      }, py::arg("metric"), py::arg("z") = py::none(), py::arg("n") = 256,
      py::arg("diff_mode") = "trig", py::arg("count") = 12);

  m.def("solve_leaf", [](const std::string& spec, std::vector<double> z, int n, const std::string& mode,
                         double tol, int max_iters, const std::string& jacobian, const std::string& rule) {
        MetricField f = parse_metric_spec(spec);
        if (static_cast<int>(z.size()) != f.dim_k()) throw ConfigError("z has the wrong length");
        LeafSolution s;
        {
          py::gil_scoped_release release;
          s = newton_solve(f, Eigen::Map<const Vec>(z.data(), f.dim_k()),
                           solver_config(tol, max_iters, jacobian, rule), FiberGrid(n, parse_diff_mode(mode)));
        }
        return solution_to_json(s).dump();
      }, py::arg("metric"), py::arg("z"), py::arg("n") = 256, py::arg("diff_mode") = "trig",
      py::arg("tol") = 1e-10, py::arg("max_iters") = 50, py::arg("jacobian") = "laplacian",
      py::arg("rule") = "threshold");

  m.def("verify_variations", [](const std::string& spec, std::optional<std::vector<double>> z, int n,
                                std::uint64_t seed, bool solve, std::vector<std::string> formulas) {
        MetricField f = parse_metric_spec(spec);
        GraphLeaf leaf = leaf_or_slice(f, z, n, "trig");
        nlohmann::json out = nlohmann::json::array();
        {
          py::gil_scoped_release release;
          if (solve) leaf = newton_solve(f, leaf.z, SolverConfig{}, leaf.grid).leaf;
          Mat v = random_section(leaf.n(), leaf.k(), leaf.grid, 0.5, seed, 1);
          VariationFamily fam(f, SampledCurve::from_leaf(leaf), v);
          fam.prefetch(worker_count());
          for (const auto& r : run_variation_suite(fam, formulas.empty() ? formula_ids() : formulas, seed))
            out.push_back(report_to_json(r, false));
        }
        return out.dump();
      }, py::arg("metric"), py::arg("z") = py::none(), py::arg("n") = 256, py::arg("seed") = 7,
      py::arg("solve") = false, py::arg("formulas") = std::vector<std::string>{});

  m.def("berger_sectional_curvature", [](double kappa, int i, int j) {
        return BergerMetric(kappa).sectional_curvature(i, j);
      }, py::arg("kappa"), py::arg("i"), py::arg("j"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      }, py::arg("args"));

  m.def("formula_ids", &formula_ids);
}
