#include <doctest.h>

#include <cmath>

#include "qpmc/errors.hpp"
#include "qpmc/qpmc_solver.hpp"

using namespace qpmc;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec p(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

}  // namespace

TEST_CASE("slices of product and warped metrics are QPMC") {
  FiberGrid grid(32);
  CHECK(residual(parse_metric_spec("product:k=2"), GraphLeaf::slice(vec({0.5, 1}), grid)).l2 < 1e-14);
  ResidualReport w = residual(parse_metric_spec("warped:a=1"), GraphLeaf::slice(vec({0.6}), grid));
  CHECK(w.l2 < 1e-13);
  CHECK(w.rank == 1);
}

TEST_CASE("the residual is mean-zero") {
  FiberGrid grid(32);
  Mat u(32, 2);
  for (int i = 0; i < 32; ++i) {
    u(i, 0) = 0.1 * std::sin(grid.node(i));
    u(i, 1) = 0.05 * std::cos(2 * grid.node(i));
  }
  ResidualReport r = residual(parse_metric_spec("bump:eps=0.05"), GraphLeaf(Vec::Zero(2), u, grid));
  CHECK(r.l2 > 1e-4);
  CHECK(r.means.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("linearized update inverts the second derivative") {
  FiberGrid grid(32);
  Mat phi(32, 1), d2(32, 1);
  for (int i = 0; i < 32; ++i) {
    phi(i, 0) = std::sin(2 * grid.node(i));
    d2(i, 0) = -4 * std::sin(2 * grid.node(i));
  }
  CHECK((linearized_update(grid, d2) - phi).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("newton returns the zero graph where slices are already QPMC") {
  FiberGrid grid(64);
  SolverConfig cfg;
  LeafSolution flat = newton_solve(parse_metric_spec("product:k=2"), vec({0.2, -0.1}), cfg, grid);
  CHECK(flat.iterations == 0);
  CHECK(flat.sup_norm == 0.0);
  for (double z : {-0.8, -0.4, 0.0, 0.4, 0.8}) {
    LeafSolution s = newton_solve(parse_metric_spec("warped:a=1"), vec({z}), cfg, grid);
    CHECK(s.sup_norm < 1e-8);
    CHECK(s.residual_history.back() <= 1e-10);
  }
}

TEST_CASE("newton converges on a bump metric and reaches the tolerance") {
  FiberGrid grid(64);
  SolverConfig cfg;
  LeafSolution s = newton_solve(parse_metric_spec("bump:eps=0.01"), vec({0.3, 0.2}), cfg, grid);
  CHECK(s.residual_history.back() <= 1e-10);
  CHECK(s.iterations >= 1);
  CHECK(s.leaf.means().cwiseAbs().maxCoeff() < 1e-14);
  CHECK(s.sup_norm > 0.0);
  CHECK(s.rank == 2);
  for (std::size_t i = 1; i < s.residual_history.size(); ++i)
    CHECK(s.residual_history[i] < s.residual_history[i - 1]);
}

TEST_CASE("finite-difference Jacobian mode agrees with the preconditioned iteration") {
  FiberGrid grid(16);
  SolverConfig a, b;
  b.jacobian = JacobianMode::fd_jacobian;
  MetricField m = parse_metric_spec("bump:eps=0.02");
  LeafSolution sa = newton_solve(m, vec({0.1, 0.0}), a, grid);
  LeafSolution sb = newton_solve(m, vec({0.1, 0.0}), b, grid);
  CHECK(sup_distance(sa.leaf.u, sb.leaf.u) < 1e-9);
  CHECK(sb.iterations <= sa.iterations);
}

TEST_CASE("solver errors") {
  FiberGrid grid(32);
  MetricField bump = parse_metric_spec("bump:eps=0.01");
  SolverConfig cfg;
  cfg.max_iters = 1;
  cfg.tol_residual = 1e-15;
  try {
    newton_solve(bump, vec({0.2, 0.2}), cfg, grid);
    FAIL("expected divergence");
  } catch (const SolverDivergenceError& e) {
    CHECK(e.iterate().size() == 64u);
  }
  CHECK_THROWS_AS(newton_solve(bump, vec({0.2}), SolverConfig{}, grid), ConfigError);
  SolverConfig bad;
  bad.damping = 0.0;
  CHECK_THROWS_AS(newton_solve(bump, vec({0.0, 0.0}), bad, grid), ConfigError);
  CHECK_THROWS_AS(newton_solve(parse_metric_spec("twisted:alpha=3.141592653589793"),
                               vec({0.0, 0.0}), SolverConfig{}, grid),
                  GapCollapseError);
  CHECK(parse_jacobian_mode("fd") == JacobianMode::fd_jacobian);
  CHECK_THROWS_AS(parse_jacobian_mode("exact"), ConfigError);
}

TEST_CASE("random starts are seeded, smooth and mean-zero") {
  FiberGrid grid(64);
  Mat a = random_start(grid, 2, 0.05, 7, 3), b = random_start(grid, 2, 0.05, 7, 3);
  Mat c = random_start(grid, 2, 0.05, 7, 4);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.colwise().mean().cwiseAbs().maxCoeff() < 1e-15);
  CHECK(a.cwiseAbs().maxCoeff() <= 0.05 + 1e-15);
  CHECK(a.cwiseAbs().maxCoeff() >= 0.25 * 0.05 - 1e-15);
}

TEST_CASE("uniqueness probe on a small grid") {
  FiberGrid grid(32);
  UniquenessReport r =
      uniqueness_probe(parse_metric_spec("bump:eps=0.01"), vec({0.0, 0.0}), SolverConfig{}, grid, 3,
                       0.05, 11);
  CHECK(r.converged == 3);
  CHECK(r.spread < 1e-8);
}

TEST_CASE("leaf solutions round-trip through JSON") {
  FiberGrid grid(32);
  LeafSolution s = newton_solve(parse_metric_spec("bump:eps=0.01"), vec({0.1, 0.1}), SolverConfig{}, grid);
  LeafSolution back = solution_from_json(nlohmann::json::parse(solution_to_json(s).dump()));
  CHECK(back.leaf.u == s.leaf.u);
  CHECK(back.residual_history == s.residual_history);
  CHECK(back.lambda_k1 == s.lambda_k1);
  CHECK(solution_to_json(back).dump() == solution_to_json(s).dump());
}
