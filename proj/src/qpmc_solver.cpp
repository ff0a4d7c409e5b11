#include "qpmc/qpmc_solver.hpp"

#include <cmath>
#include <cstdio>

#include "qpmc/errors.hpp"
#include "qpmc/random.hpp"

namespace qpmc {

namespace {

double l2_flat(const Mat& J, double dx) { return std::sqrt(J.squaredNorm() * dx); }

Mat recenter(Mat u) {
  u.rowwise() -= u.colwise().mean();
  return u;
}

std::vector<double> to_vector(const Mat& u) {
  Vec f = flatten(u);
  return std::vector<double>(f.data(), f.data() + f.size());
}

}  // namespace

LeafState evaluate_leaf(const MetricField& m, const SampledCurve& curve,
                        const SpectralOptions& opts) {
  LeafState s;
  s.geometry = compute_geometry(m, curve);
  s.connection = normal_connection(s.geometry);
  s.laplacian = assemble_laplacian(s.geometry, s.connection);
  s.spectrum = eigendecompose(s.laplacian);
  s.q = q_projector(s.spectrum, opts.rule, opts.gap_tol);
  require_full_rank(s.q, s.spectrum);
  s.quasi_frame = quasi_parallel_frame(s.geometry, s.q);

  const NormalGeometry& geo = s.geometry;
  const int n = geo.n, k = geo.k;
  Mat comp = s.q.complement(geo.H);
  ResidualReport& r = s.report;
  r.J.resize(n, k);
  for (int a = 0; a < k; ++a)
    r.J.col(a) = comp.cwiseProduct(s.quasi_frame[a]).rowwise().sum().cwiseProduct(geo.f);
  r.l2 = l2_flat(r.J, geo.grid.spacing());
  r.sup = r.J.cwiseAbs().maxCoeff();
  r.means = r.J.colwise().mean().transpose();
  r.rank = s.q.rank;
  r.lambda_k = s.spectrum.eigenvalues[k - 1];
  r.lambda_k1 = s.spectrum.eigenvalues[k];
  r.complement_norm = geo.norm(comp);
  return s;
}

ResidualReport residual(const MetricField& m, const GraphLeaf& leaf, const SpectralOptions& opts) {
  return evaluate_leaf(m, SampledCurve::from_leaf(leaf), opts).report;
}

Mat linearized_update(const FiberGrid& grid, const Mat& J) { return grid.lap_pinv() * J; }

JacobianMode parse_jacobian_mode(const std::string& text) {
  if (text == "laplacian" || text == "laplacian_preconditioner")
    return JacobianMode::laplacian_preconditioner;
  if (text == "fd" || text == "fd_jacobian") return JacobianMode::fd_jacobian;
  throw ConfigError("unknown jacobian mode '" + text + "' (expected laplacian or fd)");
}

std::string to_string(JacobianMode mode) {
  return mode == JacobianMode::fd_jacobian ? "fd_jacobian" : "laplacian_preconditioner";
}

void SolverConfig::validate() const {
  if (!(tol_residual > 0.0)) throw ConfigError("tol must be positive");
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("damping must lie in (0, 1]");
  if (!(damping_floor > 0.0 && damping_floor <= damping))
    throw ConfigError("damping floor must lie in (0, damping]");
  if (!(fd_step > 0.0)) throw ConfigError("fd step must be positive");
  if (!(spectral.gap_tol > 0.0)) throw ConfigError("gap_tol must be positive");
}

namespace {

// Columns of dJ/du by centered differences, constrained to mean-zero steps.
Mat fd_newton_step(const MetricField& m, const Mat& u, const Mat& J, const FiberGrid& grid,
                   const SolverConfig& cfg) {
  const int n = static_cast<int>(u.rows()), k = static_cast<int>(u.cols()), dim = n * k;
  Mat system = Mat::Zero(dim + k, dim);
  Vec rhs = Vec::Zero(dim + k);
  rhs.head(dim) = flatten(J);
  Vec zero = Vec::Zero(k);
  for (int col = 0; col < dim; ++col) {
    Mat up = u, um = u;
    up(col / k, col % k) += cfg.fd_step;
    um(col / k, col % k) -= cfg.fd_step;
    Vec jp = flatten(residual(m, GraphLeaf(zero, up, grid, false), cfg.spectral).J);
    Vec jm = flatten(residual(m, GraphLeaf(zero, um, grid, false), cfg.spectral).J);
    system.col(col).head(dim) = (jp - jm) / (2.0 * cfg.fd_step);
  }
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < k; ++a) system(dim + a, i * k + a) = 1.0;
  Vec step = system.colPivHouseholderQr().solve(rhs);
  return unflatten(step, n, k);
}

}  // namespace

LeafSolution newton_solve(const MetricField& m, const Vec& z, const SolverConfig& cfg,
                          const FiberGrid& grid, const std::optional<Mat>& u_init) {
  cfg.validate();
  const int k = m.dim_k();
  if (z.size() != k)
    throw ConfigError("z has " + std::to_string(z.size()) + " components, expected " +
                      std::to_string(k));
  MetricField local = translate_pullback(m, z);
  const Vec origin = Vec::Zero(k);
  Mat u = u_init ? recenter(*u_init) : Mat::Zero(grid.size(), k);
  if (u.rows() != grid.size() || u.cols() != k) throw ConfigError("initial guess has wrong shape");

  LeafSolution sol;
  sol.metric = m.provenance();
  ResidualReport rep = residual(local, GraphLeaf(origin, u, grid), cfg.spectral);
  sol.residual_history.push_back(rep.l2);
  int iter = 0;
  while (rep.l2 > cfg.tol_residual) {
    if (iter >= cfg.max_iters) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "no convergence in %d iterations (residual %.3e)",
                    cfg.max_iters, rep.l2);
      throw SolverDivergenceError(buf, to_vector(u));
    }
    Mat step = cfg.jacobian == JacobianMode::fd_jacobian
                   ? fd_newton_step(local, u, rep.J, grid, cfg)
                   : linearized_update(grid, rep.J);
    double damping = cfg.damping;
    bool accepted = false;
    while (damping >= cfg.damping_floor) {
      Mat trial = recenter(u - damping * step);
      try {
        ResidualReport next = residual(local, GraphLeaf(origin, trial, grid), cfg.spectral);
        if (next.l2 < rep.l2) {
          u = trial;
          rep = next;
          accepted = true;
          break;
        }
      } catch (const FrameDegeneracyError&) {
      } catch (const GapCollapseError&) {
      } catch (const DegenerateMetricError&) {
      }
      damping *= 0.5;
    }
    if (!accepted) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "damping fell below %.4g without decreasing the residual (%.3e) at "
                    "iteration %d",
                    cfg.damping_floor, rep.l2, iter + 1);
      throw SolverDivergenceError(buf, to_vector(u));
    }
    ++iter;
    sol.residual_history.push_back(rep.l2);
    sol.damping_history.push_back(damping);
  }
  sol.leaf = GraphLeaf(z, u, grid, true);
  sol.iterations = iter;
  sol.sup_norm = u.size() ? u.cwiseAbs().maxCoeff() : 0.0;
  sol.c1_norm = sol.sup_norm + (grid.d1() * u).cwiseAbs().maxCoeff();
  sol.lambda_k = rep.lambda_k;
  sol.lambda_k1 = rep.lambda_k1;
  sol.rank = rep.rank;
  return sol;
}

Mat random_start(const FiberGrid& grid, int k, double radius, std::uint64_t seed,
                 std::uint64_t counter) {
  RandomStream rng(seed, counter);
  Mat u = Mat::Zero(grid.size(), k);
  for (int a = 0; a < k; ++a)
    for (int mode = 1; mode <= 4; ++mode) {
      double c = rng.uniform(-1.0, 1.0), s = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < grid.size(); ++i)
        u(i, a) += c * std::cos(mode * grid.node(i)) + s * std::sin(mode * grid.node(i));
    }
  u = recenter(u);
  double scale = rng.uniform(0.25, 1.0);
  double sup = u.cwiseAbs().maxCoeff();
  if (sup > 0.0) u *= radius * scale / sup;
  return u;
}

double sup_distance(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

UniquenessReport uniqueness_probe(const MetricField& m, const Vec& z, const SolverConfig& cfg,
                                  const FiberGrid& grid, int trials, double radius,
                                  std::uint64_t seed) {
  if (trials < 1) throw ConfigError("trials must be positive");
  if (!(radius > 0.0)) throw ConfigError("radius must be positive");
  UniquenessReport rep;
  rep.trials = trials;
  std::vector<Mat> solutions{newton_solve(m, z, cfg, grid).leaf.u};
  for (int t = 0; t < trials; ++t) {
    Mat start = random_start(grid, m.dim_k(), radius, seed, static_cast<std::uint64_t>(t));
    rep.max_start_norm = std::max(rep.max_start_norm, start.cwiseAbs().maxCoeff());
    try {
      solutions.push_back(newton_solve(m, z, cfg, grid, start).leaf.u);
      ++rep.converged;
    } catch (const Error& e) {
      rep.failures.push_back("trial " + std::to_string(t) + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < solutions.size(); ++i)
    for (std::size_t j = i + 1; j < solutions.size(); ++j)
      rep.spread = std::max(rep.spread, sup_distance(solutions[i], solutions[j]));
  return rep;
}

nlohmann::json solution_to_json(const LeafSolution& sol) {
  return {{"schema_version", 1},
          {"metric", sol.metric},
          {"leaf", leaf_to_json(sol.leaf)},
          {"residual_history", sol.residual_history},
          {"damping_history", sol.damping_history},
          {"iterations", sol.iterations},
          {"sup_norm", sol.sup_norm},
          {"c1_norm", sol.c1_norm},
          {"gap", {{"lambda_k", sol.lambda_k}, {"lambda_k1", sol.lambda_k1}}},
          {"rank_Q", sol.rank}};
}

LeafSolution solution_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != 1)
      throw ConfigError("leaf solution: unsupported schema_version");
    LeafSolution sol;
    sol.metric = doc.at("metric").get<std::string>();
    sol.leaf = leaf_from_json(doc.at("leaf"));
    sol.residual_history = doc.at("residual_history").get<std::vector<double>>();
    sol.damping_history = doc.value("damping_history", std::vector<double>{});
    sol.iterations = doc.at("iterations").get<int>();
    sol.sup_norm = doc.at("sup_norm").get<double>();
    sol.c1_norm = doc.at("c1_norm").get<double>();
    sol.lambda_k = doc.at("gap").at("lambda_k").get<double>();
    sol.lambda_k1 = doc.at("gap").at("lambda_k1").get<double>();
    sol.rank = doc.at("rank_Q").get<int>();
    return sol;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("leaf solution: ") + e.what());
  }
}

}  // namespace qpmc
