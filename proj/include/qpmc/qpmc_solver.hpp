#pragma once

// Residual of the quasi-parallel mean curvature condition for graphs over
// the fiber and its mean-zero Newton solve.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpmc/normal_spectrum.hpp"

namespace qpmc {

struct SpectralOptions {
  CutoffRule rule = CutoffRule::threshold;
  double gap_tol = 1e-6;
};

struct ResidualReport {
  Mat J;  // N x k
  double l2 = 0.0;
  double sup = 0.0;
  Vec means;
  int rank = 0;
  double lambda_k = 0.0;
  double lambda_k1 = 0.0;
  double complement_norm = 0.0;  // |(1-Q)H| in the weighted L2 norm
};

// Everything computed on the way to J, kept for diagnostics and the
// variation checks.
struct LeafState {
  NormalGeometry geometry;
  NormalConnection connection;
  LaplacianSystem laplacian;
  SpectralDecomposition spectrum;
  QProjector q;
  std::vector<Mat> quasi_frame;  // E_a
  ResidualReport report;
};

LeafState evaluate_leaf(const MetricField& m, const SampledCurve& curve,
                        const SpectralOptions& opts = {});
ResidualReport residual(const MetricField& m, const GraphLeaf& leaf,
                        const SpectralOptions& opts = {});

// phi with d^2 phi / dx^2 = J componentwise on mean-zero data.
Mat linearized_update(const FiberGrid& grid, const Mat& J);

enum class JacobianMode { laplacian_preconditioner, fd_jacobian };
JacobianMode parse_jacobian_mode(const std::string& text);
std::string to_string(JacobianMode mode);

struct SolverConfig {
  double tol_residual = 1e-10;
  int max_iters = 50;
  double damping = 1.0;
  double damping_floor = 1.0 / 64.0;
  JacobianMode jacobian = JacobianMode::laplacian_preconditioner;
  double fd_step = 1e-6;
  SpectralOptions spectral;

  void validate() const;
};

struct LeafSolution {
  GraphLeaf leaf;  // z and the mean-zero u_star
  std::vector<double> residual_history;
  std::vector<double> damping_history;
  int iterations = 0;
  double sup_norm = 0.0;
  double c1_norm = 0.0;
  double lambda_k = 0.0;
  double lambda_k1 = 0.0;
  int rank = 0;
  std::string metric;
};

LeafSolution newton_solve(const MetricField& m, const Vec& z, const SolverConfig& cfg,
                          const FiberGrid& grid, const std::optional<Mat>& u_init = std::nullopt);

// Smooth mean-zero random start with sup norm `radius * scale`, scale drawn
// from [0.25, 1].
Mat random_start(const FiberGrid& grid, int k, double radius, std::uint64_t seed,
                 std::uint64_t counter);

struct UniquenessReport {
  int trials = 0;
  int converged = 0;
  std::vector<std::string> failures;
  double spread = 0.0;          // max pairwise sup distance, base solution included
  double max_start_norm = 0.0;  // largest sup norm of a random start
};

UniquenessReport uniqueness_probe(const MetricField& m, const Vec& z, const SolverConfig& cfg,
                                  const FiberGrid& grid, int trials, double radius,
                                  std::uint64_t seed);

double sup_distance(const Mat& a, const Mat& b);

nlohmann::json solution_to_json(const LeafSolution& sol);
LeafSolution solution_from_json(const nlohmann::json& doc);

}  // namespace qpmc
