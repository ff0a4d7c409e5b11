#pragma once

// Sweeps of the leaf solver over an axis-aligned z-lattice, the sampled
// diffeomorphism check of the foliation map and the centroid core.

#include <string>
#include <vector>

#include <json.hpp>

#include "qpmc/qpmc_solver.hpp"

namespace qpmc {

struct SweepFailure {
  Vec z;
  std::string message;
  int exit_code = 0;
};

struct Foliation {
  std::string metric_spec;  // user-facing spec string, re-parseable
  std::string provenance;
  MetricField metric;
  FiberGrid grid{16};
  SolverConfig config;
  Vec lo, hi;
  double dz = 0.0;
  std::vector<int> shape;               // points per axis
  std::vector<Vec> points;              // lexicographic order (axis 0 slowest)
  std::vector<char> solved;
  std::vector<LeafSolution> leaves;     // parallel to points; unsolved entries are empty
  std::vector<DeltaVerticalReport> delta;
  std::vector<SweepFailure> failures;

  int k() const { return static_cast<int>(lo.size()); }
  int index_of(const std::vector<int>& multi) const;
  std::vector<int> multi_index(int flat) const;
};

// Number of worker threads: QPMC_THREADS when set, else hardware concurrency.
int worker_count();

Foliation sweep(const MetricField& m, const Vec& lo, const Vec& hi, double dz,
                const SolverConfig& cfg, const FiberGrid& grid, double r_bar = 1.0);

struct DiffeoReport {
  double min_margin = 0.0;      // min over adjacent pairs and nodes of the displacement along the pair axis
  double min_separation = 0.0;  // min over all leaf pairs and nodes of the pointwise distance
  double c1_deviation = 0.0;    // sampled |Phi - Id|_{C^1}
  int pairs_checked = 0;
  bool disjoint = false;
  bool pass = false;
};

DiffeoReport diffeo_check(const Foliation& f);

// Solves for the leaf through p = (z_p, x_p) by fixed-point iteration on the
// leaf parameter, z <- z_p - u_star(z)(x_p), warm-started from the nearest
// grid leaf.
LeafSolution leaf_through_point(const Foliation& f, const Vec& p, double tol = 1e-12,
                                int max_iters = 50);

struct CoreSample {
  Vec z;
  Vec centroid;  // k+1 chart coordinates
};

std::vector<CoreSample> center_of_mass_core(const Foliation& f);
std::string core_to_csv(const std::vector<CoreSample>& core);

nlohmann::json foliation_index_json(const Foliation& f);
void write_foliation(const Foliation& f, const std::string& dir);
Foliation read_foliation(const std::string& dir);

}  // namespace qpmc
