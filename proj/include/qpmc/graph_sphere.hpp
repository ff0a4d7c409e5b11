#pragma once

// Extrinsic geometry of closed curves x -> (z + u(x), x) in R^k x S^1.

#include <string>
#include <vector>

#include <json.hpp>

#include "qpmc/ambient_metric.hpp"
#include "qpmc/fiber_grid.hpp"

namespace qpmc {

struct GraphLeaf {
  Vec z;  // offset in R^k
  Mat u;  // N x k graph values at the grid nodes
  FiberGrid grid;
  bool mean_zero = true;

  GraphLeaf() : grid(16) {}
  GraphLeaf(Vec z_, Mat u_, FiberGrid grid_, bool mean_zero_ = true);

  int k() const { return static_cast<int>(z.size()); }
  int n() const { return grid.size(); }
  // z + u at every node (N x k).
  Mat positions() const;
  Vec means() const { return u.colwise().mean().transpose(); }

  static GraphLeaf slice(const Vec& z, const FiberGrid& grid);
};

// General closed curve c(x) = (offset, 0) + periodic(x) + (0, ..., 0, x).
// The constant offset is kept apart so that it is never differentiated.
struct SampledCurve {
  Vec offset;    // k
  Mat periodic;  // N x (k+1)
  FiberGrid grid;

  static SampledCurve from_leaf(const GraphLeaf& leaf);
  int k() const { return static_cast<int>(offset.size()); }
  int n() const { return grid.size(); }
  Mat points() const;  // N x (k+1) chart coordinates
};

struct NormalGeometry {
  int k = 0;
  int n = 0;
  FiberGrid grid{16};
  Mat points;        // N x (k+1)
  Mat velocity;      // X = dc/dx, N x (k+1)
  Mat acceleration;  // d^2c/dx^2 in coordinates, N x (k+1)
  Vec h;             // g(X, X)
  Vec f;             // volume density sqrt(h)
  Vec weights;       // mass weights f * 2pi/N
  std::vector<Mat> metric;              // (k+1) x (k+1) per node
  std::vector<ChristoffelData> gamma;   // per node
  std::vector<Mat> coord_normals;       // N_a = (d_{z^a})^perp as columns, per node
  std::vector<Mat> frame;               // orthonormal e_a as columns, per node
  std::vector<Mat> gram;                // q_ab = g(N_a, N_b), per node
  Mat H;                                // mean curvature, frame components, N x k
  double min_gram_det = 0.0;
  int worst_node = 0;

  // Frame components (N x k) of a coordinate vector field (N x (k+1)):
  // g(Y, e_b). Tangential parts are discarded.
  Mat to_frame(const Mat& coords) const;
  // Coordinate vectors of a section given by frame components.
  Mat to_coords(const Mat& section) const;
  // Frame components of the coordinate normals N_a: section a is N x k.
  Mat coord_normal_section(int a) const;
  double inner(const Mat& a, const Mat& b) const;  // mass-weighted L2
  double norm(const Mat& a) const;
};

NormalGeometry compute_geometry(const MetricField& m, const SampledCurve& curve);
NormalGeometry compute_geometry(const MetricField& m, const GraphLeaf& leaf);

struct DeltaVerticalReport {
  double sup_A = 0.0;
  double sup_grad_A = 0.0;
  double sup_hess_A = 0.0;
  double r_bar = 1.0;
  double delta_score = 0.0;
  double length = 0.0;
  double diameter = 0.0;  // intrinsic diameter of the closed curve: length / 2
  double diameter_ratio = 0.0;
  bool diameter_ok = false;
};

DeltaVerticalReport delta_vertical_report(const MetricField& m, const GraphLeaf& leaf,
                                          double r_bar = 1.0);

struct GradientBoundReport {
  double sup_du = 0.0;
  double metric_c1 = 0.0;  // sampled C^1 size of g - g0 along the leaf
  double sup_A = 0.0;
  double constant = 0.0;   // sup_du / (metric_c1 + sup_A), 0 when both vanish
};

GradientBoundReport graph_gradient_bound(const MetricField& m, const GraphLeaf& leaf);

nlohmann::json leaf_to_json(const GraphLeaf& leaf);
GraphLeaf leaf_from_json(const nlohmann::json& doc);
std::string leaf_to_csv(const GraphLeaf& leaf);
// Reads x, u^1..u^k columns; z and the grid mode are supplied by the caller.
GraphLeaf leaf_from_csv(const std::string& text, const Vec& z, DiffMode mode);

// Row-major flattening of an N x k section into index i*k + a and back.
Vec flatten(const Mat& section);
Mat unflatten(const Vec& flat, int n, int k);

}  // namespace qpmc
