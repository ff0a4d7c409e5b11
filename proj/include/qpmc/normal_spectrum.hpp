#pragma once

// Normal connection, the Galerkin normal Laplacian, its spectrum and the
// low-mode projector Q.

#include <string>
#include <vector>

#include "qpmc/graph_sphere.hpp"

namespace qpmc {

// (nabla_x V)^b = dV^b/dx + omega(b, a) V^a in the orthonormal frame.
struct NormalConnection {
  std::vector<Mat> omega;  // k x k per node, skew-symmetric
};

NormalConnection normal_connection(const NormalGeometry& geom);

// nabla_x of a section (N x k frame components), evaluated at the nodes.
Mat covariant_derivative(const NormalGeometry& geom, const NormalConnection& conn,
                         const Mat& section);
// Unit-speed derivative h^{-1/2} nabla_x.
Mat arclength_derivative(const NormalGeometry& geom, const NormalConnection& conn,
                         const Mat& section);

// Discrete energy V -> sum_mid W_mid |D V|^2 with D the covariant derivative
// sampled at the staggered midpoints. K = D^T W D, M = diag(w_i) (x) I_k.
struct LaplacianSystem {
  int n = 0;
  int k = 0;
  Mat derivative;   // kN x kN, midpoint-major rows
  Vec mid_weights;  // per midpoint row
  Mat stiffness;
  Vec mass;         // per unknown (node weight repeated k times)
};

LaplacianSystem assemble_laplacian(const NormalGeometry& geom, const NormalConnection& conn);

// Delta^perp V = -M^{-1} K V.
Mat apply_laplacian(const LaplacianSystem& sys, const Mat& section);
// int |nabla^perp V|^2 / int |V|^2 using the discrete energy.
double rayleigh_quotient(const LaplacianSystem& sys, const Mat& section);

struct SpectralDecomposition {
  int n = 0;
  int k = 0;
  Vec eigenvalues;  // ascending
  Mat vectors;      // kN x count, M-orthonormal, flattened sections
  Vec mass;

  int count() const { return static_cast<int>(eigenvalues.size()); }
  Mat section(int m) const;
  double inner(const Mat& a, const Mat& b) const;
};

// Lowest `count` generalized eigenpairs of (K, M); count <= 0 means all.
SpectralDecomposition eigendecompose(const LaplacianSystem& sys, int count = -1);

enum class CutoffRule { threshold, order };
CutoffRule parse_cutoff_rule(const std::string& text);
std::string to_string(CutoffRule rule);

struct QProjector {
  int n = 0;
  int k = 0;
  int rank = 0;
  CutoffRule rule = CutoffRule::threshold;
  double cutoff = 0.5;
  Mat basis;  // kN x rank
  Vec mass;

  Mat apply(const Mat& section) const;
  Mat complement(const Mat& section) const { return section - apply(section); }
};

// Threshold cutoff (n-k)/2 = 1/2 for a one-dimensional fiber; the order rule
// cuts at lambda_{k+1}. Raises GapCollapseError when the cutoff lies within
// gap_tol of an eigenvalue cluster.
QProjector q_projector(const SpectralDecomposition& spec, CutoffRule rule = CutoffRule::threshold,
                       double gap_tol = 1e-6);

// Raises GapCollapseError unless rank(Q) = k.
void require_full_rank(const QProjector& q, const SpectralDecomposition& spec);

// E_a = Q(N_a), frame components; raises FrameDegeneracyError when the
// pointwise Gram determinant drops to 1e-8.
std::vector<Mat> quasi_parallel_frame(const NormalGeometry& geom, const QProjector& q);

// Weighted L2 norm of the unit-speed normal derivative of H.
double pmc_defect(const NormalGeometry& geom, const NormalConnection& conn);

}  // namespace qpmc
