#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qpmc/errors.hpp"
#include "qpmc/normal_spectrum.hpp"

using namespace qpmc;

namespace {

struct Setup {
  NormalGeometry geo;
  NormalConnection conn;
  LaplacianSystem sys;
  SpectralDecomposition spec;
};

Setup slice(const std::string& metric, Vec z, int n = 64, DiffMode mode = DiffMode::trig) {
  Setup s;
  s.geo = compute_geometry(parse_metric_spec(metric), GraphLeaf::slice(z, FiberGrid(n, mode)));
  s.conn = normal_connection(s.geo);
  s.sys = assemble_laplacian(s.geo, s.conn);
  s.spec = eigendecompose(s.sys);
  return s;
}

Vec zeros(int k) { return Vec::Zero(k); }

}  // namespace

TEST_CASE("flat cylinder spectrum is 0 (k times) then 1 (2k times)") {
  Setup s = slice("product:k=2", zeros(2));
  const double expect[] = {0, 0, 1, 1, 1, 1, 4, 4, 4, 4};
  for (int i = 0; i < 10; ++i) CHECK(std::abs(s.spec.eigenvalues[i] - expect[i]) < 1e-9);
  CHECK(s.spec.count() == 128);
}

TEST_CASE("holonomy shifts the spectrum to (m + alpha/2pi)^2") {
  const double alpha = 0.6, t = alpha / (2 * std::numbers::pi);
  Setup s = slice("twisted:alpha=0.6", zeros(2));
  std::vector<double> oracle{t * t, t * t, (1 - t) * (1 - t), (1 - t) * (1 - t),
                             (1 + t) * (1 + t), (1 + t) * (1 + t)};
  for (int i = 0; i < 6; ++i)
    CHECK(s.spec.eigenvalues[i] == doctest::Approx(oracle[i]).epsilon(1e-8));
}

TEST_CASE("warped slice spectrum scales with the fiber length") {
  Vec z(1);
  z << 0.4;
  Setup s = slice("warped:a=1", z);
  double c2 = std::pow(std::cosh(0.4), 2);
  CHECK(std::abs(s.spec.eigenvalues[0]) < 1e-10);
  CHECK(s.spec.eigenvalues[1] * c2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.spec.eigenvalues[3] * c2 == doctest::Approx(4.0).epsilon(1e-9));
  // warped slices have parallel mean curvature
  CHECK(pmc_defect(s.geo, s.conn) < 1e-12);
}

TEST_CASE("eigenvectors satisfy the discrete eigen-equation") {
  Mat u(64, 2);
  FiberGrid grid(64);
  for (int i = 0; i < 64; ++i) {
    u(i, 0) = 0.05 * std::cos(grid.node(i));
    u(i, 1) = 0.03 * std::sin(3 * grid.node(i));
  }
  MetricField m = parse_metric_spec("twisted:alpha=0.3+bump:eps=0.05");
  NormalGeometry geo = compute_geometry(m, GraphLeaf(Vec::Zero(2), u, grid));
  LaplacianSystem sys = assemble_laplacian(geo, normal_connection(geo));
  SpectralDecomposition sp = eigendecompose(sys);
  for (int j : {0, 1, 5}) {
    Mat v = sp.section(j);
    CHECK((apply_laplacian(sys, v) + sp.eigenvalues[j] * v).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(rayleigh_quotient(sys, v) == doctest::Approx(sp.eigenvalues[j]).epsilon(1e-10));
    CHECK(sp.inner(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(std::abs(sp.inner(sp.section(0), sp.section(1))) < 1e-12);
}

TEST_CASE("fd4 spectrum converges at order >= 3.5") {
  std::vector<double> err;
  for (int n : {64, 128, 256}) {
    Setup s = slice("product:k=2", zeros(2), n, DiffMode::fd4);
    err.push_back(std::abs(s.spec.eigenvalues[2] - 1.0));
  }
  CHECK(std::log2(err[0] / err[1]) >= 3.5);
  CHECK(std::log2(err[1] / err[2]) >= 3.5);
  CHECK(err[2] < 1e-3);
}

TEST_CASE("Q is an M-orthogonal projector of rank k under both rules") {
  Setup s = slice("twisted:alpha=0.2", zeros(2));
  for (CutoffRule rule : {CutoffRule::threshold, CutoffRule::order}) {
    QProjector q = q_projector(s.spec, rule);
    CHECK(q.rank == 2);
    Mat w = Mat::Random(64, 2);
    Mat qw = q.apply(w);
    CHECK((q.apply(qw) - qw).cwiseAbs().maxCoeff() < 1e-12);
    Mat w2 = Mat::Random(64, 2);
    CHECK(std::abs(s.geo.inner(q.apply(w), w2) - s.geo.inner(w, q.apply(w2))) < 1e-12);
    CHECK(std::abs(s.geo.inner(q.complement(w), qw)) < 1e-12);
  }
  CHECK(parse_cutoff_rule("order") == CutoffRule::order);
  CHECK_THROWS_AS(parse_cutoff_rule("median"), ConfigError);
}

TEST_CASE("quasi-parallel frame of a flat slice is the coordinate frame") {
  Setup s = slice("product:k=2", zeros(2));
  QProjector q = q_projector(s.spec);
  auto e = quasi_parallel_frame(s.geo, q);
  CHECK((e[0] - s.geo.coord_normal_section(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((e[1] - s.geo.coord_normal_section(1)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("half-turn holonomy collapses the gap") {
  Setup s = slice("twisted:alpha=3.141592653589793", zeros(2));
  for (int i = 0; i < 4; ++i) CHECK(s.spec.eigenvalues[i] == doctest::Approx(0.25).epsilon(1e-9));
  QProjector q = q_projector(s.spec, CutoffRule::threshold);
  CHECK(q.rank == 4);
  CHECK_THROWS_AS(require_full_rank(q, s.spec), GapCollapseError);
  CHECK_THROWS_AS(q_projector(s.spec, CutoffRule::order), GapCollapseError);
}

TEST_CASE("threshold cutoff on an eigenvalue raises gap collapse") {
  Vec z(1);
  z << std::acosh(std::sqrt(2.0));  // lambda_1 = 1/cosh^2 = 1/2
  Setup s = slice("warped:a=1", z);
  CHECK_THROWS_AS(q_projector(s.spec, CutoffRule::threshold), GapCollapseError);
  CHECK(q_projector(s.spec, CutoffRule::order).rank == 1);
}

TEST_CASE("connection matrices are skew") {
  FiberGrid grid(64);
  Vec z(2);
  z << 1.0, 0.5;
  MetricField m = parse_metric_spec("twisted:alpha=0.2,wave=0.3");
  NormalGeometry geo = compute_geometry(m, GraphLeaf::slice(z, grid));
  NormalConnection conn = normal_connection(geo);
  for (const Mat& w : conn.omega) CHECK((w + w.transpose()).norm() < 1e-14);
}
