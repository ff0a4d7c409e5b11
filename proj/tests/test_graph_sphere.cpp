#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qpmc/errors.hpp"
#include "qpmc/graph_sphere.hpp"

using namespace qpmc;

TEST_CASE("flat slice has trivial extrinsic geometry") {
  FiberGrid grid(32);
  Vec z(2);
  z << 0.3, -0.7;
  NormalGeometry geo = compute_geometry(parse_metric_spec("product:k=2"), GraphLeaf::slice(z, grid));
  CHECK(geo.H.cwiseAbs().maxCoeff() < 1e-14);
  CHECK((geo.h.array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK(geo.weights.sum() == doctest::Approx(2 * std::numbers::pi));
  for (int i = 0; i < geo.n; ++i) CHECK((geo.frame[i].topRows(2) - Mat::Identity(2, 2)).norm() < 1e-15);
  CHECK(geo.min_gram_det == doctest::Approx(1.0));
}

TEST_CASE("curvature of a flat graph matches u'' / (1 + u'^2)^(3/2)") {
  FiberGrid grid(64);
  const double amp = 0.4;
  Mat u(64, 1);
  for (int i = 0; i < 64; ++i) u(i, 0) = amp * std::sin(grid.node(i));
  GraphLeaf leaf(Vec::Zero(1), u, grid);
  NormalGeometry geo = compute_geometry(parse_metric_spec("product:k=1"), leaf);
  double worst = 0.0;
  for (int i = 0; i < 64; ++i) {
    double x = grid.node(i), d1 = amp * std::cos(x), d2 = -amp * std::sin(x);
    worst = std::max(worst, std::abs(geo.H(i, 0) - d2 / std::pow(1 + d1 * d1, 1.5)));
  }
  CHECK(worst < 1e-11);
}

TEST_CASE("warped slices have H = -a tanh(a z)") {
  FiberGrid grid(32);
  for (double z0 : {-0.8, 0.0, 0.5}) {
    Vec z(1);
    z << z0;
    NormalGeometry geo = compute_geometry(parse_metric_spec("warped:a=1.5"), GraphLeaf::slice(z, grid));
    CHECK((geo.H.array() + 1.5 * std::tanh(1.5 * z0)).abs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("frame and coordinate conversions are inverse on normal sections") {
  FiberGrid grid(32);
  Mat u(32, 2);
  for (int i = 0; i < 32; ++i) {
    u(i, 0) = 0.1 * std::cos(grid.node(i));
    u(i, 1) = 0.05 * std::sin(2 * grid.node(i));
  }
  MetricField m = parse_metric_spec("twisted:alpha=0.5+bump:eps=0.1");
  NormalGeometry geo = compute_geometry(m, GraphLeaf(Vec::Zero(2), u, grid));
  Mat s = Mat::Random(32, 2);
  CHECK((geo.to_frame(geo.to_coords(s)) - s).cwiseAbs().maxCoeff() < 1e-13);
  // tangent vectors have no frame components
  CHECK(geo.to_frame(geo.velocity).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("delta-vertical report on a flat slice") {
  FiberGrid grid(32);
  DeltaVerticalReport r = delta_vertical_report(parse_metric_spec("product:k=2"),
                                                GraphLeaf::slice(Vec::Zero(2), grid));
  CHECK(r.sup_A < 1e-14);
  CHECK(r.length == doctest::Approx(2 * std::numbers::pi));
  CHECK(r.diameter == doctest::Approx(std::numbers::pi));
  CHECK(r.diameter_ok);
  CHECK_THROWS_AS(delta_vertical_report(parse_metric_spec("product:k=2"),
                                        GraphLeaf::slice(Vec::Zero(2), grid), 0.0),
                  ConfigError);
}

TEST_CASE("gradient bound vanishes on flat slices") {
  FiberGrid grid(32);
  GradientBoundReport r = graph_gradient_bound(parse_metric_spec("product:k=2"),
                                               GraphLeaf::slice(Vec::Zero(2), grid));
  CHECK(r.sup_du == 0.0);
  CHECK(r.constant == 0.0);
}

TEST_CASE("leaf serialization round-trips exactly") {
  FiberGrid grid(16, DiffMode::fd4);
  Mat u = Mat::Random(16, 2) * 0.1;
  Vec z(2);
  z << 0.1 / 3.0, -2.0 / 7.0;
  GraphLeaf leaf(z, u, grid, false);
  GraphLeaf back = leaf_from_json(nlohmann::json::parse(leaf_to_json(leaf).dump()));
  CHECK(back.grid == grid);
  CHECK(back.z == z);
  CHECK(back.u == u);
  CHECK(back.mean_zero == false);
  GraphLeaf csv = leaf_from_csv(leaf_to_csv(leaf), z, DiffMode::fd4);
  CHECK(csv.u == u);

  nlohmann::json bad = leaf_to_json(leaf);
  bad["schema_version"] = 7;
  CHECK_THROWS_AS(leaf_from_json(bad), ConfigError);
}

TEST_CASE("flatten is node-major") {
  Mat s(3, 2);
  s << 1, 2, 3, 4, 5, 6;
  Vec f = flatten(s);
  CHECK(f[1] == 2.0);
  CHECK(f[2] == 3.0);
  CHECK(unflatten(f, 3, 2) == s);
}
