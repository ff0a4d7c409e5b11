#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "qpmc/errors.hpp"
#include "qpmc/foliation.hpp"

using namespace qpmc;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

const Foliation& small_bump() {
  static const Foliation f = sweep(parse_metric_spec("bump:eps=0.01"), vec2(-1, -1), vec2(1, 1), 0.5,
                                   SolverConfig{}, FiberGrid(32));
  return f;
}

}  // namespace

TEST_CASE("sweep lattice layout") {
  const Foliation& f = small_bump();
  CHECK(f.shape == std::vector<int>{5, 5});
  CHECK(f.points.size() == 25u);
  for (int i = 0; i < 25; ++i) {
    CHECK(f.index_of(f.multi_index(i)) == i);
    CHECK(f.solved[i]);
    CHECK(f.leaves[i].residual_history.back() <= 1e-10);
  }
  CHECK((f.points[0] - vec2(-1, -1)).norm() == 0.0);
  CHECK((f.points[1] - vec2(-1, -0.5)).norm() == 0.0);
  CHECK(f.failures.empty());
}

TEST_CASE("bump foliation map is a diffeomorphism on the sampled box") {
  DiffeoReport d = diffeo_check(small_bump());
  CHECK(d.pass);
  CHECK(d.disjoint);
  CHECK(d.min_margin >= 0.45);
  CHECK(d.c1_deviation < 0.05);
  CHECK(d.pairs_checked > 0);
}

TEST_CASE("leaf through a point") {
  const Foliation& f = small_bump();
  Vec p(3);
  p << 0.13, -0.21, 1.0;
  LeafSolution s = leaf_through_point(f, p);
  // the graph passes through p at the fiber coordinate of p
  Eigen::RowVectorXd at = s.leaf.grid.interpolate(s.leaf.u, p[2]);
  CHECK(std::abs(s.leaf.z[0] + at[0] - p[0]) < 1e-10);
  CHECK(std::abs(s.leaf.z[1] + at[1] - p[1]) < 1e-10);
}

TEST_CASE("flat foliation core is the parameter lattice") {
  Foliation f = sweep(parse_metric_spec("product:k=2"), vec2(-0.5, -0.5), vec2(0.5, 0.5), 0.5,
                      SolverConfig{}, FiberGrid(16));
  auto core = center_of_mass_core(f);
  CHECK(core.size() == 9u);
  for (const auto& c : core) {
    CHECK((c.centroid.head(2) - c.z).norm() < 1e-14);
  }
  std::string csv = core_to_csv(core);
  std::istringstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 10);
}

TEST_CASE("foliation directory round-trip") {
  const Foliation& f = small_bump();
  auto dir = std::filesystem::temp_directory_path() / "qpmc_foliation_test";
  std::filesystem::remove_all(dir);
  write_foliation(f, dir.string());
  Foliation g = read_foliation(dir.string());
  CHECK(g.points.size() == f.points.size());
  for (std::size_t i = 0; i < f.points.size(); ++i) CHECK(g.leaves[i].leaf.u == f.leaves[i].leaf.u);
  CHECK(foliation_index_json(g).dump() == foliation_index_json(f).dump());
  CHECK_THROWS_AS(read_foliation((dir / "missing").string()), ConfigError);
}

TEST_CASE("sweep is independent of the thread count") {
  MetricField m = parse_metric_spec("bump:eps=0.01");
  setenv("QPMC_THREADS", "1", 1);
  Foliation a = sweep(m, vec2(-0.5, 0), vec2(0.5, 0.5), 0.5, SolverConfig{}, FiberGrid(16));
  setenv("QPMC_THREADS", "4", 1);
  Foliation b = sweep(m, vec2(-0.5, 0), vec2(0.5, 0.5), 0.5, SolverConfig{}, FiberGrid(16));
  for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.leaves[i].leaf.u == b.leaves[i].leaf.u);
  setenv("QPMC_THREADS", "zero", 1);
  CHECK_THROWS_AS(worker_count(), ConfigError);
  unsetenv("QPMC_THREADS");
}

TEST_CASE("sweep argument validation") {
  MetricField m = parse_metric_spec("product:k=2");
  CHECK_THROWS_AS(sweep(m, vec2(0, 0), vec2(1, 1), 0.0, SolverConfig{}, FiberGrid(16)), ConfigError);
  CHECK_THROWS_AS(sweep(m, vec2(1, 0), vec2(0, 1), 0.5, SolverConfig{}, FiberGrid(16)), ConfigError);
}
