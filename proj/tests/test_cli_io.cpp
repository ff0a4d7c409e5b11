#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qpmc/cli_io.hpp"
#include "qpmc/errors.hpp"

using namespace qpmc;

namespace {

using Args = std::vector<std::string>;

int call(const Args& args, std::string* out = nullptr, std::string* err = nullptr) {
  std::ostringstream o, e;
  int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

}  // namespace

TEST_CASE("valid configurations") {
  RunConfig a = parse_config({"spectrum", "--metric", "product:k=2", "--n", "256"});
  CHECK(a.subcommand == "spectrum");
  CHECK(a.n == 256);
  CHECK(a.mode == DiffMode::trig);
  RunConfig b = parse_config({"solve-leaf", "--metric", "bump:eps=0.01,seed=7", "--z", "0,0"});
  CHECK(b.z == std::vector<double>{0.0, 0.0});
  CHECK(b.solver.tol_residual == 1e-10);
  RunConfig c = parse_config({"solve-leaf", "--metric", "warped", "--z", "0.5", "--jacobian", "fd",
                              "--diff-mode", "fd4", "--tol", "1e-9", "--rule", "order"});
  CHECK(c.solver.jacobian == JacobianMode::fd_jacobian);
  CHECK(c.mode == DiffMode::fd4);
  CHECK(c.solver.spectral.rule == CutoffRule::order);
}

TEST_CASE("invalid configurations are rejected with a one-line message") {
  CHECK_THROWS_WITH_AS(parse_config({"foliate", "--metric", "warped", "--dz", "0"}),
                       doctest::Contains("dz must be positive"), ConfigError);
  CHECK_THROWS_AS(parse_config({"frobnicate"}), ConfigError);
  CHECK_THROWS_AS(parse_config({}), ConfigError);
  CHECK_THROWS_AS(parse_config({"spectrum"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"spectrum", "--metric", "product", "--n", "100"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"spectrum", "--metric", "product", "--bogus", "1"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"spectrum", "--metric", "prodct"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"solve-leaf", "--metric", "product:k=2", "--z", "1,2,3"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"solve-leaf", "--metric", "product", "--tol", "-1"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"solve-leaf", "--metric", "product", "--damping", "2"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"foliate", "--metric", "product", "--box", "1,0"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"foliate", "--metric", "product"}), ConfigError);
  CHECK_THROWS_AS(parse_config({"verify-variations", "--metric", "product", "--formulas", "x"}),
                  ConfigError);
  std::string err;
  CHECK(call({"foliate", "--metric", "warped", "--dz", "0"}, nullptr, &err) == 2);
  CHECK(err.find('\n') == err.size() - 1);
}

TEST_CASE("config files are strict and flags take precedence") {
  auto path = std::filesystem::temp_directory_path() / "qpmc_cfg.toml";
  std::ofstream(path) << "[spectrum]\nmetric = \"product:k=2\"\nn = 32\ncount = 4\n";
  RunConfig a = parse_config({"--config", path.string(), "spectrum", "--n", "64"});
  CHECK(a.metric == "product:k=2");
  CHECK(a.n == 64);
  CHECK(a.count == 4);
  std::ofstream(path) << "[spectrum]\nmetric = \"product:k=2\"\nfrobnicate = 3\n";
  CHECK_THROWS_AS(parse_config({"--config", path.string(), "spectrum"}), ConfigError);
}

TEST_CASE("spectrum payload") {
  RunRecord r = run(parse_config({"spectrum", "--metric", "product:k=2", "--n", "64", "--count", "6"}));
  auto ev = r.payload["eigenvalues"].get<std::vector<double>>();
  REQUIRE(ev.size() == 6u);
  const double expect[] = {0, 0, 1, 1, 1, 1};
  for (int i = 0; i < 6; ++i) CHECK(std::abs(ev[i] - expect[i]) < 1e-9);
  CHECK(r.payload["rank_Q"] == 2);
  CHECK(r.payload["cutoff_rule"] == "threshold");
  CHECK(r.payload["gap"]["lambda_k1"].get<double>() == doctest::Approx(1.0));
  nlohmann::json doc = r.to_json();
  for (const char* key : {"schema_version", "version", "config", "input_hashes", "timing", "payload"})
    CHECK(doc.contains(key));
}

TEST_CASE("identical configs give byte-identical payloads") {
  Args solve{"solve-leaf", "--metric", "bump:eps=0.01,seed=7", "--z", "0.2,0.1", "--n", "32"};
  RunRecord a = run(parse_config(solve)), b = run(parse_config(solve));
  CHECK(a.payload.dump() == b.payload.dump());
  Args fol{"foliate", "--metric", "bump:eps=0.01", "--box", "-0.5,0.5", "--dz", "0.5", "--n", "16"};
  RunRecord c = run(parse_config(fol)), d = run(parse_config(fol));
  CHECK(c.payload.dump() == d.payload.dump());
  CHECK(c.exit_code == 0);
}

TEST_CASE("exit codes of the command-line entry point") {
  CHECK(call({"examples"}) == 0);
  CHECK(call({"--help"}) == 0);
  CHECK(call({"solve-leaf", "--metric", "twisted:alpha=3.14159", "--n", "32"}) == 4);
  CHECK(call({"solve-leaf", "--metric", "bump:eps=0.01", "--z", "0.3,0.3", "--n", "32", "--max-iters",
              "1", "--tol", "1e-15"}) == 5);
  CHECK(call({"verify-variations", "--metric", "bump:eps=0.05", "--n", "32", "--formulas",
              "qpmc_variation"}) == 6);
  auto metric = std::filesystem::temp_directory_path() / "qpmc_indefinite.json";
  std::ofstream(metric) << R"({"schema_version": 1, "k": 1,
    "terms": [{"i": 1, "j": 1, "coef": -2.0, "z_pow": [2]}]})";
  CHECK(call({"spectrum", "--metric", "file:" + metric.string(), "--z", "1.0", "--n", "32"}) == 3);
}

TEST_CASE("core emits CSV on stdout and solve-leaf writes its artifact") {
  std::string out;
  CHECK(call({"core", "--metric", "product:k=2", "--box", "0,0.5", "--dz", "0.5", "--n", "16"}, &out) == 0);
  CHECK(out.rfind("z1,z2,", 0) == 0);
  auto leaf = std::filesystem::temp_directory_path() / "qpmc_leaf.json";
  CHECK(call({"solve-leaf", "--metric", "bump:eps=0.01", "--z", "0,0", "--n", "32", "--out",
              leaf.string()}) == 0);
  std::string spec;
  CHECK(call({"spectrum", "--metric", "bump:eps=0.01", "--leaf", leaf.string(), "--count", "3"}, &spec) == 0);
  CHECK(nlohmann::json::parse(spec)["payload"]["n"] == 32);
  CHECK(call({"verify-variations", "--metric", "bump:eps=0.01", "--leaf", leaf.string(), "--formulas",
              "qpmc_variation"}) == 0);
}

TEST_CASE("content hash is stable") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
}
