#pragma once

// Command-line configuration, dispatch and the JSON run record.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpmc/qpmc_solver.hpp"

namespace qpmc {

std::string version();

struct RunConfig {
  std::string subcommand;
  std::string metric;
  int n = 256;
  DiffMode mode = DiffMode::trig;
  SolverConfig solver;
  std::string out;     // artifact path (leaf JSON, foliation dir, core CSV)
  std::string record;  // run record path; stdout when empty
  std::uint64_t seed = 7;
  std::string version;

  std::vector<double> z;
  std::vector<double> box;  // lo,hi for every axis, or one lo,hi pair for all
  double dz = 0.5;
  double r_bar = 1.0;
  std::string leaf;  // leaf or leaf-solution JSON
  std::string init;  // initial guess for solve-leaf
  std::string from;  // foliation directory for core
  bool solve = false;
  std::vector<std::string> formulas;
  int count = 12;

  // Checks numerics and the metric spec; throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
};

// Raised by parse_config for --help; carries the help text.
struct HelpRequested : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// argv without the program name. Flags override values from --config.
RunConfig parse_config(const std::vector<std::string>& args);

struct RunRecord {
  nlohmann::json config;
  nlohmann::json payload;
  nlohmann::json input_hashes;
  std::string version;
  double seconds = 0.0;
  int exit_code = 0;
  std::string text;  // CSV for core when no --out is given

  nlohmann::json to_json() const;
};

RunRecord run(const RunConfig& cfg);

// Full command-line entry point: parsing, dispatch, output and exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// 64-bit FNV-1a as 16 hex digits.
std::string content_hash(const std::string& bytes);

}  // namespace qpmc
