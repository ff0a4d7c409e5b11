#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qpmc {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  ok = 0,
  config = 2,
  geometry = 3,
  gap_collapse = 4,
  divergence = 5,
  verification = 6,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode code() const = 0;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::config; }
};

// Non positive-definite or singular metric matrix at a queried point.
class DegenerateMetricError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::geometry; }
};

// A normal frame lost rank: the leaf left the graphical regime, or the
// quasi-parallel frame is no longer pointwise independent.
class FrameDegeneracyError : public Error {
 public:
  FrameDegeneracyError(const std::string& what, int node, double det)
      : Error(what), node_(node), det_(det) {}
  ExitCode code() const override { return ExitCode::geometry; }
  int node() const { return node_; }
  double determinant() const { return det_; }

 private:
  int node_;
  double det_;
};

// The spectral cutoff defining Q falls inside an eigenvalue cluster, or Q
// does not have rank k.
class GapCollapseError : public Error {
 public:
  GapCollapseError(const std::string& what, std::vector<double> eigenvalues, int rank)
      : Error(what), eigenvalues_(std::move(eigenvalues)), rank_(rank) {}
  ExitCode code() const override { return ExitCode::gap_collapse; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  int rank() const { return rank_; }

 private:
  std::vector<double> eigenvalues_;
  int rank_;
};

class EigenSolverError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::gap_collapse; }
};

// Newton iteration failed. Carries the last iterate (node-major, N*k values).
class SolverDivergenceError : public Error {
 public:
  SolverDivergenceError(const std::string& what, std::vector<double> iterate)
      : Error(what), iterate_(std::move(iterate)) {}
  ExitCode code() const override { return ExitCode::divergence; }
  const std::vector<double>& iterate() const { return iterate_; }

 private:
  std::vector<double> iterate_;
};

class VerificationError : public Error {
 public:
  using Error::Error;
  ExitCode code() const override { return ExitCode::verification; }
};

}  // namespace qpmc
