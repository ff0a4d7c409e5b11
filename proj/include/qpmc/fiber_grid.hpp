#pragma once

// Uniform periodic grid on the fiber circle with its differentiation,
// midpoint interpolation and inverse-Laplacian operators.

#include <memory>
#include <string>

#include <Eigen/Dense>

namespace qpmc {

enum class DiffMode { fd4, trig };

DiffMode parse_diff_mode(const std::string& text);
std::string to_string(DiffMode mode);

struct GridOperators {
  Eigen::MatrixXd d1;        // node -> node first derivative
  Eigen::MatrixXd d2;        // node -> node second derivative
  Eigen::MatrixXd mid;       // node -> midpoint x_i + dx/2 interpolation
  Eigen::MatrixXd mid_d1;    // node -> midpoint first derivative
  Eigen::MatrixXd lap_pinv;  // trigonometric inverse of d^2/dx^2 on mean-zero data
};

class FiberGrid {
 public:
  explicit FiberGrid(int n = 256, DiffMode mode = DiffMode::trig);

  int size() const { return n_; }
  DiffMode mode() const { return mode_; }
  double spacing() const;
  double node(int i) const;

  const Eigen::MatrixXd& d1() const { return ops_->d1; }
  const Eigen::MatrixXd& d2() const { return ops_->d2; }
  const Eigen::MatrixXd& mid() const { return ops_->mid; }
  const Eigen::MatrixXd& mid_d1() const { return ops_->mid_d1; }
  const Eigen::MatrixXd& lap_pinv() const { return ops_->lap_pinv; }

  // Trigonometric interpolation of node samples (columns) at an arbitrary x.
  Eigen::RowVectorXd interpolate(const Eigen::MatrixXd& samples, double x) const;

  bool operator==(const FiberGrid& o) const { return n_ == o.n_ && mode_ == o.mode_; }

 private:
  int n_;
  DiffMode mode_;
  std::shared_ptr<const GridOperators> ops_;
};

}  // namespace qpmc
