#pragma once

// Riemannian metrics on the cylinder R^k x S^1 in the global chart
// (z^1, ..., z^k, x) with x periodic of period 2*pi. Index k is the fiber
// direction; indices 0..k-1 are the Euclidean directions.

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace qpmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Metric matrix and its coordinate partial derivatives up to `order`.
struct MetricJet {
  int dim = 0;
  int order = 0;
  Mat g;
  std::vector<Mat> d1;  // d1[a] = d_a g
  std::vector<Mat> d2;  // d2[a * dim + b] = d_a d_b g
  std::vector<Mat> d3;  // d3[(a * dim + b) * dim + c]

  const Mat& partial(int a) const { return d1[a]; }
  const Mat& partial(int a, int b) const { return d2[a * dim + b]; }
  const Mat& partial(int a, int b, int c) const { return d3[(a * dim + b) * dim + c]; }
};

class MetricFamily {
 public:
  virtual ~MetricFamily() = default;
  virtual int dim_k() const = 0;
  virtual std::string provenance() const = 0;
  virtual Mat value(const Vec& p) const = 0;
  // True when partials are exact (closed form / automatic differentiation).
  virtual bool exact_partials() const { return true; }
  virtual MetricJet jet(const Vec& p, int order) const = 0;
};

// Immutable handle on a metric family, optionally precomposed with a
// translation in the Euclidean factor and with finite-difference partials.
class MetricField {
 public:
  MetricField() = default;
  explicit MetricField(std::shared_ptr<const MetricFamily> family);

  int dim_k() const;
  int dim() const { return dim_k() + 1; }

  Mat eval(const Vec& p) const;
  MetricJet jet(const Vec& p, int order) const;

  const Vec& offset() const { return offset_; }
  bool uses_finite_differences() const { return fd_step_ > 0.0; }
  double fd_step() const { return fd_step_; }
  std::string provenance() const;
  const std::shared_ptr<const MetricFamily>& family() const { return family_; }

  // Same metric with centered order-2 finite-difference partials.
  MetricField with_finite_differences(double step = 1e-4) const;

 private:
  friend MetricField translate_pullback(const MetricField& m, const Vec& z0);

  Vec shifted(const Vec& p) const;
  MetricJet fd_jet(const Vec& p, int order) const;

  std::shared_ptr<const MetricFamily> family_;
  Vec offset_;
  double fd_step_ = 0.0;
};

// Gamma^c_{ab}, stored as values[(c * dim + a) * dim + b].
struct ChristoffelData {
  int dim = 0;
  std::vector<double> values;

  double operator()(int up, int a, int b) const { return values[(up * dim + a) * dim + b]; }
  double& operator()(int up, int a, int b) { return values[(up * dim + a) * dim + b]; }
  // Vector Gamma^c_{ab} u^a v^b.
  Vec contract(const Vec& u, const Vec& v) const;
};

// Coordinate Riemann tensor with R(U,V)W = nabla_U nabla_V W - nabla_V nabla_U W
// - nabla_[U,V] W.
//   mixed(a, b, c, d):   R(d_a, d_b) d_c = mixed(a,b,c,d) d_d
//   lowered(a, b, c, d): g(R(d_a, d_b) d_c, d_d)
struct CurvatureData {
  int dim = 0;
  std::vector<double> mixed_values;
  std::vector<double> lowered_values;

  std::size_t index(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * dim + b) * dim + c) * dim + d;
  }
  double mixed(int a, int b, int c, int d) const { return mixed_values[index(a, b, c, d)]; }
  double lowered(int a, int b, int c, int d) const { return lowered_values[index(a, b, c, d)]; }
  // Coordinate components of R(U,V)W.
  Vec apply(const Vec& u, const Vec& v, const Vec& w) const;
};

ChristoffelData christoffel(const MetricJet& jet);
ChristoffelData christoffel(const MetricField& m, const Vec& p);
CurvatureData riemann(const MetricJet& jet);
CurvatureData riemann(const MetricField& m, const Vec& p);

// K(U,V) = g(R(U,V)V,U) / (|U|^2 |V|^2 - g(U,V)^2).
double sectional_curvature(const MetricField& m, const Vec& p, const Vec& u, const Vec& v);

// (z, x) -> m(z + z0, x). Composes exactly: offsets add.
MetricField translate_pullback(const MetricField& m, const Vec& z0);

using ParamMap = std::map<std::string, double>;

// Builtin families: product, warped, bump, twisted. Throws ConfigError on
// unknown names, unknown keys or invalid values.
MetricField builtin_metric(const std::string& name, const ParamMap& params);

// `name:key=value,...` terms joined by '+'; a sum adds the perturbations of
// each term to the product metric. `file:<path>` loads a JSON coefficient
// table. The generic key `fd=<step>` switches to finite-difference partials.
MetricField parse_metric_spec(const std::string& spec);

// User metric g0 + sum of polynomial-in-z times trigonometric-in-x terms.
MetricField metric_from_json(const nlohmann::json& doc);

struct DeviationReport {
  std::array<double, 5> sup_by_order{};  // sampled sup |d^j (g - g0)|, j = 0..4
  double total = 0.0;                    // sum over orders
};

// Sampled C^4 deviation from the product metric on the box [lo, hi]^k with
// the given z spacing and nx fiber samples. Order 4 uses centered differences
// of the exact third partials.
DeviationReport metric_deviation(const MetricField& m, double lo, double hi, double spacing,
                                 int nx = 32);

struct CatalogEntry {
  std::string name;
  std::string params;
  std::string description;
};
std::vector<CatalogEntry> metric_catalog();

// Left-invariant Berger metric g_kappa = kappa^-2 (w1^2 + w2^2) + w3^2 on
// SU(2), expressed in a left-invariant frame E_1, E_2, E_3 with
// [E_i, E_j] = 2 eps_ijk E_k. Only used for curvature checks.
class BergerMetric {
 public:
  explicit BergerMetric(double kappa);

  double kappa() const { return kappa_; }
  // Metric on the Lie algebra in the E basis.
  const Eigen::Matrix3d& gram() const { return gram_; }
  // R(U,V)W for left-invariant fields given in the E basis.
  Eigen::Vector3d curvature(const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                            const Eigen::Vector3d& w) const;
  double sectional_curvature(const Eigen::Vector3d& u, const Eigen::Vector3d& v) const;
  double sectional_curvature(int i, int j) const;

 private:
  Eigen::Vector3d bracket(const Eigen::Vector3d& u, const Eigen::Vector3d& v) const;
  Eigen::Vector3d covariant(const Eigen::Vector3d& u, const Eigen::Vector3d& v) const;

  double kappa_;
  Eigen::Matrix3d gram_;
};

}  // namespace qpmc
