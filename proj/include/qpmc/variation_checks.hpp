#pragma once

// First-variation formulas for the mean curvature, the normal gradient and
// Laplacian commutators, the projector Q and the QPMC quantity (1-Q)H, each
// compared against a centered finite-difference oracle along the family
// F_s = F_0 + s V.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "qpmc/qpmc_solver.hpp"

namespace qpmc {

// Base leaf, normal velocity V (frame components on the base) and the cached
// family members.
class VariationFamily {
 public:
  VariationFamily(MetricField m, SampledCurve base, Mat velocity, SpectralOptions opts = {},
                  std::vector<double> steps = {1e-3, 5e-4});

  const MetricField& metric() const { return metric_; }
  const SampledCurve& base_curve() const { return base_; }
  const LeafState& base() const { return base_state_; }
  const Mat& velocity() const { return velocity_; }              // frame components
  const Mat& velocity_coords() const { return velocity_coords_; }  // chart components
  const std::vector<double>& steps() const { return steps_; }
  const SpectralOptions& options() const { return opts_; }
  const std::vector<CurvatureData>& curvature() const { return curvature_; }

  SampledCurve curve(double s) const;
  const LeafState& member(double s) const;
  // Evaluates the members at +-steps concurrently; member() is not thread-safe.
  void prefetch(int threads) const;

  // Centered covariant s-derivative of a field sampled on the members
  // (chart components) at step s, returned as base frame components.
  Mat covariant_fd(const Mat& plus, const Mat& minus, const Mat& at_base, double s) const;

  // Extension s -> P_s(W_c + s Y_c), chart components on member s.
  Mat extension(const Mat& w_coords, const Mat& y_coords, double s) const;

 private:
  MetricField metric_;
  SampledCurve base_;
  Mat velocity_;
  Mat velocity_coords_;
  SpectralOptions opts_;
  std::vector<double> steps_;
  LeafState base_state_;
  std::vector<CurvatureData> curvature_;
  mutable std::map<double, LeafState> members_;
};

struct FormulaCheckReport {
  std::string formula;
  Mat analytic;
  std::vector<double> steps;
  std::vector<Mat> fd;
  std::vector<double> errors;  // weighted L2 distance between fd and analytic per step
  double order = 0.0;
  double scale = 0.0;
  double relative_error = 0.0;
  bool saturated = false;  // finest-step error at the roundoff floor
  bool pass = false;
  std::map<std::string, double> extras;
};

struct CheckThresholds {
  double min_order = 1.8;
  double max_relative_error = 1e-5;
  // Errors below roundoff_factor * eps * |op| * input / s_min are roundoff and
  // carry no order information.
  double roundoff_factor = 10.0;
};

// Analytic right-hand sides on the base leaf. Sections are frame components.
Mat mean_curvature_variation_rhs(const VariationFamily& fam);
Mat gradient_commutator_rhs(const VariationFamily& fam, const Mat& w);
Mat lambda_rhs(const VariationFamily& fam, const Mat& v, const Mat& w);
// Normal covariant s-derivative of the extension P_s(W_c + s Y_c) at s = 0.
Mat extension_derivative(const VariationFamily& fam, const Mat& w_coords, const Mat& y_coords);
Mat projector_variation_rhs(const VariationFamily& fam, const Mat& w_coords, const Mat& y_coords);
Mat qpmc_variation_rhs(const VariationFamily& fam);

FormulaCheckReport first_variation_H(const VariationFamily& fam, const CheckThresholds& t = {});
FormulaCheckReport gradient_commutator(const VariationFamily& fam, const Mat& w,
                                       const CheckThresholds& t = {});
FormulaCheckReport lambda_commutator(const VariationFamily& fam, const Mat& w,
                                     const CheckThresholds& t = {});
// W given by chart components W_c (projected to the normal bundle of every
// member); y_coords is the s-linear part of the extension.
FormulaCheckReport q_variation(const VariationFamily& fam, const Mat& w_coords,
                               const Mat& y_coords, const CheckThresholds& t = {});
FormulaCheckReport qpmc_variation(const VariationFamily& fam, const CheckThresholds& t = {},
                                  double qpmc_tol = 1e-8);

// Lambda computed by the finite-difference oracle with two different
// extensions of W; returns the weighted L2 difference for each step.
std::vector<double> extension_independence(const VariationFamily& fam, const Mat& w,
                                           const Mat& y_coords);

// max of |Lambda(aV1 + bV2, W) - a Lambda(V1,W) - b Lambda(V2,W)| and the
// same in W, relative to the size of the terms.
double lambda_bilinearity_defect(const VariationFamily& fam, const Mat& v1, const Mat& v2,
                                 const Mat& w1, const Mat& w2, double a, double b);

// Projector variation with W = N_a for each a, additionally compared with
// the finite-difference derivative of the quasi-parallel frame E_a.
std::vector<FormulaCheckReport> frame_variation_consistency(const VariationFamily& fam,
                                                            const CheckThresholds& t = {});

// Smooth seeded section (frame components) with sup norm `amplitude`.
Mat random_section(int n, int k, const FiberGrid& grid, double amplitude, std::uint64_t seed,
                   std::uint64_t counter, int max_mode = 2);

const std::vector<std::string>& formula_ids();

// Runs the requested formulas on one family. W and the second extension are
// drawn from the seed.
std::vector<FormulaCheckReport> run_variation_suite(const VariationFamily& fam,
                                                    const std::vector<std::string>& formulas,
                                                    std::uint64_t seed,
                                                    const CheckThresholds& t = {});

nlohmann::json report_to_json(const FormulaCheckReport& r, bool include_arrays = true);

}  // namespace qpmc
