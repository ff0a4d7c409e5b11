#include "qpmc/variation_checks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <thread>

#include "qpmc/errors.hpp"
#include "qpmc/random.hpp"

namespace qpmc {

namespace {

// g(A, B) per node for frame sections.
Vec dot(const Mat& a, const Mat& b) { return a.cwiseProduct(b).rowwise().sum(); }

Mat scale_rows(const Mat& s, const Vec& c) { return s.array().colwise() * c.array(); }

// (R(U, V) W)^perp in frame components; U, V, W in chart components.
Mat curvature_section(const NormalGeometry& geo, const std::vector<CurvatureData>& R,
                      const Mat& u, const Mat& v, const Mat& w) {
  Mat out(geo.n, geo.k + 1);
  for (int i = 0; i < geo.n; ++i)
    out.row(i) = R[i].apply(u.row(i).transpose(), v.row(i).transpose(), w.row(i).transpose())
                     .transpose();
  return geo.to_frame(out);
}

double laplacian_norm(const VariationFamily& fam) {
  return std::max(1.0, fam.base().spectrum.eigenvalues.maxCoeff());
}

Mat project(const NormalGeometry& geo, const Mat& coords) {
  // P(Z) = Z - g(Z, X)/h X
  Mat out = coords;
  for (int i = 0; i < geo.n; ++i) {
    Vec x = geo.velocity.row(i).transpose();
    double c = (coords.row(i) * geo.metric[i] * x)(0) / geo.h[i];
    out.row(i) -= c * x.transpose();
  }
  return out;
}

// op_norm bounds the amplification of the sampled operator behind the
// oracle; below factor * eps * op_norm * input / s the error is roundoff.
FormulaCheckReport finish(std::string id, const NormalGeometry& geo, Mat analytic,
                          std::vector<double> steps, std::vector<Mat> fd, double input_scale,
                          double op_norm, const CheckThresholds& t) {
  FormulaCheckReport r;
  r.formula = std::move(id);
  r.steps = std::move(steps);
  r.fd = std::move(fd);
  r.analytic = std::move(analytic);
  for (const Mat& f : r.fd) r.errors.push_back(geo.norm(f - r.analytic));
  r.scale = std::max({geo.norm(r.analytic), geo.norm(r.fd.back()), input_scale});
  const double e1 = r.errors.front(), e2 = r.errors.back();
  r.relative_error = r.scale > 0.0 ? e2 / r.scale : e2;
  r.order = (e1 > 0.0 && e2 > 0.0) ? std::log(e1 / e2) / std::log(r.steps.front() / r.steps.back())
                                   : std::numeric_limits<double>::infinity();
  const double floor = t.roundoff_factor * std::numeric_limits<double>::epsilon() * op_norm *
                       input_scale / r.steps.back();
  r.extras["roundoff_floor"] = floor;
  r.saturated = !(r.order >= t.min_order) && e2 <= floor;
  r.pass = r.relative_error <= t.max_relative_error && (r.saturated || r.order >= t.min_order);
  return r;
}

}  // namespace

VariationFamily::VariationFamily(MetricField m, SampledCurve base, Mat velocity,
                                 SpectralOptions opts, std::vector<double> steps)
    : metric_(std::move(m)),
      base_(std::move(base)),
      velocity_(std::move(velocity)),
      opts_(opts),
      steps_(std::move(steps)) {
  if (steps_.size() < 2) throw ConfigError("variation checks need at least two steps");
  for (std::size_t j = 0; j < steps_.size(); ++j) {
    if (!(steps_[j] > 0.0)) throw ConfigError("variation steps must be positive");
    if (j > 0 && !(steps_[j] < steps_[j - 1]))
      throw ConfigError("variation steps must be strictly decreasing");
  }
  if (velocity_.rows() != base_.n() || velocity_.cols() != base_.k())
    throw ConfigError("velocity has wrong shape");
  base_state_ = evaluate_leaf(metric_, base_, opts_);
  velocity_coords_ = base_state_.geometry.to_coords(velocity_);
  const NormalGeometry& geo = base_state_.geometry;
  curvature_.reserve(geo.n);
  for (int i = 0; i < geo.n; ++i) curvature_.push_back(riemann(metric_, geo.points.row(i).transpose()));
}

SampledCurve VariationFamily::curve(double s) const {
  SampledCurve c = base_;
  c.periodic += s * velocity_coords_;
  return c;
}

const LeafState& VariationFamily::member(double s) const {
  if (s == 0.0) return base_state_;
  auto it = members_.find(s);
  if (it != members_.end()) return it->second;
  return members_.emplace(s, evaluate_leaf(metric_, curve(s), opts_)).first->second;
}

void VariationFamily::prefetch(int threads) const {
  std::vector<double> todo;
  for (double s : steps_)
    for (double sign : {1.0, -1.0})
      if (!members_.count(sign * s)) todo.push_back(sign * s);
  std::vector<LeafState> states(todo.size());
  std::vector<std::exception_ptr> errors(todo.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      try {
        states[i] = evaluate_leaf(metric_, curve(todo[i]), opts_);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min<int>(threads, static_cast<int>(todo.size())); ++t)
    pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    members_.emplace(todo[i], std::move(states[i]));
  }
}

Mat VariationFamily::covariant_fd(const Mat& plus, const Mat& minus, const Mat& at_base,
                                  double s) const {
  const NormalGeometry& geo = base_state_.geometry;
  Mat d = (plus - minus) / (2.0 * s);
  for (int i = 0; i < geo.n; ++i)
    d.row(i) += geo.gamma[i].contract(velocity_coords_.row(i).transpose(), at_base.row(i).transpose())
                    .transpose();
  return geo.to_frame(d);
}

Mat VariationFamily::extension(const Mat& w_coords, const Mat& y_coords, double s) const {
  return project(member(s).geometry, w_coords + s * y_coords);
}

Mat mean_curvature_variation_rhs(const VariationFamily& fam) {
  const LeafState& st = fam.base();
  const NormalGeometry& geo = st.geometry;
  const Mat& v = fam.velocity();
  Mat out = apply_laplacian(st.laplacian, v);
  out += scale_rows(geo.H, dot(geo.H, v));
  Mat r = curvature_section(geo, fam.curvature(), fam.velocity_coords(), geo.velocity, geo.velocity);
  out += scale_rows(r, geo.h.cwiseInverse());
  return out;
}

Mat gradient_commutator_rhs(const VariationFamily& fam, const Mat& w) {
  const LeafState& st = fam.base();
  const NormalGeometry& geo = st.geometry;
  Mat dv = covariant_derivative(geo, st.connection, fam.velocity());
  Mat out = scale_rows(dv, dot(w, geo.H)) - scale_rows(geo.H, dot(w, dv));
  out += curvature_section(geo, fam.curvature(), fam.velocity_coords(), geo.velocity,
                           geo.to_coords(w));
  return out;
}

Mat lambda_rhs(const VariationFamily& fam, const Mat& v, const Mat& w) {
  const LeafState& st = fam.base();
  const NormalGeometry& geo = st.geometry;
  const auto& R = fam.curvature();
  auto d = [&](const Mat& s) { return arclength_derivative(geo, st.connection, s); };
  Mat tangent = scale_rows(geo.velocity, geo.f.cwiseInverse());
  Mat vc = geo.to_coords(v);
  Mat dw = d(w), dv = d(v), dh = d(geo.H);

  Mat out = scale_rows(d(dw), 2.0 * dot(v, geo.H));
  Mat bracket = scale_rows(dv, dot(w, geo.H)) - scale_rows(geo.H, dot(w, dv)) +
                curvature_section(geo, R, vc, tangent, geo.to_coords(w));
  out += d(bracket);
  out += scale_rows(dv, dot(dw, geo.H)) - scale_rows(geo.H, dot(dw, dv)) +
         curvature_section(geo, R, vc, tangent, geo.to_coords(dw));
  out += scale_rows(dw, dot(dh, v) + dot(geo.H, dv));
  return out;
}

Mat extension_derivative(const VariationFamily& fam, const Mat& w_coords, const Mat& y_coords) {
  const LeafState& st = fam.base();
  const NormalGeometry& geo = st.geometry;
  const Mat& vc = fam.velocity_coords();
  Mat c(geo.n, geo.k + 1);
  Vec along(geo.n);
  for (int i = 0; i < geo.n; ++i) {
    c.row(i) = (geo.gamma[i].contract(vc.row(i).transpose(), w_coords.row(i).transpose()) +
                y_coords.row(i).transpose())
                   .transpose();
    along[i] = (w_coords.row(i) * geo.metric[i] * geo.velocity.row(i).transpose())(0) / geo.h[i];
  }
  Mat dv = covariant_derivative(geo, st.connection, fam.velocity());
  return geo.to_frame(c) - scale_rows(dv, along);
}

namespace {

// c(p, m) = <Lambda(V, U_m), U_p> for every p and the low modes m.
Mat coupling(const VariationFamily& fam) {
  const LeafState& st = fam.base();
  const SpectralDecomposition& sp = st.spectrum;
  Mat c(sp.count(), st.q.rank);
  for (int m = 0; m < st.q.rank; ++m) {
    Vec lam = flatten(lambda_rhs(fam, fam.velocity(), sp.section(m)));
    c.col(m) = sp.vectors.transpose() * sp.mass.cwiseProduct(lam);
  }
  return c;
}

}  // namespace

Mat projector_variation_rhs(const VariationFamily& fam, const Mat& w_coords, const Mat& y_coords) {
  const LeafState& st = fam.base();
  const NormalGeometry& geo = st.geometry;
  const SpectralDecomposition& sp = st.spectrum;
  const int k = geo.k, n = geo.n, rank = st.q.rank;
  Mat w = geo.to_frame(project(geo, w_coords));
  Mat out = st.q.apply(extension_derivative(fam, w_coords, y_coords));
  Vec wf = flatten(w);
  Vec qw = flatten(st.q.apply(w));
  Vec cw = wf - qw;
  Mat cp = coupling(fam);
  Vec flat = Vec::Zero(n * k);
  Vec hv = dot(geo.H, fam.velocity());
  for (int m = 0; m < rank; ++m) {
    Vec um = sp.vectors.col(m);
    double qw_m = um.dot(sp.mass.cwiseProduct(qw));
    for (int p = rank; p < sp.count(); ++p) {
      double gap = sp.eigenvalues[p] - sp.eigenvalues[m];
      Vec up = sp.vectors.col(p);
      double cw_p = up.dot(sp.mass.cwiseProduct(cw));
      flat += (cw_p * cp(p, m) / gap) * um + (qw_m * cp(p, m) / gap) * up;
    }
    Mat cwm = unflatten(cw, n, k);
    double integral = (dot(cwm, sp.section(m)).cwiseProduct(hv).array() * geo.weights.array()).sum();
    flat -= integral * um;
  }
  out += unflatten(flat, n, k);
  return out;
}

Mat qpmc_variation_rhs(const VariationFamily& fam) {
  const LeafState& st = fam.base();
  const NormalGeometry& geo = st.geometry;
  const SpectralDecomposition& sp = st.spectrum;
  const int k = geo.k, n = geo.n, rank = st.q.rank;
  Mat out = st.q.complement(mean_curvature_variation_rhs(fam));
  Vec qh = flatten(st.q.apply(geo.H));
  Mat cp = coupling(fam);
  Vec flat = Vec::Zero(n * k);
  for (int m = 0; m < rank; ++m) {
    double qh_m = sp.vectors.col(m).dot(sp.mass.cwiseProduct(qh));
    for (int p = rank; p < sp.count(); ++p)
      flat += (qh_m * cp(p, m) / (sp.eigenvalues[p] - sp.eigenvalues[m])) * sp.vectors.col(p);
  }
  out -= unflatten(flat, n, k);
  return out;
}

FormulaCheckReport first_variation_H(const VariationFamily& fam, const CheckThresholds& t) {
  const NormalGeometry& geo = fam.base().geometry;
  std::vector<Mat> fd;
  Mat h0 = geo.to_coords(geo.H);
  for (double s : fam.steps()) {
    const NormalGeometry& gp = fam.member(s).geometry;
    const NormalGeometry& gm = fam.member(-s).geometry;
    fd.push_back(fam.covariant_fd(gp.to_coords(gp.H), gm.to_coords(gm.H), h0, s));
  }
  return finish("mean_curvature_variation", geo, mean_curvature_variation_rhs(fam), fam.steps(),
                std::move(fd), geo.norm(fam.velocity()), laplacian_norm(fam), t);
}

namespace {

// Chart components of op_s(W~_s) on member s, op acting on frame sections.
template <class Op>
Mat on_member(const VariationFamily& fam, double s, const Mat& w_coords, const Mat& y_coords,
              Op op) {
  const LeafState& st = fam.member(s);
  Mat w = st.geometry.to_frame(fam.extension(w_coords, y_coords, s));
  return st.geometry.to_coords(op(st, w));
}

Mat ds_extension(const VariationFamily& fam, double s, const Mat& w_coords, const Mat& y_coords) {
  return fam.covariant_fd(fam.extension(w_coords, y_coords, s),
                          fam.extension(w_coords, y_coords, -s),
                          fam.extension(w_coords, y_coords, 0.0), s);
}

template <class Op>
Mat fd_commutator(const VariationFamily& fam, double s, const Mat& w_coords, const Mat& y_coords,
                  Op op) {
  Mat outer = fam.covariant_fd(on_member(fam, s, w_coords, y_coords, op),
                               on_member(fam, -s, w_coords, y_coords, op),
                               on_member(fam, 0.0, w_coords, y_coords, op), s);
  return outer - op(fam.base(), ds_extension(fam, s, w_coords, y_coords));
}

Mat lambda_fd(const VariationFamily& fam, double s, const Mat& w_coords, const Mat& y_coords) {
  return fd_commutator(fam, s, w_coords, y_coords, [](const LeafState& st, const Mat& w) {
    return apply_laplacian(st.laplacian, w);
  });
}

}  // namespace

FormulaCheckReport gradient_commutator(const VariationFamily& fam, const Mat& w,
                                       const CheckThresholds& t) {
  const NormalGeometry& geo = fam.base().geometry;
  Mat wc = geo.to_coords(w);
  Mat y = Mat::Zero(wc.rows(), wc.cols());
  std::vector<Mat> fd;
  for (double s : fam.steps())
    fd.push_back(fd_commutator(fam, s, wc, y, [](const LeafState& st, const Mat& sec) {
      return covariant_derivative(st.geometry, st.connection, sec);
    }));
  return finish("gradient_commutator", geo, gradient_commutator_rhs(fam, w), fam.steps(),
                std::move(fd), geo.norm(fam.velocity()) * geo.norm(w),
                std::sqrt(laplacian_norm(fam)), t);
}

FormulaCheckReport lambda_commutator(const VariationFamily& fam, const Mat& w,
                                     const CheckThresholds& t) {
  const NormalGeometry& geo = fam.base().geometry;
  Mat wc = geo.to_coords(w);
  Mat y = Mat::Zero(wc.rows(), wc.cols());
  std::vector<Mat> fd;
  for (double s : fam.steps()) fd.push_back(lambda_fd(fam, s, wc, y));
  return finish("laplacian_commutator", geo, lambda_rhs(fam, fam.velocity(), w), fam.steps(),
                std::move(fd), geo.norm(fam.velocity()) * geo.norm(w), laplacian_norm(fam), t);
}

FormulaCheckReport q_variation(const VariationFamily& fam, const Mat& w_coords, const Mat& y_coords,
                               const CheckThresholds& t) {
  const NormalGeometry& geo = fam.base().geometry;
  auto q = [](const LeafState& st, const Mat& sec) { return st.q.apply(sec); };
  std::vector<Mat> fd;
  for (double s : fam.steps())
    fd.push_back(fam.covariant_fd(on_member(fam, s, w_coords, y_coords, q),
                                  on_member(fam, -s, w_coords, y_coords, q),
                                  on_member(fam, 0.0, w_coords, y_coords, q), s));
  Mat w = geo.to_frame(project(geo, w_coords));
  return finish("projector_variation", geo, projector_variation_rhs(fam, w_coords, y_coords),
                fam.steps(), std::move(fd), geo.norm(fam.velocity()) * geo.norm(w),
                laplacian_norm(fam), t);
}

FormulaCheckReport qpmc_variation(const VariationFamily& fam, const CheckThresholds& t,
                                  double qpmc_tol) {
  const LeafState& base = fam.base();
  const NormalGeometry& geo = base.geometry;
  if (base.report.complement_norm > qpmc_tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "base leaf is not QPMC: |(1-Q)H| = %.3e exceeds %.1e",
                  base.report.complement_norm, qpmc_tol);
    throw VerificationError(buf);
  }
  auto comp = [](const LeafState& st) { return st.geometry.to_coords(st.q.complement(st.geometry.H)); };
  std::vector<Mat> fd;
  for (double s : fam.steps())
    fd.push_back(fam.covariant_fd(comp(fam.member(s)), comp(fam.member(-s)), comp(base), s));
  Mat rhs = qpmc_variation_rhs(fam);
  Mat lap = apply_laplacian(base.laplacian, fam.velocity());
  FormulaCheckReport r = finish("qpmc_variation", geo, rhs, fam.steps(), std::move(fd),
                                geo.norm(fam.velocity()), laplacian_norm(fam), t);
  // On a flat leaf with H = 0 the right side collapses to the Laplacian of V.
  r.extras["laplacian_reduction_defect"] = geo.norm(rhs - lap) / std::max(geo.norm(lap), 1e-300);
  return r;
}

std::vector<double> extension_independence(const VariationFamily& fam, const Mat& w,
                                           const Mat& y_coords) {
  const NormalGeometry& geo = fam.base().geometry;
  Mat wc = geo.to_coords(w);
  Mat zero = Mat::Zero(wc.rows(), wc.cols());
  std::vector<double> out;
  for (double s : fam.steps())
    out.push_back(geo.norm(lambda_fd(fam, s, wc, zero) - lambda_fd(fam, s, wc, y_coords)));
  return out;
}

double lambda_bilinearity_defect(const VariationFamily& fam, const Mat& v1, const Mat& v2,
                                 const Mat& w1, const Mat& w2, double a, double b) {
  const NormalGeometry& geo = fam.base().geometry;
  Mat lv = lambda_rhs(fam, a * v1 + b * v2, w1);
  Mat rv = a * lambda_rhs(fam, v1, w1) + b * lambda_rhs(fam, v2, w1);
  Mat lw = lambda_rhs(fam, v1, a * w1 + b * w2);
  Mat rw = a * lambda_rhs(fam, v1, w1) + b * lambda_rhs(fam, v1, w2);
  double size = std::max({geo.norm(lv), geo.norm(rv), geo.norm(lw), geo.norm(rw), 1e-300});
  return std::max(geo.norm(lv - rv), geo.norm(lw - rw)) / size;
}

std::vector<FormulaCheckReport> frame_variation_consistency(const VariationFamily& fam,
                                                            const CheckThresholds& t) {
  const NormalGeometry& geo = fam.base().geometry;
  const int k = geo.k, n = geo.n;
  std::vector<FormulaCheckReport> out;
  Mat y = Mat::Zero(n, k + 1);
  for (int a = 0; a < k; ++a) {
    Mat da = Mat::Zero(n, k + 1);
    da.col(a).setOnes();
    FormulaCheckReport r = q_variation(fam, da, y, t);
    r.formula = "frame_variation_" + std::to_string(a + 1);
    // Same derivative taken from the quasi-parallel frame of each member.
    double worst = 0.0;
    for (std::size_t j = 0; j < fam.steps().size(); ++j) {
      double s = fam.steps()[j];
      auto e = [&](double ss) {
        const LeafState& st = fam.member(ss);
        return st.geometry.to_coords(st.quasi_frame[a]);
      };
      Mat fd = fam.covariant_fd(e(s), e(-s), e(0.0), s);
      worst = std::max(worst, geo.norm(fd - r.fd[j]) / std::max(r.scale, 1e-300));
    }
    r.extras["frame_mismatch"] = worst;
    out.push_back(std::move(r));
  }
  return out;
}

Mat random_section(int n, int k, const FiberGrid& grid, double amplitude, std::uint64_t seed,
                   std::uint64_t counter, int max_mode) {
  RandomStream rng(seed, counter);
  Mat out = Mat::Zero(n, k);
  for (int a = 0; a < k; ++a)
    for (int mode = 0; mode <= max_mode; ++mode) {
      double c = rng.uniform(-1.0, 1.0), s = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < n; ++i)
        out(i, a) += c * std::cos(mode * grid.node(i)) + (mode ? s * std::sin(mode * grid.node(i)) : 0.0);
    }
  double sup = out.cwiseAbs().maxCoeff();
  if (sup > 0.0) out *= amplitude / sup;
  return out;
}

const std::vector<std::string>& formula_ids() {
  static const std::vector<std::string> ids{"mean_curvature_variation", "gradient_commutator",
                                            "laplacian_commutator", "projector_variation",
                                            "qpmc_variation"};
  return ids;
}

std::vector<FormulaCheckReport> run_variation_suite(const VariationFamily& fam,
                                                    const std::vector<std::string>& formulas,
                                                    std::uint64_t seed, const CheckThresholds& t) {
  const NormalGeometry& geo = fam.base().geometry;
  Mat w = random_section(geo.n, geo.k, geo.grid, 0.5, seed, 101);
  Mat y = geo.to_coords(random_section(geo.n, geo.k, geo.grid, 0.5, seed, 102));
  std::vector<FormulaCheckReport> out;
  for (const std::string& id : formulas) {
    if (id == "mean_curvature_variation") {
      out.push_back(first_variation_H(fam, t));
    } else if (id == "gradient_commutator") {
      out.push_back(gradient_commutator(fam, w, t));
    } else if (id == "laplacian_commutator") {
      FormulaCheckReport r = lambda_commutator(fam, w, t);
      std::vector<double> diff = extension_independence(fam, w, y);
      r.extras["extension_dependence"] = diff.back() / std::max(r.scale, 1e-300);
      if (diff.size() >= 2 && diff.back() > 0.0)
        r.extras["extension_dependence_order"] =
            std::log(diff.front() / diff.back()) / std::log(fam.steps().front() / fam.steps().back());
      Mat v2 = random_section(geo.n, geo.k, geo.grid, 0.5, seed, 103);
      Mat w2 = random_section(geo.n, geo.k, geo.grid, 0.5, seed, 104);
      r.extras["bilinearity_defect"] =
          lambda_bilinearity_defect(fam, fam.velocity(), v2, w, w2, 0.7, -1.3);
      out.push_back(std::move(r));
    } else if (id == "projector_variation") {
      out.push_back(q_variation(fam, geo.to_coords(w), y, t));
    } else if (id == "qpmc_variation") {
      out.push_back(qpmc_variation(fam, t));
    } else {
      throw ConfigError("unknown formula '" + id + "'");
    }
  }
  return out;
}

nlohmann::json report_to_json(const FormulaCheckReport& r, bool include_arrays) {
  nlohmann::json j{{"formula", r.formula},
                   {"steps", r.steps},
                   {"errors", r.errors},
                   {"order", std::isfinite(r.order) ? nlohmann::json(r.order) : nlohmann::json()},
                   {"scale", r.scale},
                   {"relative_error", r.relative_error},
                   {"saturated", r.saturated},
                   {"pass", r.pass}};
  for (const auto& [key, value] : r.extras) j["extras"][key] = value;
  if (include_arrays) {
    auto rows = [](const Mat& m) {
      std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[i][c] = m(i, c);
      return out;
    };
    j["analytic"] = rows(r.analytic);
    nlohmann::json fd = nlohmann::json::array();
    for (const Mat& f : r.fd) fd.push_back(rows(f));
    j["fd"] = fd;
  }
  return j;
}

}  // namespace qpmc
