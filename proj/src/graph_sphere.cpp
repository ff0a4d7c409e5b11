#include "qpmc/graph_sphere.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "qpmc/errors.hpp"
#include "qpmc/normal_spectrum.hpp"

namespace qpmc {

namespace {

constexpr double kMinGramDet = 1e-8;

}  // namespace

GraphLeaf::GraphLeaf(Vec z_, Mat u_, FiberGrid grid_, bool mean_zero_)
    : z(std::move(z_)), u(std::move(u_)), grid(grid_), mean_zero(mean_zero_) {
  if (u.rows() != grid.size() || u.cols() != z.size())
    throw ConfigError("leaf samples must be N x k with N = " + std::to_string(grid.size()) +
                      " and k = " + std::to_string(z.size()));
}

Mat GraphLeaf::positions() const { return u.rowwise() + z.transpose(); }

GraphLeaf GraphLeaf::slice(const Vec& z, const FiberGrid& grid) {
  return GraphLeaf(z, Mat::Zero(grid.size(), z.size()), grid, true);
}

SampledCurve SampledCurve::from_leaf(const GraphLeaf& leaf) {
  SampledCurve c{leaf.z, Mat::Zero(leaf.n(), leaf.k() + 1), leaf.grid};
  c.periodic.leftCols(leaf.k()) = leaf.u;
  return c;
}

Mat SampledCurve::points() const {
  Mat p = periodic;
  for (int i = 0; i < n(); ++i) {
    p.row(i).head(k()) += offset.transpose();
    p(i, k()) += grid.node(i);
  }
  return p;
}

Mat NormalGeometry::to_frame(const Mat& coords) const {
  Mat out(n, k);
  for (int i = 0; i < n; ++i)
    out.row(i) = (frame[i].transpose() * metric[i] * coords.row(i).transpose()).transpose();
  return out;
}

Mat NormalGeometry::to_coords(const Mat& section) const {
  Mat out(n, k + 1);
  for (int i = 0; i < n; ++i) out.row(i) = (frame[i] * section.row(i).transpose()).transpose();
  return out;
}

Mat NormalGeometry::coord_normal_section(int a) const {
  Mat out(n, k);
  for (int i = 0; i < n; ++i)
    out.row(i) = (frame[i].transpose() * metric[i] * coord_normals[i].col(a)).transpose();
  return out;
}

double NormalGeometry::inner(const Mat& a, const Mat& b) const {
  return (a.cwiseProduct(b).rowwise().sum().array() * weights.array()).sum();
}

double NormalGeometry::norm(const Mat& a) const { return std::sqrt(std::max(0.0, inner(a, a))); }

NormalGeometry compute_geometry(const MetricField& m, const SampledCurve& curve) {
  const int n = curve.n(), k = curve.k(), d = k + 1;
  if (m.dim_k() != k)
    throw ConfigError("metric has k = " + std::to_string(m.dim_k()) + " but the leaf has k = " +
                      std::to_string(k));
  NormalGeometry geo;
  geo.k = k;
  geo.n = n;
  geo.grid = curve.grid;
  geo.points = curve.points();
  geo.velocity = curve.grid.d1() * curve.periodic;
  geo.velocity.col(k).array() += 1.0;
  geo.acceleration = curve.grid.d2() * curve.periodic;
  geo.h.resize(n);
  geo.f.resize(n);
  geo.weights.resize(n);
  geo.metric.resize(n);
  geo.gamma.resize(n);
  geo.coord_normals.resize(n);
  geo.frame.resize(n);
  geo.gram.resize(n);
  geo.H.resize(n, k);
  geo.min_gram_det = std::numeric_limits<double>::infinity();
  const double dx = curve.grid.spacing();
  for (int i = 0; i < n; ++i) {
    Vec p = geo.points.row(i).transpose();
    MetricJet jet = m.jet(p, 1);
    const Mat& g = jet.g;
    geo.metric[i] = g;
    geo.gamma[i] = christoffel(jet);
    Vec x = geo.velocity.row(i).transpose();
    Vec gx = g * x;
    double h = x.dot(gx);
    if (!(h > 0.0)) throw DegenerateMetricError("leaf velocity has non-positive length");
    geo.h[i] = h;
    geo.f[i] = std::sqrt(h);
    geo.weights[i] = geo.f[i] * dx;
    Mat normals(d, k);
    for (int a = 0; a < k; ++a) normals.col(a) = Vec::Unit(d, a) - (gx[a] / h) * x;
    geo.coord_normals[i] = normals;
    Mat q = normals.transpose() * g * normals;
    geo.gram[i] = q;
    double det = q.determinant();
    if (det < geo.min_gram_det) {
      geo.min_gram_det = det;
      geo.worst_node = i;
    }
    Mat e = normals;
    for (int a = 0; a < k; ++a) {
      Vec v = e.col(a);
      for (int b = 0; b < a; ++b) v -= v.dot(g * e.col(b)) * e.col(b);
      double len = std::sqrt(std::max(0.0, v.dot(g * v)));
      e.col(a) = len > 0.0 ? Vec(v / len) : v;
    }
    geo.frame[i] = e;
    Vec accel = geo.acceleration.row(i).transpose() + geo.gamma[i].contract(x, x);
    geo.H.row(i) = (e.transpose() * g * accel).transpose() / h;
  }
  if (!(geo.min_gram_det > kMinGramDet)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "normal frame degenerate: det(q) = %.3e at node %d (leaf is no longer a graph)",
                  geo.min_gram_det, geo.worst_node);
    throw FrameDegeneracyError(buf, geo.worst_node, geo.min_gram_det);
  }
  return geo;
}

NormalGeometry compute_geometry(const MetricField& m, const GraphLeaf& leaf) {
  return compute_geometry(m, SampledCurve::from_leaf(leaf));
}

DeltaVerticalReport delta_vertical_report(const MetricField& m, const GraphLeaf& leaf,
                                          double r_bar) {
  if (!(r_bar > 0.0)) throw ConfigError("r_bar must be positive");
  NormalGeometry geo = compute_geometry(m, leaf);
  NormalConnection conn = normal_connection(geo);
  Mat grad = arclength_derivative(geo, conn, geo.H);
  Mat hess = arclength_derivative(geo, conn, grad);
  DeltaVerticalReport rep;
  rep.r_bar = r_bar;
  rep.sup_A = geo.H.rowwise().norm().maxCoeff();
  rep.sup_grad_A = grad.rowwise().norm().maxCoeff();
  rep.sup_hess_A = hess.rowwise().norm().maxCoeff();
  rep.delta_score = r_bar * rep.sup_A + r_bar * r_bar * rep.sup_grad_A +
                    r_bar * r_bar * r_bar * rep.sup_hess_A;
  rep.length = geo.weights.sum();
  rep.diameter = 0.5 * rep.length;
  rep.diameter_ratio = rep.diameter / r_bar;
  rep.diameter_ok = rep.diameter_ratio <= 10.0 * std::numbers::pi;
  return rep;
}

GradientBoundReport graph_gradient_bound(const MetricField& m, const GraphLeaf& leaf) {
  GradientBoundReport rep;
  Mat du = leaf.grid.d1() * leaf.u;
  rep.sup_du = du.rowwise().norm().maxCoeff();
  NormalGeometry geo = compute_geometry(m, leaf);
  rep.sup_A = geo.H.rowwise().norm().maxCoeff();
  const int d = leaf.k() + 1;
  for (int i = 0; i < leaf.n(); ++i) {
    MetricJet jet = m.jet(geo.points.row(i).transpose(), 1);
    double s = (jet.g - Mat::Identity(d, d)).cwiseAbs().maxCoeff();
    for (const auto& dg : jet.d1) s = std::max(s, dg.cwiseAbs().maxCoeff());
    rep.metric_c1 = std::max(rep.metric_c1, s);
  }
  double denom = rep.metric_c1 + rep.sup_A;
  rep.constant = denom > 0.0 ? rep.sup_du / denom : 0.0;
  return rep;
}

nlohmann::json leaf_to_json(const GraphLeaf& leaf) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < leaf.n(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int a = 0; a < leaf.k(); ++a) row.push_back(leaf.u(i, a));
    rows.push_back(row);
  }
  nlohmann::json z = nlohmann::json::array();
  for (int a = 0; a < leaf.k(); ++a) z.push_back(leaf.z[a]);
  return {{"schema_version", 1},
          {"k", leaf.k()},
          {"n", leaf.n()},
          {"diff_mode", to_string(leaf.grid.mode())},
          {"mean_zero", leaf.mean_zero},
          {"z", z},
          {"u", rows}};
}

GraphLeaf leaf_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != 1)
      throw ConfigError("leaf: unsupported schema_version");
    int k = doc.at("k").get<int>();
    int n = doc.at("n").get<int>();
    FiberGrid grid(n, parse_diff_mode(doc.at("diff_mode").get<std::string>()));
    Vec z(k);
    for (int a = 0; a < k; ++a) z[a] = doc.at("z").at(a).get<double>();
    const auto& rows = doc.at("u");
    if (static_cast<int>(rows.size()) != n) throw ConfigError("leaf: u must have n rows");
    Mat u(n, k);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(rows[i].size()) != k) throw ConfigError("leaf: u rows must have k entries");
      for (int a = 0; a < k; ++a) u(i, a) = rows[i][a].get<double>();
    }
    return GraphLeaf(z, u, grid, doc.value("mean_zero", true));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("leaf: ") + e.what());
  }
}

std::string leaf_to_csv(const GraphLeaf& leaf) {
  std::string out = "x";
  for (int a = 0; a < leaf.k(); ++a) out += ",u" + std::to_string(a + 1);
  out += "\n";
  char buf[40];
  for (int i = 0; i < leaf.n(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", leaf.grid.node(i));
    out += buf;
    for (int a = 0; a < leaf.k(); ++a) {
      std::snprintf(buf, sizeof buf, ",%.17g", leaf.u(i, a));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

GraphLeaf leaf_from_csv(const std::string& text, const Vec& z, DiffMode mode) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("leaf csv: empty input");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("leaf csv: bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(row.size()) != z.size() + 1)
      throw ConfigError("leaf csv: expected k + 1 columns");
    rows.push_back(row);
  }
  FiberGrid grid(static_cast<int>(rows.size()), mode);
  Mat u(grid.size(), z.size());
  for (int i = 0; i < grid.size(); ++i)
    for (int a = 0; a < z.size(); ++a) u(i, a) = rows[i][a + 1];
  bool mz = (u.colwise().mean().cwiseAbs().array() < 1e-12).all();
  return GraphLeaf(z, u, grid, mz);
}

Vec flatten(const Mat& section) {
  Vec out(section.size());
  const int k = static_cast<int>(section.cols());
  for (int i = 0; i < section.rows(); ++i)
    for (int a = 0; a < k; ++a) out[i * k + a] = section(i, a);
  return out;
}

Mat unflatten(const Vec& flat, int n, int k) {
  Mat out(n, k);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < k; ++a) out(i, a) = flat[i * k + a];
  return out;
}

}  // namespace qpmc
