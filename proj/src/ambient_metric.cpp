#include "qpmc/ambient_metric.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "qpmc/dual.hpp"
#include "qpmc/errors.hpp"
#include "qpmc/random.hpp"

namespace qpmc {

namespace {

using D1 = ad::Dual<double>;
using D2 = ad::Dual<D1>;
using D3 = ad::Dual<D2>;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string tag(const std::string& name, const ParamMap& params) {
  std::string out = name;
  char sep = ':';
  for (const auto& [key, value] : params) {
    out += sep;
    out += key + "=" + fmt_double(value);
    sep = ',';
  }
  return out;
}

// Families provide `template <class S> void evaluate(const S* p, S* g) const`
// filling the full (row-major) matrix. Exact partials come from nested duals.
template <class Derived>
class AutoDiffFamily : public MetricFamily {
 public:
  Mat value(const Vec& p) const override {
    const int n = this->dim_k() + 1;
    std::vector<double> out(n * n);
    self().template evaluate<double>(p.data(), out.data());
    Mat g(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = out[i * n + j];
    return g;
  }

  MetricJet jet(const Vec& p, int order) const override {
    const int n = this->dim_k() + 1;
    MetricJet jet;
    jet.dim = n;
    jet.order = order;
    jet.g = value(p);
    if (order >= 1) {
      jet.d1.assign(n, Mat::Zero(n, n));
      std::vector<D1> q(n), out(n * n);
      for (int a = 0; a < n; ++a) {
        for (int i = 0; i < n; ++i) q[i] = D1(p[i], i == a ? 1.0 : 0.0);
        self().template evaluate<D1>(q.data(), out.data());
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) jet.d1[a](i, j) = out[i * n + j].d;
      }
    }
    if (order >= 2) {
      jet.d2.assign(n * n, Mat::Zero(n, n));
      std::vector<D2> q(n), out(n * n);
      for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
          for (int i = 0; i < n; ++i)
            q[i] = D2(D1(p[i], i == b ? 1.0 : 0.0), D1(i == a ? 1.0 : 0.0, 0.0));
          self().template evaluate<D2>(q.data(), out.data());
          Mat m(n, n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m(i, j) = out[i * n + j].d.d;
          jet.d2[a * n + b] = m;
          jet.d2[b * n + a] = m;
        }
      }
    }
    if (order >= 3) {
      jet.d3.assign(n * n * n, Mat::Zero(n, n));
      std::vector<D3> q(n), out(n * n);
      for (int a = 0; a < n; ++a) {
        for (int b = a; b < n; ++b) {
          for (int c = b; c < n; ++c) {
            for (int i = 0; i < n; ++i) {
              D2 inner(D1(p[i], i == c ? 1.0 : 0.0), D1(i == b ? 1.0 : 0.0, 0.0));
              D2 outer(D1(i == a ? 1.0 : 0.0, 0.0), D1(0.0, 0.0));
              q[i] = D3(inner, outer);
            }
            self().template evaluate<D3>(q.data(), out.data());
            Mat m(n, n);
            for (int i = 0; i < n; ++i)
              for (int j = 0; j < n; ++j) m(i, j) = out[i * n + j].d.d.d;
            const int idx[3] = {a, b, c};
            int perm[3] = {0, 1, 2};
            do {
              jet.d3[(idx[perm[0]] * n + idx[perm[1]]) * n + idx[perm[2]]] = m;
            } while (std::next_permutation(perm, perm + 3));
          }
        }
      }
    }
    return jet;
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

template <class S>
void fill_identity(S* g, int n) {
  for (int i = 0; i < n * n; ++i) g[i] = S(0.0);
  for (int i = 0; i < n; ++i) g[i * n + i] = S(1.0);
}

class ProductFamily : public AutoDiffFamily<ProductFamily> {
 public:
  explicit ProductFamily(int k) : k_(k) {}
  int dim_k() const override { return k_; }
  std::string provenance() const override { return tag("product", {{"k", double(k_)}}); }
  template <class S>
  void evaluate(const S*, S* g) const {
    fill_identity(g, k_ + 1);
  }

 private:
  int k_;
};

// dz^2 + cosh(a z)^2 dx^2
class WarpedFamily : public AutoDiffFamily<WarpedFamily> {
 public:
  explicit WarpedFamily(double a) : a_(a) {}
  int dim_k() const override { return 1; }
  std::string provenance() const override { return tag("warped", {{"a", a_}}); }
  template <class S>
  void evaluate(const S* p, S* g) const {
    using ad::cosh;
    using std::cosh;
    S phi = cosh(a_ * p[0]);
    g[0] = S(1.0);
    g[1] = S(0.0);
    g[2] = S(0.0);
    g[3] = phi * phi;
  }

 private:
  double a_;
};

// Pullback of the flat metric under (z, x) -> (R(rho(x)) z, x) with
// rho'(x) = alpha / 2pi + wave cos x. Flat, with fiber holonomy alpha.
class TwistedFamily : public AutoDiffFamily<TwistedFamily> {
 public:
  TwistedFamily(double alpha, double wave) : alpha_(alpha), wave_(wave) {}
  int dim_k() const override { return 2; }
  std::string provenance() const override {
    return tag("twisted", {{"alpha", alpha_}, {"wave", wave_}});
  }
  template <class S>
  void evaluate(const S* p, S* g) const {
    using ad::cos;
    using std::cos;
    S rate = alpha_ / (2.0 * std::numbers::pi) + wave_ * cos(p[2]);
    S j0 = -p[1];
    S j1 = p[0];
    fill_identity(g, 3);
    g[0 * 3 + 2] = g[2 * 3 + 0] = rate * j0;
    g[1 * 3 + 2] = g[2 * 3 + 1] = rate * j1;
    g[2 * 3 + 2] = 1.0 + rate * rate * (p[0] * p[0] + p[1] * p[1]);
  }

 private:
  double alpha_;
  double wave_;
};

// g0 + eps * psi(|z - c|^2 / width^2) * T(x), with psi(s) = exp(1 - 1/(1-s))
// on s < 1 and T a seeded symmetric trigonometric polynomial bounded by 1.
class BumpFamily : public AutoDiffFamily<BumpFamily> {
 public:
  BumpFamily(int k, double eps, std::vector<double> center, double width, std::uint64_t seed,
             int modes)
      : k_(k), eps_(eps), center_(std::move(center)), width_(width), seed_(seed), modes_(modes) {
    const int n = k + 1;
    RandomStream rng(seed, 1);
    cos_.assign(n * n, std::vector<double>(modes + 1, 0.0));
    sin_.assign(n * n, std::vector<double>(modes + 1, 0.0));
    const double norm = 1.0 / (2 * modes + 1);
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        for (int m = 0; m <= modes; ++m) {
          double c = rng.uniform(-1.0, 1.0) * norm;
          double s = m == 0 ? 0.0 : rng.uniform(-1.0, 1.0) * norm;
          cos_[i * n + j][m] = cos_[j * n + i][m] = c;
          sin_[i * n + j][m] = sin_[j * n + i][m] = s;
        }
      }
    }
  }
  int dim_k() const override { return k_; }
  std::string provenance() const override {
    ParamMap p{{"eps", eps_}, {"width", width_}, {"seed", double(seed_)},
               {"modes", double(modes_)}, {"k", double(k_)}};
    for (int a = 0; a < k_; ++a) p["c" + std::to_string(a + 1)] = center_[a];
    return tag("bump", p);
  }
  template <class S>
  void evaluate(const S* p, S* g) const {
    using ad::cos;
    using ad::exp;
    using ad::sin;
    using std::cos;
    using std::exp;
    using std::sin;
    const int n = k_ + 1;
    fill_identity(g, n);
    S s(0.0);
    for (int a = 0; a < k_; ++a) {
      S d = p[a] - center_[a];
      s += d * d;
    }
    s = s / (width_ * width_);
    if (!(s < 1.0)) return;
    S amp = eps_ * exp(1.0 - 1.0 / (1.0 - s));
    std::vector<S> cm(modes_ + 1, S(0.0)), sm(modes_ + 1, S(0.0));
    for (int m = 0; m <= modes_; ++m) {
      cm[m] = cos(double(m) * p[k_]);
      sm[m] = sin(double(m) * p[k_]);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        S t(0.0);
        for (int m = 0; m <= modes_; ++m)
          t += cos_[i * n + j][m] * cm[m] + sin_[i * n + j][m] * sm[m];
        g[i * n + j] += amp * t;
        if (j != i) g[j * n + i] = g[i * n + j];
      }
    }
  }

 private:
  int k_;
  double eps_;
  std::vector<double> center_;
  double width_;
  std::uint64_t seed_;
  int modes_;
  std::vector<std::vector<double>> cos_, sin_;
};

struct UserTerm {
  int i = 0, j = 0;
  double coef = 0.0;
  std::vector<int> z_pow;
  int x_mode = 0;
  bool sine = false;
};

class UserFamily : public AutoDiffFamily<UserFamily> {
 public:
  UserFamily(int k, std::vector<UserTerm> terms, std::string label)
      : k_(k), terms_(std::move(terms)), label_(std::move(label)) {}
  int dim_k() const override { return k_; }
  std::string provenance() const override { return label_; }
  template <class S>
  void evaluate(const S* p, S* g) const {
    using ad::cos;
    using ad::sin;
    using std::cos;
    using std::sin;
    const int n = k_ + 1;
    fill_identity(g, n);
    for (const auto& t : terms_) {
      S v(t.coef);
      for (int a = 0; a < k_; ++a)
        for (int r = 0; r < t.z_pow[a]; ++r) v = v * p[a];
      if (t.sine)
        v = v * sin(double(t.x_mode) * p[k_]);
      else if (t.x_mode != 0)
        v = v * cos(double(t.x_mode) * p[k_]);
      g[t.i * n + t.j] += v;
      if (t.i != t.j) g[t.j * n + t.i] += v;
    }
  }

 private:
  int k_;
  std::vector<UserTerm> terms_;
  std::string label_;
};

// g = g0 + sum_i (g_i - g0)
class SumFamily : public MetricFamily {
 public:
  explicit SumFamily(std::vector<std::shared_ptr<const MetricFamily>> parts)
      : parts_(std::move(parts)) {}
  int dim_k() const override { return parts_.front()->dim_k(); }
  std::string provenance() const override {
    std::string out;
    for (const auto& p : parts_) out += (out.empty() ? "" : "+") + p->provenance();
    return out;
  }
  bool exact_partials() const override {
    for (const auto& p : parts_)
      if (!p->exact_partials()) return false;
    return true;
  }
  Mat value(const Vec& p) const override {
    const int n = dim_k() + 1;
    Mat g = Mat::Identity(n, n);
    for (const auto& part : parts_) g += part->value(p) - Mat::Identity(n, n);
    return g;
  }
  MetricJet jet(const Vec& p, int order) const override {
    const int n = dim_k() + 1;
    MetricJet total = parts_.front()->jet(p, order);
    for (std::size_t i = 1; i < parts_.size(); ++i) {
      MetricJet j = parts_[i]->jet(p, order);
      total.g += j.g - Mat::Identity(n, n);
      for (std::size_t a = 0; a < total.d1.size(); ++a) total.d1[a] += j.d1[a];
      for (std::size_t a = 0; a < total.d2.size(); ++a) total.d2[a] += j.d2[a];
      for (std::size_t a = 0; a < total.d3.size(); ++a) total.d3[a] += j.d3[a];
    }
    return total;
  }

 private:
  std::vector<std::shared_ptr<const MetricFamily>> parts_;
};

double take(ParamMap& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  double v = it->second;
  params.erase(it);
  return v;
}

int take_int(ParamMap& params, const std::string& key, int fallback, int lo) {
  double v = take(params, key, fallback);
  if (v != std::floor(v) || v < lo)
    throw ConfigError(key + " must be an integer >= " + std::to_string(lo));
  return static_cast<int>(v);
}

void reject_leftovers(const std::string& name, const ParamMap& params) {
  if (params.empty()) return;
  std::string keys;
  for (const auto& kv : params) keys += (keys.empty() ? "" : ", ") + kv.first;
  throw ConfigError("unknown parameter(s) for metric '" + name + "': " + keys);
}

void check_positive_definite(const Mat& g, const char* where) {
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success || !g.allFinite())
    throw DegenerateMetricError(std::string("metric is not positive definite at ") + where);
}

double parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v))
    throw ConfigError("invalid number '" + text + "' for " + what);
  return v;
}

}  // namespace

MetricField::MetricField(std::shared_ptr<const MetricFamily> family)
    : family_(std::move(family)), offset_(Vec::Zero(family_->dim_k())) {}

int MetricField::dim_k() const { return family_ ? family_->dim_k() : 0; }

Vec MetricField::shifted(const Vec& p) const {
  Vec q = p;
  q.head(offset_.size()) += offset_;
  return q;
}

Mat MetricField::eval(const Vec& p) const { return family_->value(shifted(p)); }

MetricJet MetricField::jet(const Vec& p, int order) const {
  if (fd_step_ > 0.0) return fd_jet(p, order);
  return family_->jet(shifted(p), order);
}

std::string MetricField::provenance() const {
  std::string out = family_->provenance();
  if (fd_step_ > 0.0) out += " [fd=" + fmt_double(fd_step_) + "]";
  if (offset_.size() > 0 && offset_.cwiseAbs().maxCoeff() > 0.0) {
    out += " [shift=";
    for (int a = 0; a < offset_.size(); ++a) out += (a ? "," : "") + fmt_double(offset_[a]);
    out += "]";
  }
  return out;
}

MetricField MetricField::with_finite_differences(double step) const {
  if (!(step > 0.0)) throw ConfigError("fd step must be positive");
  MetricField out = *this;
  out.fd_step_ = step;
  return out;
}

MetricJet MetricField::fd_jet(const Vec& p, int order) const {
  const int n = dim();
  const double h = fd_step_;
  MetricJet jet;
  jet.dim = n;
  jet.order = order;
  jet.g = eval(p);
  auto at = [&](const Vec& q) { return eval(q); };
  auto unit = [&](int a) { return Vec::Unit(n, a); };
  auto second = [&](const Vec& q, int a, int b) -> Mat {
    if (a == b)
      return (at(q + h * unit(a)) - 2.0 * at(q) + at(q - h * unit(a))) / (h * h);
    return (at(q + h * unit(a) + h * unit(b)) - at(q + h * unit(a) - h * unit(b)) -
            at(q - h * unit(a) + h * unit(b)) + at(q - h * unit(a) - h * unit(b))) /
           (4.0 * h * h);
  };
  if (order >= 1) {
    jet.d1.resize(n);
    for (int a = 0; a < n; ++a)
      jet.d1[a] = (at(p + h * unit(a)) - at(p - h * unit(a))) / (2.0 * h);
  }
  if (order >= 2) {
    jet.d2.resize(n * n);
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) jet.d2[a * n + b] = jet.d2[b * n + a] = second(p, a, b);
  }
  if (order >= 3) {
    jet.d3.resize(n * n * n);
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) {
          Mat m = (second(p + h * unit(c), a, b) - second(p - h * unit(c), a, b)) / (2.0 * h);
          jet.d3[(c * n + a) * n + b] = m;
          jet.d3[(c * n + b) * n + a] = m;
          jet.d3[(a * n + c) * n + b] = m;
          jet.d3[(b * n + c) * n + a] = m;
          jet.d3[(a * n + b) * n + c] = m;
          jet.d3[(b * n + a) * n + c] = m;
        }
  }
  return jet;
}

Vec ChristoffelData::contract(const Vec& u, const Vec& v) const {
  Vec out = Vec::Zero(dim);
  for (int c = 0; c < dim; ++c) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) {
      if (u[a] == 0.0) continue;
      for (int b = 0; b < dim; ++b) s += (*this)(c, a, b) * u[a] * v[b];
    }
    out[c] = s;
  }
  return out;
}

Vec CurvatureData::apply(const Vec& u, const Vec& v, const Vec& w) const {
  Vec out = Vec::Zero(dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) {
      double uv = u[a] * v[b];
      if (uv == 0.0) continue;
      for (int c = 0; c < dim; ++c) {
        double uvw = uv * w[c];
        if (uvw == 0.0) continue;
        for (int d = 0; d < dim; ++d) out[d] += uvw * mixed(a, b, c, d);
      }
    }
  return out;
}

ChristoffelData christoffel(const MetricJet& jet) {
  const int n = jet.dim;
  check_positive_definite(jet.g, "Christoffel evaluation point");
  Mat ginv = jet.g.inverse();
  ChristoffelData out;
  out.dim = n;
  out.values.assign(n * n * n, 0.0);
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) {
        double s = 0.0;
        for (int d = 0; d < n; ++d)
          s += ginv(c, d) * (jet.d1[a](d, b) + jet.d1[b](d, a) - jet.d1[d](a, b));
        out(c, a, b) = out(c, b, a) = 0.5 * s;
      }
  return out;
}

ChristoffelData christoffel(const MetricField& m, const Vec& p) {
  return christoffel(m.jet(p, 1));
}

CurvatureData riemann(const MetricJet& jet) {
  const int n = jet.dim;
  ChristoffelData gamma = christoffel(jet);
  Mat ginv = jet.g.inverse();
  // dgamma[e][(c*n+a)*n+b] = d_e Gamma^c_{ab}
  std::vector<std::vector<double>> dgamma(n, std::vector<double>(n * n * n, 0.0));
  for (int e = 0; e < n; ++e) {
    Mat dginv = -ginv * jet.d1[e] * ginv;
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b) {
          double s = 0.0;
          for (int d = 0; d < n; ++d) {
            double first = jet.d1[a](d, b) + jet.d1[b](d, a) - jet.d1[d](a, b);
            double second = jet.partial(e, a)(d, b) + jet.partial(e, b)(d, a) -
                            jet.partial(e, d)(a, b);
            s += dginv(c, d) * first + ginv(c, d) * second;
          }
          dgamma[e][(c * n + a) * n + b] = dgamma[e][(c * n + b) * n + a] = 0.5 * s;
        }
  }
  auto dg = [&](int e, int c, int a, int b) { return dgamma[e][(c * n + a) * n + b]; };
  CurvatureData out;
  out.dim = n;
  out.mixed_values.assign(n * n * n * n, 0.0);
  out.lowered_values.assign(n * n * n * n, 0.0);
  for (int al = 0; al < n; ++al)
    for (int be = 0; be < n; ++be)
      for (int ga = 0; ga < n; ++ga)
        for (int de = 0; de < n; ++de) {
          double s = dg(al, de, be, ga) - dg(be, de, al, ga);
          for (int ep = 0; ep < n; ++ep)
            s += gamma(de, al, ep) * gamma(ep, be, ga) - gamma(de, be, ep) * gamma(ep, al, ga);
          out.mixed_values[out.index(al, be, ga, de)] = s;
        }
  for (int al = 0; al < n; ++al)
    for (int be = 0; be < n; ++be)
      for (int ga = 0; ga < n; ++ga)
        for (int de = 0; de < n; ++de) {
          double s = 0.0;
          for (int ep = 0; ep < n; ++ep) s += out.mixed(al, be, ga, ep) * jet.g(ep, de);
          out.lowered_values[out.index(al, be, ga, de)] = s;
        }
  return out;
}

CurvatureData riemann(const MetricField& m, const Vec& p) { return riemann(m.jet(p, 2)); }

double sectional_curvature(const MetricField& m, const Vec& p, const Vec& u, const Vec& v) {
  MetricJet jet = m.jet(p, 2);
  const Mat& g = jet.g;
  double uu = u.dot(g * u), vv = v.dot(g * v), uv = u.dot(g * v);
  double area = uu * vv - uv * uv;
  if (!(area > 1e-14 * uu * vv)) throw ConfigError("sectional curvature: degenerate plane");
  CurvatureData r = riemann(jet);
  return r.apply(u, v, v).dot(g * u) / area;
}

MetricField translate_pullback(const MetricField& m, const Vec& z0) {
  if (z0.size() != m.dim_k())
    throw ConfigError("translation has " + std::to_string(z0.size()) + " components, expected " +
                      std::to_string(m.dim_k()));
  MetricField out = m;
  out.offset_ = m.offset_ + z0;
  return out;
}

MetricField builtin_metric(const std::string& name, const ParamMap& params_in) {
  ParamMap params = params_in;
  std::shared_ptr<const MetricFamily> family;
  if (name == "product") {
    int k = take_int(params, "k", 2, 1);
    family = std::make_shared<ProductFamily>(k);
  } else if (name == "warped") {
    double a = take(params, "a", 1.0);
    if (!std::isfinite(a)) throw ConfigError("warped: a must be finite");
    family = std::make_shared<WarpedFamily>(a);
  } else if (name == "twisted") {
    double alpha = take(params, "alpha", 0.2);
    double wave = take(params, "wave", 0.0);
    family = std::make_shared<TwistedFamily>(alpha, wave);
  } else if (name == "bump") {
    int k = take_int(params, "k", 2, 1);
    double eps = take(params, "eps", 0.01);
    double width = take(params, "width", 1.5);
    int seed = take_int(params, "seed", 7, 0);
    int modes = take_int(params, "modes", 2, 0);
    std::vector<double> center(k);
    for (int a = 0; a < k; ++a) center[a] = take(params, "c" + std::to_string(a + 1), 0.0);
    if (eps < 0.0) throw ConfigError("bump: eps must be >= 0");
    if (eps >= 0.5) throw ConfigError("bump: eps must be < 0.5 to keep the metric definite");
    if (!(width > 0.0)) throw ConfigError("bump: width must be positive");
    family = std::make_shared<BumpFamily>(k, eps, center, width, std::uint64_t(seed), modes);
  } else if (name == "berger" || name == "berger_pullback") {
    throw ConfigError("'" + name +
                      "' is not available as a metric on the cylinder; Berger curvature is "
                      "exposed through the BergerMetric class only");
  } else {
    throw ConfigError("unknown metric family '" + name +
                      "' (expected product, warped, bump, twisted or file:<path>)");
  }
  reject_leftovers(name, params);
  return MetricField(family);
}

MetricField metric_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw ConfigError("user metric: top level must be an object");
    static const std::set<std::string> top_keys{"schema_version", "k", "terms", "name"};
    for (const auto& [key, _] : doc.items())
      if (!top_keys.count(key)) throw ConfigError("user metric: unknown key '" + key + "'");
    if (doc.value("schema_version", 0) != 1)
      throw ConfigError("user metric: schema_version must be 1");
    int k = doc.at("k").get<int>();
    if (k < 1) throw ConfigError("user metric: k must be >= 1");
    std::vector<UserTerm> terms;
    static const std::set<std::string> term_keys{"i", "j", "coef", "z_pow", "x_mode", "x_kind"};
    for (const auto& t : doc.value("terms", nlohmann::json::array())) {
      for (const auto& [key, _] : t.items())
        if (!term_keys.count(key)) throw ConfigError("user metric term: unknown key '" + key + "'");
      UserTerm term;
      term.i = t.at("i").get<int>();
      term.j = t.at("j").get<int>();
      term.coef = t.at("coef").get<double>();
      term.z_pow = t.value("z_pow", std::vector<int>(k, 0));
      term.x_mode = t.value("x_mode", 0);
      std::string kind = t.value("x_kind", std::string("cos"));
      if (term.i < 0 || term.j < 0 || term.i > k || term.j > k)
        throw ConfigError("user metric term: index out of range");
      if (static_cast<int>(term.z_pow.size()) != k)
        throw ConfigError("user metric term: z_pow must have k entries");
      for (int e : term.z_pow)
        if (e < 0) throw ConfigError("user metric term: negative power");
      if (term.x_mode < 0) throw ConfigError("user metric term: x_mode must be >= 0");
      if (kind != "cos" && kind != "sin")
        throw ConfigError("user metric term: x_kind must be cos or sin");
      term.sine = kind == "sin";
      terms.push_back(term);
    }
    std::string label = "user:" + doc.value("name", std::string("unnamed"));
    return MetricField(std::make_shared<UserFamily>(k, std::move(terms), label));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("user metric: ") + e.what());
  }
}

MetricField parse_metric_spec(const std::string& spec) {
  if (spec.empty()) throw ConfigError("empty metric spec");
  std::vector<std::string> parts;
  {
    std::string cur;
    for (char ch : spec) {
      if (ch == '+') {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    parts.push_back(cur);
  }
  double fd = 0.0;
  std::vector<std::shared_ptr<const MetricFamily>> families;
  for (const auto& part : parts) {
    auto colon = part.find(':');
    std::string name = part.substr(0, colon);
    std::string rest = colon == std::string::npos ? "" : part.substr(colon + 1);
    if (name.empty()) throw ConfigError("malformed metric spec '" + spec + "'");
    if (name == "file") {
      std::ifstream in(rest);
      if (!in) throw ConfigError("cannot open metric file '" + rest + "'");
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("metric file '" + rest + "': " + e.what());
      }
      families.push_back(metric_from_json(doc).family());
      continue;
    }
    ParamMap params;
    std::stringstream ss(rest);
    std::string item;
    while (!rest.empty() && std::getline(ss, item, ',')) {
      auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("malformed parameter '" + item + "' in metric spec (expected key=value)");
      std::string key = item.substr(0, eq);
      double value = parse_number(item.substr(eq + 1), "metric parameter " + key);
      if (key == "fd") {
        if (!(value > 0.0)) throw ConfigError("fd step must be positive");
        fd = value;
        continue;
      }
      if (params.count(key)) throw ConfigError("duplicate metric parameter '" + key + "'");
      params[key] = value;
    }
    families.push_back(builtin_metric(name, params).family());
  }
  for (const auto& f : families)
    if (f->dim_k() != families.front()->dim_k())
      throw ConfigError("metric sum mixes different k");
  MetricField out = families.size() == 1
                        ? MetricField(families.front())
                        : MetricField(std::make_shared<SumFamily>(std::move(families)));
  if (fd > 0.0) out = out.with_finite_differences(fd);
  return out;
}

DeviationReport metric_deviation(const MetricField& m, double lo, double hi, double spacing,
                                 int nx) {
  if (!(spacing > 0.0) || !(hi >= lo) || nx < 1)
    throw ConfigError("deviation: invalid sampling box");
  const int k = m.dim_k(), n = k + 1;
  const int per_axis = static_cast<int>(std::floor((hi - lo) / spacing + 1e-9)) + 1;
  DeviationReport rep;
  const double h4 = 1e-3;
  auto sup = [](const std::vector<Mat>& ms) {
    double s = 0.0;
    for (const auto& a : ms) s = std::max(s, a.cwiseAbs().maxCoeff());
    return s;
  };
  std::vector<int> idx(k, 0);
  long total = 1;
  for (int a = 0; a < k; ++a) total *= per_axis;
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    Vec p(n);
    for (int a = 0; a < k; ++a) {
      p[a] = lo + spacing * static_cast<double>(rem % per_axis);
      rem /= per_axis;
    }
    for (int i = 0; i < nx; ++i) {
      p[k] = 2.0 * std::numbers::pi * i / nx;
      MetricJet jet = m.jet(p, 3);
      rep.sup_by_order[0] =
          std::max(rep.sup_by_order[0], (jet.g - Mat::Identity(n, n)).cwiseAbs().maxCoeff());
      rep.sup_by_order[1] = std::max(rep.sup_by_order[1], sup(jet.d1));
      rep.sup_by_order[2] = std::max(rep.sup_by_order[2], sup(jet.d2));
      rep.sup_by_order[3] = std::max(rep.sup_by_order[3], sup(jet.d3));
      for (int e = 0; e < n; ++e) {
        MetricJet plus = m.jet(p + h4 * Vec::Unit(n, e), 3);
        MetricJet minus = m.jet(p - h4 * Vec::Unit(n, e), 3);
        for (std::size_t c = 0; c < jet.d3.size(); ++c)
          rep.sup_by_order[4] = std::max(
              rep.sup_by_order[4], ((plus.d3[c] - minus.d3[c]) / (2.0 * h4)).cwiseAbs().maxCoeff());
      }
    }
  }
  for (double v : rep.sup_by_order) rep.total += v;
  return rep;
}

std::vector<CatalogEntry> metric_catalog() {
  return {
      {"product", "k=2", "flat product metric dz.dz + dx^2 on R^k x S^1"},
      {"warped", "a=1", "k=1 warped product dz^2 + cosh(a z)^2 dx^2; every slice has parallel H"},
      {"bump", "eps=0.01,k=2,width=1.5,seed=7,modes=2,c1=0,...",
       "g0 + eps * compactly supported bump in z times seeded trig polynomial in x"},
      {"twisted", "alpha=0.2,wave=0",
       "k=2 flat metric pulled back by a fiber-dependent rotation; normal holonomy alpha on "
       "the central fiber"},
      {"file:<path>", "",
       "JSON coefficient table: g0 + sum coef * z^pow * cos|sin(mode x) at entry (i,j)"},
      {"berger", "kappa",
       "left-invariant Berger metric on SU(2); curvature checks only (library API)"},
  };
}

BergerMetric::BergerMetric(double kappa) : kappa_(kappa) {
  if (!(kappa > 0.0)) throw ConfigError("berger: kappa must be positive");
  gram_ = Eigen::Vector3d(1.0 / (kappa * kappa), 1.0 / (kappa * kappa), 1.0).asDiagonal();
}

Eigen::Vector3d BergerMetric::bracket(const Eigen::Vector3d& u, const Eigen::Vector3d& v) const {
  return 2.0 * u.cross(v);
}

// Koszul formula for left-invariant fields:
// 2 g(nabla_u v, w) = g([u,v],w) - g([v,w],u) + g([w,u],v).
Eigen::Vector3d BergerMetric::covariant(const Eigen::Vector3d& u,
                                        const Eigen::Vector3d& v) const {
  Eigen::Vector3d rhs;
  for (int l = 0; l < 3; ++l) {
    Eigen::Vector3d w = Eigen::Vector3d::Unit(l);
    rhs[l] = 0.5 * (bracket(u, v).dot(gram_ * w) - bracket(v, w).dot(gram_ * u) +
                    bracket(w, u).dot(gram_ * v));
  }
  return gram_.ldlt().solve(rhs);
}

Eigen::Vector3d BergerMetric::curvature(const Eigen::Vector3d& u, const Eigen::Vector3d& v,
                                        const Eigen::Vector3d& w) const {
  return covariant(u, covariant(v, w)) - covariant(v, covariant(u, w)) -
         covariant(bracket(u, v), w);
}

double BergerMetric::sectional_curvature(const Eigen::Vector3d& u,
                                         const Eigen::Vector3d& v) const {
  double uu = u.dot(gram_ * u), vv = v.dot(gram_ * v), uv = u.dot(gram_ * v);
  double area = uu * vv - uv * uv;
  if (!(area > 1e-14 * uu * vv)) throw ConfigError("sectional curvature: degenerate plane");
  return curvature(u, v, v).dot(gram_ * u) / area;
}

double BergerMetric::sectional_curvature(int i, int j) const {
  if (i < 1 || i > 3 || j < 1 || j > 3 || i == j)
    throw ConfigError("berger: frame indices must be distinct values in 1..3");
  return sectional_curvature(Eigen::Vector3d::Unit(i - 1), Eigen::Vector3d::Unit(j - 1));
}

}  // namespace qpmc
