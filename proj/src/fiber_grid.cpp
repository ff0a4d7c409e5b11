#include "qpmc/fiber_grid.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "qpmc/errors.hpp"

namespace qpmc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// d-th derivative of the periodic sinc-type cardinal function at offset t.
// The Nyquist mode is represented by cos(N t / 2) so that it stays real.
double trig_kernel(int n, int d, double t) {
  const int half = n / 2;
  double s = d == 0 ? 1.0 : 0.0;
  for (int m = 1; m < half; ++m) {
    double c = std::cos(m * t), sn = std::sin(m * t);
    double mm = static_cast<double>(m);
    switch (d) {
      case 0: s += 2.0 * c; break;
      case 1: s += -2.0 * mm * sn; break;
      default: s += -2.0 * mm * mm * c; break;
    }
  }
  const double nh = static_cast<double>(half);
  switch (d) {
    case 0: s += std::cos(nh * t); break;
    case 1: s += -nh * std::sin(nh * t); break;
    default: s += -nh * nh * std::cos(nh * t); break;
  }
  return s / n;
}

double inverse_laplacian_kernel(int n, double t) {
  const int half = n / 2;
  double s = 0.0;
  for (int m = 1; m < half; ++m) s -= 2.0 * std::cos(m * t) / (double(m) * m);
  s -= std::cos(half * t) / (double(half) * half);
  return s / n;
}

std::shared_ptr<const GridOperators> build(int n, DiffMode mode) {
  auto ops = std::make_shared<GridOperators>();
  const double h = kTwoPi / n;
  ops->d1 = Eigen::MatrixXd::Zero(n, n);
  ops->d2 = Eigen::MatrixXd::Zero(n, n);
  ops->mid = Eigen::MatrixXd::Zero(n, n);
  ops->mid_d1 = Eigen::MatrixXd::Zero(n, n);
  ops->lap_pinv = Eigen::MatrixXd::Zero(n, n);
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  // All operators are circulant: tabulate each kernel once per offset.
  std::vector<double> lap(n), k1(n), k2(n), m0(n), m1(n);
  for (int r = 0; r < n; ++r) {
    double t = r * h;
    lap[r] = inverse_laplacian_kernel(n, t);
    k1[r] = trig_kernel(n, 1, t);
    k2[r] = trig_kernel(n, 2, t);
    m0[r] = trig_kernel(n, 0, t + 0.5 * h);
    m1[r] = trig_kernel(n, 1, t + 0.5 * h);
  }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) ops->lap_pinv(j, i) = lap[wrap(j - i)];
  if (mode == DiffMode::trig) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        int r = wrap(j - i);
        ops->d1(j, i) = k1[r];
        ops->d2(j, i) = k2[r];
        ops->mid(j, i) = m0[r];
        ops->mid_d1(j, i) = m1[r];
      }
  } else {
    for (int j = 0; j < n; ++j) {
      ops->d1(j, wrap(j + 2)) += -1.0 / (12.0 * h);
      ops->d1(j, wrap(j + 1)) += 8.0 / (12.0 * h);
      ops->d1(j, wrap(j - 1)) += -8.0 / (12.0 * h);
      ops->d1(j, wrap(j - 2)) += 1.0 / (12.0 * h);

      ops->d2(j, wrap(j + 2)) += -1.0 / (12.0 * h * h);
      ops->d2(j, wrap(j + 1)) += 16.0 / (12.0 * h * h);
      ops->d2(j, j) += -30.0 / (12.0 * h * h);
      ops->d2(j, wrap(j - 1)) += 16.0 / (12.0 * h * h);
      ops->d2(j, wrap(j - 2)) += -1.0 / (12.0 * h * h);

      ops->mid(j, wrap(j - 1)) += -1.0 / 16.0;
      ops->mid(j, j) += 9.0 / 16.0;
      ops->mid(j, wrap(j + 1)) += 9.0 / 16.0;
      ops->mid(j, wrap(j + 2)) += -1.0 / 16.0;

      ops->mid_d1(j, wrap(j - 1)) += 1.0 / (24.0 * h);
      ops->mid_d1(j, j) += -27.0 / (24.0 * h);
      ops->mid_d1(j, wrap(j + 1)) += 27.0 / (24.0 * h);
      ops->mid_d1(j, wrap(j + 2)) += -1.0 / (24.0 * h);
    }
  }
  return ops;
}

std::shared_ptr<const GridOperators> cached(int n, DiffMode mode) {
  static std::mutex lock;
  static std::map<std::pair<int, int>, std::shared_ptr<const GridOperators>> cache;
  std::lock_guard<std::mutex> guard(lock);
  auto key = std::make_pair(n, static_cast<int>(mode));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto ops = build(n, mode);
  cache.emplace(key, ops);
  return ops;
}

}  // namespace

DiffMode parse_diff_mode(const std::string& text) {
  if (text == "fd4") return DiffMode::fd4;
  if (text == "trig") return DiffMode::trig;
  throw ConfigError("unknown differentiation mode '" + text + "' (expected fd4 or trig)");
}

std::string to_string(DiffMode mode) { return mode == DiffMode::fd4 ? "fd4" : "trig"; }

FiberGrid::FiberGrid(int n, DiffMode mode) : n_(n), mode_(mode) {
  if (n < 16 || (n & (n - 1)) != 0)
    throw ConfigError("grid size N must be a power of two >= 16, got " + std::to_string(n));
  ops_ = cached(n, mode);
}

double FiberGrid::spacing() const { return kTwoPi / n_; }

double FiberGrid::node(int i) const { return kTwoPi * i / n_; }

Eigen::RowVectorXd FiberGrid::interpolate(const Eigen::MatrixXd& samples, double x) const {
  Eigen::RowVectorXd weights(n_);
  for (int i = 0; i < n_; ++i) weights[i] = trig_kernel(n_, 0, x - node(i));
  return weights * samples;
}

}  // namespace qpmc
