#include "qpmc/normal_spectrum.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "qpmc/errors.hpp"

namespace qpmc {

NormalConnection normal_connection(const NormalGeometry& geo) {
  const int n = geo.n, k = geo.k, d = k + 1;
  NormalConnection conn;
  conn.omega.assign(n, Mat::Zero(k, k));
  for (int a = 0; a < k; ++a) {
    Mat ea(n, d);
    for (int i = 0; i < n; ++i) ea.row(i) = geo.frame[i].col(a).transpose();
    Mat dea = geo.grid.d1() * ea;
    for (int i = 0; i < n; ++i) {
      Vec x = geo.velocity.row(i).transpose();
      Vec cov = dea.row(i).transpose() + geo.gamma[i].contract(x, geo.frame[i].col(a));
      Vec comps = geo.frame[i].transpose() * geo.metric[i] * cov;
      for (int b = 0; b < k; ++b) conn.omega[i](b, a) = comps[b];
    }
  }
  // The frame is orthonormal, so the metric connection is skew. Enforce it
  // exactly; the symmetric part is differentiation error only.
  for (auto& w : conn.omega) w = 0.5 * (w - w.transpose()).eval();
  return conn;
}

Mat covariant_derivative(const NormalGeometry& geo, const NormalConnection& conn,
                         const Mat& section) {
  Mat out = geo.grid.d1() * section;
  for (int i = 0; i < geo.n; ++i)
    out.row(i) += (conn.omega[i] * section.row(i).transpose()).transpose();
  return out;
}

Mat arclength_derivative(const NormalGeometry& geo, const NormalConnection& conn,
                         const Mat& section) {
  Mat out = covariant_derivative(geo, conn, section);
  for (int i = 0; i < geo.n; ++i) out.row(i) /= geo.f[i];
  return out;
}

LaplacianSystem assemble_laplacian(const NormalGeometry& geo, const NormalConnection& conn) {
  const int n = geo.n, k = geo.k, dim = n * k;
  const Mat& mid = geo.grid.mid();
  const Mat& mid_d1 = geo.grid.mid_d1();
  LaplacianSystem sys;
  sys.n = n;
  sys.k = k;
  Vec h_mid = mid * geo.h;
  std::vector<Mat> omega_mid(n, Mat::Zero(k, k));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double c = mid(j, i);
      if (c != 0.0) omega_mid[j] += c * conn.omega[i];
    }
  sys.derivative = Mat::Zero(dim, dim);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      double dij = mid_d1(j, i), mij = mid(j, i);
      if (dij == 0.0 && mij == 0.0) continue;
      for (int b = 0; b < k; ++b) {
        sys.derivative(j * k + b, i * k + b) += dij;
        for (int a = 0; a < k; ++a) sys.derivative(j * k + b, i * k + a) += omega_mid[j](b, a) * mij;
      }
    }
  sys.mid_weights.resize(dim);
  const double dx = geo.grid.spacing();
  for (int j = 0; j < n; ++j) {
    if (!(h_mid[j] > 0.0))
      throw DegenerateMetricError("interpolated induced metric is not positive");
    for (int b = 0; b < k; ++b) sys.mid_weights[j * k + b] = dx / std::sqrt(h_mid[j]);
  }
  Mat weighted = sys.mid_weights.asDiagonal() * sys.derivative;
  sys.stiffness = sys.derivative.transpose() * weighted;
  sys.stiffness = 0.5 * (sys.stiffness + sys.stiffness.transpose()).eval();
  sys.mass.resize(dim);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < k; ++a) sys.mass[i * k + a] = geo.weights[i];
  return sys;
}

Mat apply_laplacian(const LaplacianSystem& sys, const Mat& section) {
  Vec v = flatten(section);
  Vec kv = sys.stiffness * v;
  return unflatten(-(kv.array() / sys.mass.array()).matrix(), sys.n, sys.k);
}

double rayleigh_quotient(const LaplacianSystem& sys, const Mat& section) {
  Vec v = flatten(section);
  Vec dv = sys.derivative * v;
  double energy = (dv.array().square() * sys.mid_weights.array()).sum();
  double mass = (v.array().square() * sys.mass.array()).sum();
  return energy / mass;
}

Mat SpectralDecomposition::section(int m) const { return unflatten(vectors.col(m), n, k); }

double SpectralDecomposition::inner(const Mat& a, const Mat& b) const {
  return (flatten(a).array() * flatten(b).array() * mass.array()).sum();
}

SpectralDecomposition eigendecompose(const LaplacianSystem& sys, int count) {
  const int dim = static_cast<int>(sys.mass.size());
  if (count <= 0 || count > dim) count = dim;
  Vec inv_sqrt = sys.mass.array().rsqrt();
  Mat s = inv_sqrt.asDiagonal() * sys.stiffness * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> solver(s);
  if (solver.info() != Eigen::Success) {
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "symmetric eigensolver did not converge (dimension %d, mass ratio %.3e)", dim,
                  sys.mass.maxCoeff() / sys.mass.minCoeff());
    throw EigenSolverError(buf);
  }
  SpectralDecomposition spec;
  spec.n = sys.n;
  spec.k = sys.k;
  spec.mass = sys.mass;
  spec.eigenvalues = solver.eigenvalues().head(count);
  spec.vectors = inv_sqrt.asDiagonal() * solver.eigenvectors().leftCols(count);
  for (int m = 0; m < count; ++m) {
    auto col = spec.vectors.col(m);
    double scale = col.cwiseAbs().maxCoeff();
    for (int r = 0; r < dim; ++r) {
      if (std::abs(col[r]) > 1e-8 * scale) {
        if (col[r] < 0.0) col *= -1.0;
        break;
      }
    }
  }
  return spec;
}

CutoffRule parse_cutoff_rule(const std::string& text) {
  if (text == "threshold") return CutoffRule::threshold;
  if (text == "order") return CutoffRule::order;
  throw ConfigError("unknown cutoff rule '" + text + "' (expected threshold or order)");
}

std::string to_string(CutoffRule rule) {
  return rule == CutoffRule::threshold ? "threshold" : "order";
}

Mat QProjector::apply(const Mat& section) const {
  Vec v = flatten(section);
  Vec coeff = basis.transpose() * (mass.array() * v.array()).matrix();
  return unflatten(basis * coeff, n, k);
}

namespace {

std::vector<double> head_values(const SpectralDecomposition& spec, int count) {
  count = std::min(count, spec.count());
  return std::vector<double>(spec.eigenvalues.data(), spec.eigenvalues.data() + count);
}

}  // namespace

QProjector q_projector(const SpectralDecomposition& spec, CutoffRule rule, double gap_tol) {
  const int k = spec.k;
  QProjector q;
  q.n = spec.n;
  q.k = k;
  q.rule = rule;
  q.mass = spec.mass;
  const Vec& lam = spec.eigenvalues;
  if (rule == CutoffRule::threshold) {
    q.cutoff = 0.5;
    for (int m = 0; m < spec.count(); ++m) {
      if (std::abs(lam[m] - q.cutoff) <= gap_tol) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "gap collapse: eigenvalue %.9g lies within %.1e of the cutoff 1/2", lam[m],
                      gap_tol);
        throw GapCollapseError(buf, head_values(spec, 2 * k + 2), -1);
      }
    }
    if (spec.count() > 0 && lam[spec.count() - 1] < q.cutoff && spec.count() < spec.n * k)
      throw ConfigError("too few eigenpairs computed to locate the cutoff");
    while (q.rank < spec.count() && lam[q.rank] < q.cutoff) ++q.rank;
  } else {
    if (spec.count() < k + 1) throw ConfigError("order rule needs at least k+1 eigenpairs");
    double gap = lam[k] - lam[k - 1];
    if (gap <= gap_tol) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "gap collapse: lambda_k = %.9g and lambda_{k+1} = %.9g are not separated",
                    lam[k - 1], lam[k]);
      throw GapCollapseError(buf, head_values(spec, 2 * k + 2), 0);
    }
    q.cutoff = lam[k];
    while (q.rank < spec.count() && lam[q.rank] < q.cutoff - gap_tol) ++q.rank;
  }
  q.basis = spec.vectors.leftCols(q.rank);
  return q;
}

void require_full_rank(const QProjector& q, const SpectralDecomposition& spec) {
  if (q.rank == q.k) return;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "gap collapse: Q has rank %d but k = %d (%d eigenvalues below the cutoff %.6g)",
                q.rank, q.k, q.rank, q.cutoff);
  throw GapCollapseError(buf, head_values(spec, 2 * q.k + 2), q.rank);
}

std::vector<Mat> quasi_parallel_frame(const NormalGeometry& geo, const QProjector& q) {
  if (q.rank != q.k)
    throw GapCollapseError("quasi-parallel frame needs rank(Q) = k", {}, q.rank);
  std::vector<Mat> frame;
  for (int a = 0; a < geo.k; ++a) frame.push_back(q.apply(geo.coord_normal_section(a)));
  double worst = std::numeric_limits<double>::infinity();
  int node = 0;
  for (int i = 0; i < geo.n; ++i) {
    Mat e(geo.k, geo.k);
    for (int a = 0; a < geo.k; ++a) e.col(a) = frame[a].row(i).transpose();
    double det = (e.transpose() * e).determinant();
    if (det < worst) {
      worst = det;
      node = i;
    }
  }
  if (!(worst > 1e-8)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "quasi-parallel frame degenerate: det = %.3e at node %d",
                  worst, node);
    throw FrameDegeneracyError(buf, node, worst);
  }
  return frame;
}

double pmc_defect(const NormalGeometry& geo, const NormalConnection& conn) {
  return geo.norm(arclength_derivative(geo, conn, geo.H));
}

}  // namespace qpmc
