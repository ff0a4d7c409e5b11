#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qpmc/ambient_metric.hpp"
#include "qpmc/errors.hpp"

using namespace qpmc;

namespace {

Vec pt(std::initializer_list<double> v) {
  Vec p(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("product metric is the identity with vanishing connection") {
  MetricField m = parse_metric_spec("product:k=3");
  CHECK(m.dim_k() == 3);
  Vec p = pt({0.3, -1.2, 2.0, 4.1});
  CHECK((m.eval(p) - Mat::Identity(4, 4)).norm() == 0.0);
  CHECK(max_abs(christoffel(m, p).values) == 0.0);
  CHECK(max_abs(riemann(m, p).lowered_values) == 0.0);
}

TEST_CASE("warped metric against closed-form Christoffels and curvature") {
  const double a = 0.7, z = 0.4, x = 1.3;
  MetricField m = parse_metric_spec("warped:a=0.7");
  Vec p = pt({z, x});
  Mat g = m.eval(p);
  CHECK(g(1, 1) == doctest::Approx(std::cosh(a * z) * std::cosh(a * z)).epsilon(1e-14));
  ChristoffelData G = christoffel(m, p);
  // Gamma^x_{zx} = a tanh(a z), Gamma^z_{xx} = -a sinh cosh
  CHECK(G(1, 0, 1) == doctest::Approx(a * std::tanh(a * z)).epsilon(1e-13));
  CHECK(G(1, 1, 0) == doctest::Approx(a * std::tanh(a * z)).epsilon(1e-13));
  CHECK(G(0, 1, 1) == doctest::Approx(-a * std::sinh(a * z) * std::cosh(a * z)).epsilon(1e-13));
  CHECK(std::abs(G(0, 0, 0)) < 1e-15);
  // constant curvature -a^2
  CHECK(sectional_curvature(m, p, pt({1, 0}), pt({0, 1})) == doctest::Approx(-a * a).epsilon(1e-12));
}

TEST_CASE("twisted metric is flat") {
  MetricField m = parse_metric_spec("twisted:alpha=0.9,wave=0.3");
  for (Vec p : {pt({0.0, 0.0, 0.0}), pt({0.7, -0.4, 2.2}), pt({-1.5, 1.1, 5.9})}) {
    CurvatureData R = riemann(m, p);
    CHECK(max_abs(R.lowered_values) < 1e-11);
  }
}

TEST_CASE("Riemann tensor symmetries on a bump metric") {
  MetricField m = parse_metric_spec("bump:eps=0.2,width=2,seed=3");
  CurvatureData R = riemann(m, pt({0.3, -0.2, 1.1}));
  const int d = R.dim;
  double worst = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (int c = 0; c < d; ++c)
        for (int e = 0; e < d; ++e) {
          worst = std::max(worst, std::abs(R.lowered(a, b, c, e) + R.lowered(b, a, c, e)));
          worst = std::max(worst, std::abs(R.lowered(a, b, c, e) + R.lowered(a, b, e, c)));
          worst = std::max(worst, std::abs(R.lowered(a, b, c, e) - R.lowered(c, e, a, b)));
          worst = std::max(worst, std::abs(R.lowered(a, b, c, e) + R.lowered(b, c, a, e) +
                                           R.lowered(c, a, b, e)));
        }
  CHECK(worst < 1e-12);
}

TEST_CASE("finite-difference partials converge at second order") {
  MetricField exact = parse_metric_spec("bump:eps=0.1,width=2,seed=11");
  Vec p = pt({0.4, -0.3, 0.8});
  MetricJet ref = exact.jet(p, 3);
  std::vector<double> err;
  for (double h : {4e-2, 2e-2, 1e-2}) {
    MetricJet j = exact.with_finite_differences(h).jet(p, 3);
    double e = 0.0;
    for (int a = 0; a < 3; ++a) e = std::max(e, (j.d1[a] - ref.d1[a]).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < j.d2.size(); ++i)
      e = std::max(e, (j.d2[i] - ref.d2[i]).cwiseAbs().maxCoeff());
    err.push_back(e);
  }
  for (int i = 0; i + 1 < 3; ++i) {
    double order = std::log2(err[i] / err[i + 1]);
    CHECK(order >= 1.8);
    CHECK(order <= 2.2);
  }
  CHECK(parse_metric_spec("bump:eps=0.1,fd=1e-4").uses_finite_differences());
}

TEST_CASE("translation pullback evaluates shifted points and composes") {
  MetricField m = parse_metric_spec("bump:eps=0.05,seed=2");
  Vec z0 = pt({0.5, -0.25}), z1 = pt({-0.1, 0.3});
  MetricField t = translate_pullback(m, z0);
  Vec p = pt({0.2, 0.1, 2.5});
  Vec q = p;
  q.head(2) += z0;
  CHECK((t.eval(p) - m.eval(q)).norm() == 0.0);
  MetricField tt = translate_pullback(t, z1);
  Vec q2 = p;
  q2.head(2) += z0 + z1;
  CHECK((tt.eval(p) - m.eval(q2)).norm() < 1e-15);
}

TEST_CASE("sums of terms add perturbations") {
  MetricField a = parse_metric_spec("twisted:alpha=0.2");
  MetricField b = parse_metric_spec("bump:eps=0.01");
  MetricField s = parse_metric_spec("twisted:alpha=0.2+bump:eps=0.01");
  Vec p = pt({0.3, 0.1, 1.0});
  Mat id = Mat::Identity(3, 3);
  CHECK((s.eval(p) - (a.eval(p) + b.eval(p) - id)).norm() < 1e-15);
}

TEST_CASE("malformed metric specs are configuration errors") {
  CHECK_THROWS_AS(parse_metric_spec(""), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("nosuch"), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("product:k=0"), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("warped:b=1"), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("bump:eps=0.6"), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("bump:eps=abc"), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("berger:kappa=0.5"), ConfigError);
  CHECK_THROWS_AS(parse_metric_spec("file:/nonexistent/metric.json"), ConfigError);
}

TEST_CASE("user metric table reproduces the warped-type closed form") {
  // g_xx = 1 + 0.3 z^2 cos(2x)
  nlohmann::json doc = {{"schema_version", 1},
                        {"k", 1},
                        {"name", "quad"},
                        {"terms", {{{"i", 1}, {"j", 1}, {"coef", 0.3}, {"z_pow", {2}}, {"x_mode", 2}}}}};
  MetricField m = metric_from_json(doc);
  Vec p = pt({0.5, 0.7});
  CHECK(m.eval(p)(1, 1) == doctest::Approx(1.0 + 0.3 * 0.25 * std::cos(1.4)).epsilon(1e-15));
  MetricJet j = m.jet(p, 2);
  CHECK(j.partial(0)(1, 1) == doctest::Approx(0.3 * 2 * 0.5 * std::cos(1.4)).epsilon(1e-14));
  CHECK(j.partial(1)(1, 1) == doctest::Approx(-0.3 * 0.25 * 2 * std::sin(1.4)).epsilon(1e-14));

  nlohmann::json bad = doc;
  bad["extra"] = 1;
  CHECK_THROWS_AS(metric_from_json(bad), ConfigError);
  bad = doc;
  bad["schema_version"] = 2;
  CHECK_THROWS_AS(metric_from_json(bad), ConfigError);

  auto path = std::filesystem::temp_directory_path() / "qpmc_user_metric.json";
  std::ofstream(path) << doc.dump();
  MetricField f = parse_metric_spec("file:" + path.string());
  CHECK((f.eval(p) - m.eval(p)).norm() == 0.0);
}

TEST_CASE("indefinite metrics raise the geometry error") {
  nlohmann::json doc = {{"schema_version", 1},
                        {"k", 1},
                        {"terms", {{{"i", 1}, {"j", 1}, {"coef", -2.0}, {"z_pow", {2}}}}}};
  MetricField m = metric_from_json(doc);
  CHECK_NOTHROW(christoffel(m, pt({0.1, 0.0})));
  CHECK_THROWS_AS(christoffel(m, pt({1.0, 0.0})), DegenerateMetricError);
}

TEST_CASE("Berger sectional curvatures") {
  for (double kappa : {0.3, 0.5, 1.0}) {
    BergerMetric b(kappa);
    const double k2 = kappa * kappa;
    CHECK(b.sectional_curvature(1, 2) == doctest::Approx(k2 * (4.0 - 3.0 * k2)).epsilon(1e-12));
    CHECK(b.sectional_curvature(1, 3) == doctest::Approx(k2 * k2).epsilon(1e-12));
    CHECK(b.sectional_curvature(2, 3) == doctest::Approx(k2 * k2).epsilon(1e-12));
  }
  CHECK_THROWS_AS(BergerMetric(0.0), ConfigError);
}

TEST_CASE("deviation from the product metric") {
  DeviationReport flat = metric_deviation(parse_metric_spec("product:k=2"), -1, 1, 0.5);
  CHECK(flat.total == 0.0);
  DeviationReport b1 = metric_deviation(parse_metric_spec("bump:eps=0.01"), -2, 2, 0.25);
  DeviationReport b2 = metric_deviation(parse_metric_spec("bump:eps=0.02"), -2, 2, 0.25);
  CHECK(b1.sup_by_order[0] > 0.0);
  CHECK(b1.sup_by_order[0] <= 0.01 + 1e-15);
  CHECK(b2.total == doctest::Approx(2.0 * b1.total).epsilon(1e-9));
}

TEST_CASE("catalog lists the builtin families") {
  auto cat = metric_catalog();
  std::vector<std::string> names;
  for (const auto& e : cat) names.push_back(e.name);
  for (const char* n : {"product", "warped", "bump", "twisted"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
}
