#include "qpmc/foliation.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

#include "qpmc/errors.hpp"

namespace qpmc {

namespace {

constexpr double kAbortFraction = 0.10;

template <class Fn>
void parallel_for(int count, Fn&& fn) {
  int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

nlohmann::json vec_json(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec json_vec(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("QPMC_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError(std::string("QPMC_THREADS must be a positive integer, got '") + env + "'");
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int Foliation::index_of(const std::vector<int>& multi) const {
  int flat = 0;
  for (int a = 0; a < k(); ++a) {
    if (multi[a] < 0 || multi[a] >= shape[a]) return -1;
    flat = flat * shape[a] + multi[a];
  }
  return flat;
}

std::vector<int> Foliation::multi_index(int flat) const {
  std::vector<int> multi(k());
  for (int a = k() - 1; a >= 0; --a) {
    multi[a] = flat % shape[a];
    flat /= shape[a];
  }
  return multi;
}

Foliation sweep(const MetricField& m, const Vec& lo, const Vec& hi, double dz,
                const SolverConfig& cfg, const FiberGrid& grid, double r_bar) {
  const int k = m.dim_k();
  if (!(dz > 0.0)) throw ConfigError("dz must be positive");
  if (lo.size() != k || hi.size() != k) throw ConfigError("box must have k lower and upper bounds");
  cfg.validate();
  Foliation f;
  f.metric = m;
  f.provenance = m.provenance();
  f.metric_spec = f.provenance;
  f.grid = grid;
  f.config = cfg;
  f.lo = lo;
  f.hi = hi;
  f.dz = dz;
  f.shape.resize(k);
  int total = 1;
  for (int a = 0; a < k; ++a) {
    if (!(hi[a] >= lo[a])) throw ConfigError("box upper bound below lower bound");
    f.shape[a] = static_cast<int>(std::floor((hi[a] - lo[a]) / dz + 1e-9)) + 1;
    total *= f.shape[a];
  }
  f.points.resize(total);
  for (int i = 0; i < total; ++i) {
    auto mi = f.multi_index(i);
    Vec z(k);
    for (int a = 0; a < k; ++a) z[a] = lo[a] + dz * mi[a];
    f.points[i] = z;
  }
  f.solved.assign(total, false);
  f.leaves.assign(total, LeafSolution{});
  f.delta.assign(total, DeltaVerticalReport{});

  std::vector<int> center(k);
  for (int a = 0; a < k; ++a) center[a] = (f.shape[a] - 1) / 2;
  std::vector<int> layer_of(total);
  int max_layer = 0;
  for (int i = 0; i < total; ++i) {
    auto mi = f.multi_index(i);
    int d = 0;
    for (int a = 0; a < k; ++a) d += std::abs(mi[a] - center[a]);
    layer_of[i] = d;
    max_layer = std::max(max_layer, d);
  }

  std::vector<SweepFailure> failures(total);
  std::vector<char> failed(total, 0);
  for (int layer = 0; layer <= max_layer; ++layer) {
    std::vector<int> members;
    for (int i = 0; i < total; ++i)
      if (layer_of[i] == layer) members.push_back(i);
    parallel_for(static_cast<int>(members.size()), [&](int slot) {
      const int idx = members[slot];
      auto mi = f.multi_index(idx);
      std::optional<Mat> warm;
      for (int a = 0; a < k && !warm; ++a)
        for (int s : {-1, 1}) {
          auto nb = mi;
          nb[a] += s;
          int j = f.index_of(nb);
          if (j >= 0 && layer_of[j] == layer - 1 && f.solved[j]) {
            warm = f.leaves[j].leaf.u;
            break;
          }
        }
      try {
        f.leaves[idx] = newton_solve(m, f.points[idx], cfg, grid, warm);
        f.delta[idx] = delta_vertical_report(m, f.leaves[idx].leaf, r_bar);
        f.solved[idx] = true;
      } catch (const Error& e) {
        failed[idx] = true;
        failures[idx] = SweepFailure{f.points[idx], e.what(), static_cast<int>(e.code())};
      }
    });
    if (layer == 0) {
      int c = f.index_of(center);
      if (failed[c])
        throw SolverDivergenceError("sweep: solve at the box center failed: " + failures[c].message,
                                    {});
    }
  }
  for (int i = 0; i < total; ++i)
    if (failed[i]) f.failures.push_back(failures[i]);
  if (f.failures.size() > kAbortFraction * total) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "sweep aborted: %zu of %d leaves failed (limit 10%%)",
                  f.failures.size(), total);
    throw SolverDivergenceError(buf, {});
  }
  return f;
}

DiffeoReport diffeo_check(const Foliation& f) {
  DiffeoReport rep;
  const int k = f.k(), total = static_cast<int>(f.points.size());
  rep.min_margin = std::numeric_limits<double>::infinity();
  rep.min_separation = std::numeric_limits<double>::infinity();
  std::vector<Mat> pos(total);
  for (int i = 0; i < total; ++i)
    if (f.solved[i]) {
      pos[i] = f.leaves[i].leaf.positions();
      const Mat& u = f.leaves[i].leaf.u;
      double c1 = u.cwiseAbs().maxCoeff() + (f.grid.d1() * u).cwiseAbs().maxCoeff();
      rep.c1_deviation = std::max(rep.c1_deviation, c1);
    }
  for (int i = 0; i < total; ++i) {
    if (!f.solved[i]) continue;
    auto mi = f.multi_index(i);
    for (int a = 0; a < k; ++a) {
      auto nb = mi;
      nb[a] += 1;
      int j = f.index_of(nb);
      if (j < 0 || !f.solved[j]) continue;
      Vec shift = (pos[j] - pos[i]).col(a);
      rep.min_margin = std::min(rep.min_margin, shift.minCoeff());
      double dzu = (f.leaves[j].leaf.u - f.leaves[i].leaf.u).cwiseAbs().maxCoeff() / f.dz;
      rep.c1_deviation = std::max(rep.c1_deviation, dzu);
      ++rep.pairs_checked;
    }
  }
  for (int i = 0; i < total; ++i) {
    if (!f.solved[i]) continue;
    for (int j = i + 1; j < total; ++j) {
      if (!f.solved[j]) continue;
      double sep = (pos[i] - pos[j]).rowwise().norm().minCoeff();
      rep.min_separation = std::min(rep.min_separation, sep);
    }
  }
  if (rep.pairs_checked == 0) rep.min_margin = 0.0;
  if (!std::isfinite(rep.min_separation)) rep.min_separation = 0.0;
  rep.disjoint = rep.min_separation > 0.0;
  rep.pass = rep.pairs_checked > 0 && rep.min_margin >= 0.5 * f.dz && rep.disjoint;
  if (total == 1 && f.solved[0]) {
    rep.pass = true;
    rep.disjoint = true;
  }
  return rep;
}

LeafSolution leaf_through_point(const Foliation& f, const Vec& p, double tol, int max_iters) {
  const int k = f.k();
  if (p.size() != k + 1) throw ConfigError("point must have k+1 coordinates");
  for (int a = 0; a < k; ++a)
    if (p[a] < f.lo[a] || p[a] > f.hi[a]) throw ConfigError("point lies outside the swept box");
  const Vec pz = p.head(k);
  const double xp = p[k];
  int nearest = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(f.points.size()); ++i) {
    if (!f.solved[i]) continue;
    double d = (f.points[i] - pz).norm();
    if (d < best) {
      best = d;
      nearest = i;
    }
  }
  if (nearest < 0) throw ConfigError("foliation has no solved leaves");
  Mat warm = f.leaves[nearest].leaf.u;
  Vec z = pz - f.grid.interpolate(warm, xp).transpose();
  LeafSolution sol;
  for (int it = 0; it < max_iters; ++it) {
    sol = newton_solve(f.metric, z, f.config, f.grid, warm);
    Vec next = pz - f.grid.interpolate(sol.leaf.u, xp).transpose();
    double change = (next - z).cwiseAbs().maxCoeff();
    warm = sol.leaf.u;
    if (change <= tol) {
      if (change > 0.0) sol = newton_solve(f.metric, next, f.config, f.grid, warm);
      return sol;
    }
    z = next;
  }
  throw SolverDivergenceError("leaf_through_point: fixed-point iteration did not converge",
                              std::vector<double>(z.data(), z.data() + z.size()));
}

std::vector<CoreSample> center_of_mass_core(const Foliation& f) {
  std::vector<CoreSample> core;
  for (int i = 0; i < static_cast<int>(f.points.size()); ++i) {
    if (!f.solved[i]) continue;
    const GraphLeaf& leaf = f.leaves[i].leaf;
    NormalGeometry geo = compute_geometry(f.metric, leaf);
    Vec centroid = geo.points.transpose() * geo.weights / geo.weights.sum();
    core.push_back({f.points[i], centroid});
  }
  return core;
}

std::string core_to_csv(const std::vector<CoreSample>& core) {
  if (core.empty()) return "";
  const int k = static_cast<int>(core.front().z.size());
  std::string out;
  for (int a = 0; a < k; ++a) out += "z" + std::to_string(a + 1) + ",";
  for (int a = 0; a < k; ++a) out += "c" + std::to_string(a + 1) + ",";
  out += "cx\n";
  char buf[40];
  for (const auto& s : core) {
    for (int a = 0; a < k; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g,", s.z[a]);
      out += buf;
    }
    for (int a = 0; a <= k; ++a) {
      std::snprintf(buf, sizeof buf, a == k ? "%.17g\n" : "%.17g,", s.centroid[a]);
      out += buf;
    }
  }
  return out;
}

namespace {

std::string leaf_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "leaf_%05d.json", i);
  return buf;
}

nlohmann::json delta_json(const DeltaVerticalReport& d) {
  return {{"sup_A", d.sup_A},
          {"sup_grad_A", d.sup_grad_A},
          {"sup_hess_A", d.sup_hess_A},
          {"r_bar", d.r_bar},
          {"delta_score", d.delta_score},
          {"length", d.length},
          {"diameter", d.diameter},
          {"diameter_ratio", d.diameter_ratio},
          {"diameter_ok", d.diameter_ok}};
}

DeltaVerticalReport delta_from_json(const nlohmann::json& j) {
  DeltaVerticalReport d;
  d.sup_A = j.at("sup_A").get<double>();
  d.sup_grad_A = j.at("sup_grad_A").get<double>();
  d.sup_hess_A = j.at("sup_hess_A").get<double>();
  d.r_bar = j.at("r_bar").get<double>();
  d.delta_score = j.at("delta_score").get<double>();
  d.length = j.at("length").get<double>();
  d.diameter = j.at("diameter").get<double>();
  d.diameter_ratio = j.at("diameter_ratio").get<double>();
  d.diameter_ok = j.at("diameter_ok").get<bool>();
  return d;
}

}  // namespace

nlohmann::json foliation_index_json(const Foliation& f) {
  nlohmann::json pts = nlohmann::json::array();
  for (int i = 0; i < static_cast<int>(f.points.size()); ++i) {
    nlohmann::json e = {{"z", vec_json(f.points[i])}, {"solved", bool(f.solved[i])}};
    if (f.solved[i]) {
      e["file"] = leaf_file(i);
      e["delta_vertical"] = delta_json(f.delta[i]);
    }
    pts.push_back(e);
  }
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& fl : f.failures)
    fails.push_back({{"z", vec_json(fl.z)}, {"message", fl.message}, {"exit_code", fl.exit_code}});
  return {{"schema_version", 1},
          {"metric_spec", f.metric_spec},
          {"metric", f.provenance},
          {"k", f.k()},
          {"n", f.grid.size()},
          {"diff_mode", to_string(f.grid.mode())},
          {"box", {{"lo", vec_json(f.lo)}, {"hi", vec_json(f.hi)}}},
          {"dz", f.dz},
          {"shape", f.shape},
          {"solver",
           {{"tol", f.config.tol_residual},
            {"max_iters", f.config.max_iters},
            {"damping", f.config.damping},
            {"damping_floor", f.config.damping_floor},
            {"jacobian", to_string(f.config.jacobian)},
            {"fd_step", f.config.fd_step},
            {"cutoff_rule", to_string(f.config.spectral.rule)},
            {"gap_tol", f.config.spectral.gap_tol}}},
          {"points", pts},
          {"failures", fails}};
}

void write_foliation(const Foliation& f, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  for (int i = 0; i < static_cast<int>(f.points.size()); ++i) {
    if (!f.solved[i]) continue;
    std::ofstream out(fs::path(dir) / leaf_file(i));
    out << solution_to_json(f.leaves[i]).dump(1) << "\n";
  }
  std::ofstream idx(fs::path(dir) / "index.json");
  idx << foliation_index_json(f).dump(1) << "\n";
  if (!idx) throw ConfigError("cannot write index.json in '" + dir + "'");
}

Foliation read_foliation(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in) throw ConfigError("cannot open '" + (fs::path(dir) / "index.json").string() + "'");
  try {
    nlohmann::json idx;
    in >> idx;
    if (idx.at("schema_version").get<int>() != 1)
      throw ConfigError("foliation index: unsupported schema_version");
    Foliation f;
    f.metric_spec = idx.at("metric_spec").get<std::string>();
    f.metric = parse_metric_spec(f.metric_spec);
    f.provenance = idx.at("metric").get<std::string>();
    f.grid = FiberGrid(idx.at("n").get<int>(), parse_diff_mode(idx.at("diff_mode").get<std::string>()));
    f.lo = json_vec(idx.at("box").at("lo"));
    f.hi = json_vec(idx.at("box").at("hi"));
    f.dz = idx.at("dz").get<double>();
    f.shape = idx.at("shape").get<std::vector<int>>();
    const auto& s = idx.at("solver");
    f.config.tol_residual = s.at("tol").get<double>();
    f.config.max_iters = s.at("max_iters").get<int>();
    f.config.damping = s.at("damping").get<double>();
    f.config.damping_floor = s.at("damping_floor").get<double>();
    f.config.jacobian = parse_jacobian_mode(s.at("jacobian").get<std::string>());
    f.config.fd_step = s.at("fd_step").get<double>();
    f.config.spectral.rule = parse_cutoff_rule(s.at("cutoff_rule").get<std::string>());
    f.config.spectral.gap_tol = s.at("gap_tol").get<double>();
    for (const auto& p : idx.at("points")) {
      f.points.push_back(json_vec(p.at("z")));
      bool ok = p.at("solved").get<bool>();
      f.solved.push_back(ok);
      if (ok) {
        std::ifstream lf(fs::path(dir) / p.at("file").get<std::string>());
        if (!lf) throw ConfigError("missing leaf file " + p.at("file").get<std::string>());
        nlohmann::json doc;
        lf >> doc;
        f.leaves.push_back(solution_from_json(doc));
        f.delta.push_back(delta_from_json(p.at("delta_vertical")));
      } else {
        f.leaves.emplace_back();
        f.delta.emplace_back();
      }
    }
    for (const auto& fl : idx.at("failures"))
      f.failures.push_back({json_vec(fl.at("z")), fl.at("message").get<std::string>(),
                            fl.at("exit_code").get<int>()});
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("foliation index: ") + e.what());
  }
}

}  // namespace qpmc
