#include "qpmc/cli_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qpmc/errors.hpp"
#include "qpmc/foliation.hpp"
#include "qpmc/variation_checks.hpp"

#ifndef QPMC_VERSION
#define QPMC_VERSION "0.0.0"
#endif

namespace qpmc {

std::string version() { return QPMC_VERSION; }

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write '" + path + "'");
}

nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// Accepts a bare leaf document or a leaf solution carrying one under "leaf".
GraphLeaf load_leaf(const std::string& path) {
  nlohmann::json doc = parse_json_file(path);
  if (doc.is_object() && doc.contains("leaf")) return leaf_from_json(doc.at("leaf"));
  return leaf_from_json(doc);
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void split_box(const std::vector<double>& box, int k, Vec& lo, Vec& hi) {
  lo.resize(k);
  hi.resize(k);
  if (box.size() == 2) {
    lo.setConstant(box[0]);
    hi.setConstant(box[1]);
  } else if (static_cast<int>(box.size()) == 2 * k) {
    for (int a = 0; a < k; ++a) {
      lo[a] = box[2 * a];
      hi[a] = box[2 * a + 1];
    }
  } else {
    throw ConfigError("--box needs lo,hi or one lo,hi pair per axis (" + std::to_string(2 * k) +
                      " values)");
  }
  for (int a = 0; a < k; ++a)
    if (!(lo[a] <= hi[a])) throw ConfigError("--box: lo must not exceed hi on every axis");
}

Vec point_or_origin(const std::vector<double>& z, int k) {
  if (z.empty()) return Vec::Zero(k);
  if (static_cast<int>(z.size()) != k)
    throw ConfigError("--z has " + std::to_string(z.size()) + " components, metric has k=" +
                      std::to_string(k));
  return to_vec(z);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void RunConfig::validate() const {
  static const std::vector<std::string> known{"spectrum", "solve-leaf", "foliate",
                                              "core",     "verify-variations", "examples"};
  if (std::find(known.begin(), known.end(), subcommand) == known.end())
    throw ConfigError("unknown subcommand '" + subcommand + "'");
  if (subcommand == "examples") return;
  if (subcommand == "core" && !from.empty()) return;
  if (metric.empty()) throw ConfigError("--metric is required");
  if (n < 16 || (n & (n - 1)) != 0) throw ConfigError("--n must be a power of two >= 16");
  solver.validate();
  if (!all_finite(z)) throw ConfigError("--z must be finite");
  if (!all_finite(box)) throw ConfigError("--box must be finite");
  if (!(dz > 0.0) || !std::isfinite(dz)) throw ConfigError("dz must be positive");
  if (!(r_bar > 0.0)) throw ConfigError("--r-bar must be positive");
  if (count < 1) throw ConfigError("--count must be positive");
  for (const std::string& f : formulas)
    if (std::find(formula_ids().begin(), formula_ids().end(), f) == formula_ids().end())
      throw ConfigError("unknown formula '" + f + "'");
  MetricField m = parse_metric_spec(metric);
  if ((subcommand == "foliate" || subcommand == "core") && box.empty())
    throw ConfigError("--box is required");
  if (!box.empty()) {
    Vec lo, hi;
    split_box(box, m.dim_k(), lo, hi);
  }
  if (leaf.empty() && !z.empty()) point_or_origin(z, m.dim_k());
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j{{"subcommand", subcommand}, {"version", version}};
  if (subcommand == "examples") return j;
  j["metric"] = metric;
  j["n"] = n;
  j["diff_mode"] = to_string(mode);
  j["seed"] = seed;
  j["solver"] = {{"tol", solver.tol_residual},
                 {"max_iters", solver.max_iters},
                 {"damping", solver.damping},
                 {"damping_floor", solver.damping_floor},
                 {"jacobian", to_string(solver.jacobian)},
                 {"fd_step", solver.fd_step},
                 {"cutoff_rule", to_string(solver.spectral.rule)},
                 {"gap_tol", solver.spectral.gap_tol}};
  if (!z.empty()) j["z"] = z;
  if (!box.empty()) j["box"] = box;
  if (subcommand == "foliate" || subcommand == "core") {
    j["dz"] = dz;
    j["r_bar"] = r_bar;
  }
  if (!leaf.empty()) j["leaf"] = leaf;
  if (!init.empty()) j["init"] = init;
  if (!from.empty()) j["from"] = from;
  if (subcommand == "verify-variations") {
    j["formulas"] = formulas.empty() ? formula_ids() : formulas;
    j["solve"] = solve;
  }
  if (subcommand == "spectrum") j["count"] = count;
  if (!out.empty()) j["out"] = out;
  return j;
}

RunConfig parse_config(const std::vector<std::string>& args) {
  RunConfig cfg;
  cfg.version = version();
  CLI::App app{"QPMC foliations of R^k x S^1", "qpmc"};
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  std::string mode = "trig", jacobian = "laplacian", rule = "threshold";
  auto common = [&](CLI::App* sub, bool needs_metric) {
    auto* opt = sub->add_option("--metric", cfg.metric, "metric spec, e.g. bump:eps=0.01,seed=7");
    if (needs_metric) opt->required();
    sub->add_option("--n", cfg.n, "fiber grid size (power of two)");
    sub->add_option("--diff-mode", mode, "trig or fd4");
    sub->add_option("--seed", cfg.seed, "global seed");
    sub->add_option("--record", cfg.record, "write the run record here instead of stdout");
  };
  auto solver = [&](CLI::App* sub) {
    sub->add_option("--tol", cfg.solver.tol_residual, "L2 residual tolerance");
    sub->add_option("--max-iters", cfg.solver.max_iters);
    sub->add_option("--damping", cfg.solver.damping);
    sub->add_option("--jacobian", jacobian, "laplacian or fd");
    sub->add_option("--rule", rule, "cutoff rule: threshold or order");
    sub->add_option("--gap-tol", cfg.solver.spectral.gap_tol);
  };

  auto* spectrum = app.add_subcommand("spectrum", "eigenvalues of the normal Laplacian on a leaf");
  common(spectrum, true);
  spectrum->add_option("--z", cfg.z, "slice position")->delimiter(',');
  spectrum->add_option("--leaf", cfg.leaf, "leaf JSON instead of a slice");
  spectrum->add_option("--count", cfg.count, "number of eigenvalues to report");
  spectrum->add_option("--rule", rule, "cutoff rule: threshold or order");
  spectrum->add_option("--gap-tol", cfg.solver.spectral.gap_tol);

  auto* solve = app.add_subcommand("solve-leaf", "Newton solve for the QPMC leaf at z");
  common(solve, true);
  solver(solve);
  solve->add_option("--z", cfg.z, "leaf parameter")->delimiter(',');
  solve->add_option("--init", cfg.init, "initial guess (leaf JSON)");
  solve->add_option("--out", cfg.out, "write the leaf solution JSON");

  auto* foliate = app.add_subcommand("foliate", "sweep the solver over a z-box");
  common(foliate, true);
  solver(foliate);
  foliate->add_option("--box", cfg.box, "lo,hi or lo1,hi1,...,lok,hik")->delimiter(',');
  foliate->add_option("--dz", cfg.dz, "lattice spacing");
  foliate->add_option("--r-bar", cfg.r_bar, "fiber scale for the delta-vertical score");
  foliate->add_option("--out", cfg.out, "output directory");

  auto* core = app.add_subcommand("core", "leaf centroids as CSV");
  common(core, false);
  solver(core);
  core->add_option("--box", cfg.box)->delimiter(',');
  core->add_option("--dz", cfg.dz);
  core->add_option("--from", cfg.from, "foliation directory written by foliate");
  core->add_option("--out", cfg.out, "CSV path; stdout when omitted");

  auto* verify = app.add_subcommand("verify-variations", "check variation formulas against FD");
  common(verify, true);
  verify->add_option("--leaf", cfg.leaf, "base leaf JSON; slice at --z when omitted");
  verify->add_option("--z", cfg.z)->delimiter(',');
  verify->add_flag("--solve", cfg.solve, "solve for the leaf at --z first");
  verify->add_option("--formulas", cfg.formulas, "comma list")->delimiter(',');
  verify->add_option("--rule", rule);
  verify->add_option("--gap-tol", cfg.solver.spectral.gap_tol);
  verify->add_option("--tol", cfg.solver.tol_residual);

  app.add_subcommand("examples", "list builtin metrics");

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-' &&
      !app.get_subcommand_no_throw(args.front()))
    throw ConfigError("unknown subcommand '" + args.front() +
                      "' (expected spectrum, solve-leaf, foliate, core, verify-variations or "
                      "examples)");
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::CallForVersion&) {
    throw HelpRequested(version() + "\n");
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto* sub : app.get_subcommands()) msg = sub->get_name() + ": " + msg;
    throw ConfigError(msg);
  }
  cfg.subcommand = app.get_subcommands().front()->get_name();
  cfg.mode = parse_diff_mode(mode);
  cfg.solver.jacobian = parse_jacobian_mode(jacobian);
  cfg.solver.spectral.rule = parse_cutoff_rule(rule);
  cfg.validate();
  return cfg;
}

nlohmann::json RunRecord::to_json() const {
  return {{"schema_version", 1}, {"version", version}, {"config", config},
          {"input_hashes", input_hashes}, {"timing", {{"seconds", seconds}}},
          {"exit_code", exit_code}, {"payload", payload}};
}

namespace {

nlohmann::json gap_json(const SpectralDecomposition& sp, int k) {
  return {{"lambda_k", sp.eigenvalues[k - 1]}, {"lambda_k1", sp.eigenvalues[k]}};
}

void run_spectrum(const RunConfig& cfg, const MetricField& m, RunRecord& rec) {
  FiberGrid grid(cfg.n, cfg.mode);
  GraphLeaf leaf;
  if (!cfg.leaf.empty()) {
    leaf = load_leaf(cfg.leaf);
    if (leaf.k() != m.dim_k()) throw ConfigError("leaf dimension does not match the metric");
    rec.input_hashes["leaf"] = content_hash(read_file(cfg.leaf));
  } else {
    leaf = GraphLeaf::slice(point_or_origin(cfg.z, m.dim_k()), grid);
  }
  NormalGeometry geo = compute_geometry(m, leaf);
  LaplacianSystem sys = assemble_laplacian(geo, normal_connection(geo));
  SpectralDecomposition sp = eigendecompose(sys);
  QProjector q = q_projector(sp, cfg.solver.spectral.rule, cfg.solver.spectral.gap_tol);
  int shown = std::min(cfg.count, sp.count());
  rec.payload = {{"eigenvalues", std::vector<double>(sp.eigenvalues.data(), sp.eigenvalues.data() + shown)},
                 {"gap", gap_json(sp, geo.k)},
                 {"rank_Q", q.rank},
                 {"cutoff_rule", to_string(q.rule)},
                 {"k", geo.k},
                 {"n", geo.n},
                 {"diff_mode", to_string(leaf.grid.mode())}};
}

void run_solve(const RunConfig& cfg, const MetricField& m, RunRecord& rec) {
  FiberGrid grid(cfg.n, cfg.mode);
  Vec z = point_or_origin(cfg.z, m.dim_k());
  std::optional<Mat> init;
  if (!cfg.init.empty()) {
    GraphLeaf g = load_leaf(cfg.init);
    if (g.k() != m.dim_k() || g.n() != grid.size())
      throw ConfigError("initial guess does not match the metric dimension or grid size");
    init = g.u;
    rec.input_hashes["init"] = content_hash(read_file(cfg.init));
  }
  LeafSolution sol = newton_solve(m, z, cfg.solver, grid, init);
  rec.payload = solution_to_json(sol);
  if (!cfg.out.empty()) write_file(cfg.out, rec.payload.dump(1) + "\n");
}

nlohmann::json diffeo_json(const DiffeoReport& d) {
  return {{"min_margin", d.min_margin}, {"min_separation", d.min_separation},
          {"c1_deviation", d.c1_deviation}, {"pairs_checked", d.pairs_checked},
          {"disjoint", d.disjoint}, {"verdict", d.pass ? "pass" : "fail"}};
}

Foliation sweep_from(const RunConfig& cfg, const MetricField& m) {
  Vec lo, hi;
  split_box(cfg.box, m.dim_k(), lo, hi);
  Foliation f = sweep(m, lo, hi, cfg.dz, cfg.solver, FiberGrid(cfg.n, cfg.mode), cfg.r_bar);
  f.metric_spec = cfg.metric;
  return f;
}

void run_foliate(const RunConfig& cfg, const MetricField& m, RunRecord& rec) {
  Foliation f = sweep_from(cfg, m);
  DiffeoReport d = diffeo_check(f);
  if (!cfg.out.empty()) write_foliation(f, cfg.out);
  int solved = 0;
  for (char s : f.solved) solved += s ? 1 : 0;
  rec.payload = {{"index", foliation_index_json(f)},
                 {"leaves_total", static_cast<int>(f.points.size())},
                 {"leaves_converged", solved},
                 {"diffeo", diffeo_json(d)}};
  if (solved != static_cast<int>(f.points.size()) || !d.pass)
    rec.exit_code = static_cast<int>(ExitCode::verification);
}

void run_core(const RunConfig& cfg, RunRecord& rec) {
  Foliation f;
  if (!cfg.from.empty()) {
    f = read_foliation(cfg.from);
    rec.input_hashes["index"] = content_hash(read_file(cfg.from + "/index.json"));
  } else {
    f = sweep_from(cfg, parse_metric_spec(cfg.metric));
  }
  std::string csv = core_to_csv(center_of_mass_core(f));
  rec.payload = {{"samples", static_cast<int>(std::count(f.solved.begin(), f.solved.end(), 1))},
                 {"csv_hash", content_hash(csv)}};
  if (!cfg.out.empty())
    write_file(cfg.out, csv);
  else
    rec.text = csv;
}

void run_verify(const RunConfig& cfg, const MetricField& m, RunRecord& rec) {
  GraphLeaf leaf;
  if (!cfg.leaf.empty()) {
    leaf = load_leaf(cfg.leaf);
    if (leaf.k() != m.dim_k()) throw ConfigError("leaf dimension does not match the metric");
    rec.input_hashes["leaf"] = content_hash(read_file(cfg.leaf));
  } else {
    FiberGrid grid(cfg.n, cfg.mode);
    Vec z = point_or_origin(cfg.z, m.dim_k());
    leaf = cfg.solve ? newton_solve(m, z, cfg.solver, grid).leaf : GraphLeaf::slice(z, grid);
  }
  Mat v = random_section(leaf.n(), leaf.k(), leaf.grid, 0.5, cfg.seed, 1);
  VariationFamily fam(m, SampledCurve::from_leaf(leaf), v, cfg.solver.spectral);
  fam.prefetch(worker_count());
  std::vector<std::string> ids = cfg.formulas.empty() ? formula_ids() : cfg.formulas;
  std::vector<FormulaCheckReport> reports = run_variation_suite(fam, ids, cfg.seed);
  if (std::find(ids.begin(), ids.end(), "projector_variation") != ids.end())
    for (auto& r : frame_variation_consistency(fam)) reports.push_back(std::move(r));
  nlohmann::json arr = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : reports) {
    arr.push_back(report_to_json(r));
    ok = ok && r.pass;
  }
  rec.payload = arr;
  if (!ok) rec.exit_code = static_cast<int>(ExitCode::verification);
}

void run_examples(RunRecord& rec) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : metric_catalog())
    arr.push_back({{"name", e.name}, {"params", e.params}, {"description", e.description}});
  rec.payload = arr;
}

}  // namespace

RunRecord run(const RunConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.version = version();
  rec.config = cfg.to_json();
  rec.input_hashes = nlohmann::json::object();
  if (cfg.subcommand == "examples") {
    run_examples(rec);
  } else if (cfg.subcommand == "core") {
    if (!cfg.metric.empty()) rec.input_hashes["metric"] = content_hash(cfg.metric);
    run_core(cfg, rec);
  } else {
    MetricField m = parse_metric_spec(cfg.metric);
    rec.input_hashes["metric"] = content_hash(cfg.metric);
    if (cfg.subcommand == "spectrum") run_spectrum(cfg, m, rec);
    else if (cfg.subcommand == "solve-leaf") run_solve(cfg, m, rec);
    else if (cfg.subcommand == "foliate") run_foliate(cfg, m, rec);
    else run_verify(cfg, m, rec);
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = parse_config(args);
  } catch (const HelpRequested& h) {
    out << h.what();
    return 0;
  } catch (const Error& e) {
    err << "qpmc: " << e.what() << "\n";
    return static_cast<int>(e.code());
  }
  try {
    RunRecord rec = run(cfg);
    std::string doc = rec.to_json().dump(1) + "\n";
    if (!cfg.record.empty()) {
      write_file(cfg.record, doc);
    } else if (rec.text.empty()) {
      out << doc;
    }
    out << rec.text;
    if (rec.exit_code != 0)
      err << "qpmc: " << cfg.subcommand << ": invariant gates failed (see payload)\n";
    return rec.exit_code;
  } catch (const Error& e) {
    err << "qpmc: " << cfg.subcommand << ": " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "qpmc: " << cfg.subcommand << ": internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace qpmc
