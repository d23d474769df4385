#include "kesten_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <sstream>

#include "kesten/branching.hpp"
#include "kesten/model.hpp"
#include "kesten/spectral.hpp"
#include "kesten/tailkit.hpp"
#include "kesten_cli/output.hpp"

namespace kesten::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingInput:
    case ErrorCode::ParseError:
    case ErrorCode::Io:
    case ErrorCode::InvalidArgument:
      return kMissingInput;
    case ErrorCode::BudgetExceeded:
      return kBudgetExceeded;
    case ErrorCode::NotProximal:
    case ErrorCode::NonConvergence:
    case ErrorCode::DegenerateLeadingPair:
    case ErrorCode::NoBracket:
    case ErrorCode::NoContraction:
    case ErrorCode::PilotTooNoisy:
    case ErrorCode::UnsupportedLaw:
      return kSpectralFailure;
    default:
      return kAuditFailure;
  }
}

int default_grid(int dim) {
  switch (dim) {
    case 1:
      return 1;
    case 2:
      return 512;
    case 3:
      return 24;
    default:
      return 2000;
  }
}

namespace {

struct Context {
  Options opt;
  Scenario sc;
  std::string scenario_text;
  std::string hash;
  std::uint64_t seed = 0;
  int grid = 0;
  json params = json::object();
  json accounting = json::object();
};

Context make_context(const Options& opt, Scenario sc) {
  Context c;
  c.opt = opt;
  c.sc = std::move(sc);
  c.scenario_text = canonical_json(c.sc);
  c.hash = sha256_hex(c.scenario_text);
  c.seed = opt.seed.value_or(c.sc.seed);
  c.grid = opt.grid > 0 ? opt.grid : default_grid(c.sc.dim);
  const Options& o = c.opt;
  c.params = {{"seed", c.seed},
              {"threads", o.threads},
              {"grid", c.grid},
              {"s_grid", o.s_grid},
              {"chi", o.chi},
              {"depth", o.depth},
              {"eps", o.eps},
              {"samples", o.samples},
              {"quantile_window", o.quantile_window},
              {"hill_k", o.hill_k},
              {"use_spectral", o.use_spectral},
              {"alpha_steps", o.alpha_steps},
              {"alpha_trials", o.alpha_trials}};
  return c;
}

Context load_context(const Options& opt) {
  if (opt.scenario.empty()) throw Error(ErrorCode::MissingInput, "no scenario file given");
  return make_context(opt, load_scenario(opt.scenario));
}

std::vector<double> parse_s_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (end == item.c_str() || *end != '\0') throw Error(ErrorCode::InvalidArgument, "bad --s-grid '" + spec + "'");
    parts.push_back(v);
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
    throw Error(ErrorCode::InvalidArgument, "--s-grid expects a:b:step with a <= b and step > 0");
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (int k = 0; k <= n; ++k) out.push_back(parts[0] + k * parts[2]);
  return out;
}

QuantileWindow parse_window(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--quantile-window expects upper:lower");
  QuantileWindow w;
  w.upper = std::strtod(spec.substr(0, colon).c_str(), nullptr);
  w.lower = std::strtod(spec.substr(colon + 1).c_str(), nullptr);
  if (!(w.upper > w.lower && w.lower > 0.0 && w.upper < 1.0))
    throw Error(ErrorCode::InvalidArgument, "--quantile-window needs 1 > upper > lower > 0");
  return w;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json moment_json(const MomentCheck& m) {
  return {{"value", m.value}, {"ci_lo", m.ci_lo}, {"ci_hi", m.ci_hi}, {"exact", m.exact}, {"pass", m.pass}};
}

// Audit of the declared hypotheses, contractivity and spanning.
json audit(const Context& c, bool& pass) {
  const Scenario& sc = c.sc;
  json doc;
  json warnings = json::array();
  doc["scenario_hash"] = c.hash;
  const HypothesisAudit ha = hypothesis_audit(sc, 100000, c.seed);
  doc["hypotheses"] = {{"bound", ha.bound},
                       {"norm_s1", moment_json(ha.norm_s1)},
                       {"norm_s2", moment_json(ha.norm_s2)},
                       {"b_s2", moment_json(ha.b_s2)},
                       {"pass", ha.all_pass()}};
  if (!ha.all_pass()) warnings.push_back("moment hypotheses fail");

  const ContractivityReport cr = check_contractivity(sc, 64, 10000, c.seed, c.opt.threads);
  doc["contractivity"] = {{"trials", cr.trials},
                          {"n_max", cr.n_max},
                          {"hit_probability", cr.hit_probability},
                          {"censored", cr.censored},
                          {"modal_hitting_time", cr.modal_hitting_time},
                          {"tau", cr.tau},
                          {"p_at_tau", cr.p_at_tau},
                          {"histogram", cr.hitting_histogram}};
  const bool contractive = cr.hit_probability > 0.0;
  if (!contractive) warnings.push_back("no strictly positive product within 64 steps: semigroup looks non-contractive");

  bool spanning = false;
  try {
    const SpanningReport sr = check_spanning(sc, 2000, c.seed);
    spanning = sr.spanning;
    doc["spanning"] = {{"rank", sr.rank},
                       {"spanning", sr.spanning},
                       {"proximal_found", sr.proximal_found},
                       {"singular_values", sr.singular_values}};
    if (!sr.spanning) warnings.push_back("dominant directions do not span");
  } catch (const Error& e) {
    doc["spanning"] = {{"spanning", false}, {"error", e.what()}};
    warnings.push_back(e.what());
  }
  pass = ha.all_pass() && contractive && spanning;
  doc["all_pass"] = pass;
  doc["warnings"] = warnings;
  return doc;
}

struct SpectralState {
  SphereGrid grid;
  std::optional<ChiResult> chi;
  std::optional<SpectralSolution> sol;
  json alpha = nullptr;
  double alpha_quadrature = 0.0;
};

json alpha_json(const AlphaResult& a) {
  return {{"alpha", a.alpha},
          {"se", a.se},
          {"ci_lo", a.ci_lo},
          {"ci_hi", a.ci_hi},
          {"finite_difference", a.finite_difference},
          {"renormalization_residual", a.renormalization_residual}};
}

void solve_at_chi(Context& c, SpectralState& st) {
  st.sol = solve_spectral(c.sc.mu, st.chi->chi, st.grid);
  json alpha = json::object();
  try {
    const AlphaResult q = lyapunov_alpha(c.sc.mu, st.chi->chi, *st.sol, st.grid, AlphaMode::Quadrature,
                                         c.opt.alpha_steps, c.opt.alpha_trials, c.seed, c.opt.threads);
    const AlphaResult e = lyapunov_alpha(c.sc.mu, st.chi->chi, *st.sol, st.grid, AlphaMode::Ergodic,
                                         c.opt.alpha_steps, c.opt.alpha_trials, c.seed, c.opt.threads);
    alpha["quadrature"] = alpha_json(q);
    alpha["ergodic"] = alpha_json(e);
    st.alpha_quadrature = q.alpha;
  } catch (const Error& e) {
    alpha["error"] = e.what();
  }
  st.alpha = alpha;
}

json chi_json(const ChiResult& r) {
  return {{"chi", r.chi},
          {"kappa_at_chi", r.kappa_at_chi},
          {"bracket", {r.bracket_lo, r.bracket_hi}},
          {"convexity_ok", r.convexity_ok},
          {"worst_convexity_excess", r.worst_convexity_excess}};
}

json solution_json(const Context& c, const SpectralState& st) {
  const SpectralSolution& sol = *st.sol;
  const auto& r = sol.residuals;
  json doc = {{"s", sol.s},
              {"kappa", sol.kappa},
              {"kappa_star", sol.kappa_star},
              {"r_s", sol.r_s},
              {"r_s_star", sol.r_s_star},
              {"residuals",
               {{"eigen", r.eigen},
                {"eigen_star", r.eigen_star},
                {"left", r.left},
                {"left_star", r.left_star},
                {"stochasticity", r.stochasticity},
                {"stochasticity_star", r.stochasticity_star},
                {"contraction_ratio", r.contraction_ratio},
                {"kappa_mismatch", r.kappa_mismatch},
                {"degenerate", r.degenerate}}}};
  const FormulaCheck fc = eigenfunction_formula_check(sol, st.grid);
  doc["formula_check"] = {{"skipped", fc.skipped}, {"deviation", fc.deviation}, {"deviation_star", fc.deviation_star}};
  const TransferOperator m = build_transfer_operator(c.sc.mu, sol.s, st.grid, false);
  const Vector direct = stationary_measure(sol, m, StationaryMode::Direct);
  const Vector iterate = stationary_measure(sol, m, StationaryMode::Iterate);
  doc["stationary_tv_direct_iterate"] = total_variation(direct, iterate);
  doc["e_fun"] = vec_json(sol.e_fun);
  doc["e_star"] = vec_json(sol.e_star);
  doc["nu"] = vec_json(sol.nu);
  doc["nu_star"] = vec_json(sol.nu_star);
  doc["pi"] = vec_json(sol.pi);
  doc["pi_star"] = vec_json(sol.pi_star);
  return doc;
}

constexpr int kKappaMcLevels = 8;
constexpr std::size_t kKappaMcTrials = 2000;

// Writes kappa_curve.csv and spectral.json. Returns an exit code.
int spectral_stage(Context& c, Staging& stage, bool want_chi, SpectralState& st, std::ostream& err) {
  st.grid = SphereGrid::build(c.sc.dim, c.grid);
  const auto s_values = parse_s_grid(c.opt.s_grid);
  // u_n^{1/n} at the last Monte Carlo level is an upper bound for kappa.
  c.params["kappa_mc"] = {{"levels", kKappaMcLevels}, {"trials", kKappaMcTrials}};
  std::string csv = "s,kappa_grid,u_n_mc,ci_lo,ci_hi,n,n_kappa\n";
  for (std::size_t i = 0; i < s_values.size(); ++i) {
    const double s = s_values[i];
    const double k = kappa_grid(c.sc.mu, s, st.grid);
    const McLevel mc = kappa_mc(c.sc.mu, s, kKappaMcLevels, kKappaMcTrials, derive_key(c.seed, {domain::kappa_mc, i}),
                                c.opt.threads)
                           .back();
    csv += fmt(s) + "," + fmt(k) + "," + fmt(mc.kappa_upper) + "," + fmt(mc.kappa_upper_lo) + "," +
           fmt(mc.kappa_upper_hi) + "," + std::to_string(mc.n) + "," + fmt(c.sc.N * k) + "\n";
  }
  stage.write("kappa_curve.csv", csv);
  json doc = {{"scenario_hash", c.hash},
              {"grid", {{"dim", c.sc.dim}, {"resolution", c.grid}, {"nodes", st.grid.size()}}},
              {"chi", nullptr}};
  int code = kOk;
  if (want_chi) {
    try {
      st.chi = solve_chi(c.sc.mu, c.sc.N, st.grid, 0.0);
      doc["chi"] = chi_json(*st.chi);
      solve_at_chi(c, st);
      doc["solution"] = solution_json(c, st);
      doc["alpha"] = st.alpha;
    } catch (const NoBracketError& e) {
      json curve = json::array();
      for (const auto& p : e.curve()) curve.push_back({p.s, p.kappa});
      doc["error"] = e.what();
      doc["bracket_scan"] = curve;
      err << e.what() << "\n";
      code = kSpectralFailure;
    }
  }
  stage.write_json("spectral.json", doc);
  return code;
}

std::string samples_csv(const SampleSet& r) {
  std::string out = "index";
  for (int k = 0; k < r.dim; ++k) out += ",r" + std::to_string(k);
  out += "\n";
  out.reserve(r.data.size() * 26 + out.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    out += std::to_string(i);
    const double* row = r.row(i);
    for (int k = 0; k < r.dim; ++k) {
      out += ",";
      out += fmt(row[k]);
    }
    out += "\n";
  }
  return out;
}

SampleSet read_samples(const fs::path& path, int dim) {
  if (!fs::exists(path))
    throw Error(ErrorCode::MissingInput, "samples file " + path.string() + " not found; run `kesten simulate` first");
  const std::string text = read_file(path);
  SampleSet r;
  r.dim = dim;
  std::size_t pos = text.find('\n');
  if (pos == std::string::npos) throw Error(ErrorCode::ParseError, path.string() + ": empty samples file");
  std::size_t line = 1;
  const char* p = text.c_str() + pos + 1;
  const char* end = text.c_str() + text.size();
  while (p < end) {
    ++line;
    if (*p == '\n') {
      ++p;
      continue;
    }
    char* q = nullptr;
    std::strtoull(p, &q, 10);
    if (q == p) throw Error(ErrorCode::ParseError, path.string() + ": bad index at line " + std::to_string(line));
    p = q;
    for (int k = 0; k < dim; ++k) {
      if (*p != ',') throw Error(ErrorCode::ParseError, path.string() + ": expected " + std::to_string(dim + 1) +
                                                            " columns at line " + std::to_string(line));
      ++p;
      const double v = std::strtod(p, &q);
      if (q == p) throw Error(ErrorCode::ParseError, path.string() + ": bad number at line " + std::to_string(line));
      r.data.push_back(v);
      p = q;
    }
    while (p < end && *p != '\n') ++p;
    if (p < end) ++p;
  }
  return r;
}

double solve_chi_for_planning(Context& c, SpectralState* st) {
  if (st && st->chi) return st->chi->chi;
  const SphereGrid grid = SphereGrid::build(c.sc.dim, c.grid);
  return solve_chi(c.sc.mu, c.sc.N, grid, 0.0).chi;
}

json plan_json(const DepthPlan& p) {
  json pilot = json::array();
  for (const auto& l : p.pilot) pilot.push_back({{"n", l.n}, {"mean", l.mean}, {"ci_lo", l.ci_lo}, {"ci_hi", l.ci_hi}});
  return {{"depth", p.depth},     {"s", p.s},       {"K_hat", p.K_hat},         {"eta_hat", p.eta_hat},
          {"eta_ci_lo", p.eta_ci_lo}, {"eta_ci_hi", p.eta_ci_hi}, {"n_kappa", p.n_kappa}, {"eps", p.eps},
          {"pilot", pilot}};
}

// Writes samples.csv and levels.csv.
SampleSet simulate_stage(Context& c, Staging& stage, SpectralState* st) {
  int depth = 0;
  double levels_s = 1.0;
  if (c.opt.depth == "auto") {
    const double chi = solve_chi_for_planning(c, st);
    const SphereGrid grid = st ? st->grid : SphereGrid::build(c.sc.dim, c.grid);
    const DepthPlan plan = plan_depth_auto(
        c.sc, [&](double s) { return kappa_grid(c.sc.mu, s, grid); }, chi, c.opt.eps, 20000, c.seed, c.opt.threads);
    depth = plan.depth;
    levels_s = plan.s;
    c.params["depth_plan"] = plan_json(plan);
  } else {
    char* end = nullptr;
    const long v = std::strtol(c.opt.depth.c_str(), &end, 10);
    if (end == c.opt.depth.c_str() || *end != '\0' || v < 0)
      throw Error(ErrorCode::InvalidArgument, "--depth expects a nonnegative integer or 'auto'");
    depth = static_cast<int>(v);
  }
  c.params["resolved_depth"] = depth;
  BranchingConfig cfg;
  cfg.depth = depth;
  cfg.samples = c.opt.samples;
  const SampleBatch batch = sample_R_batch(c.sc, cfg, c.seed, c.opt.threads, true);
  c.accounting["tree_nodes"] = static_cast<double>(tree_node_count(c.sc.N, depth)) * static_cast<double>(cfg.samples);
  c.params["sample_cache_key"] = {{"scenario_hash", c.hash}, {"depth", depth}, {"seed", c.seed}};
  stage.write("samples.csv", samples_csv(batch.r));

  c.params["levels_s"] = levels_s;
  std::string levels = "n,mean_norm_s,ci_lo,ci_hi\n";
  const int L = depth + 1;
  std::vector<double> vals(cfg.samples);
  for (int j = 0; j < L; ++j) {
    for (std::size_t i = 0; i < cfg.samples; ++i) vals[i] = std::pow(batch.level_norms[i * L + j], levels_s);
    const MeanCI m = mean_ci(vals);
    levels += std::to_string(j) + "," + fmt(m.mean) + "," + fmt(m.lo) + "," + fmt(m.hi) + "\n";
  }
  stage.write("levels.csv", levels);
  return batch.r;
}

std::vector<Vector> tail_directions(int d) {
  if (d == 1) return {Vector::Ones(1)};
  if (d == 2) {
    std::vector<Vector> out;
    for (int k = 0; k <= 4; ++k) {
      const double th = k * std::numbers::pi / 8.0;
      Vector u(2);
      u << std::cos(th), std::sin(th);
      out.push_back(u);
    }
    return out;
  }
  return default_directions(d);
}

json index_json(const TailIndex& t) { return {{"chi", t.chi}, {"ci_lo", t.ci_lo}, {"ci_hi", t.ci_hi}, {"k", t.k}}; }

json decay_json(const DecayFit& f) {
  return {{"beta", f.beta}, {"c_beta", f.c_beta}, {"points", f.points}, {"decays", f.decays}};
}

// Writes tail.csv and report.json.
void tail_stage(Context& c, Staging& stage, const SampleSet& r, SpectralState& st) {
  const double chi = st.chi->chi;
  const SpectralSolution& sol = *st.sol;
  const QuantileWindow window = parse_window(c.opt.quantile_window);
  const std::size_t n = r.size();
  std::size_t hill_k = c.opt.hill_k ? c.opt.hill_k : std::max<std::size_t>(30, n / 1000);
  const EigenfunctionFormula e(st.grid, sol.nu, chi);
  const auto dirs = tail_directions(c.sc.dim);
  const std::size_t central = dirs.size() / 2;

  json report;
  report["tool"] = "kesten";
  report["version"] = KESTEN_VERSION_STRING;
  report["scenario_hash"] = c.hash;
  report["seed"] = c.seed;
  report["samples"] = n;
  report["chi_spectral"] = chi;
  report["quantile_window"] = {window.upper, window.lower};
  if (chi < 1.0)
    report["applicability"] = "chi < 1: strict positivity of C_chi is not guaranteed; estimates are reported as is";

  std::string csv = "direction_index,t,survival,ci_lo,ci_hi\n";
  json per_dir = json::array();
  json profile = json::array();
  std::vector<double> central_proj;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const auto proj = r.project(dirs[k]);
    for (const auto& p : tail_curve(proj, window))
      csv += std::to_string(k) + "," + fmt(p.t) + "," + fmt(p.survival) + "," + fmt(p.ci_lo) + "," + fmt(p.ci_hi) + "\n";
    json d = {{"index", k}, {"u", vec_json(dirs[k])}};
    d["hill"] = index_json(hill_estimate(proj, hill_k));
    d["rank_slope"] = index_json(rank_slope(proj, window));
    DirectionEstimate de = tail_product(proj, chi, e(dirs[k]), window);
    d["e_u"] = de.e_u;
    d["tail_product"] = {{"estimate", de.estimate}, {"se", de.se}, {"slope", de.slope}, {"slope_p", de.slope_p},
                         {"stable", de.stable}};
    profile.push_back({{"index", k}, {"estimate", de.estimate}, {"se", de.se}});
    per_dir.push_back(d);
    if (k == central) central_proj = proj;
  }
  report["directions"] = per_dir;
  report["direction_profile"] = profile;
  report["hill_chi"] = per_dir[central]["hill"];
  report["rank_slope_chi"] = per_dir[central]["rank_slope"];

  const DirectEstimate direct = C_chi_direct(r, dirs, chi, e, window);
  report["C_chi_direct"] = {{"value", direct.pooled}, {"se", direct.se}, {"ci_lo", direct.ci_lo}, {"ci_hi", direct.ci_hi}};
  try {
    const FormulaEstimate f = C_chi_formula(c.sc, sol, st.grid, e, st.alpha_quadrature, r, c.seed);
    report["C_chi_formula"] = {{"value", f.c},
                               {"se", f.se},
                               {"ci_lo", f.ci_lo},
                               {"ci_hi", f.ci_hi},
                               {"lower_bound", f.lower_bound},
                               {"c_chi_const", f.c_chi_const},
                               {"b_moment", f.b_moment},
                               {"positivity_guaranteed", f.positivity_guaranteed},
                               {"trials", f.trials}};
  } catch (const Error& err) {
    report["C_chi_formula"] = {{"error", err.what()}};
  }
  report["alpha_chi"] = st.alpha;

  // Defect of the smoothing transform along the central direction, from
  // disjoint halves of the sample.
  const std::size_t half = n / 2;
  const std::vector<double> r_proj(central_proj.begin(), central_proj.begin() + static_cast<std::ptrdiff_t>(half));
  SampleSet second;
  second.dim = r.dim;
  second.data.assign(r.data.begin() + static_cast<std::ptrdiff_t>(half * r.dim), r.data.end());
  const std::size_t trials = second.size() / static_cast<std::size_t>(c.sc.N);
  const auto ar = ar_projections(c.sc, second, dirs[central], trials, c.seed);
  std::vector<double> pos;
  for (double v : r_proj)
    if (v > 0.0) pos.push_back(v);
  json g_doc = nullptr;
  if (!pos.empty()) {
    std::sort(pos.begin(), pos.end());
    const double t_lo = std::log(pos[pos.size() / 2]) - 4.0;
    const double t_hi = std::log(pos.back()) + 1.0;
    std::vector<double> tg(41);
    for (std::size_t i = 0; i < tg.size(); ++i) tg[i] = t_lo + (t_hi - t_lo) * static_cast<double>(i) / 40.0;
    const DefectReport g = defect_g(r_proj, ar, c.sc.N, tg, chi, e(dirs[central]));
    json curve = json::array();
    for (const auto& p : g.g) curve.push_back({{"t", p.t}, {"g", p.value}, {"se", p.se}});
    g_doc = {{"direction_index", central}, {"left", decay_json(g.left)}, {"right", decay_json(g.right)}, {"curve", curve}};
  }
  report["g_decay"] = g_doc;

  stage.write("tail.csv", csv);
  stage.write_json("report.json", report);
}

void finish(Context& c, Staging& stage, const std::string& sub, std::chrono::steady_clock::time_point t0) {
  json m;
  m["tool"] = "kesten";
  m["version"] = KESTEN_VERSION_STRING;
  m["subcommand"] = sub;
  m["scenario_hash"] = c.hash;
  m["scenario"] = json::parse(c.scenario_text);
  m["parameters"] = c.params;
  m["files"] = stage.digests();
  c.accounting["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m["accounting"] = c.accounting;
  stage.write_json("manifest.json", m);
  stage.commit();
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kMissingInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kAuditFailure;
  }
}

int run_check(Context& c, std::ostream& out) {
  bool pass = false;
  out << audit(c, pass).dump(2) << "\n";
  return pass ? kOk : kAuditFailure;
}

int run_spectral(Context& c, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Staging stage(c.opt.out);
  SpectralState st;
  const int code = spectral_stage(c, stage, c.opt.chi, st, err);
  finish(c, stage, "spectral", t0);
  return code;
}

int run_simulate(Context& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Staging stage(c.opt.out);
  simulate_stage(c, stage, nullptr);
  finish(c, stage, "simulate", t0);
  return kOk;
}

int run_tail(Context& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path samples_path =
      c.opt.samples_file.empty() ? fs::path(c.opt.out) / "samples.csv" : fs::path(c.opt.samples_file);
  SpectralState st;
  st.grid = SphereGrid::build(c.sc.dim, c.grid);
  if (c.opt.use_spectral) {
    const fs::path sp =
        c.opt.spectral_file.empty() ? fs::path(c.opt.out) / "spectral.json" : fs::path(c.opt.spectral_file);
    if (!fs::exists(sp))
      throw Error(ErrorCode::MissingInput,
                  sp.string() + " not found; run `kesten spectral --chi` first or drop --use-spectral");
    json doc;
    try {
      doc = json::parse(read_file(sp));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, sp.string() + ": " + e.what());
    }
    if (!doc.contains("chi") || doc["chi"].is_null())
      throw Error(ErrorCode::MissingInput, sp.string() + " holds no chi; rerun `kesten spectral --chi`");
    if (doc.value("scenario_hash", "") != c.hash)
      throw Error(ErrorCode::MissingInput, sp.string() + " was produced for a different scenario");
    c.grid = doc["grid"]["resolution"].get<int>();
    c.params["grid"] = c.grid;
    st.grid = SphereGrid::build(c.sc.dim, c.grid);
    ChiResult chi;
    chi.chi = doc["chi"]["chi"].get<double>();
    chi.kappa_at_chi = doc["chi"]["kappa_at_chi"].get<double>();
    st.chi = chi;
    c.params["spectral_input"] = {{"path", sp.string()}, {"sha256", sha256_file(sp)}};
  } else {
    st.chi = solve_chi(c.sc.mu, c.sc.N, st.grid, 0.0);
  }
  solve_at_chi(c, st);
  const SampleSet r = read_samples(samples_path, c.sc.dim);
  c.params["samples_input"] = {{"path", samples_path.string()}, {"sha256", sha256_file(samples_path)}};
  Staging stage(c.opt.out);
  tail_stage(c, stage, r, st);
  finish(c, stage, "tail", t0);
  return kOk;
}

int run_full(Context& c, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  Staging stage(c.opt.out);
  bool pass = false;
  stage.write_json("audit.json", audit(c, pass));
  if (!pass) {
    finish(c, stage, "full", t0);
    err << "hypothesis audit failed; see audit.json\n";
    return kAuditFailure;
  }
  SpectralState st;
  const int code = spectral_stage(c, stage, true, st, err);
  if (code != kOk) {
    finish(c, stage, "full", t0);
    return code;
  }
  const SampleSet r = simulate_stage(c, stage, &st);
  tail_stage(c, stage, r, st);
  finish(c, stage, "full", t0);
  return kOk;
}

}  // namespace

int cmd_check(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Context c = load_context(opt);
    return run_check(c, out);
  });
}

int cmd_spectral(const Options& opt, std::ostream&, std::ostream& err) {
  return guarded(err, [&] {
    Context c = load_context(opt);
    return run_spectral(c, err);
  });
}

int cmd_simulate(const Options& opt, std::ostream&, std::ostream& err) {
  return guarded(err, [&] {
    Context c = load_context(opt);
    return run_simulate(c);
  });
}

int cmd_tail(const Options& opt, std::ostream&, std::ostream& err) {
  return guarded(err, [&] {
    Context c = load_context(opt);
    return run_tail(c);
  });
}

int cmd_full(const Options& opt, std::ostream&, std::ostream& err) {
  return guarded(err, [&] {
    Context c = load_context(opt);
    return run_full(c, err);
  });
}

int cmd_replay(const std::string& manifest_path, const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    json m;
    try {
      m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, manifest_path + ": " + e.what());
    }
    const json& p = m.at("parameters");
    Options o;
    o.out = opt.out;
    o.seed = p.at("seed").get<std::uint64_t>();
    o.threads = opt.threads;
    o.grid = p.at("grid").get<int>();
    o.s_grid = p.at("s_grid").get<std::string>();
    o.chi = p.at("chi").get<bool>();
    o.depth = p.at("depth").get<std::string>();
    o.eps = p.at("eps").get<double>();
    o.samples = p.at("samples").get<std::size_t>();
    o.quantile_window = p.at("quantile_window").get<std::string>();
    o.hill_k = p.at("hill_k").get<std::size_t>();
    o.use_spectral = p.at("use_spectral").get<bool>();
    o.alpha_steps = p.at("alpha_steps").get<std::size_t>();
    o.alpha_trials = p.at("alpha_trials").get<std::size_t>();
    if (p.contains("samples_input")) o.samples_file = p["samples_input"]["path"].get<std::string>();
    if (p.contains("spectral_input")) o.spectral_file = p["spectral_input"]["path"].get<std::string>();
    Context c = make_context(o, parse_scenario(m.at("scenario").dump()));
    const std::string sub = m.at("subcommand").get<std::string>();
    if (sub == "check") return run_check(c, out);
    if (sub == "spectral") return run_spectral(c, err);
    if (sub == "simulate") return run_simulate(c);
    if (sub == "tail") return run_tail(c);
    if (sub == "full") return run_full(c, err);
    throw Error(ErrorCode::ParseError, "unknown subcommand '" + sub + "' in manifest");
  });
}

}  // namespace kesten::cli
