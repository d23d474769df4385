// Acceptance criteria. One PASS/FAIL line each; exit status 1 if any fails.
#include <unistd.h>

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "kesten/branching.hpp"
#include "kesten/model.hpp"
#include "kesten/rng.hpp"
#include "kesten/spectral.hpp"
#include "kesten/tailkit.hpp"
#include "kesten_cli/commands.hpp"
#include "kesten_cli/output.hpp"

using namespace kesten;
namespace fs = std::filesystem;

namespace {

const std::string kDir = KESTEN_SCENARIO_DIR;

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string f(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
void guarded(int id, const char* name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

// Independent oracles.

double perron_eigenvalue(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a);
  double best = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) best = std::max(best, es.eigenvalues()(i).real());
  return best;
}

double scalar_moment(const std::vector<std::pair<double, double>>& atoms, double s) {
  double m = 0.0;
  for (auto [a, p] : atoms) m += p * std::pow(a, s);
  return m;
}

double bisect(const std::function<double(double)>& g, double lo, double hi) {
  double glo = g(lo);
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if ((gm < 0.0) == (glo < 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

const std::vector<std::pair<double, double>> kScalarAtoms = {{std::ldexp(1.0, -8), 0.9}, {16.0, 0.1}};

struct Shared {
  Scenario scalar;
  Scenario ref;
  SphereGrid scalar_grid;
  SphereGrid ref_grid;
  double scalar_chi = 0.0;
  double ref_chi = 0.0;
  SampleSet scalar_r;
  SampleSet ref_r;
};

Shared shared;

void criterion1() {
  guarded(1, "singleton spectral oracle", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario sc = load_scenario(kDir + "/singleton_2x2.json");
    const SphereGrid grid = SphereGrid::build(2, 512);
    const double lambda = perron_eigenvalue(sc.mu.atoms()[0].matrix.matrix());
    double worst = 0.0;
    for (double s : {0.5, 1.0, 2.0}) {
      const double want = std::pow(lambda, s);
      worst = std::max(worst, std::abs(kappa_grid(sc.mu, s, grid) - want) / want);
    }
    const double secs = seconds_since(t0);
    report(1, "singleton spectral oracle", worst <= 1e-3 && secs < 5.0,
           "max rel err " + f("%.3e", worst) + " (<= 1e-3), oracle lambda " + f("%.12g", lambda) + ", " +
               f("%.2f", secs) + " s (< 5)");
  });
}

void criterion2() {
  guarded(2, "scalar closed-form chi", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario& sc = shared.scalar;
    const ChiResult r = solve_chi(sc.mu, sc.N, shared.scalar_grid, 0.0);
    const double secs = seconds_since(t0);
    // Upward crossing of N E A^s = 1.
    const double oracle = bisect([](double s) { return 2.0 * scalar_moment(kScalarAtoms, s) - 1.0; }, 0.3, 1.0);
    shared.scalar_chi = r.chi;
    const double err = std::abs(r.chi - oracle);
    report(2, "scalar closed-form chi", err <= 1e-6 && secs < 1.0,
           "chi " + f("%.12f", r.chi) + " vs oracle " + f("%.12f", oracle) + ", |diff| " + f("%.2e", err) +
               " (<= 1e-6), " + f("%.3f", secs) + " s (< 1)");
  });
}

void criterion3() {
  guarded(3, "kappa(0) = 1 on fixtures", [] {
    double worst = 0.0;
    std::string names;
    for (const auto& entry : fs::directory_iterator(kDir)) {
      if (entry.path().extension() != ".json") continue;
      const Scenario sc = load_scenario(entry.path().string());
      const SphereGrid grid = SphereGrid::build(sc.dim, kesten::cli::default_grid(sc.dim));
      worst = std::max(worst, std::abs(kappa_grid(sc.mu, 0.0, grid) - 1.0));
      names += (names.empty() ? "" : ",") + entry.path().stem().string();
    }
    report(3, "kappa(0) = 1 on fixtures", worst <= 1e-10, "max |kappa(0) - 1| " + f("%.2e", worst) + " over " + names);
  });
}

void criterion4() {
  guarded(4, "cocycle identity", [] {
    const Scenario& sc = shared.ref;
    const double s = 0.9;
    const SpectralSolution sol = solve_spectral(sc.mu, s, shared.ref_grid);
    const EigenfunctionFormula e(shared.ref_grid, sol.nu_star, s);
    Stream rng(20240611);
    double worst = 0.0;
    for (int w = 0; w < 1000; ++w) {
      const std::size_t len = 1 + static_cast<std::size_t>(rng.uniform() * 10.0);
      std::vector<std::size_t> word(len);
      for (auto& k : word) k = sc.mu.sample_atom(rng);
      const std::size_t split = static_cast<std::size_t>(rng.uniform() * static_cast<double>(len + 1));
      const double th = 0.5 * std::numbers::pi * rng.uniform();
      Vector x(2);
      x << std::cos(th), std::sin(th);
      worst = std::max(worst, cocycle_error(sc.mu, word, std::min(split, len), x, e, sol.kappa));
    }
    report(4, "cocycle identity", worst <= 1e-12, "max log-space error " + f("%.2e", worst) + " over 1000 words (<= 1e-12)");
  });
}

void criterion5() {
  guarded(5, "Q stochasticity and stationary measure", [] {
    const Scenario& sc = shared.ref;
    const SpectralSolution sol = solve_spectral(sc.mu, shared.ref_chi, shared.ref_grid);
    const TransferOperator m = build_transfer_operator(sc.mu, sol.s, shared.ref_grid, false);
    const TransferOperator q = markov_operator(m, sol.e_fun, sol.kappa);
    const double stoch = row_stochasticity_residual(q);
    const double tv = total_variation(stationary_measure(sol, m, StationaryMode::Direct),
                                      stationary_measure(sol, m, StationaryMode::Iterate));
    report(5, "Q stochasticity and stationary measure", stoch <= 1e-6 && tv <= 1e-8,
           "row residual " + f("%.2e", stoch) + " (<= 1e-6), TV(direct, iterate) " + f("%.2e", tv) + " (<= 1e-8)");
  });
}

void criterion6() {
  guarded(6, "eigenfunction integral formula", [] {
    const Scenario& sc = shared.ref;
    const double s = shared.ref_chi;
    const SphereGrid g512 = SphereGrid::build(2, 512);
    const SphereGrid g1024 = SphereGrid::build(2, 1024);
    const FormulaCheck c512 = eigenfunction_formula_check(solve_spectral(sc.mu, s, g512), g512);
    const FormulaCheck c1024 = eigenfunction_formula_check(solve_spectral(sc.mu, s, g1024), g1024);
    const bool pass = !c512.skipped && c512.deviation <= 0.02 && c1024.deviation < c512.deviation;
    report(6, "eigenfunction integral formula", pass,
           "max rel dev K=512 " + f("%.3e", c512.deviation) + " (<= 2e-2), K=1024 " + f("%.3e", c1024.deviation) +
               " (must shrink); starred pair " + f("%.3e", c512.deviation_star) + " / " +
               f("%.3e", c1024.deviation_star));
  });
}

void criterion7() {
  guarded(7, "moment decay rate", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario& sc = shared.ref;
    const double s = 0.9 * std::min(1.0, shared.ref_chi);
    const double kap = kappa_grid(sc.mu, s, shared.ref_grid);
    const MomentDecayReport rep = moment_decay_study(sc, s, 8, 100000, sc.seed, kap, 1);
    const double secs = seconds_since(t0);
    const double rel = std::abs(rep.fitted_rate / rep.n_kappa - 1.0);
    report(7, "moment decay rate", rel <= 0.15 && secs < 60.0,
           "s " + f("%.4f", s) + ", fitted rate " + f("%.4f", rep.fitted_rate) + " vs N kappa " + f("%.4f", rep.n_kappa) +
               ", rel diff " + f("%.3f", rel) + " (<= 0.15), " + f("%.1f", secs) + " s on 1 thread (< 60)");
  });
}

SampleSet auto_depth_samples(const Scenario& sc, const SphereGrid& grid, double chi, std::size_t n, int& depth) {
  const DepthPlan plan = plan_depth_auto(
      sc, [&](double s) { return kappa_grid(sc.mu, s, grid); }, chi, 1e-3, 20000, sc.seed, 1);
  depth = plan.depth;
  BranchingConfig cfg;
  cfg.depth = plan.depth;
  cfg.samples = n;
  return sample_R_batch(sc, cfg, sc.seed, 1).r;
}

void criterion8() {
  guarded(8, "Hill tail index", [] {
    const auto t0 = std::chrono::steady_clock::now();
    int depth = 0;
    shared.scalar_r = auto_depth_samples(shared.scalar, shared.scalar_grid, shared.scalar_chi, 1000000, depth);
    const auto x = shared.scalar_r.project(Vector::Ones(1));
    const TailIndex h = hill_estimate(x, x.size() / 1000);
    const double secs = seconds_since(t0);
    const double err = std::abs(h.chi - shared.scalar_chi);
    report(8, "Hill tail index", err <= 0.08 && secs < 300.0,
           "hill " + f("%.4f", h.chi) + " (k=1000) vs chi " + f("%.4f", shared.scalar_chi) + ", |diff| " +
               f("%.4f", err) + " (<= 0.08), depth " + std::to_string(depth) + ", " + f("%.1f", secs) +
               " s on 1 thread (< 300)");
  });
}

void criterion9() {
  guarded(9, "direction profile", [] {
    int depth = 0;
    shared.ref_r = auto_depth_samples(shared.ref, shared.ref_grid, shared.ref_chi, 1000000, depth);
    const SpectralSolution sol = solve_spectral(shared.ref.mu, shared.ref_chi, shared.ref_grid);
    const EigenfunctionFormula e(shared.ref_grid, sol.nu, shared.ref_chi);
    std::vector<Vector> dirs;
    for (int k = 0; k <= 4; ++k) {
      const double th = k * std::numbers::pi / 8.0;
      Vector u(2);
      u << std::cos(th), std::sin(th);
      dirs.push_back(u);
    }
    const DirectEstimate d = C_chi_direct(shared.ref_r, dirs, shared.ref_chi, e);
    double worst = 0.0;
    std::string vals;
    for (const auto& a : d.directions) {
      vals += f(" %.4g", a.estimate);
      for (const auto& b : d.directions)
        worst = std::max(worst, std::abs(a.estimate - b.estimate) / std::min(a.estimate, b.estimate));
    }
    report(9, "direction profile", worst <= 0.2,
           "normalized estimates" + vals + ", max pairwise rel diff " + f("%.3f", worst) + " (<= 0.2), depth " +
               std::to_string(depth));
  });
}

void criterion10() {
  guarded(10, "C_chi cross-validation", [] {
    const Scenario& sc = shared.scalar;
    const SpectralSolution sol = solve_spectral(sc.mu, shared.scalar_chi, shared.scalar_grid);
    const EigenfunctionFormula e(shared.scalar_grid, sol.nu, shared.scalar_chi);
    const AlphaResult a = lyapunov_alpha(sc.mu, shared.scalar_chi, sol, shared.scalar_grid, AlphaMode::Quadrature);
    const FormulaEstimate cf = C_chi_formula(sc, sol, shared.scalar_grid, e, a.alpha, shared.scalar_r, sc.seed);
    const DirectEstimate cd = C_chi_direct(shared.scalar_r, {Vector::Ones(1)}, shared.scalar_chi, e);
    const double gap = std::abs(cf.c - cd.pooled);
    const double allowed = 1.959963984540054 * std::hypot(cf.se, cd.se);
    const bool agree = gap <= allowed;

    const Scenario hi = load_scenario(kDir + "/scalar_chi_ge1.json");
    const SphereGrid g1 = SphereGrid::build(1, 1);
    const double chi = solve_chi(hi.mu, hi.N, g1, 0.0).chi;
    int depth = 0;
    const SampleSet r = auto_depth_samples(hi, g1, chi, 200000, depth);
    const SpectralSolution sol_hi = solve_spectral(hi.mu, chi, g1);
    const EigenfunctionFormula e_hi(g1, sol_hi.nu, chi);
    const double a_hi = lyapunov_alpha(hi.mu, chi, sol_hi, g1, AlphaMode::Quadrature).alpha;
    const FormulaEstimate f_hi = C_chi_formula(hi, sol_hi, g1, e_hi, a_hi, r, hi.seed);
    const bool positive = chi >= 1.0 && f_hi.c >= f_hi.lower_bound && f_hi.lower_bound > 0.0;
    report(10, "C_chi cross-validation", agree && positive,
           "scalar: formula " + f("%.4f", cf.c) + " +- " + f("%.4f", cf.se) + ", direct " + f("%.4f", cd.pooled) +
               " +- " + f("%.4f", cd.se) + ", |gap| " + f("%.4f", gap) + " (<= " + f("%.4f", allowed) +
               "); chi>=1 fixture: chi " + f("%.4f", chi) + ", formula " + f("%.4f", f_hi.c) + " >= bound " +
               f("%.4f", f_hi.lower_bound) + " > 0");
  });
}

void criterion11() {
  guarded(11, "moment inequality harness", [] {
    int bad = 0;
    double worst_margin = 1e300;
    for (bool second : {false, true}) {
      const auto configs = harness_sweep(50, second, second ? 2 : 1);
      for (std::size_t i = 0; i < configs.size(); ++i) {
        const HarnessResult r = run_harness(configs[i], 200000, 1000 + i + (second ? 500 : 0), 0.99);
        if (!r.pass) ++bad;
        if (r.rhs > 0.0) worst_margin = std::min(worst_margin, (r.rhs - r.lhs_ci_hi) / r.rhs);
      }
    }
    report(11, "moment inequality harness", bad == 0,
           std::to_string(bad) + " of 100 configs violate (99% upper CI <= rhs), smallest relative slack " +
               f("%.3f", worst_margin));
  });
}

void criterion12() {
  guarded(12, "fixed-point KS", [] {
    const Scenario& sc = shared.ref;
    const DepthPlan plan = plan_depth_auto(
        sc, [&](double s) { return kappa_grid(sc.mu, s, shared.ref_grid); }, shared.ref_chi, 1e-3, 20000, sc.seed, 1);
    BranchingConfig cfg;
    cfg.depth = plan.depth;
    const FixedPointReport rep = fixed_point_test(sc, cfg, 100000, default_directions(2), sc.seed + 1, 1);
    double worst = 0.0;
    std::string vals;
    for (const auto& d : rep.directions) {
      worst = std::max(worst, d.ks);
      vals += f(" %.4f", d.ks);
    }
    report(12, "fixed-point KS", worst <= 0.01,
           "KS per direction" + vals + " (<= 0.01), depth " + std::to_string(rep.depth));
  });
}

void criterion13() {
  guarded(13, "max/sum identity", [] {
    const Scenario& sc = shared.ref;
    Stream rng(77);
    double worst = 0.0, worst_dom = 0.0;
    for (int c = 0; c < 10; ++c) {
      const double th = 0.5 * std::numbers::pi * rng.uniform();
      Vector u(2);
      u << std::cos(th), std::sin(th);
      const double gamma = shared.ref_chi + 0.05 + 0.9 * rng.uniform();
      // Disjoint slices of the shared sample per config.
      SampleSet slice;
      slice.dim = 2;
      const std::size_t per = 100000;
      slice.data.assign(shared.ref_r.data.begin() + static_cast<std::ptrdiff_t>(c * per * 2),
                        shared.ref_r.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * per * 2));
      const auto y = ar_projections(sc, slice, u, per / sc.N, 500 + c);
      const IdentityCheck ic = max_sum_identity(y, sc.N, gamma);
      worst = std::max(worst, ic.rel_error);
      worst_dom = std::max(worst_dom, ic.max_domination_violation);
    }
    report(13, "max/sum identity", worst <= 1e-10 && worst_dom <= 0.0,
           "max rel error " + f("%.2e", worst) + " (<= 1e-10), max domination violation " + f("%.2e", worst_dom));
  });
}

void criterion14() {
  guarded(14, "reproducibility", [] {
    const fs::path base = fs::temp_directory_path() / ("kesten_accept_" + std::to_string(::getpid()));
    fs::remove_all(base);
    std::ostringstream sink;
    auto run = [&](const std::string& name, unsigned threads) {
      kesten::cli::Options o;
      o.scenario = kDir + "/reference_2d.json";
      o.out = (base / name).string();
      o.samples = 20000;
      o.threads = threads;
      return kesten::cli::cmd_full(o, sink, sink);
    };
    const int rc = run("a", 1) | run("b", 1) | run("c", 8);
    int mismatches = 0, compared = 0;
    for (const char* file : {"report.json", "samples.csv", "levels.csv", "tail.csv", "kappa_curve.csv", "spectral.json",
                             "audit.json"}) {
      const std::string da = kesten::cli::sha256_file(base / "a" / file);
      for (const char* other : {"b", "c"}) {
        ++compared;
        if (kesten::cli::sha256_file(base / other / file) != da) ++mismatches;
      }
    }
    fs::remove_all(base);
    report(14, "reproducibility", rc == 0 && mismatches == 0,
           std::to_string(compared) + " digest comparisons (rerun and --threads 8), " + std::to_string(mismatches) +
               " mismatches, exit codes " + std::to_string(rc));
  });
}

void criterion15() {
  guarded(15, "Lyapunov sign gate", [] {
    const Scenario& sc = shared.scalar;
    const double chi = shared.scalar_chi;
    const SpectralSolution sol = solve_spectral(sc.mu, chi, shared.scalar_grid);
    const AlphaResult q = lyapunov_alpha(sc.mu, chi, sol, shared.scalar_grid, AlphaMode::Quadrature);
    const AlphaResult e = lyapunov_alpha(sc.mu, chi, sol, shared.scalar_grid, AlphaMode::Ergodic, 2000, 400, sc.seed);
    double num = 0.0;
    for (auto [a, p] : kScalarAtoms) num += p * std::pow(a, chi) * std::log(a);
    const double oracle = num / scalar_moment(kScalarAtoms, chi);
    const bool agree = std::abs(q.alpha - e.alpha) <= 1.959963984540054 * std::hypot(q.se, e.se);

    const Scenario ci = load_scenario(kDir + "/identity_quarter.json");
    const SphereGrid g = SphereGrid::build(2, 512);
    double worst = 0.0;
    for (double s : {0.5, 1.0, 2.0}) {
      const SpectralSolution sol_ci = solve_spectral(ci.mu, s, g);
      const AlphaResult a = lyapunov_alpha(ci.mu, s, sol_ci, g, AlphaMode::Quadrature);
      worst = std::max(worst, std::abs(a.alpha - std::log(0.25)));
    }
    report(15, "Lyapunov sign gate", q.alpha > 0.0 && agree && worst <= 1e-12,
           "scalar alpha quadrature " + f("%.6f", q.alpha) + " (closed form " + f("%.6f", oracle) + "), ergodic " +
               f("%.6f", e.alpha) + " +- " + f("%.6f", e.se) + "; c*I |alpha - log c| " + f("%.2e", worst) +
               " (<= 1e-12)");
  });
}

}  // namespace

int main() {
  try {
    shared.scalar = load_scenario(kDir + "/scalar_heavy.json");
    shared.ref = load_scenario(kDir + "/reference_2d.json");
    shared.scalar_grid = SphereGrid::build(1, 1);
    shared.ref_grid = SphereGrid::build(2, 512);
    shared.ref_chi = solve_chi(shared.ref.mu, shared.ref.N, shared.ref_grid, 0.0).chi;
    shared.scalar_chi = solve_chi(shared.scalar.mu, shared.scalar.N, shared.scalar_grid, 0.0).chi;
  } catch (const std::exception& e) {
    std::printf("FAIL  0 setup: %s\n", e.what());
    return 1;
  }
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  criterion11();
  criterion12();
  criterion13();
  criterion14();
  criterion15();
  std::printf("%d of 15 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
