#include <CLI11.hpp>
#include <iostream>

#include "kesten_cli/commands.hpp"

namespace kc = kesten::cli;

namespace {

void add_common(CLI::App* sub, kc::Options& opt, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "master seed (default: scenario seed)");
  sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--grid", opt.grid, "sphere grid resolution K (default per dimension)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and tail analysis for multidimensional smoothing transforms"};
  app.require_subcommand(1);
  kc::Options opt;
  std::uint64_t seed = 0;
  std::string manifest;

  auto* check = app.add_subcommand("check", "audit scenario hypotheses");
  auto* spectral = app.add_subcommand("spectral", "kappa curve and tail index");
  auto* simulate = app.add_subcommand("simulate", "sample the fixed point");
  auto* tail = app.add_subcommand("tail", "tail analysis of simulated samples");
  auto* full = app.add_subcommand("full", "check, spectral, simulate and tail in one run");
  auto* replay = app.add_subcommand("replay", "rerun the command recorded in a manifest");

  for (auto* sub : {check, spectral, simulate, tail, full}) {
    sub->add_option("scenario", opt.scenario, "scenario JSON file")->required();
    add_common(sub, opt, seed);
  }
  for (auto* sub : {spectral, simulate, tail, full, replay})
    sub->add_option("--out", opt.out, "output directory");
  for (auto* sub : {spectral, full}) sub->add_option("--s-grid", opt.s_grid, "kappa curve grid a:b:step");
  spectral->add_flag("--chi", opt.chi, "solve N kappa(chi) = 1");
  for (auto* sub : {simulate, full}) {
    sub->add_option("--depth", opt.depth, "tree depth or 'auto'");
    sub->add_option("--eps", opt.eps, "truncation target for --depth auto");
    sub->add_option("--samples", opt.samples, "number of fixed point samples");
  }
  for (auto* sub : {tail, full}) {
    sub->add_option("--quantile-window", opt.quantile_window, "upper tail window upper:lower");
    sub->add_option("--hill-k", opt.hill_k, "Hill top-order count (default n/1000)");
    sub->add_option("--alpha-steps", opt.alpha_steps, "tilted chain length");
    sub->add_option("--alpha-trials", opt.alpha_trials, "tilted chain replicas");
  }
  tail->add_option("--samples-file", opt.samples_file, "samples CSV (default <out>/samples.csv)");
  tail->add_flag("--use-spectral", opt.use_spectral, "take chi from spectral.json instead of solving");
  tail->add_option("--spectral", opt.spectral_file, "spectral.json path (default <out>/spectral.json)");
  replay->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kc::kMissingInput;
  }
  for (auto* sub : {check, spectral, simulate, tail, full})
    if (sub->parsed() && sub->count("--seed")) opt.seed = seed;

  if (check->parsed()) return kc::cmd_check(opt, std::cout, std::cerr);
  if (spectral->parsed()) return kc::cmd_spectral(opt, std::cout, std::cerr);
  if (simulate->parsed()) return kc::cmd_simulate(opt, std::cout, std::cerr);
  if (tail->parsed()) return kc::cmd_tail(opt, std::cout, std::cerr);
  if (full->parsed()) return kc::cmd_full(opt, std::cout, std::cerr);
  return kc::cmd_replay(manifest, opt, std::cout, std::cerr);
}
