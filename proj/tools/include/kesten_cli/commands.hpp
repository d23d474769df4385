#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "kesten/errors.hpp"

namespace kesten::cli {

enum ExitCode : int {
  kOk = 0,
  kAuditFailure = 1,
  kSpectralFailure = 2,
  kMissingInput = 3,
  kBudgetExceeded = 4,
};

int exit_code_for(ErrorCode code);

struct Options {
  std::string scenario;
  std::string out = "out";
  std::optional<std::uint64_t> seed;  // falls back to the scenario seed
  unsigned threads = 1;
  int grid = 0;  // 0: per-dimension default
  std::string s_grid = "0:3:0.1";
  bool chi = false;
  std::string depth = "auto";
  double eps = 1e-3;
  std::size_t samples = 100000;
  std::string quantile_window = "0.01:0.0001";
  std::size_t hill_k = 0;  // 0: max(30, n / 1000)
  std::string samples_file;  // tail input, default <out>/samples.csv
  bool use_spectral = false;
  std::string spectral_file;  // default <out>/spectral.json
  std::size_t alpha_steps = 2000;
  std::size_t alpha_trials = 200;
};

// Each command returns a process exit code. Errors are reported on err.
int cmd_check(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_spectral(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_simulate(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_tail(const Options& opt, std::ostream& out, std::ostream& err);
int cmd_full(const Options& opt, std::ostream& out, std::ostream& err);
// Re-runs the command recorded in a manifest into opt.out.
int cmd_replay(const std::string& manifest_path, const Options& opt, std::ostream& out, std::ostream& err);

int default_grid(int dim);

}  // namespace kesten::cli
