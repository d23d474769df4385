#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kesten/model.hpp"
#include "kesten/stats.hpp"

namespace kesten {

inline constexpr std::uint64_t kDefaultNodeBudget = std::uint64_t{1} << 26;

struct BranchingConfig {
  int depth = 0;
  std::size_t samples = 0;
  double s_for_bound = 1.0;
  double target_truncation_error = 1e-3;
  std::uint64_t node_budget = kDefaultNodeBudget;
};

// sum_{j <= depth} N^j, saturating.
std::uint64_t tree_node_count(int N, int depth);
void check_budget(int N, int depth, std::uint64_t node_budget);

// Row-major samples, one row of dim entries per draw.
struct SampleSet {
  int dim = 0;
  std::vector<double> data;
  std::size_t size() const { return dim ? data.size() / static_cast<std::size_t>(dim) : 0; }
  const double* row(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(dim); }
  double* row(std::size_t i) { return data.data() + i * static_cast<std::size_t>(dim); }
  std::vector<double> project(const Vector& u) const;
};

struct WDraw {
  Vector w;
  std::uint64_t node_count = 0;
};

struct FixedPointSample {
  Vector r;
  std::vector<Vector> levels;  // W_0 .. W_depth from one tree
  std::vector<double> per_level_norms;
};

// Depth-first walk of one N-ary tree. Node v at depth j carries the path
// product P_v = A_{v_1} A_{v_1 v_2} ... and contributes P_v B_v to level j.
// With leaf_law set, the depth-n leaves draw from it instead of eta
// (the W_n(R_0*) construction).
class TreeSampler {
 public:
  explicit TreeSampler(const Scenario& sc);
  // levels_out holds (depth+1)*dim entries. B is drawn at every node when
  // all_levels, otherwise only at the leaves.
  void draw(Stream& rng, int depth, double* levels_out, bool all_levels, const VectorLaw* leaf_law = nullptr);

 private:
  const Scenario& sc_;
  int d_;
  std::vector<double> stack_;
  std::vector<int> depth_stack_;
  std::vector<double> a_, b_;
};

WDraw sample_W(const Scenario& sc, int n, Stream& rng, std::uint64_t node_budget = kDefaultNodeBudget);
FixedPointSample sample_R(const Scenario& sc, const BranchingConfig& config, Stream& rng);

struct SampleBatch {
  SampleSet r;
  int depth = 0;
  // samples x (depth + 1) norms |W_j|, filled when requested.
  std::vector<double> level_norms;
};

// Draw i uses Stream::derive(seed, {stream_domain, i}).
SampleBatch sample_R_batch(const Scenario& sc, const BranchingConfig& config, std::uint64_t seed, unsigned threads,
                           bool keep_level_norms = false, std::uint64_t stream_domain = domain::sample_r);

struct LevelMoment {
  int n = 0;
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct DepthPlan {
  int depth = 0;
  double s = 0.0;
  double K_hat = 0.0;
  double eta_hat = 0.0;
  double eta_ci_lo = 0.0;
  double eta_ci_hi = 0.0;
  double n_kappa = 0.0;
  double eps = 0.0;
  std::vector<LevelMoment> pilot;
};

inline constexpr int kPilotLevels = 6;

// Least depth with the fitted geometric tail bound below eps^s.
int depth_from_fit(double K, double eta, double s, double eps);

DepthPlan plan_depth(const Scenario& sc, double kappa_at_s, double s, double eps, std::size_t pilot_samples = 20000,
                     std::uint64_t seed = 0, unsigned threads = 1, std::uint64_t node_budget = kDefaultNodeBudget);

// Scans s over (0, chi) for the smallest theoretical depth (K = 1,
// eta = N kappa(s)) and then runs plan_depth there.
DepthPlan plan_depth_auto(const Scenario& sc, const std::function<double(double)>& kappa, double chi, double eps,
                          std::size_t pilot_samples = 20000, std::uint64_t seed = 0, unsigned threads = 1,
                          std::uint64_t node_budget = kDefaultNodeBudget);

struct MomentDecayReport {
  double s = 0.0;
  std::vector<LevelMoment> levels;  // n = 0..n_max
  double fitted_rate = 0.0;
  double rate_ci_lo = 0.0;
  double rate_ci_hi = 0.0;
  double n_kappa = 0.0;
  double ratio = 0.0;  // fitted_rate / n_kappa
  bool exceeds = false;
};

MomentDecayReport moment_decay_study(const Scenario& sc, double s, int n_max, std::size_t samples, std::uint64_t seed,
                                     double kappa_at_s, unsigned threads = 1, double tolerance = 0.15,
                                     std::uint64_t node_budget = kDefaultNodeBudget);

std::vector<Vector> default_directions(int dim);

struct DirectionKS {
  Vector u;
  double ks = 0.0;
  double p_value = 0.0;
};

struct FixedPointReport {
  int depth = 0;
  std::vector<DirectionKS> directions;
  std::vector<DirectionKS> null_directions;  // P1 vs an independent P1
};

FixedPointReport fixed_point_test(const Scenario& sc, const BranchingConfig& config, std::size_t samples,
                                  const std::vector<Vector>& u_list, std::uint64_t seed, unsigned threads = 1,
                                  bool null_check = false);

struct CouplingReport {
  int n = 0;
  std::vector<DirectionKS> directions;  // recursive R*_n vs R^(n-1) + W_n(R_0*), independent draws
  double path_gap = 0.0;  // max relative |R*_n - (R^(n-1) + W_n(R_0*))| on shared draws
  std::vector<LevelMoment> w_moments;   // E|W_k(R_0*)|^s, k = 1..n
  double fitted_rate = 0.0;
  double n_kappa = 0.0;
};

// R*_n by the recursion R*_{k+1} = sum A R*_k + B.
Vector iterate_recursion(const Scenario& sc, int n, const VectorLaw& initial, Stream& rng);

CouplingReport uniqueness_coupling_test(const Scenario& sc, int n, const VectorLaw& initial, std::size_t samples,
                                        const std::vector<Vector>& u_list, double s, double kappa_at_s,
                                        std::uint64_t seed, unsigned threads = 1,
                                        std::uint64_t node_budget = kDefaultNodeBudget);

// KS between recursive populations started from two initial laws, n = 1..n_max,
// projected on u.
std::vector<double> initial_law_convergence(const Scenario& sc, const VectorLaw& first, const VectorLaw& second,
                                            int n_max, std::size_t samples, const Vector& u, std::uint64_t seed,
                                            unsigned threads = 1);

}  // namespace kesten
