#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "kesten/branching.hpp"
#include "kesten/model.hpp"
#include "kesten/spectral.hpp"

namespace kesten {

inline constexpr std::size_t kMinTailSamples = 10000;

// Upper-tail window in probability, e.g. top 1% down to top 0.01%.
struct QuantileWindow {
  double upper = 1e-2;
  double lower = 1e-4;
};

struct SurvivalPoint {
  double t = 0.0;
  double survival = 0.0;  // P(X > t)
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// Empirical survival at the order statistics whose upper rank falls in the
// window. Wilson intervals.
std::vector<SurvivalPoint> tail_curve(std::span<const double> x, QuantileWindow window = {}, double level = 0.95);

// P(X > t) for x sorted ascending.
double empirical_survival(std::span<const double> sorted, double t);

struct TailIndex {
  double chi = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t k = 0;
};

// Hill estimator on the k largest values: 1 / mean log(X_(i) / X_(k+1)).
TailIndex hill_estimate(std::span<const double> x, std::size_t k, double level = 0.95);
std::vector<TailIndex> hill_curve(std::span<const double> x, std::span<const std::size_t> ks, double level = 0.95);

// Least squares slope of log survival against log t on the window.
TailIndex rank_slope(std::span<const double> x, QuantileWindow window = {}, double level = 0.95);

struct CurvePoint {
  double t = 0.0;
  double value = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// G(t) = E[min(X+, e^t)^(chi+1)] / ((chi+1) e^t e_u).
std::vector<CurvePoint> smoothing_G(std::span<const double> x, std::span<const double> t_grid, double chi, double e_u,
                                    double level = 0.95);

struct DecayFit {
  double beta = 0.0;
  double c_beta = 0.0;
  std::size_t points = 0;
  bool decays = false;
};

struct DefectReport {
  std::vector<CurvePoint> g;
  DecayFit left;   // t -> -inf
  DecayFit right;  // t -> +inf
};

// g(t) = G_R(t) - N G_AR(t) from independent populations of <R,u> and <AR,u>.
DefectReport defect_g(std::span<const double> r_proj, std::span<const double> ar_proj, int N,
                      std::span<const double> t_grid, double chi, double e_u, double level = 0.95);

// <A_i R_i, u> for trials x N fresh matrices against consecutive rows of r.
// Row t*N + i of r feeds trial t, child i. Result is trials x N, row-major.
std::vector<double> ar_projections(const Scenario& sc, const SampleSet& r, const Vector& u, std::size_t trials,
                                   std::uint64_t seed);

// Uniform grid in t.
struct TGrid {
  double t0 = 0.0;
  double dt = 1.0;
  std::size_t n = 0;
  double at(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
  std::vector<double> points() const;
};

// rows: grid nodes, cols: t points.
using GridFunction = Eigen::MatrixXd;

// Theta f(u_i, t) = sum over moves of prob * f(target, t - log|a* u_i|).
// Linear in t inside the grid; below t0 f decays like e^{left_rate (t - t0)},
// above the last point it is held constant.
GridFunction theta_apply(const TiltedChain& chain, const GridFunction& f, const TGrid& tg, double left_rate);

struct PotentialResult {
  GridFunction sum;                // sum_{n <= M} Theta^n g
  std::vector<double> increments;  // sup |Theta^n g| per n
};

PotentialResult theta_potential(const TiltedChain& chain, const GridFunction& g, const TGrid& tg, int M,
                                double left_rate);

struct FormulaEstimate {
  double c = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double lower_bound = 0.0;  // valid when chi >= 1
  double c_chi_const = 0.0;  // min_i sum_j <x_i,u_j>^chi pi*_j
  double b_moment = 0.0;     // E|B|^chi
  bool positivity_guaranteed = false;
  std::size_t trials = 0;
};

// (1/(alpha chi)) sum_j pi*_j E(<sum A_i R_i + B, u_j>^chi - sum <A_i R_i, u_j>^chi) / e(u_j)
// with e given by the eigenfunction formula. Uses floor(r.size() / N) trials.
FormulaEstimate C_chi_formula(const Scenario& sc, const SpectralSolution& sol, const SphereGrid& grid,
                              const EigenfunctionFormula& e, double alpha, const SampleSet& r, std::uint64_t seed,
                              std::size_t b_trials = 1000000, double level = 0.95);

struct DirectionEstimate {
  Vector u;
  double e_u = 0.0;
  double estimate = 0.0;  // mean of t^chi P(X > t) / e_u on the window
  double se = 0.0;
  std::vector<double> t;
  std::vector<double> values;
  double slope = 0.0;    // of log value against log t, GLS
  double slope_p = 1.0;  // two-sided, order statistic covariance
  bool stable = true;    // slope_p > 0.01
};

struct DirectEstimate {
  std::vector<DirectionEstimate> directions;
  double pooled = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

DirectionEstimate tail_product(std::span<const double> x, double chi, double e_u, QuantileWindow window = {},
                               std::size_t points = 25);

DirectEstimate C_chi_direct(const SampleSet& r, const std::vector<Vector>& u_list, double chi,
                            const EigenfunctionFormula& e, QuantileWindow window = {}, std::size_t points = 25,
                            double level = 0.95);

// Nonnegative summand laws for the moment inequality harness.
struct YLaw {
  enum class Kind { Point, Uniform, Exponential, Pareto } kind = Kind::Point;
  double a = 1.0;  // point value | uniform lo | exponential scale | pareto scale
  double b = 1.0;  // uniform hi | pareto shape
  double sample(Stream& rng) const;
  double moment(double q) const;  // E Y^q, +inf when infinite
};

struct HarnessResult {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double lhs_ci_hi = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

// E((sum Y_i)^alpha - sum Y_i^alpha) <= k^alpha (E Y^{p-1})^{alpha/(p-1)}, p = ceil(alpha).
HarnessResult excess_bound_alpha(double alpha, int k, const YLaw& y, std::size_t trials, std::uint64_t seed, double level = 0.99);
// E((sum Y_i)^{p+beta} - sum Y_i^{p+beta}) <= k^{p+1} (E Y^{p-delta})^{(p+beta)/(p-delta)}.
HarnessResult excess_bound_split(int p, double beta, double delta, int k, const YLaw& y, std::size_t trials, std::uint64_t seed,
                    double level = 0.99);

struct HarnessConfig {
  bool second = false;
  double alpha = 0.0;  // excess_bound_alpha
  int p = 0;           // excess_bound_split
  double beta = 0.0;
  double delta = 0.0;
  int k = 1;
  YLaw y;
};

// Random configurations with Pareto shapes leaving a finite second moment
// of the left side.
std::vector<HarnessConfig> harness_sweep(int count, bool second, std::uint64_t seed);
HarnessResult run_harness(const HarnessConfig& cfg, std::size_t trials, std::uint64_t seed, double level = 0.99);

struct IdentityCheck {
  double left = 0.0;   // integral of step functions
  double right = 0.0;  // moment difference
  double rel_error = 0.0;
  double max_domination_violation = 0.0;  // P(max > r) - min(1, N P(AR > r))
};

// y is trials x N row-major, gamma = chi + beta.
IdentityCheck max_sum_identity(std::span<const double> y, int N, double gamma);

}  // namespace kesten
