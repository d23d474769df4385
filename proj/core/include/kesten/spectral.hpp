#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <vector>

#include "kesten/errors.hpp"
#include "kesten/grid.hpp"
#include "kesten/model.hpp"

namespace kesten {

using TransferOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// M[i][j] = sum_a p_a |a x_i|^s w_ij(a); starred uses a^T.
TransferOperator build_transfer_operator(const MatrixLaw& mu, double s, const SphereGrid& grid, bool starred);

struct EigenResult {
  double kappa = 0.0;
  Vector right;  // max = 1
  Vector left;   // sum = 1
  double eigen_residual = 0.0;  // |M e - kappa e|_inf / kappa
  double left_residual = 0.0;   // |nu M - kappa nu|_1 / kappa
  double contraction_ratio = 0.0;
  bool degenerate = false;
  int iterations = 0;
};

inline constexpr double kDegenerateRatio = 1.0 - 1e-6;

// Power iteration on M and M^T. Throws DegenerateLeadingPair when the
// contraction ratio reaches 1 - 1e-6 unless allow_degenerate is set, in which
// case the flag is recorded instead.
EigenResult solve_eigen(const TransferOperator& m, double tol = 1e-13, int max_iter = 200000,
                        bool allow_degenerate = false);

struct SpectralResiduals {
  double eigen = 0.0;
  double eigen_star = 0.0;
  double left = 0.0;
  double left_star = 0.0;
  double stochasticity = 0.0;       // max_i |sum_j Q_ij - 1|
  double stochasticity_star = 0.0;
  double contraction_ratio = 0.0;
  double kappa_mismatch = 0.0;      // |kappa - kappa_star| / kappa
  bool degenerate = false;
  bool logconvexity_flag = true;    // set by solve_chi from the curve
};

struct SpectralSolution {
  double s = 0.0;
  double kappa = 0.0;
  double kappa_star = 0.0;
  Vector e_fun;    // eigenfunction of P^s, max 1
  Vector nu;       // eigenmeasure of P^s
  Vector pi;       // stationary measure of Q^s
  Vector e_star;   // eigenfunction of P^s_*
  Vector nu_star;
  Vector pi_star;
  double r_s = 0.0;
  double r_s_star = 0.0;
  SpectralResiduals residuals;
};

SpectralSolution solve_spectral(const MatrixLaw& mu, double s, const SphereGrid& grid, double tol = 1e-13);

// kappa(s) on the grid, degenerate laws allowed.
double kappa_grid(const MatrixLaw& mu, double s, const SphereGrid& grid, double tol = 1e-13);

// x -> sum_j m_j <x, y_j>^s over grid nodes y_j, scaled to max 1 on the
// nodes. With m = nu_star this is the eigenfunction of P^s, with m = nu the
// eigenfunction of P^s_*.
class EigenfunctionFormula {
 public:
  EigenfunctionFormula() = default;
  EigenfunctionFormula(const SphereGrid& grid, const Vector& measure, double s);
  double operator()(const Vector& x) const;
  double s() const { return s_; }

 private:
  double raw(const Vector& x) const;
  Matrix support_;
  std::vector<double> mass_;
  double s_ = 0.0;
  double scale_ = 1.0;
};

struct FormulaCheck {
  bool skipped = false;  // degenerate law, eigendata not unique
  double deviation = 0.0;       // e vs formula with nu_star
  double deviation_star = 0.0;  // e_star vs formula with nu
};

FormulaCheck eigenfunction_formula_check(const SpectralSolution& sol, const SphereGrid& grid);

enum class StationaryMode { Direct, Iterate };

// Q[i][j] = M[i][j] e_j / (kappa e_i).
TransferOperator markov_operator(const TransferOperator& m, const Vector& e, double kappa);
double row_stochasticity_residual(const TransferOperator& q);
Vector stationary_measure(const SpectralSolution& sol, const TransferOperator& m, StationaryMode mode,
                          bool starred = false);
double total_variation(const Vector& p, const Vector& q);

struct KappaPoint {
  double s = 0.0;
  double kappa = 0.0;
};

struct ChiResult {
  double chi = 0.0;
  double kappa_at_chi = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  bool convexity_ok = true;
  double worst_convexity_excess = 0.0;
  std::vector<KappaPoint> curve;  // scan points
};

// Thrown by solve_chi; carries the scanned curve.
class NoBracketError : public Error {
 public:
  NoBracketError(const std::string& msg, std::vector<KappaPoint> curve)
      : Error(ErrorCode::NoBracket, msg), curve_(std::move(curve)) {}
  const std::vector<KappaPoint>& curve() const { return curve_; }

 private:
  std::vector<KappaPoint> curve_;
};

inline constexpr double kBracketStep = 0.1;
inline constexpr double kDefaultSCap = 8.0;

// Root of N kappa(s) = 1 by bracket scan from s_lo and bisection.
ChiResult solve_chi(const MatrixLaw& mu, int N, const SphereGrid& grid, double s_lo, double s_cap = kDefaultSCap,
                    double tol = 1e-12);

// Midpoint log-convexity on equally spaced curve points.
bool log_convex(const std::vector<KappaPoint>& curve, double rel_tol, double* worst = nullptr);

struct McLevel {
  int n = 0;
  double u_n = 0.0;  // E||S_n||^s
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double kappa_upper = 0.0;  // u_n^{1/n}
  double kappa_upper_lo = 0.0;
  double kappa_upper_hi = 0.0;
};

std::vector<McLevel> kappa_mc(const MatrixLaw& mu, double s, int n_max, std::size_t trials, std::uint64_t seed,
                              unsigned threads = 1);

// One step of the tilted chain on the grid. Built from the starred law and
// e_star by default; starred = false gives the chain of Q^s.
struct TiltedChainState {
  std::size_t node = 0;
  double V = 0.0;
  std::size_t n = 0;
};

class TiltedChain {
 public:
  struct Move {
    double prob = 0.0;
    double log_norm = 0.0;  // log|a x|
    SphereGrid::Stencil target;
  };

  TiltedChain(const MatrixLaw& mu, const SpectralSolution& sol, const SphereGrid& grid, bool starred = true);

  const std::vector<Move>& moves(std::size_t node) const { return moves_[node]; }
  std::size_t size() const { return moves_.size(); }
  double renormalization_residual() const { return renorm_residual_; }
  const Vector& stationary() const { return stationary_; }

  TiltedChainState step(const TiltedChainState& st, Stream& rng) const;

 private:
  std::vector<std::vector<Move>> moves_;
  std::vector<std::vector<double>> cumulative_;
  double renorm_residual_ = 0.0;
  Vector stationary_;
};

TiltedChainState tilted_chain_step(const TiltedChainState& st, const TiltedChain& chain, Stream& rng);

enum class AlphaMode { Quadrature, Ergodic };

struct AlphaResult {
  double alpha = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double finite_difference = 0.0;  // (log kappa)'(s), informational
  double renormalization_residual = 0.0;
};

AlphaResult lyapunov_alpha(const MatrixLaw& mu, double s, const SpectralSolution& sol, const SphereGrid& grid,
                           AlphaMode mode, std::size_t steps = 2000, std::size_t trials = 200, std::uint64_t seed = 0,
                           unsigned threads = 1);

struct ComparabilityReport {
  double min_ratio = 1.0;
  std::vector<std::size_t> histogram;  // 20 bins over [0, 1]
  std::vector<double> min_by_step;
};

ComparabilityReport norm_comparability_probe(const MatrixLaw& mu, const Vector& x, std::size_t paths, int steps,
                                             std::uint64_t seed, bool starred = false);

// log q_n^s(x, a_1..a_n) = s log|S_n x| + log e(S_n.x) - n log kappa - log e(x),
// S_n = a_n ... a_1, evaluated on exact images.
double log_q(const MatrixLaw& mu, const std::vector<std::size_t>& word, const Vector& x, const EigenfunctionFormula& e,
             double kappa);
// |log q_{n+m}(x, w) - log q_n(x, w[0:n]) - log q_m(S_n.x, w[n:])|.
double cocycle_error(const MatrixLaw& mu, const std::vector<std::size_t>& word, std::size_t split, const Vector& x,
                     const EigenfunctionFormula& e, double kappa);

}  // namespace kesten
