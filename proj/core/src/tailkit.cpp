#include "kesten/tailkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kesten/errors.hpp"
#include "kesten/stats.hpp"

namespace kesten {

namespace {

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> a(x.begin(), x.end());
  std::sort(a.begin(), a.end());
  return a;
}

void require_samples(std::size_t n, std::size_t need, const char* what) {
  if (n < need)
    throw Error(ErrorCode::TooFewSamples,
                std::string(what) + " needs at least " + std::to_string(need) + " samples, got " + std::to_string(n));
}

// Wilson score interval for a binomial proportion.
void wilson(double p, double n, double z, double& lo, double& hi) {
  const double z2 = z * z;
  const double den = 1.0 + z2 / n;
  const double mid = (p + z2 / (2.0 * n)) / den;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / den;
  lo = std::max(0.0, mid - half);
  hi = std::min(1.0, mid + half);
}

double pos_pow(double v, double e) { return v > 0.0 ? std::pow(v, e) : 0.0; }

}  // namespace

double empirical_survival(std::span<const double> sorted, double t) {
  if (sorted.empty()) return 0.0;
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}

std::vector<SurvivalPoint> tail_curve(std::span<const double> x, QuantileWindow window, double level) {
  require_samples(x.size(), kMinTailSamples, "tail_curve");
  const std::vector<double> a = sorted_copy(x);
  const std::size_t n = a.size();
  const double nd = static_cast<double>(n);
  const double z = z_for_level(level);
  const std::size_t k_hi = std::min(n, static_cast<std::size_t>(std::floor(window.upper * nd)));
  const std::size_t k_lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(window.lower * nd)));
  std::vector<SurvivalPoint> out;
  for (std::size_t k = k_hi; k >= k_lo && k >= 1; --k) {
    const double t = a[n - k];
    if (!out.empty() && out.back().t == t) continue;
    SurvivalPoint p;
    p.t = t;
    p.survival = empirical_survival(a, t);
    wilson(p.survival, nd, z, p.ci_lo, p.ci_hi);
    out.push_back(p);
  }
  return out;
}

TailIndex hill_estimate(std::span<const double> x, std::size_t k, double level) {
  const std::size_t n = x.size();
  if (k < 30) throw Error(ErrorCode::TooFewSamples, "hill_estimate needs k >= 30");
  if (static_cast<double>(k) > 0.1 * static_cast<double>(n))
    throw Error(ErrorCode::TooFewSamples, "hill_estimate needs k <= 0.1 n, k = " + std::to_string(k) +
                                              ", n = " + std::to_string(n));
  std::vector<double> a(x.begin(), x.end());
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end(), std::greater<>());
  const double threshold = a[k];
  if (!(threshold > 0.0)) throw Error(ErrorCode::TooFewSamples, "hill threshold is not positive");
  std::vector<double> logs(k);
  for (std::size_t i = 0; i < k; ++i) logs[i] = std::log(a[i] / threshold);
  const double mean = pairwise_sum(logs) / static_cast<double>(k);
  TailIndex out;
  out.k = k;
  out.chi = 1.0 / mean;
  const double z = z_for_level(level);
  out.ci_lo = out.chi * (1.0 - z / std::sqrt(static_cast<double>(k)));
  out.ci_hi = out.chi * (1.0 + z / std::sqrt(static_cast<double>(k)));
  return out;
}

std::vector<TailIndex> hill_curve(std::span<const double> x, std::span<const std::size_t> ks, double level) {
  std::vector<TailIndex> out;
  for (std::size_t k : ks) out.push_back(hill_estimate(x, k, level));
  return out;
}

TailIndex rank_slope(std::span<const double> x, QuantileWindow window, double level) {
  const auto curve = tail_curve(x, window, level);
  std::vector<double> lx, ly;
  for (const auto& p : curve)
    if (p.t > 0.0 && p.survival > 0.0) {
      lx.push_back(std::log(p.t));
      ly.push_back(std::log(p.survival));
    }
  if (lx.size() < 3) throw Error(ErrorCode::TooFewSamples, "rank_slope needs positive tail points in the window");
  const LinearFit fit = linear_fit(lx, ly);
  const double t = student_t_quantile(0.5 + level / 2.0, static_cast<double>(std::max<std::size_t>(fit.dof, 1)));
  TailIndex out;
  out.k = lx.size();
  out.chi = -fit.slope;
  out.ci_lo = out.chi - t * fit.slope_se;
  out.ci_hi = out.chi + t * fit.slope_se;
  return out;
}

std::vector<CurvePoint> smoothing_G(std::span<const double> x, std::span<const double> t_grid, double chi, double e_u,
                                    double level) {
  std::vector<CurvePoint> out;
  std::vector<double> vals(x.size());
  const double norm = (chi + 1.0) * e_u;
  for (double t : t_grid) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      vals[i] = v > 0.0 ? std::exp((chi + 1.0) * std::min(std::log(v), t) - t) / norm : 0.0;
    }
    const MeanCI m = mean_ci(vals, level);
    out.push_back({t, m.mean, m.se, m.lo, m.hi});
  }
  return out;
}

namespace {

DecayFit fit_decay(const std::vector<CurvePoint>& g, bool right) {
  auto significant = [&](std::size_t i) {
    const double v = std::abs(g[i].value);
    return v > 0.0 && v > 2.0 * g[i].se;
  };
  DecayFit fit;
  std::size_t peak = g.size();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (significant(i) && (peak == g.size() || std::abs(g[i].value) > std::abs(g[peak].value))) peak = i;
  if (peak == g.size()) return fit;
  // Contiguous run of significant points leaving the peak.
  std::vector<double> x, y;
  for (std::size_t i = peak;; right ? ++i : --i) {
    if (i >= g.size() || !significant(i)) break;
    x.push_back(right ? g[i].t : -g[i].t);
    y.push_back(std::log(std::abs(g[i].value)));
    if (!right && i == 0) break;
  }
  fit.points = x.size();
  if (x.size() < 3) return fit;
  const LinearFit lf = linear_fit(x, y);
  fit.beta = -lf.slope;
  fit.c_beta = std::exp(lf.intercept);
  fit.decays = fit.beta > 0.0;
  return fit;
}

}  // namespace

DefectReport defect_g(std::span<const double> r_proj, std::span<const double> ar_proj, int N,
                      std::span<const double> t_grid, double chi, double e_u, double level) {
  const auto gr = smoothing_G(r_proj, t_grid, chi, e_u, level);
  const auto gar = smoothing_G(ar_proj, t_grid, chi, e_u, level);
  const double z = z_for_level(level);
  DefectReport rep;
  for (std::size_t i = 0; i < gr.size(); ++i) {
    CurvePoint p;
    p.t = gr[i].t;
    p.value = gr[i].value - N * gar[i].value;
    p.se = std::sqrt(gr[i].se * gr[i].se + N * N * gar[i].se * gar[i].se);
    p.ci_lo = p.value - z * p.se;
    p.ci_hi = p.value + z * p.se;
    rep.g.push_back(p);
  }
  rep.left = fit_decay(rep.g, false);
  rep.right = fit_decay(rep.g, true);
  return rep;
}

std::vector<double> ar_projections(const Scenario& sc, const SampleSet& r, const Vector& u, std::size_t trials,
                                   std::uint64_t seed) {
  const int d = sc.dim;
  if (trials * static_cast<std::size_t>(sc.N) > r.size())
    throw Error(ErrorCode::TooFewSamples, "ar_projections needs trials * N <= samples");
  std::vector<double> out(trials * sc.N);
  std::vector<double> a(d * d);
  for (std::size_t t = 0; t < trials; ++t) {
    Stream rng = Stream::derive(seed, {domain::tail_ar, t});
    for (int i = 0; i < sc.N; ++i) {
      sc.mu.sample_into(rng, a.data());
      const double* rr = r.row(t * sc.N + i);
      double v = 0.0;
      for (int row = 0; row < d; ++row) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += a[row * d + c] * rr[c];
        v += u(row) * acc;
      }
      out[t * sc.N + i] = v;
    }
  }
  return out;
}

std::vector<double> TGrid::points() const {
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = at(k);
  return out;
}

GridFunction theta_apply(const TiltedChain& chain, const GridFunction& f, const TGrid& tg, double left_rate) {
  const std::size_t nodes = chain.size();
  if (static_cast<std::size_t>(f.rows()) != nodes || static_cast<std::size_t>(f.cols()) != tg.n)
    throw Error(ErrorCode::InvalidArgument, "grid function shape does not match chain and t grid");
  const Eigen::Index n = static_cast<Eigen::Index>(tg.n);
  GridFunction out = GridFunction::Zero(f.rows(), f.cols());
  Eigen::RowVectorXd target(n);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (const auto& mv : chain.moves(i)) {
      target.setZero();
      for (int c = 0; c < mv.target.count; ++c) target += mv.target.weight[c] * f.row(mv.target.index[c]);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double tau = static_cast<double>(k) - mv.log_norm / tg.dt;
        double v;
        if (tau <= 0.0) {
          v = target(0) * std::exp(left_rate * tau * tg.dt);
        } else if (tau >= static_cast<double>(n - 1)) {
          v = target(n - 1);
        } else {
          const double fl = std::floor(tau);
          const Eigen::Index j = static_cast<Eigen::Index>(fl);
          const double w = tau - fl;
          v = w == 0.0 ? target(j) : (1.0 - w) * target(j) + w * target(j + 1);
        }
        out(static_cast<Eigen::Index>(i), k) += mv.prob * v;
      }
    }
  }
  return out;
}

PotentialResult theta_potential(const TiltedChain& chain, const GridFunction& g, const TGrid& tg, int M,
                                double left_rate) {
  PotentialResult res;
  GridFunction cur = g;
  res.sum = g;
  res.increments.push_back(g.cwiseAbs().maxCoeff());
  for (int n = 1; n <= M; ++n) {
    cur = theta_apply(chain, cur, tg, left_rate);
    res.sum += cur;
    res.increments.push_back(cur.cwiseAbs().maxCoeff());
  }
  return res;
}

FormulaEstimate C_chi_formula(const Scenario& sc, const SpectralSolution& sol, const SphereGrid& grid,
                              const EigenfunctionFormula& e, double alpha, const SampleSet& r, std::uint64_t seed,
                              std::size_t b_trials, double level) {
  if (!(alpha > 0.0))
    throw Error(ErrorCode::NonpositiveAlpha, "alpha(chi) = " + std::to_string(alpha) + " is not positive");
  const double chi = sol.s;
  const int d = sc.dim;
  const int N = sc.N;
  const std::size_t T = r.size() / static_cast<std::size_t>(N);
  require_samples(T, 100, "C_chi_formula trials");

  std::vector<std::size_t> nodes;
  for (std::size_t j = 0; j < grid.size(); ++j)
    if (sol.pi_star(static_cast<Eigen::Index>(j)) > 0.0) nodes.push_back(j);
  std::vector<double> pi(nodes.size()), inv_e(nodes.size());
  double sup_e = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) sup_e = std::max(sup_e, e(grid.node(j)));
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    pi[q] = sol.pi_star(static_cast<Eigen::Index>(nodes[q]));
    inv_e[q] = 1.0 / e(grid.node(nodes[q]));
  }

  std::vector<double> h(T);
  std::vector<double> a(d * d), b(d), x(d), y(static_cast<std::size_t>(N) * d);
  for (std::size_t t = 0; t < T; ++t) {
    Stream rng = Stream::derive(seed, {domain::c_formula, t});
    for (int i = 0; i < N; ++i) {
      sc.mu.sample_into(rng, a.data());
      const double* rr = r.row(t * N + i);
      for (int row = 0; row < d; ++row) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += a[row * d + c] * rr[c];
        y[i * d + row] = acc;
      }
    }
    sc.eta.sample_into(rng, b.data());
    for (int row = 0; row < d; ++row) {
      x[row] = b[row];
      for (int i = 0; i < N; ++i) x[row] += y[i * d + row];
    }
    double acc = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const Vector u = grid.node(nodes[q]);
      auto proj = [&](const double* v) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += v[c] * u(c);
        return s;
      };
      double diff = pos_pow(proj(x.data()), chi);
      for (int i = 0; i < N; ++i) diff -= pos_pow(proj(y.data() + i * d), chi);
      acc += pi[q] * diff * inv_e[q];
    }
    h[t] = acc;
  }
  const MeanCI m = mean_ci(h, level);
  const double scale = 1.0 / (alpha * chi);
  FormulaEstimate est;
  est.trials = T;
  est.c = m.mean * scale;
  est.se = m.se * scale;
  est.ci_lo = m.lo * scale;
  est.ci_hi = m.hi * scale;

  double c_const = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector xi = grid.node(i);
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) s += pos_pow(xi.dot(grid.node(nodes[q])), chi) * pi[q];
    c_const = std::min(c_const, s);
  }
  est.c_chi_const = c_const;
  if (auto exact = sc.eta.norm_moment_exact(chi)) {
    est.b_moment = *exact;
  } else {
    std::vector<double> vals(b_trials);
    for (std::size_t t = 0; t < b_trials; ++t) {
      Stream rng = Stream::derive(seed, {domain::lower_bound, t});
      sc.eta.sample_into(rng, b.data());
      double n2 = 0.0;
      for (int c = 0; c < d; ++c) n2 += b[c] * b[c];
      vals[t] = std::pow(n2, chi / 2.0);
    }
    est.b_moment = pairwise_sum(vals) / static_cast<double>(b_trials);
  }
  est.lower_bound = c_const / sup_e * est.b_moment * scale;
  est.positivity_guaranteed = chi >= 1.0;
  return est;
}

DirectionEstimate tail_product(std::span<const double> x, double chi, double e_u, QuantileWindow window,
                               std::size_t points) {
  require_samples(x.size(), kMinTailSamples, "tail_product");
  const std::vector<double> a = sorted_copy(x);
  const std::size_t n = a.size();
  const double nd = static_cast<double>(n);
  DirectionEstimate est;
  est.e_u = e_u;
  std::vector<std::size_t> ranks;
  const double lq_hi = std::log(window.upper), lq_lo = std::log(window.lower);
  std::size_t last_m = 0;
  for (std::size_t k = 0; k < points; ++k) {
    const double lq = points == 1 ? lq_hi : lq_hi + (lq_lo - lq_hi) * static_cast<double>(k) / (points - 1.0);
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::exp(lq) * nd)));
    if (m == last_m || m > n) continue;
    last_m = m;
    const double t = a[n - m];
    if (!(t > 0.0)) continue;
    const double p = (static_cast<double>(m) - 0.5) / nd;
    est.t.push_back(t);
    est.values.push_back(std::pow(t, chi) * p / e_u);
    ranks.push_back(m);
  }
  if (est.values.size() < 3) throw Error(ErrorCode::TooFewSamples, "tail window holds fewer than 3 positive points");
  const std::size_t J = est.values.size();
  const double k = static_cast<double>(J);
  est.estimate = pairwise_sum(est.values) / k;

  // Renyi representation: chi log t_(m) of the m-th largest has covariance
  // sum_{l >= max(m_i, m_j)} 1/l^2 under a power tail.
  std::vector<double> tail_sq(n + 2, 0.0);
  for (std::size_t l = n; l >= 1; --l) tail_sq[l] = tail_sq[l + 1] + 1.0 / (static_cast<double>(l) * l);
  Matrix C(J, J);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j) C(i, j) = tail_sq[std::max(ranks[i], ranks[j])];
  est.se = est.estimate * std::sqrt(C.sum()) / k;

  // GLS slope of log values against the deterministic surrogate
  // log(1/p)/chi for log t.
  Matrix X(J, 2);
  Vector y(J);
  for (std::size_t i = 0; i < J; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = -std::log((static_cast<double>(ranks[i]) - 0.5) / nd) / chi;
    y(i) = std::log(est.values[i]);
  }
  const Eigen::LLT<Matrix> llt(C);
  const Matrix CiX = llt.solve(X);
  const Matrix info = X.transpose() * CiX;
  const Vector beta = info.ldlt().solve(CiX.transpose() * y);
  const double slope_sd = std::sqrt(info.inverse()(1, 1));
  est.slope = beta(1);
  est.slope_p = slope_sd > 0.0 ? std::erfc(std::abs(est.slope / slope_sd) / std::sqrt(2.0)) : 1.0;
  est.stable = est.slope_p > 0.01;
  return est;
}

DirectEstimate C_chi_direct(const SampleSet& r, const std::vector<Vector>& u_list, double chi,
                            const EigenfunctionFormula& e, QuantileWindow window, std::size_t points, double level) {
  DirectEstimate out;
  double wsum = 0.0, wv = 0.0;
  for (const auto& u : u_list) {
    const auto proj = r.project(u);
    DirectionEstimate de = tail_product(proj, chi, e(u), window, points);
    de.u = u;
    const double w = 1.0 / (de.se * de.se);
    wsum += w;
    wv += w * de.estimate;
    out.directions.push_back(std::move(de));
  }
  if (wsum > 0.0) {
    out.pooled = wv / wsum;
    out.se = 1.0 / std::sqrt(wsum);
  }
  const double z = z_for_level(level);
  out.ci_lo = out.pooled - z * out.se;
  out.ci_hi = out.pooled + z * out.se;
  return out;
}

double YLaw::sample(Stream& rng) const {
  switch (kind) {
    case Kind::Point:
      return a;
    case Kind::Uniform:
      return a + (b - a) * rng.uniform();
    case Kind::Exponential:
      return a * rng.exponential();
    case Kind::Pareto:
      return a * std::pow(rng.uniform_pos(), -1.0 / b);
  }
  return 0.0;
}

double YLaw::moment(double q) const {
  switch (kind) {
    case Kind::Point:
      return std::pow(a, q);
    case Kind::Uniform:
      return (std::pow(b, q + 1.0) - std::pow(a, q + 1.0)) / ((q + 1.0) * (b - a));
    case Kind::Exponential:
      return std::tgamma(q + 1.0) * std::pow(a, q);
    case Kind::Pareto:
      return q < b ? b * std::pow(a, q) / (b - q) : std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

namespace {

HarnessResult harness_lhs(double gamma, int k, const YLaw& y, std::size_t trials, std::uint64_t seed, double level) {
  std::vector<double> vals(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    Stream rng = Stream::derive(seed, {domain::harness, t});
    double sum = 0.0, pw = 0.0;
    for (int i = 0; i < k; ++i) {
      const double v = y.sample(rng);
      sum += v;
      pw += std::pow(v, gamma);
    }
    vals[t] = k == 1 ? 0.0 : std::pow(sum, gamma) - pw;
  }
  const MeanCI m = mean_ci(vals, level);
  HarnessResult r;
  r.lhs = m.mean;
  r.lhs_se = m.se;
  r.lhs_ci_hi = m.mean + z_for_level(level) * m.se;
  return r;
}

}  // namespace

HarnessResult excess_bound_alpha(double alpha, int k, const YLaw& y, std::size_t trials, std::uint64_t seed, double level) {
  if (!(alpha > 1.0)) throw Error(ErrorCode::InvalidArgument, "excess_bound_alpha needs alpha > 1");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "excess_bound_alpha needs k >= 1");
  const double p = std::ceil(alpha);
  HarnessResult r = harness_lhs(alpha, k, y, trials, seed, level);
  r.rhs = std::pow(static_cast<double>(k), alpha) * std::pow(y.moment(p - 1.0), alpha / (p - 1.0));
  r.pass = r.lhs_ci_hi <= r.rhs;
  return r;
}

HarnessResult excess_bound_split(int p, double beta, double delta, int k, const YLaw& y, std::size_t trials, std::uint64_t seed,
                    double level) {
  if (p < 1 || !(beta > 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidArgument, "excess_bound_split needs p >= 1, beta in (0,1)");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "excess_bound_split needs k >= 1");
  const double dmax = p * (1.0 - beta) / (p + 1.0);
  if (!(delta > 0.0 && delta < dmax))
    throw Error(ErrorCode::DeltaOutOfRange,
                "delta = " + std::to_string(delta) + " outside (0, " + std::to_string(dmax) + ")");
  const double gamma = p + beta;
  HarnessResult r = harness_lhs(gamma, k, y, trials, seed, level);
  r.rhs = std::pow(static_cast<double>(k), p + 1.0) * std::pow(y.moment(p - delta), gamma / (p - delta));
  r.pass = r.lhs_ci_hi <= r.rhs;
  return r;
}

std::vector<HarnessConfig> harness_sweep(int count, bool second, std::uint64_t seed) {
  Stream rng = Stream::derive(seed, {domain::harness, 0xffffffffULL});
  std::vector<HarnessConfig> out;
  for (int c = 0; c < count; ++c) {
    HarnessConfig cfg;
    cfg.second = second;
    cfg.k = 1 + static_cast<int>(std::floor(8.0 * rng.uniform()));
    double gamma, need;
    if (!second) {
      cfg.alpha = 1.0 + 2.0 * rng.uniform_pos();
      gamma = cfg.alpha;
      need = std::ceil(cfg.alpha) - 1.0;
    } else {
      cfg.p = 1 + static_cast<int>(std::floor(3.0 * rng.uniform()));
      cfg.beta = 0.05 + 0.9 * rng.uniform();
      cfg.delta = (0.05 + 0.9 * rng.uniform()) * cfg.p * (1.0 - cfg.beta) / (cfg.p + 1.0);
      gamma = cfg.p + cfg.beta;
      need = cfg.p - cfg.delta;
    }
    const int kind = static_cast<int>(std::floor(3.0 * rng.uniform()));
    if (kind == 0) {
      cfg.y = {YLaw::Kind::Uniform, 2.0 * rng.uniform(), 0.0};
      cfg.y.b = cfg.y.a + 0.1 + 3.0 * rng.uniform();
    } else if (kind == 1) {
      cfg.y = {YLaw::Kind::Exponential, 0.2 + 2.0 * rng.uniform(), 1.0};
    } else {
      const double floor_shape = std::max(need, 2.0 * (gamma - 1.0)) + 0.5;
      cfg.y = {YLaw::Kind::Pareto, 0.5 + rng.uniform(), floor_shape + 3.0 * rng.uniform()};
    }
    out.push_back(cfg);
  }
  return out;
}

HarnessResult run_harness(const HarnessConfig& cfg, std::size_t trials, std::uint64_t seed, double level) {
  return cfg.second ? excess_bound_split(cfg.p, cfg.beta, cfg.delta, cfg.k, cfg.y, trials, seed, level)
                    : excess_bound_alpha(cfg.alpha, cfg.k, cfg.y, trials, seed, level);
}

namespace {

// Integral over r > 0 of #{v > r} r^{gamma-1} dr, summed interval by interval.
double step_integral(std::vector<double> v, double gamma) {
  std::sort(v.begin(), v.end());
  std::vector<double> pieces;
  double prev = 0.0;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(v[i] > 0.0)) continue;
    if (v[i] > prev) {
      pieces.push_back(static_cast<double>(n - i) * (std::pow(v[i], gamma) - std::pow(prev, gamma)) / gamma);
      prev = v[i];
    }
  }
  return pairwise_sum(pieces);
}

}  // namespace

IdentityCheck max_sum_identity(std::span<const double> y, int N, double gamma) {
  const std::size_t T = y.size() / static_cast<std::size_t>(N);
  if (T == 0) throw Error(ErrorCode::TooFewSamples, "identity check needs at least one trial");
  std::vector<double> all(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(T * N));
  std::vector<double> mx(T);
  std::vector<double> diffs(T);
  for (std::size_t t = 0; t < T; ++t) {
    double m = -std::numeric_limits<double>::infinity(), s = 0.0;
    for (int i = 0; i < N; ++i) {
      const double v = y[t * N + i];
      m = std::max(m, v);
      s += pos_pow(v, gamma);
    }
    mx[t] = m;
    diffs[t] = s - pos_pow(m, gamma);
  }
  IdentityCheck out;
  const double Td = static_cast<double>(T);
  out.left = (step_integral(all, gamma) - step_integral(mx, gamma)) / Td;
  out.right = pairwise_sum(diffs) / Td / gamma;
  out.rel_error = std::abs(out.left - out.right) / std::max(std::abs(out.right), std::numeric_limits<double>::min());

  std::sort(all.begin(), all.end());
  std::sort(mx.begin(), mx.end());
  const std::size_t stride = std::max<std::size_t>(1, all.size() / 2000);
  for (std::size_t i = 0; i < all.size(); i += stride) {
    const double r = all[i];
    const double p_max = empirical_survival(mx, r);
    const double p_ar = empirical_survival(all, r);
    out.max_domination_violation =
        std::max(out.max_domination_violation, p_max - std::min(1.0, N * p_ar));
  }
  return out;
}

}  // namespace kesten
