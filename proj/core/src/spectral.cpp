#include "kesten/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kesten/errors.hpp"
#include "kesten/stats.hpp"

namespace kesten {

namespace {

Matrix atom_matrix(const MatrixAtom& a, bool starred) {
  return starred ? Matrix(a.matrix.matrix().transpose()) : a.matrix.matrix();
}

double max_abs(const Vector& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TransferOperator build_transfer_operator(const MatrixLaw& mu, double s, const SphereGrid& grid, bool starred) {
  if (!mu.finitely_supported()) throw Error(ErrorCode::UnsupportedLaw, "transfer operator needs a finitely supported law");
  if (mu.dim() != grid.dim()) throw Error(ErrorCode::InvalidArgument, "grid and law dimensions differ");
  const auto& atoms = mu.atoms();
  std::vector<Matrix> mats;
  for (const auto& a : atoms) mats.push_back(atom_matrix(a, starred));
  const std::size_t n = grid.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * atoms.size() * 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = grid.node(i);
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const Vector y = mats[k] * x;
      const double norm = y.norm();
      if (!(norm > 0.0)) throw Error(ErrorCode::ZeroImage, "atom maps a grid node to zero");
      const double mass = atoms[k].p * std::pow(norm, s);
      const auto st = grid.locate(y);
      for (int c = 0; c < st.count; ++c)
        if (st.weight[c] > 0.0)
          trip.emplace_back(static_cast<int>(i), static_cast<int>(st.index[c]), mass * st.weight[c]);
    }
  }
  TransferOperator m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

EigenResult solve_eigen(const TransferOperator& m, double tol, int max_iter, bool allow_degenerate) {
  const Eigen::Index n = m.rows();
  EigenResult r;
  Vector x = Vector::Ones(n);
  bool conv_right = false;
  for (int it = 1; it <= max_iter; ++it) {
    Vector y = m * x;
    const double k = y.maxCoeff();
    if (!(k > 0.0)) throw Error(ErrorCode::NonConvergence, "operator annihilates the iterate");
    const double res = max_abs(y - k * x) / k;
    r.kappa = k;
    r.eigen_residual = res;
    r.iterations = it;
    if (res <= tol) {
      conv_right = true;
      break;
    }
    x = y / k;
  }
  Vector nu = Vector::Constant(n, 1.0 / static_cast<double>(n));
  bool conv_left = false;
  const TransferOperator mt = m.transpose();
  for (int it = 1; it <= max_iter; ++it) {
    Vector z = mt * nu;
    const double k = z.sum();
    if (!(k > 0.0)) throw Error(ErrorCode::NonConvergence, "adjoint annihilates the iterate");
    const double res = (z - k * nu).cwiseAbs().sum() / k;
    r.left_residual = res;
    if (res <= tol) {
      conv_left = true;
      break;
    }
    nu = z / k;
  }
  r.right = x;
  r.left = nu;

  if (n > 1) {
    const double ne = nu.dot(x);
    auto deflate = [&](Vector& z) { z -= x * (nu.dot(z) / ne); };
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = std::cos(1.7 * static_cast<double>(i) + 0.3);
    deflate(z);
    const int steps = 300, keep = 100;
    double log_sum = 0.0;
    bool vanished = false;
    for (int k = 0; k < steps; ++k) {
      const double g0 = max_abs(z);
      if (!(g0 > 1e-250)) {
        vanished = true;
        break;
      }
      z /= g0;
      Vector y = (m * z) / r.kappa;
      deflate(y);
      const double g = max_abs(y);
      if (!(g > 1e-250)) {
        vanished = true;
        break;
      }
      if (k >= steps - keep) log_sum += std::log(g);
      z = y;
    }
    r.contraction_ratio = vanished ? 0.0 : std::exp(log_sum / keep);
  }
  r.degenerate = r.contraction_ratio >= kDegenerateRatio;
  if (r.degenerate && !allow_degenerate)
    throw Error(ErrorCode::DegenerateLeadingPair, "contraction ratio " + std::to_string(r.contraction_ratio));
  if (!conv_right || !conv_left) {
    if (r.degenerate) return r;
    throw Error(ErrorCode::NonConvergence, "power iteration did not reach tolerance");
  }
  return r;
}

namespace {

double stochasticity(const TransferOperator& m, const Vector& e, double kappa) {
  const Vector me = m * e;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    if (e(i) > 0.0) worst = std::max(worst, std::abs(me(i) / (kappa * e(i)) - 1.0));
  return worst;
}

Vector normalized_product(const Vector& e, const Vector& nu) {
  Vector p = e.cwiseProduct(nu);
  return p / p.sum();
}

}  // namespace

SpectralSolution solve_spectral(const MatrixLaw& mu, double s, const SphereGrid& grid, double tol) {
  const TransferOperator m = build_transfer_operator(mu, s, grid, false);
  const TransferOperator ms = build_transfer_operator(mu, s, grid, true);
  const EigenResult r = solve_eigen(m, tol, 200000, true);
  const EigenResult rs = solve_eigen(ms, tol, 200000, true);
  SpectralSolution sol;
  sol.s = s;
  sol.kappa = r.kappa;
  sol.kappa_star = rs.kappa;
  sol.e_fun = r.right;
  sol.nu = r.left;
  sol.pi = normalized_product(r.right, r.left);
  sol.e_star = rs.right;
  sol.nu_star = rs.left;
  sol.pi_star = normalized_product(rs.right, rs.left);
  sol.r_s = r.right.minCoeff() / r.right.maxCoeff();
  sol.r_s_star = rs.right.minCoeff() / rs.right.maxCoeff();
  auto& res = sol.residuals;
  res.eigen = r.eigen_residual;
  res.eigen_star = rs.eigen_residual;
  res.left = r.left_residual;
  res.left_star = rs.left_residual;
  res.stochasticity = stochasticity(m, r.right, r.kappa);
  res.stochasticity_star = stochasticity(ms, rs.right, rs.kappa);
  res.contraction_ratio = std::max(r.contraction_ratio, rs.contraction_ratio);
  res.kappa_mismatch = std::abs(r.kappa - rs.kappa) / r.kappa;
  res.degenerate = r.degenerate || rs.degenerate;
  return sol;
}

double kappa_grid(const MatrixLaw& mu, double s, const SphereGrid& grid, double tol) {
  return solve_eigen(build_transfer_operator(mu, s, grid, false), tol, 200000, true).kappa;
}

EigenfunctionFormula::EigenfunctionFormula(const SphereGrid& grid, const Vector& measure, double s) : s_(s) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < measure.size(); ++j)
    if (measure(j) > 0.0) keep.push_back(j);
  support_.resize(grid.dim(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    support_.col(static_cast<Eigen::Index>(k)) = grid.nodes().col(keep[k]);
    mass_.push_back(measure(keep[k]));
  }
  double mx = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) mx = std::max(mx, raw(grid.node(i)));
  scale_ = mx > 0.0 ? 1.0 / mx : 1.0;
}

double EigenfunctionFormula::raw(const Vector& x) const {
  const Vector dots = support_.transpose() * x;
  double total = 0.0;
  for (std::size_t k = 0; k < mass_.size(); ++k) total += mass_[k] * std::pow(std::max(dots(static_cast<Eigen::Index>(k)), 0.0), s_);
  return total;
}

double EigenfunctionFormula::operator()(const Vector& x) const { return scale_ * raw(x); }

FormulaCheck eigenfunction_formula_check(const SpectralSolution& sol, const SphereGrid& grid) {
  FormulaCheck fc;
  if (sol.residuals.degenerate) {
    fc.skipped = true;
    return fc;
  }
  const EigenfunctionFormula e(grid, sol.nu_star, sol.s);
  const EigenfunctionFormula es(grid, sol.nu, sol.s);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector x = grid.node(i);
    const auto ii = static_cast<Eigen::Index>(i);
    fc.deviation = std::max(fc.deviation, std::abs(e(x) - sol.e_fun(ii)) / sol.e_fun(ii));
    fc.deviation_star = std::max(fc.deviation_star, std::abs(es(x) - sol.e_star(ii)) / sol.e_star(ii));
  }
  return fc;
}

TransferOperator markov_operator(const TransferOperator& m, const Vector& e, double kappa) {
  TransferOperator q = m;
  for (Eigen::Index i = 0; i < q.outerSize(); ++i)
    for (TransferOperator::InnerIterator it(q, i); it; ++it) it.valueRef() *= e(it.col()) / (kappa * e(i));
  return q;
}

double row_stochasticity_residual(const TransferOperator& q) {
  const Vector rows = q * Vector::Ones(q.cols());
  return (rows.array() - 1.0).abs().maxCoeff();
}

Vector stationary_measure(const SpectralSolution& sol, const TransferOperator& m, StationaryMode mode, bool starred) {
  const Vector& e = starred ? sol.e_star : sol.e_fun;
  const Vector& nu = starred ? sol.nu_star : sol.nu;
  const double kappa = starred ? sol.kappa_star : sol.kappa;
  if (mode == StationaryMode::Direct) return normalized_product(e, nu);
  const TransferOperator qt = TransferOperator(markov_operator(m, e, kappa).transpose());
  Vector p = Vector::Constant(e.size(), 1.0 / static_cast<double>(e.size()));
  for (int it = 0; it < 1000000; ++it) {
    Vector next = qt * p;
    next /= next.sum();
    const double change = (next - p).cwiseAbs().sum();
    p = next;
    if (change <= 1e-15) break;
  }
  return p;
}

double total_variation(const Vector& p, const Vector& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

bool log_convex(const std::vector<KappaPoint>& curve, double rel_tol, double* worst) {
  bool ok = true;
  double w = 0.0;
  for (std::size_t k = 1; k + 1 < curve.size(); ++k) {
    const double gap_l = curve[k].s - curve[k - 1].s;
    const double gap_r = curve[k + 1].s - curve[k].s;
    if (std::abs(gap_l - gap_r) > 1e-9 * std::max(1.0, std::abs(gap_l))) continue;
    const double bound = std::sqrt(curve[k - 1].kappa * curve[k + 1].kappa) * (1.0 + rel_tol);
    const double excess = curve[k].kappa / bound - 1.0;
    w = std::max(w, excess);
    if (excess > 0.0) ok = false;
  }
  if (worst) *worst = w;
  return ok;
}

ChiResult solve_chi(const MatrixLaw& mu, int N, const SphereGrid& grid, double s_lo, double s_cap, double tol) {
  ChiResult res;
  auto f = [&](double s) {
    const double k = kappa_grid(mu, s, grid);
    return KappaPoint{s, k};
  };
  const double cap = std::min(s_cap, mu.declared_s_inf());
  // The tail index is the upward crossing of N kappa = 1. A law whose curve
  // only crosses downward (e.g. c * identity) falls back to that root.
  double lo = 0.0, hi = 0.0, flo = 0.0;
  bool found = false;
  bool have_down = false;
  double down_lo = 0.0, down_hi = 0.0, down_flo = 0.0;
  const int n_steps = static_cast<int>(std::floor((cap - s_lo) / kBracketStep + 1e-9));
  auto exact_root = [&](const KappaPoint& pt) {
    res.chi = pt.s;
    res.kappa_at_chi = pt.kappa;
    res.bracket_lo = res.bracket_hi = pt.s;
    res.convexity_ok = log_convex(res.curve, 1e-8, &res.worst_convexity_excess);
    return res;
  };
  for (int k = 0; k <= n_steps; ++k) {
    const double s = s_lo + k * kBracketStep;
    const KappaPoint pt = f(s);
    res.curve.push_back(pt);
    const double g = N * pt.kappa - 1.0;
    const double gprev = k > 0 ? N * res.curve[k - 1].kappa - 1.0 : 0.0;
    if (g == 0.0) {
      if (k == 0 || gprev < 0.0) return exact_root(pt);
      if (!have_down) {
        have_down = true;
        down_lo = down_hi = s;
      }
      continue;
    }
    if (k == 0) continue;
    if (gprev < 0.0 && g > 0.0) {
      lo = res.curve[k - 1].s;
      hi = s;
      flo = gprev;
      found = true;
      break;
    }
    if (gprev > 0.0 && g < 0.0 && !have_down) {
      have_down = true;
      down_lo = res.curve[k - 1].s;
      down_hi = s;
      down_flo = gprev;
    }
  }
  if (!found && have_down) {
    if (down_lo == down_hi) {
      for (const auto& pt : res.curve)
        if (pt.s == down_lo) return exact_root(pt);
    }
    lo = down_lo;
    hi = down_hi;
    flo = down_flo;
    found = true;
  }
  res.convexity_ok = log_convex(res.curve, 1e-8, &res.worst_convexity_excess);
  if (!found)
    throw NoBracketError("N kappa(s) does not cross 1 on [" + std::to_string(s_lo) + ", " + std::to_string(cap) + "]",
                         res.curve);
  res.bracket_lo = lo;
  res.bracket_hi = hi;
  double mid = 0.5 * (lo + hi);
  double kmid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    kmid = f(mid).kappa;
    const double g = N * kmid - 1.0;
    if (g == 0.0) break;
    if ((g < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = g;
    } else {
      hi = mid;
    }
    if (hi - lo <= tol) break;
  }
  res.chi = mid;
  res.kappa_at_chi = kmid;
  return res;
}

std::vector<McLevel> kappa_mc(const MatrixLaw& mu, double s, int n_max, std::size_t trials, std::uint64_t seed,
                              unsigned threads) {
  const int d = mu.dim();
  std::vector<std::vector<double>> vals(n_max, std::vector<double>(trials));
  parallel_for(trials, threads, [&](std::size_t t) {
    Stream rng = Stream::derive(seed, {domain::kappa_mc, t});
    Matrix sm = Matrix::Identity(d, d);
    Matrix a(d, d);
    std::vector<double> buf(d * d);
    double log_scale = 0.0;
    for (int n = 1; n <= n_max; ++n) {
      mu.sample_into(rng, buf.data());
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = buf[i * d + j];
      sm = a * sm;
      const double mx = sm.maxCoeff();
      sm /= mx;
      log_scale += std::log(mx);
      vals[n - 1][t] = std::exp(s * (log_scale + std::log(operator_norm(sm))));
    }
  });
  std::vector<McLevel> out;
  for (int n = 1; n <= n_max; ++n) {
    const MeanCI m = mean_ci(vals[n - 1]);
    McLevel lv;
    lv.n = n;
    lv.u_n = m.mean;
    lv.ci_lo = m.lo;
    lv.ci_hi = m.hi;
    lv.kappa_upper = std::pow(m.mean, 1.0 / n);
    lv.kappa_upper_lo = std::pow(std::max(m.lo, 0.0), 1.0 / n);
    lv.kappa_upper_hi = std::pow(m.hi, 1.0 / n);
    out.push_back(lv);
  }
  return out;
}

TiltedChain::TiltedChain(const MatrixLaw& mu, const SpectralSolution& sol, const SphereGrid& grid, bool starred) {
  const auto& atoms = mu.atoms();
  const Vector& e = starred ? sol.e_star : sol.e_fun;
  const double kappa = starred ? sol.kappa_star : sol.kappa;
  stationary_ = starred ? sol.pi_star : sol.pi;
  std::vector<Matrix> mats;
  for (const auto& a : atoms) mats.push_back(atom_matrix(a, starred));
  moves_.resize(grid.size());
  cumulative_.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vector x = grid.node(i);
    const double ei = e(static_cast<Eigen::Index>(i));
    double total = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const Vector y = mats[k] * x;
      Move mv;
      const double norm = y.norm();
      mv.log_norm = std::log(norm);
      mv.target = grid.locate(y);
      double e_at = 0.0;
      for (int c = 0; c < mv.target.count; ++c) e_at += mv.target.weight[c] * e(mv.target.index[c]);
      mv.prob = atoms[k].p * std::pow(norm, sol.s) * e_at / (kappa * ei);
      total += mv.prob;
      moves_[i].push_back(mv);
    }
    renorm_residual_ = std::max(renorm_residual_, std::abs(total - 1.0));
    double run = 0.0;
    for (auto& mv : moves_[i]) {
      mv.prob /= total;
      run += mv.prob;
      cumulative_[i].push_back(run);
    }
  }
}

TiltedChainState TiltedChain::step(const TiltedChainState& st, Stream& rng) const {
  const auto& mv = moves_[st.node];
  const auto& cum = cumulative_[st.node];
  const double u = rng.uniform() * cum.back();
  std::size_t k = 0;
  while (k + 1 < cum.size() && u >= cum[k]) ++k;
  const Move& m = mv[k];
  TiltedChainState next = st;
  next.V += m.log_norm;
  next.n += 1;
  if (m.target.count == 1) {
    next.node = m.target.index[0];
  } else {
    double v = rng.uniform();
    int c = 0;
    while (c + 1 < m.target.count && v >= m.target.weight[c]) {
      v -= m.target.weight[c];
      ++c;
    }
    next.node = m.target.index[c];
  }
  return next;
}

TiltedChainState tilted_chain_step(const TiltedChainState& st, const TiltedChain& chain, Stream& rng) {
  return chain.step(st, rng);
}

AlphaResult lyapunov_alpha(const MatrixLaw& mu, double s, const SpectralSolution& sol, const SphereGrid& grid,
                           AlphaMode mode, std::size_t steps, std::size_t trials, std::uint64_t seed, unsigned threads) {
  const TiltedChain chain(mu, sol, grid, true);
  AlphaResult res;
  res.renormalization_residual = chain.renormalization_residual();
  const double h = 1e-3;
  if (s > h) {
    res.finite_difference = (std::log(kappa_grid(mu, s + h, grid)) - std::log(kappa_grid(mu, s - h, grid))) / (2.0 * h);
  } else {
    res.finite_difference = (std::log(kappa_grid(mu, s + h, grid)) - std::log(kappa_grid(mu, s, grid))) / h;
  }
  if (mode == AlphaMode::Quadrature) {
    double total = 0.0;
    const Vector& pi = chain.stationary();
    for (std::size_t i = 0; i < chain.size(); ++i) {
      double inner = 0.0;
      for (const auto& mv : chain.moves(i)) inner += mv.prob * mv.log_norm;
      total += pi(static_cast<Eigen::Index>(i)) * inner;
    }
    res.alpha = total / pi.sum();
    res.ci_lo = res.ci_hi = res.alpha;
    return res;
  }
  std::vector<double> cum(chain.size());
  double run = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    run += chain.stationary()(static_cast<Eigen::Index>(i));
    cum[i] = run;
  }
  std::vector<double> vals(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Stream rng = Stream::derive(seed, {domain::tilted_chain, t});
    const double u = rng.uniform() * run;
    TiltedChainState st;
    st.node = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (st.node >= chain.size()) st.node = chain.size() - 1;
    for (std::size_t k = 0; k < steps; ++k) st = chain.step(st, rng);
    vals[t] = st.V / static_cast<double>(steps);
  });
  const MeanCI m = mean_ci(vals);
  res.alpha = m.mean;
  res.se = m.se;
  res.ci_lo = m.lo;
  res.ci_hi = m.hi;
  return res;
}

ComparabilityReport norm_comparability_probe(const MatrixLaw& mu, const Vector& x, std::size_t paths, int steps,
                                             std::uint64_t seed, bool starred) {
  const int d = mu.dim();
  ComparabilityReport rep;
  rep.histogram.assign(20, 0);
  rep.min_by_step.assign(steps, 1.0);
  std::vector<double> buf(d * d);
  Matrix a(d, d);
  for (std::size_t p = 0; p < paths; ++p) {
    Stream rng = Stream::derive(seed, {domain::comparability, p});
    Matrix sm = Matrix::Identity(d, d);
    for (int n = 0; n < steps; ++n) {
      mu.sample_into(rng, buf.data());
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = starred ? buf[j * d + i] : buf[i * d + j];
      sm = a * sm;
      sm /= sm.maxCoeff();
      const double ratio = (sm * x).norm() / (x.norm() * operator_norm(sm));
      rep.min_ratio = std::min(rep.min_ratio, ratio);
      rep.min_by_step[n] = std::min(rep.min_by_step[n], ratio);
      const int bin = std::clamp(static_cast<int>(ratio * 20.0), 0, 19);
      ++rep.histogram[bin];
    }
  }
  return rep;
}

namespace {

// log|S x| for S = a_n ... a_1 built by explicit matrix products.
double log_norm_image(const MatrixLaw& mu, const std::vector<std::size_t>& word, std::size_t from, std::size_t to,
                      const Vector& x, Vector* direction) {
  const auto& atoms = mu.atoms();
  const int d = mu.dim();
  Matrix sm = Matrix::Identity(d, d);
  double log_scale = 0.0;
  for (std::size_t k = from; k < to; ++k) {
    sm = atoms[word[k]].matrix.matrix() * sm;
    const double mx = sm.maxCoeff();
    sm /= mx;
    log_scale += std::log(mx);
  }
  const Vector y = sm * x;
  const double n = y.norm();
  if (direction) *direction = y / n;
  return log_scale + std::log(n);
}

}  // namespace

double log_q(const MatrixLaw& mu, const std::vector<std::size_t>& word, const Vector& x, const EigenfunctionFormula& e,
             double kappa) {
  Vector dir;
  const double ln = log_norm_image(mu, word, 0, word.size(), x, &dir);
  return e.s() * ln + std::log(e(dir)) - static_cast<double>(word.size()) * std::log(kappa) - std::log(e(x));
}

double cocycle_error(const MatrixLaw& mu, const std::vector<std::size_t>& word, std::size_t split, const Vector& x,
                     const EigenfunctionFormula& e, double kappa) {
  const std::vector<std::size_t> head(word.begin(), word.begin() + static_cast<std::ptrdiff_t>(split));
  const std::vector<std::size_t> tail(word.begin() + static_cast<std::ptrdiff_t>(split), word.end());
  Vector mid = x;
  for (std::size_t k : head) mid = projective_action(mu.atoms()[k].matrix, mid);
  const double whole = log_q(mu, word, x, e, kappa);
  const double parts = log_q(mu, head, x, e, kappa) + log_q(mu, tail, mid, e, kappa);
  return std::abs(whole - parts);
}

}  // namespace kesten
