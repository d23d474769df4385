#include "kesten/branching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kesten/errors.hpp"

namespace kesten {

std::uint64_t tree_node_count(int N, int depth) {
  const std::uint64_t cap = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t total = 0, level = 1;
  for (int j = 0; j <= depth; ++j) {
    if (total > cap - level) return cap;
    total += level;
    if (j < depth) {
      if (level > cap / static_cast<std::uint64_t>(N)) return cap;
      level *= static_cast<std::uint64_t>(N);
    }
  }
  return total;
}

void check_budget(int N, int depth, std::uint64_t node_budget) {
  if (depth < 0) throw Error(ErrorCode::InvalidArgument, "depth must be nonnegative");
  const std::uint64_t nodes = tree_node_count(N, depth);
  if (nodes > node_budget)
    throw Error(ErrorCode::BudgetExceeded, "depth " + std::to_string(depth) + " needs " + std::to_string(nodes) +
                                               " nodes per sample, budget is " + std::to_string(node_budget));
}

std::vector<double> SampleSet::project(const Vector& u) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* r = row(i);
    double v = 0.0;
    for (int k = 0; k < dim; ++k) v += r[k] * u(k);
    out[i] = v;
  }
  return out;
}

TreeSampler::TreeSampler(const Scenario& sc) : sc_(sc), d_(sc.dim), a_(sc.dim * sc.dim), b_(sc.dim) {}

void TreeSampler::draw(Stream& rng, int depth, double* levels, bool all_levels, const VectorLaw* leaf_law) {
  const int d = d_;
  const int dd = d * d;
  const int N = sc_.N;
  std::fill(levels, levels + static_cast<std::size_t>(depth + 1) * d, 0.0);
  const std::size_t frames = static_cast<std::size_t>(depth) * N + 2;
  if (stack_.size() < frames * dd) stack_.resize(frames * dd);
  if (depth_stack_.size() < frames) depth_stack_.resize(frames);
  std::vector<double> cur(dd);

  std::fill(stack_.begin(), stack_.begin() + dd, 0.0);
  for (int i = 0; i < d; ++i) stack_[i * d + i] = 1.0;
  depth_stack_[0] = 0;
  std::size_t top = 1;
  while (top > 0) {
    --top;
    const int j = depth_stack_[top];
    std::copy(stack_.begin() + top * dd, stack_.begin() + (top + 1) * dd, cur.begin());
    if (all_levels || j == depth) {
      const VectorLaw& law = (j == depth && leaf_law) ? *leaf_law : sc_.eta;
      law.sample_into(rng, b_.data());
      double* w = levels + static_cast<std::size_t>(j) * d;
      for (int r = 0; r < d; ++r) {
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += cur[r * d + c] * b_[c];
        w[r] += acc;
      }
    }
    if (j < depth) {
      for (int k = 0; k < N; ++k) {
        sc_.mu.sample_into(rng, a_.data());
        double* q = stack_.data() + top * dd;
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int m = 0; m < d; ++m) acc += cur[r * d + m] * a_[m * d + c];
            q[r * d + c] = acc;
          }
        depth_stack_[top] = j + 1;
        ++top;
      }
    }
  }
}

WDraw sample_W(const Scenario& sc, int n, Stream& rng, std::uint64_t node_budget) {
  check_budget(sc.N, n, node_budget);
  TreeSampler ts(sc);
  std::vector<double> levels(static_cast<std::size_t>(n + 1) * sc.dim);
  ts.draw(rng, n, levels.data(), false);
  WDraw out;
  out.w = Eigen::Map<const Vector>(levels.data() + static_cast<std::size_t>(n) * sc.dim, sc.dim);
  out.node_count = tree_node_count(sc.N, n);
  return out;
}

FixedPointSample sample_R(const Scenario& sc, const BranchingConfig& config, Stream& rng) {
  check_budget(sc.N, config.depth, config.node_budget);
  TreeSampler ts(sc);
  const int d = sc.dim;
  std::vector<double> levels(static_cast<std::size_t>(config.depth + 1) * d);
  ts.draw(rng, config.depth, levels.data(), true);
  FixedPointSample out;
  out.r = Vector::Zero(d);
  for (int j = 0; j <= config.depth; ++j) {
    Vector w = Eigen::Map<const Vector>(levels.data() + static_cast<std::size_t>(j) * d, d);
    out.r += w;
    out.per_level_norms.push_back(w.norm());
    out.levels.push_back(std::move(w));
  }
  return out;
}

SampleBatch sample_R_batch(const Scenario& sc, const BranchingConfig& config, std::uint64_t seed, unsigned threads,
                           bool keep_level_norms, std::uint64_t stream_domain) {
  check_budget(sc.N, config.depth, config.node_budget);
  const int d = sc.dim;
  const int L = config.depth + 1;
  SampleBatch batch;
  batch.depth = config.depth;
  batch.r.dim = d;
  batch.r.data.assign(config.samples * d, 0.0);
  if (keep_level_norms) batch.level_norms.assign(config.samples * L, 0.0);
  parallel_for(config.samples, threads, [&](std::size_t i) {
    thread_local std::vector<double> levels;
    levels.assign(static_cast<std::size_t>(L) * d, 0.0);
    TreeSampler ts(sc);
    Stream rng = Stream::derive(seed, {stream_domain, i});
    ts.draw(rng, config.depth, levels.data(), true);
    double* r = batch.r.row(i);
    for (int j = 0; j < L; ++j) {
      double n2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double v = levels[j * d + k];
        r[k] += v;
        n2 += v * v;
      }
      if (keep_level_norms) batch.level_norms[i * L + j] = std::sqrt(n2);
    }
  });
  return batch;
}

int depth_from_fit(double K, double eta, double s, double eps) {
  if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorCode::NoContraction, "fitted rate is not below 1");
  for (int depth = 0; depth < 100000; ++depth) {
    double bound;
    if (s <= 1.0) {
      bound = K * std::pow(eta, depth + 1) / (1.0 - eta);
      if (bound <= std::pow(eps, s)) return depth;
    } else {
      const double r = std::pow(eta, 1.0 / s);
      bound = std::pow(K, 1.0 / s) * std::pow(r, depth + 1) / (1.0 - r);
      if (bound <= eps) return depth;
    }
  }
  throw Error(ErrorCode::NoContraction, "no finite depth meets the truncation target");
}

namespace {

std::vector<LevelMoment> level_moments(const SampleBatch& batch, std::size_t samples, double s) {
  const int L = batch.depth + 1;
  std::vector<LevelMoment> out;
  std::vector<double> vals(samples);
  for (int j = 0; j < L; ++j) {
    for (std::size_t i = 0; i < samples; ++i) vals[i] = std::pow(batch.level_norms[i * L + j], s);
    const MeanCI m = mean_ci(vals);
    out.push_back({j, m.mean, m.lo, m.hi});
  }
  return out;
}

LinearFit log_fit(const std::vector<LevelMoment>& lv, int from, int to) {
  std::vector<double> x, y;
  for (const auto& l : lv)
    if (l.n >= from && l.n <= to && l.mean > 0.0) {
      x.push_back(l.n);
      y.push_back(std::log(l.mean));
    }
  return linear_fit(x, y);
}

bool fittable(const std::vector<LevelMoment>& lv, int from, int to) {
  return std::count_if(lv.begin(), lv.end(), [&](const LevelMoment& l) {
           return l.n >= from && l.n <= to && l.mean > 0.0;
         }) >= 2;
}

}  // namespace

DepthPlan plan_depth(const Scenario& sc, double kappa_at_s, double s, double eps, std::size_t pilot_samples,
                     std::uint64_t seed, unsigned threads, std::uint64_t node_budget) {
  DepthPlan plan;
  plan.s = s;
  plan.eps = eps;
  plan.n_kappa = sc.N * kappa_at_s;
  if (!(plan.n_kappa < 1.0)) throw Error(ErrorCode::NoContraction, "N kappa(s) = " + std::to_string(plan.n_kappa) + " >= 1");
  BranchingConfig pilot;
  pilot.depth = kPilotLevels;
  pilot.samples = pilot_samples;
  pilot.node_budget = node_budget;
  const SampleBatch batch = sample_R_batch(sc, pilot, seed, threads, true, domain::pilot);
  plan.pilot = level_moments(batch, pilot_samples, s);
  const LinearFit fit = log_fit(plan.pilot, 1, kPilotLevels);
  const double t = fit.dof > 0 ? student_t_quantile(0.975, static_cast<double>(fit.dof)) : 0.0;
  plan.eta_hat = std::exp(fit.slope);
  plan.K_hat = std::exp(fit.intercept);
  plan.eta_ci_lo = std::exp(fit.slope - t * fit.slope_se);
  plan.eta_ci_hi = std::exp(fit.slope + t * fit.slope_se);
  if (plan.eta_ci_hi >= 1.0)
    throw Error(ErrorCode::PilotTooNoisy, "pilot rate interval reaches " + std::to_string(plan.eta_ci_hi));
  plan.depth = depth_from_fit(plan.K_hat, plan.eta_hat, s, eps);
  check_budget(sc.N, plan.depth, node_budget);
  return plan;
}

DepthPlan plan_depth_auto(const Scenario& sc, const std::function<double(double)>& kappa, double chi, double eps,
                          std::size_t pilot_samples, std::uint64_t seed, unsigned threads, std::uint64_t node_budget) {
  double best_s = 0.0, best_k = 0.0;
  int best_depth = std::numeric_limits<int>::max();
  for (int k = 1; k * 0.05 < chi - 1e-9; ++k) {
    const double s = k * 0.05;
    const double kap = kappa(s);
    const double eta = sc.N * kap;
    if (!(eta < 1.0)) continue;
    const int depth = depth_from_fit(1.0, eta, s, eps);
    if (depth < best_depth) {
      best_depth = depth;
      best_s = s;
      best_k = kap;
    }
  }
  if (best_depth == std::numeric_limits<int>::max())
    throw Error(ErrorCode::NoContraction, "N kappa(s) >= 1 for every s on the planning grid");
  return plan_depth(sc, best_k, best_s, eps, pilot_samples, seed, threads, node_budget);
}

MomentDecayReport moment_decay_study(const Scenario& sc, double s, int n_max, std::size_t samples, std::uint64_t seed,
                                     double kappa_at_s, unsigned threads, double tolerance, std::uint64_t node_budget) {
  BranchingConfig cfg;
  cfg.depth = n_max;
  cfg.samples = samples;
  cfg.node_budget = node_budget;
  const SampleBatch batch = sample_R_batch(sc, cfg, seed, threads, true, domain::moment_decay);
  MomentDecayReport rep;
  rep.s = s;
  rep.levels = level_moments(batch, samples, s);
  const LinearFit fit = log_fit(rep.levels, 1, n_max);
  const double t = fit.dof > 0 ? student_t_quantile(0.975, static_cast<double>(fit.dof)) : 0.0;
  rep.fitted_rate = std::exp(fit.slope);
  rep.rate_ci_lo = std::exp(fit.slope - t * fit.slope_se);
  rep.rate_ci_hi = std::exp(fit.slope + t * fit.slope_se);
  rep.n_kappa = sc.N * kappa_at_s;
  rep.ratio = rep.fitted_rate / rep.n_kappa;
  rep.exceeds = rep.fitted_rate > rep.n_kappa * (1.0 + tolerance);
  return rep;
}

std::vector<Vector> default_directions(int dim) {
  std::vector<Vector> out;
  for (int i = 0; i < dim; ++i) out.push_back(Vector::Unit(dim, i));
  if (dim > 1) out.push_back(Vector::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim))));
  return out;
}

namespace {

std::vector<DirectionKS> compare(const SampleSet& a, const SampleSet& b, const std::vector<Vector>& u_list) {
  std::vector<DirectionKS> out;
  for (const auto& u : u_list) {
    DirectionKS k;
    k.u = u;
    k.ks = ks_statistic(a.project(u), b.project(u));
    k.p_value = ks_pvalue(k.ks, a.size(), b.size());
    out.push_back(k);
  }
  return out;
}

}  // namespace

FixedPointReport fixed_point_test(const Scenario& sc, const BranchingConfig& config, std::size_t samples,
                                  const std::vector<Vector>& u_list, std::uint64_t seed, unsigned threads,
                                  bool null_check) {
  check_budget(sc.N, config.depth, config.node_budget);
  FixedPointReport rep;
  rep.depth = config.depth;
  BranchingConfig cfg = config;
  cfg.samples = samples;
  const SampleBatch p1 = sample_R_batch(sc, cfg, seed, threads, false, domain::fixed_point_p1);

  const int d = sc.dim;
  SampleSet p2;
  p2.dim = d;
  p2.data.assign(samples * d, 0.0);
  const int inner = config.depth - 1;
  parallel_for(samples, threads, [&](std::size_t i) {
    Stream rng = Stream::derive(seed, {domain::fixed_point_p2, i});
    TreeSampler ts(sc);
    std::vector<double> b(d), a(d * d), levels(static_cast<std::size_t>(std::max(inner, 0) + 1) * d);
    double* out = p2.row(i);
    sc.eta.sample_into(rng, b.data());
    for (int k = 0; k < d; ++k) out[k] = b[k];
    if (inner < 0) return;
    for (int c = 0; c < sc.N; ++c) {
      sc.mu.sample_into(rng, a.data());
      ts.draw(rng, inner, levels.data(), true);
      std::vector<double> r(d, 0.0);
      for (int j = 0; j <= inner; ++j)
        for (int k = 0; k < d; ++k) r[k] += levels[j * d + k];
      for (int row = 0; row < d; ++row) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) acc += a[row * d + k] * r[k];
        out[row] += acc;
      }
    }
  });
  rep.directions = compare(p1.r, p2, u_list);
  if (null_check) {
    const SampleBatch p1b = sample_R_batch(sc, cfg, seed, threads, false, domain::fixed_point_p1 + 0x100);
    rep.null_directions = compare(p1.r, p1b.r, u_list);
  }
  return rep;
}

// Draw order matches TreeSampler::draw: B of the node, its N matrices, then
// the children last to first. A shared stream therefore couples R*_n with the
// tree decomposition path by path.
Vector iterate_recursion(const Scenario& sc, int n, const VectorLaw& initial, Stream& rng) {
  const int d = sc.dim;
  if (n == 0) return initial.sample(rng);
  Vector acc = sc.eta.sample(rng);
  std::vector<Matrix> a(sc.N, Matrix(d, d));
  std::vector<double> buf(d * d);
  for (int c = 0; c < sc.N; ++c) {
    sc.mu.sample_into(rng, buf.data());
    a[c] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(buf.data(), d, d);
  }
  for (int c = sc.N - 1; c >= 0; --c) acc += a[c] * iterate_recursion(sc, n - 1, initial, rng);
  return acc;
}

namespace {

SampleSet recursive_population(const Scenario& sc, int n, const VectorLaw& initial, std::size_t samples,
                               std::uint64_t seed, std::uint64_t tag, unsigned threads) {
  SampleSet out;
  out.dim = sc.dim;
  out.data.assign(samples * sc.dim, 0.0);
  parallel_for(samples, threads, [&](std::size_t i) {
    Stream rng = Stream::derive(seed, {domain::coupling, tag, i});
    const Vector v = iterate_recursion(sc, n, initial, rng);
    std::copy(v.data(), v.data() + sc.dim, out.row(i));
  });
  return out;
}

}  // namespace

CouplingReport uniqueness_coupling_test(const Scenario& sc, int n, const VectorLaw& initial, std::size_t samples,
                                        const std::vector<Vector>& u_list, double s, double kappa_at_s,
                                        std::uint64_t seed, unsigned threads, std::uint64_t node_budget) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "coupling test needs n >= 1");
  check_budget(sc.N, n, node_budget);
  if (initial.dim() != sc.dim) throw Error(ErrorCode::InvalidLaw, "initial law dimension differs from scenario");
  const int d = sc.dim;
  CouplingReport rep;
  rep.n = n;
  rep.n_kappa = sc.N * kappa_at_s;

  const SampleSet p1 = recursive_population(sc, n, initial, samples, seed, 0, threads);
  SampleSet p2;
  p2.dim = d;
  p2.data.assign(samples * d, 0.0);
  parallel_for(samples, threads, [&](std::size_t i) {
    Stream rng = Stream::derive(seed, {domain::coupling, 1, i});
    TreeSampler ts(sc);
    std::vector<double> levels(static_cast<std::size_t>(n + 1) * d);
    ts.draw(rng, n, levels.data(), true, &initial);
    double* out = p2.row(i);
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k < d; ++k) out[k] += levels[j * d + k];
  });
  rep.directions = compare(p1, p2, u_list);

  std::vector<double> gaps(samples);
  parallel_for(samples, threads, [&](std::size_t i) {
    Stream tree_rng = Stream::derive(seed, {domain::coupling, 1, i});
    Stream rec_rng = tree_rng;
    const Vector r = iterate_recursion(sc, n, initial, rec_rng);
    const Vector t = Eigen::Map<const Vector>(p2.row(i), d);
    gaps[i] = (r - t).norm() / std::max(1.0, t.norm());
  });
  rep.path_gap = gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end());

  std::vector<double> vals(samples);
  for (int k = 1; k <= n; ++k) {
    parallel_for(samples, threads, [&](std::size_t i) {
      Stream rng = Stream::derive(seed, {domain::coupling, 2 + static_cast<std::uint64_t>(k), i});
      TreeSampler ts(sc);
      std::vector<double> levels(static_cast<std::size_t>(k + 1) * d);
      ts.draw(rng, k, levels.data(), false, &initial);
      double n2 = 0.0;
      for (int c = 0; c < d; ++c) n2 += levels[k * d + c] * levels[k * d + c];
      vals[i] = std::pow(std::sqrt(n2), s);
    });
    const MeanCI m = mean_ci(vals);
    rep.w_moments.push_back({k, m.mean, m.lo, m.hi});
  }
  if (fittable(rep.w_moments, 1, n)) rep.fitted_rate = std::exp(log_fit(rep.w_moments, 1, n).slope);
  return rep;
}

std::vector<double> initial_law_convergence(const Scenario& sc, const VectorLaw& first, const VectorLaw& second,
                                            int n_max, std::size_t samples, const Vector& u, std::uint64_t seed,
                                            unsigned threads) {
  std::vector<double> out;
  for (int n = 1; n <= n_max; ++n) {
    const SampleSet a = recursive_population(sc, n, first, samples, seed, 0x1000 + 2 * static_cast<std::uint64_t>(n), threads);
    const SampleSet b = recursive_population(sc, n, second, samples, seed, 0x1001 + 2 * static_cast<std::uint64_t>(n), threads);
    out.push_back(ks_statistic(a.project(u), b.project(u)));
  }
  return out;
}

}  // namespace kesten
