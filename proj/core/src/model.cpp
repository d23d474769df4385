#include "kesten/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kesten/errors.hpp"
#include "kesten/stats.hpp"

namespace kesten {

namespace {

std::size_t pick(const std::vector<double>& cumulative, double u) {
  for (std::size_t k = 0; k + 1 < cumulative.size(); ++k)
    if (u < cumulative[k]) return k;
  return cumulative.size() - 1;
}

std::vector<double> cumulate(const std::vector<double>& w) {
  double total = 0.0;
  for (double x : w) total += x;
  std::vector<double> c(w.size());
  double run = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    run += w[k];
    c[k] = run / total;
  }
  return c;
}

void check_probabilities(const std::vector<double>& w, const char* what) {
  if (w.empty()) throw Error(ErrorCode::InvalidLaw, std::string(what) + ": no atoms");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorCode::InvalidLaw, std::string(what) + ": negative probability");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorCode::InvalidLaw, std::string(what) + ": probabilities sum to " + std::to_string(total));
}

}  // namespace

MatrixLaw MatrixLaw::finite(std::vector<MatrixAtom> atoms, double declared_s_inf) {
  std::vector<double> p;
  for (const auto& a : atoms) p.push_back(a.p);
  check_probabilities(p, "matrix law");
  MatrixLaw law;
  law.kind_ = Kind::Finite;
  law.dim_ = atoms.front().matrix.dim();
  for (const auto& a : atoms)
    if (a.matrix.dim() != law.dim_) throw Error(ErrorCode::InvalidLaw, "matrix atoms have inconsistent dimensions");
  law.cumulative_ = cumulate(p);
  const int d = law.dim_;
  law.flat_.resize(atoms.size() * d * d);
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) law.flat_[k * d * d + i * d + j] = atoms[k].matrix(i, j);
    law.norms_.push_back(operator_norm(atoms[k].matrix));
  }
  law.atoms_ = std::move(atoms);
  law.s_inf_ = declared_s_inf;
  return law;
}

MatrixLaw MatrixLaw::lognormal_entries(Matrix base, double sigma) {
  if (!is_allowable(base)) throw Error(ErrorCode::NotAllowable, "lognormal base matrix is not allowable");
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidLaw, "lognormal sigma must be nonnegative");
  MatrixLaw law;
  law.kind_ = Kind::LognormalEntries;
  law.dim_ = static_cast<int>(base.rows());
  law.base_ = std::move(base);
  law.sigma_ = sigma;
  return law;
}

const std::vector<MatrixAtom>& MatrixLaw::atoms() const {
  if (kind_ != Kind::Finite) throw Error(ErrorCode::UnsupportedLaw, "law is not finitely supported");
  return atoms_;
}

MatrixLaw MatrixLaw::transposed() const {
  if (kind_ == Kind::LognormalEntries) return lognormal_entries(base_.transpose(), sigma_);
  std::vector<MatrixAtom> t;
  for (const auto& a : atoms_) t.push_back({a.matrix.transpose(), a.p});
  return finite(std::move(t), s_inf_);
}

std::size_t MatrixLaw::sample_atom(Stream& rng) const {
  if (kind_ != Kind::Finite) throw Error(ErrorCode::UnsupportedLaw, "law is not finitely supported");
  return pick(cumulative_, rng.uniform());
}

void MatrixLaw::sample_into(Stream& rng, double* out) const {
  const int dd = dim_ * dim_;
  if (kind_ == Kind::Finite) {
    const double* src = atom_data(pick(cumulative_, rng.uniform()));
    std::copy(src, src + dd, out);
    return;
  }
  const double shift = 0.5 * sigma_ * sigma_;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) {
      const double b = base_(i, j);
      out[i * dim_ + j] = b > 0.0 ? b * std::exp(sigma_ * rng.normal() - shift) : 0.0;
    }
}

PositiveMatrix MatrixLaw::sample(Stream& rng) const {
  if (kind_ == Kind::Finite) return atoms_[sample_atom(rng)].matrix;
  Matrix m(dim_, dim_);
  std::vector<double> buf(dim_ * dim_);
  sample_into(rng, buf.data());
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) m(i, j) = buf[i * dim_ + j];
  return PositiveMatrix(std::move(m));
}

std::optional<double> MatrixLaw::moment_norm(double s) const {
  if (kind_ != Kind::Finite) return std::nullopt;
  double total = 0.0;
  for (std::size_t k = 0; k < atoms_.size(); ++k) total += atoms_[k].p * std::pow(norms_[k], s);
  return total;
}

double sample_component(const Component1D& c, Stream& rng) {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform1D>) {
          return d.a + (d.b - d.a) * rng.uniform();
        } else if constexpr (std::is_same_v<T, Exponential1D>) {
          return d.loc + d.scale * rng.exponential();
        } else if constexpr (std::is_same_v<T, Pareto1D>) {
          return d.loc + d.scale * std::pow(rng.uniform_pos(), -1.0 / d.shape);
        } else {
          return std::exp(d.log_lo + d.log_span * rng.uniform());
        }
      },
      c);
}

namespace {

void check_component(const Component1D& c) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform1D>) {
          if (!(d.a >= 0.0 && d.b >= d.a)) throw Error(ErrorCode::InvalidLaw, "uniform needs 0 <= a <= b");
        } else if constexpr (std::is_same_v<T, Exponential1D>) {
          if (!(d.loc >= 0.0 && d.scale > 0.0)) throw Error(ErrorCode::InvalidLaw, "exponential needs loc >= 0, scale > 0");
        } else if constexpr (std::is_same_v<T, Pareto1D>) {
          if (!(d.loc >= 0.0 && d.scale > 0.0 && d.shape > 0.0))
            throw Error(ErrorCode::InvalidLaw, "pareto needs loc >= 0, scale > 0, shape > 0");
        } else {
          if (!(d.lo > 0.0 && d.hi >= d.lo)) throw Error(ErrorCode::InvalidLaw, "loguniform needs 0 < lo <= hi");
        }
      },
      c);
}

bool component_nonzero(const Component1D& c) {
  return std::visit(
      [](const auto& d) -> bool {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Uniform1D>) return d.b > 0.0;
        else return true;
      },
      c);
}

}  // namespace

VectorLaw VectorLaw::point(Vector v) {
  if ((v.array() < 0.0).any() || !v.allFinite()) throw Error(ErrorCode::InvalidLaw, "point mass must be a finite nonnegative vector");
  VectorLaw law;
  law.dim_ = static_cast<int>(v.size());
  law.node_ = PointNode{std::move(v)};
  law.singular_ = true;
  return law;
}

VectorLaw VectorLaw::product(std::vector<Component1D> components) {
  if (components.empty()) throw Error(ErrorCode::InvalidLaw, "product law needs at least one component");
  for (const auto& c : components) check_component(c);
  VectorLaw law;
  law.dim_ = static_cast<int>(components.size());
  law.node_ = ProductNode{std::move(components)};
  return law;
}

VectorLaw VectorLaw::mixture(std::vector<double> weights, std::vector<VectorLaw> components) {
  if (weights.size() != components.size()) throw Error(ErrorCode::InvalidLaw, "mixture weights and components differ in length");
  check_probabilities(weights, "mixture");
  for (const auto& c : components)
    if (c.dim() != components.front().dim()) throw Error(ErrorCode::InvalidLaw, "mixture components have inconsistent dimensions");
  VectorLaw law;
  law.dim_ = components.front().dim();
  MixtureNode node;
  node.cumulative = cumulate(weights);
  node.weights = std::move(weights);
  node.components = std::make_shared<const std::vector<VectorLaw>>(std::move(components));
  law.node_ = std::move(node);
  return law;
}

VectorLaw VectorLaw::arc_uniform(double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidLaw, "arc radius must be positive");
  VectorLaw law;
  law.dim_ = 2;
  law.node_ = ArcNode{radius};
  law.singular_ = true;
  return law;
}

void VectorLaw::sample_into(Stream& rng, double* out) const {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, PointNode>) {
          for (int i = 0; i < dim_; ++i) out[i] = n.value(i);
        } else if constexpr (std::is_same_v<T, ProductNode>) {
          for (int i = 0; i < dim_; ++i) out[i] = sample_component(n.components[i], rng);
        } else if constexpr (std::is_same_v<T, MixtureNode>) {
          (*n.components)[pick(n.cumulative, rng.uniform())].sample_into(rng, out);
        } else {
          const double theta = 0.5 * std::numbers::pi * rng.uniform();
          out[0] = n.radius * std::cos(theta);
          out[1] = n.radius * std::sin(theta);
        }
      },
      node_);
}

Vector VectorLaw::sample(Stream& rng) const {
  Vector v(dim_);
  sample_into(rng, v.data());
  return v;
}

bool VectorLaw::can_be_nonzero() const {
  return std::visit(
      [](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, PointNode>) {
          return (n.value.array() > 0.0).any();
        } else if constexpr (std::is_same_v<T, ProductNode>) {
          for (const auto& c : n.components)
            if (component_nonzero(c)) return true;
          return false;
        } else if constexpr (std::is_same_v<T, MixtureNode>) {
          for (std::size_t k = 0; k < n.components->size(); ++k)
            if (n.weights[k] > 0.0 && (*n.components)[k].can_be_nonzero()) return true;
          return false;
        } else {
          return true;
        }
      },
      node_);
}

double VectorLaw::moment_index() const {
  return std::visit(
      [](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, ProductNode>) {
          double idx = kInf;
          for (const auto& c : n.components)
            if (const auto* p = std::get_if<Pareto1D>(&c)) idx = std::min(idx, p->shape);
          return idx;
        } else if constexpr (std::is_same_v<T, MixtureNode>) {
          double idx = kInf;
          for (std::size_t k = 0; k < n.components->size(); ++k)
            if (n.weights[k] > 0.0) idx = std::min(idx, (*n.components)[k].moment_index());
          return idx;
        } else {
          return kInf;
        }
      },
      node_);
}

std::optional<double> VectorLaw::norm_moment_exact(double s) const {
  if (const auto* p = std::get_if<PointNode>(&node_)) return std::pow(p->value.norm(), s);
  if (const auto* a = std::get_if<ArcNode>(&node_)) return std::pow(a->radius, s);
  if (const auto* m = std::get_if<MixtureNode>(&node_)) {
    double total = 0.0;
    for (std::size_t k = 0; k < m->components->size(); ++k) {
      auto v = (*m->components)[k].norm_moment_exact(s);
      if (!v) return std::nullopt;
      total += m->weights[k] * *v;
    }
    return total;
  }
  return std::nullopt;
}

PositiveMatrix sample_matrix(const MatrixLaw& mu, Stream& rng) { return mu.sample(rng); }

Vector sample_vector(const VectorLaw& eta, Stream& rng) { return eta.sample(rng); }

void Scenario::validate() const {
  if (N < 2) throw Error(ErrorCode::InvalidArgument, "N must be at least 2");
  if (!(s1 > 0.0 && s1 <= 0.5)) throw Error(ErrorCode::InvalidArgument, "s1 must lie in (0, 1/2]");
  if (!(s2 > s1)) throw Error(ErrorCode::InvalidArgument, "s2 must exceed s1");
  if (mu.dim() != dim) throw Error(ErrorCode::InvalidLaw, "matrix law dimension differs from dim");
  if (eta.dim() != dim) throw Error(ErrorCode::InvalidLaw, "vector law dimension differs from dim");
  if (!eta.can_be_nonzero()) throw Error(ErrorCode::InvalidLaw, "vector law is identically zero");
}

ContractivityReport check_contractivity(const Scenario& sc, int n_max, std::size_t trials, std::uint64_t seed,
                                        unsigned threads) {
  const int d = sc.dim;
  ContractivityReport rep;
  rep.trials = trials;
  rep.n_max = n_max;
  rep.hitting_histogram.assign(n_max + 1, 0);
  std::vector<int> hit(trials, 0);

  auto run = [&](std::size_t t, int stop_at, Matrix* keep) {
    Stream rng = Stream::derive(seed, {domain::contractivity, t});
    Matrix s = Matrix::Identity(d, d);
    Matrix a(d, d);
    std::vector<double> buf(d * d);
    for (int n = 1; n <= n_max; ++n) {
      sc.mu.sample_into(rng, buf.data());
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = buf[i * d + j];
      s = a * s;
      if (stop_at > 0) {
        if (n == stop_at) {
          *keep = s;
          return n;
        }
      } else if ((s.array() > 0.0).all()) {
        return n;
      }
      const double mx = s.maxCoeff();
      if (mx > 0.0) s /= mx;
    }
    return 0;
  };

  parallel_for(trials, threads, [&](std::size_t t) { hit[t] = run(t, 0, nullptr); });
  std::size_t hits = 0;
  for (int h : hit) {
    if (h > 0) {
      ++rep.hitting_histogram[h];
      ++hits;
    } else {
      ++rep.censored;
    }
  }
  rep.hit_probability = trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0;
  if (hits == 0) return rep;

  int modal = 1;
  for (int n = 1; n <= n_max; ++n)
    if (rep.hitting_histogram[n] > rep.hitting_histogram[modal]) modal = n;
  rep.modal_hitting_time = modal;

  // Replaying the same streams gives S_{n0}; scale by the product of norms
  // is irrelevant for positivity but tau is reported on the normalized
  // product (max entry 1).
  std::vector<double> mins(trials, 0.0);
  parallel_for(trials, threads, [&](std::size_t t) {
    Matrix s;
    run(t, modal, &s);
    const double mx = s.maxCoeff();
    mins[t] = mx > 0.0 ? s.minCoeff() / mx : 0.0;
  });
  std::vector<double> sorted = mins;
  std::sort(sorted.begin(), sorted.end());
  rep.tau = sorted[sorted.size() / 2];
  std::size_t above = 0;
  for (double m : mins)
    if (m >= rep.tau && m > 0.0) ++above;
  rep.p_at_tau = static_cast<double>(above) / static_cast<double>(trials);
  return rep;
}

SpanningReport check_spanning(const Scenario& sc, std::size_t trials, std::uint64_t seed, int max_length) {
  const int d = sc.dim;
  SpanningReport rep;
  std::vector<Vector> dirs;
  std::vector<double> buf(d * d);
  for (std::size_t t = 0; t < trials; ++t) {
    Stream rng = Stream::derive(seed, {domain::spanning, t});
    const int len = 1 + static_cast<int>(rng.uniform() * max_length);
    Matrix s = Matrix::Identity(d, d);
    for (int n = 0; n < len; ++n) {
      sc.mu.sample_into(rng, buf.data());
      Matrix a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(buf.data(), d, d);
      s = a * s;
      s /= s.maxCoeff();
    }
    try {
      const PerronData pd = perron(PositiveMatrix(s));
      dirs.push_back(pd.v / pd.v.norm());
    } catch (const Error&) {
    }
  }
  rep.proximal_found = dirs.size();
  if (dirs.size() < static_cast<std::size_t>(d))
    throw Error(ErrorCode::InsufficientProximalSamples,
                "found " + std::to_string(dirs.size()) + " proximal products, need " + std::to_string(d));
  Matrix m(d, static_cast<Eigen::Index>(dirs.size()));
  for (std::size_t k = 0; k < dirs.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = dirs[k];
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) rep.singular_values.push_back(sv(i));
  const double thresh = 1e-8 * sv(0) * std::sqrt(static_cast<double>(dirs.size()));
  rep.rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > thresh) ++rep.rank;
  rep.spanning = rep.rank == d;
  return rep;
}

HypothesisAudit hypothesis_audit(const Scenario& sc, std::size_t mc_trials, std::uint64_t seed) {
  HypothesisAudit audit;
  audit.bound = 1.0 / sc.N;
  const int d = sc.dim;

  auto norm_moment = [&](double s, std::uint64_t tag) {
    MomentCheck c;
    if (auto exact = sc.mu.moment_norm(s)) {
      c.value = c.ci_lo = c.ci_hi = *exact;
      c.exact = true;
    } else {
      std::vector<double> vals(mc_trials);
      std::vector<double> buf(d * d);
      for (std::size_t t = 0; t < mc_trials; ++t) {
        Stream rng = Stream::derive(seed, {domain::audit, tag, t});
        sc.mu.sample_into(rng, buf.data());
        Matrix a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(buf.data(), d, d);
        vals[t] = std::pow(operator_norm(a), s);
      }
      const MeanCI m = mean_ci(vals);
      c.value = m.mean;
      c.ci_lo = m.lo;
      c.ci_hi = m.hi;
    }
    c.pass = c.value <= audit.bound * (1.0 + 1e-12);
    return c;
  };
  audit.norm_s1 = norm_moment(sc.s1, 1);
  audit.norm_s2 = norm_moment(sc.s2, 2);

  MomentCheck& b = audit.b_s2;
  if (auto exact = sc.eta.norm_moment_exact(sc.s2)) {
    b.value = b.ci_lo = b.ci_hi = *exact;
    b.exact = true;
  } else {
    std::vector<double> vals(mc_trials);
    std::vector<double> buf(d);
    for (std::size_t t = 0; t < mc_trials; ++t) {
      Stream rng = Stream::derive(seed, {domain::audit, 3, t});
      sc.eta.sample_into(rng, buf.data());
      double n2 = 0.0;
      for (double x : buf) n2 += x * x;
      vals[t] = std::pow(std::sqrt(n2), sc.s2);
    }
    const MeanCI m = mean_ci(vals);
    b.value = m.mean;
    b.ci_lo = m.lo;
    b.ci_hi = m.hi;
  }
  b.pass = sc.s2 < sc.eta.moment_index() && std::isfinite(b.value);
  return audit;
}

}  // namespace kesten
