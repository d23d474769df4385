#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kesten/cone.hpp"
#include "kesten/rng.hpp"

namespace kesten {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct MatrixAtom {
  PositiveMatrix matrix;
  double p = 0.0;
};

// Law mu of the random matrix A.
class MatrixLaw {
 public:
  enum class Kind { Finite, LognormalEntries };

  MatrixLaw() = default;
  static MatrixLaw finite(std::vector<MatrixAtom> atoms, double declared_s_inf = kInf);
  // A_ij = base_ij * exp(sigma Z_ij - sigma^2/2); zero entries of base stay zero.
  static MatrixLaw lognormal_entries(Matrix base, double sigma);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool finitely_supported() const { return kind_ == Kind::Finite; }
  const std::vector<MatrixAtom>& atoms() const;
  double declared_s_inf() const { return s_inf_; }
  const Matrix& base() const { return base_; }
  double sigma() const { return sigma_; }

  // Law of A^T.
  MatrixLaw transposed() const;

  std::size_t sample_atom(Stream& rng) const;
  PositiveMatrix sample(Stream& rng) const;
  // Writes a row-major d*d draw.
  void sample_into(Stream& rng, double* out) const;

  const double* atom_data(std::size_t k) const { return flat_.data() + k * dim_ * dim_; }
  double atom_norm(std::size_t k) const { return norms_[k]; }

  // Exact E||A||^s for finite laws.
  std::optional<double> moment_norm(double s) const;

 private:
  Kind kind_ = Kind::Finite;
  int dim_ = 0;
  std::vector<MatrixAtom> atoms_;
  std::vector<double> cumulative_;
  std::vector<double> flat_;
  std::vector<double> norms_;
  Matrix base_;
  double sigma_ = 0.0;
  double s_inf_ = kInf;
};

struct Uniform1D {
  double a = 0.0;
  double b = 1.0;
};
struct Exponential1D {
  double loc = 0.0;
  double scale = 1.0;
};
// loc + scale * U^{-1/shape}
struct Pareto1D {
  double loc = 0.0;
  double scale = 1.0;
  double shape = 2.0;
};
// exp(uniform(log lo, log hi))
struct LogUniform1D {
  LogUniform1D() : LogUniform1D(1.0, 2.0) {}
  LogUniform1D(double lo_, double hi_) : lo(lo_), hi(hi_), log_lo(std::log(lo_)), log_span(std::log(hi_ / lo_)) {}
  double lo;
  double hi;
  double log_lo;
  double log_span;
};
using Component1D = std::variant<Uniform1D, Exponential1D, Pareto1D, LogUniform1D>;

double sample_component(const Component1D& c, Stream& rng);

// Law eta of the random vector B.
class VectorLaw {
 public:
  VectorLaw() = default;
  static VectorLaw point(Vector v);
  static VectorLaw product(std::vector<Component1D> components);
  static VectorLaw mixture(std::vector<double> weights, std::vector<VectorLaw> components);
  // Uniform angle on the quarter circle of the given radius (d = 2).
  static VectorLaw arc_uniform(double radius);

  int dim() const { return dim_; }
  bool singular() const { return singular_; }
  double epsilon() const { return epsilon_; }
  void declare(bool singular, double epsilon) {
    singular_ = singular;
    epsilon_ = epsilon;
  }

  void sample_into(Stream& rng, double* out) const;
  Vector sample(Stream& rng) const;

  // Some component puts positive mass on B != 0.
  bool can_be_nonzero() const;
  // sup{s : E|B|^s < inf}.
  double moment_index() const;
  // Exact E|B|^s when the law is a point mass or a mixture of point masses.
  std::optional<double> norm_moment_exact(double s) const;
  bool is_point() const { return std::holds_alternative<PointNode>(node_); }

 private:
  friend struct VectorLawAccess;
  struct PointNode {
    Vector value;
  };
  struct ProductNode {
    std::vector<Component1D> components;
  };
  struct MixtureNode {
    std::vector<double> cumulative;
    std::vector<double> weights;
    std::shared_ptr<const std::vector<VectorLaw>> components;
  };
  struct ArcNode {
    double radius = 1.0;
  };
  std::variant<PointNode, ProductNode, MixtureNode, ArcNode> node_;
  int dim_ = 0;
  bool singular_ = false;
  double epsilon_ = 0.0;
};

PositiveMatrix sample_matrix(const MatrixLaw& mu, Stream& rng);
Vector sample_vector(const VectorLaw& eta, Stream& rng);

struct Scenario {
  int dim = 0;
  int N = 2;
  MatrixLaw mu;
  VectorLaw eta;
  double s1 = 0.5;
  double s2 = 1.0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> labels;

  // Throws InvalidLaw / InvalidArgument on broken invariants.
  void validate() const;
};

// Scenario files; ParseError carries line and column for syntax errors.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::string& path);
// Deterministic serialization used for hashing and manifests.
std::string canonical_json(const Scenario& sc);

struct ContractivityReport {
  std::size_t trials = 0;
  int n_max = 0;
  double hit_probability = 0.0;
  // histogram[n] = trials first hitting G° at step n (index 0 unused).
  std::vector<std::size_t> hitting_histogram;
  std::size_t censored = 0;
  int modal_hitting_time = 0;
  // Median over trials of min entry of S_{n0} at the modal hitting time, and
  // the fraction of trials with all entries above it.
  double tau = 0.0;
  double p_at_tau = 0.0;
};

ContractivityReport check_contractivity(const Scenario& sc, int n_max = 64, std::size_t trials = 10000,
                                        std::uint64_t seed = 0, unsigned threads = 1);

struct SpanningReport {
  int rank = 0;
  bool spanning = false;
  std::size_t proximal_found = 0;
  std::vector<double> singular_values;
};

SpanningReport check_spanning(const Scenario& sc, std::size_t trials = 2000, std::uint64_t seed = 0,
                              int max_length = 6);

struct MomentCheck {
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool exact = false;
  bool pass = false;
};

struct HypothesisAudit {
  MomentCheck norm_s1;  // E||A||^{s1} <= 1/N
  MomentCheck norm_s2;  // E||A||^{s2} <= 1/N
  MomentCheck b_s2;     // E|B|^{s2} < inf
  double bound = 0.5;   // 1/N
  bool all_pass() const { return norm_s1.pass && norm_s2.pass && b_s2.pass; }
};

HypothesisAudit hypothesis_audit(const Scenario& sc, std::size_t mc_trials = 100000, std::uint64_t seed = 0);

}  // namespace kesten
