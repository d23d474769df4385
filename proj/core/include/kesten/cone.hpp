#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kesten {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Throws NonSquare / NegativeEntry; false means some row or column is zero.
bool is_allowable(const Matrix& m);

// A nonnegative square matrix with a positive entry in every row and column.
class PositiveMatrix {
 public:
  PositiveMatrix() = default;
  explicit PositiveMatrix(Matrix m);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  bool strictly_positive() const { return strict_; }

  PositiveMatrix transpose() const;
  PositiveMatrix operator*(const PositiveMatrix& other) const;

 private:
  Matrix m_;
  bool strict_ = false;
};

// a.x = ax/|ax|; throws ZeroImage if ax = 0.
Vector projective_action(const PositiveMatrix& a, const Vector& x);
Vector projective_action(const Matrix& a, const Vector& x);

// Largest singular value via power iteration on a^T a.
double operator_norm(const Matrix& a);
inline double operator_norm(const PositiveMatrix& a) { return operator_norm(a.matrix()); }

struct PerronData {
  double lambda = 0.0;
  Vector v;  // right eigenvector, <v, w> = 1
  Vector w;  // left eigenvector, |w| = 1
  double spectral_gap = 0.0;  // |lambda_2| / lambda estimate
  int iterations = 0;
};

enum class PerronMode { Relaxed, Strict };

inline constexpr double kProximalRatioLimit = 1.0 - 1e-6;

// Strict mode insists on a in G° (InvalidArgument otherwise); relaxed mode
// accepts any allowable proximal matrix.
PerronData perron(const PositiveMatrix& a, double tol = 1e-12, PerronMode mode = PerronMode::Relaxed,
                  int max_iter = 100000);

struct ProximalTrace {
  std::vector<double> distances;  // |a^n.x - vbar|, n = 1..n_max
  double fitted_ratio = 0.0;
  double spectral_gap = 0.0;
  bool stalled = false;  // distance not decaying, e.g. x on a non-dominant eigendirection
  bool converged = false;
};

ProximalTrace proximal_limit_check(const PositiveMatrix& a, const Vector& x, int n_max, double tol = 1e-8);

}  // namespace kesten
