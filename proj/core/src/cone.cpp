#include "kesten/cone.hpp"

#include <cmath>
#include <string>

#include "kesten/errors.hpp"
#include "kesten/stats.hpp"

namespace kesten {

bool is_allowable(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorCode::NonSquare, "matrix must be square and non-empty");
  if (!m.allFinite()) throw Error(ErrorCode::InvalidArgument, "matrix entries must be finite");
  if ((m.array() < 0.0).any()) throw Error(ErrorCode::NegativeEntry, "matrix has a negative entry");
  const auto pos = (m.array() > 0.0);
  return pos.rowwise().any().all() && pos.colwise().any().all();
}

PositiveMatrix::PositiveMatrix(Matrix m) : m_(std::move(m)) {
  if (!is_allowable(m_)) throw Error(ErrorCode::NotAllowable, "matrix has a zero row or column");
  strict_ = (m_.array() > 0.0).all();
}

PositiveMatrix PositiveMatrix::transpose() const { return PositiveMatrix(m_.transpose()); }

PositiveMatrix PositiveMatrix::operator*(const PositiveMatrix& other) const { return PositiveMatrix(m_ * other.m_); }

Vector projective_action(const Matrix& a, const Vector& x) {
  Vector y = a * x;
  const double n = y.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroImage, "ax = 0");
  return y / n;
}

Vector projective_action(const PositiveMatrix& a, const Vector& x) { return projective_action(a.matrix(), x); }

double operator_norm(const Matrix& a) {
  const Matrix s = a.transpose() * a;
  const auto d = s.rows();
  Vector x = Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  double rho = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector y = s * x;
    const double next = x.dot(y);
    const double ny = y.norm();
    if (!(ny > 0.0)) return 0.0;
    x = y / ny;
    if (it > 0 && std::abs(next - rho) <= 1e-13 * std::abs(next)) {
      rho = next;
      break;
    }
    rho = next;
  }
  return std::sqrt(std::max(rho, 0.0));
}

namespace {

struct PowerResult {
  double lambda = 0.0;
  Vector x;
  int iterations = 0;
  bool converged = false;
};

PowerResult power_iterate(const Matrix& a, double tol, int max_iter) {
  const auto d = a.rows();
  PowerResult r;
  r.x = Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  for (int it = 1; it <= max_iter; ++it) {
    Vector y = a * r.x;
    const double ny = y.norm();
    if (!(ny > 0.0)) throw Error(ErrorCode::ZeroImage, "power iteration hit a zero image");
    const double residual = (y - ny * r.x).norm();
    r.lambda = ny;
    r.iterations = it;
    if (residual <= tol * ny) {
      r.converged = true;
      return r;
    }
    r.x = y / ny;
  }
  return r;
}

// Growth rate of a - lambda v w^T, i.e. |lambda_2|, from a generic start.
double deflated_ratio(const Matrix& a, double lambda, const Vector& v, const Vector& w) {
  const auto d = a.rows();
  if (d == 1) return 0.0;
  const Matrix b = a - lambda * v * w.transpose();
  Vector z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.31 * static_cast<double>(i));
  z.normalize();
  const int steps = 400;
  const int keep = 150;
  double log_sum = 0.0;
  for (int k = 0; k < steps; ++k) {
    Vector y = b * z;
    const double ny = y.norm();
    if (!(ny > 1e-300 * lambda)) return 0.0;
    if (k >= steps - keep) log_sum += std::log(ny);
    z = y / ny;
  }
  return std::exp(log_sum / keep) / lambda;
}

}  // namespace

PerronData perron(const PositiveMatrix& a, double tol, PerronMode mode, int max_iter) {
  if (mode == PerronMode::Strict && !a.strictly_positive())
    throw Error(ErrorCode::InvalidArgument, "strict Perron mode requires a strictly positive matrix");
  const Matrix& m = a.matrix();
  PowerResult right = power_iterate(m, tol, max_iter);
  PowerResult left = power_iterate(m.transpose(), tol, max_iter);

  PerronData out;
  out.lambda = right.lambda;
  out.iterations = right.iterations + left.iterations;
  Vector w = left.x / left.x.norm();
  const double vw = right.x.dot(w);
  if (!(vw > 1e-12)) throw Error(ErrorCode::NotProximal, "left and right Perron vectors are orthogonal");
  Vector v = right.x / vw;

  const double ratio = deflated_ratio(m, out.lambda, v, w);
  if (ratio > kProximalRatioLimit) throw Error(ErrorCode::NotProximal, "leading eigenvalue moduli coincide");
  if (!right.converged || !left.converged)
    throw Error(ErrorCode::NonConvergence, "power iteration did not converge in " + std::to_string(max_iter) + " steps");
  out.v = v;
  out.w = w;
  out.spectral_gap = ratio;
  return out;
}

ProximalTrace proximal_limit_check(const PositiveMatrix& a, const Vector& x, int n_max, double tol) {
  const PerronData pd = perron(a);
  const Vector vbar = pd.v / pd.v.norm();
  ProximalTrace t;
  t.spectral_gap = pd.spectral_gap;
  Vector cur = x / x.norm();
  for (int n = 1; n <= n_max; ++n) {
    cur = projective_action(a, cur);
    t.distances.push_back((cur - vbar).norm());
  }
  std::vector<double> ns, logs;
  for (std::size_t i = 0; i < t.distances.size(); ++i) {
    if (t.distances[i] > 1e-13) {
      ns.push_back(static_cast<double>(i + 1));
      logs.push_back(std::log(t.distances[i]));
    }
  }
  if (ns.size() >= 2) t.fitted_ratio = std::exp(linear_fit(ns, logs).slope);
  const double last = t.distances.empty() ? 0.0 : t.distances.back();
  t.converged = last <= tol;
  t.stalled = !t.converged && t.fitted_ratio > 0.999;
  return t;
}

}  // namespace kesten
