#include "kesten/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kesten/errors.hpp"

namespace kesten {

namespace {

double radical_inverse(std::uint64_t n, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (n > 0) {
    r += f * static_cast<double>(n % base);
    n /= base;
    f *= inv;
  }
  return r;
}

constexpr std::uint64_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

// Solid angle of the spherical triangle with unit vertices a, b, c.
double spherical_area(const Vector& a, const Vector& b, const Vector& c) {
  const Eigen::Vector3d a3 = a.head<3>(), b3 = b.head<3>(), c3 = c.head<3>();
  const double num = std::abs(a3.dot(b3.cross(c3)));
  const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
  return 2.0 * std::atan2(num, den);
}

}  // namespace

double SphereGrid::surface_measure() const {
  const double d = static_cast<double>(dim_);
  return 2.0 * std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0) / std::pow(2.0, d);
}

SphereGrid SphereGrid::build(int dim, int resolution) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "grid dimension must be positive");
  SphereGrid g;
  g.dim_ = dim;
  if (dim == 1) {
    g.resolution_ = 1;
    g.nodes_ = Matrix::Ones(1, 1);
    g.weights_ = {1.0};
    return g;
  }
  if (resolution < 1) throw Error(ErrorCode::InvalidArgument, "grid resolution must be positive");
  g.resolution_ = resolution;
  const int K = resolution;
  if (dim == 2) {
    g.nodes_.resize(2, K);
    const double h = std::numbers::pi / (2.0 * K);
    for (int k = 0; k < K; ++k) {
      const double th = (k + 0.5) * h;
      g.nodes_(0, k) = std::cos(th);
      g.nodes_(1, k) = std::sin(th);
    }
    g.weights_.assign(K, h);
    return g;
  }
  if (dim == 3) {
    const std::size_t n = static_cast<std::size_t>(K + 1) * static_cast<std::size_t>(K + 2) / 2;
    g.nodes_.resize(3, static_cast<Eigen::Index>(n));
    g.row_offset_.resize(K + 1);
    std::size_t idx = 0;
    for (int i = 0; i <= K; ++i) {
      g.row_offset_[i] = idx;
      for (int j = 0; j <= K - i; ++j) {
        Vector p(3);
        p << i, j, K - i - j;
        g.nodes_.col(static_cast<Eigen::Index>(idx++)) = p / p.norm();
      }
    }
    g.weights_.assign(n, 0.0);
    auto add = [&](std::size_t a, std::size_t b, std::size_t c) {
      const double area = spherical_area(g.node(a), g.node(b), g.node(c)) / 3.0;
      g.weights_[a] += area;
      g.weights_[b] += area;
      g.weights_[c] += area;
    };
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K - i; ++j) {
        add(g.lattice_index(i, j), g.lattice_index(i + 1, j), g.lattice_index(i, j + 1));
        if (i + j + 2 <= K) add(g.lattice_index(i + 1, j + 1), g.lattice_index(i, j + 1), g.lattice_index(i + 1, j));
      }
    return g;
  }
  if (dim > 17) throw Error(ErrorCode::InvalidArgument, "grid supports dim <= 17");
  g.nodes_.resize(dim, K);
  std::vector<double> u(dim - 1);
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < dim - 1; ++c) u[c] = radical_inverse(static_cast<std::uint64_t>(k) + 1, kPrimes[c]);
    std::sort(u.begin(), u.end());
    Vector p(dim);
    double prev = 0.0;
    for (int c = 0; c < dim - 1; ++c) {
      p(c) = u[c] - prev;
      prev = u[c];
    }
    p(dim - 1) = 1.0 - prev;
    g.nodes_.col(k) = p / p.norm();
  }
  g.weights_.assign(K, g.surface_measure() / K);
  return g;
}

std::size_t SphereGrid::nearest(const Vector& x) const {
  const Vector y = x / x.norm();
  Eigen::Index best = 0;
  (nodes_.transpose() * y).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

SphereGrid::Stencil SphereGrid::locate(const Vector& x) const {
  Stencil st;
  if (dim_ == 1) {
    st.count = 1;
    st.index[0] = 0;
    st.weight[0] = 1.0;
    return st;
  }
  if (dim_ == 2) {
    const int K = resolution_;
    const double th = std::atan2(x(1), x(0));
    const double f = th / (std::numbers::pi / (2.0 * K)) - 0.5;
    if (f <= 0.0) {
      st.count = 1;
      st.index[0] = 0;
      st.weight[0] = 1.0;
      return st;
    }
    if (f >= K - 1) {
      st.count = 1;
      st.index[0] = static_cast<std::uint32_t>(K - 1);
      st.weight[0] = 1.0;
      return st;
    }
    const int k0 = static_cast<int>(std::floor(f));
    const double t = f - k0;
    st.count = 2;
    st.index = {static_cast<std::uint32_t>(k0), static_cast<std::uint32_t>(k0 + 1), 0};
    st.weight = {1.0 - t, t, 0.0};
    return st;
  }
  if (dim_ == 3) {
    const int K = resolution_;
    const double l1 = x(0) + x(1) + x(2);
    const double f1 = K * x(0) / l1;
    const double f2 = K * x(1) / l1;
    int i0 = std::clamp(static_cast<int>(std::floor(f1)), 0, K);
    int j0 = std::clamp(static_cast<int>(std::floor(f2)), 0, K - i0);
    double a = std::clamp(f1 - i0, 0.0, 1.0);
    double b = std::clamp(f2 - j0, 0.0, 1.0);
    if (i0 + j0 >= K) {
      st.count = 1;
      st.index[0] = static_cast<std::uint32_t>(lattice_index(i0, K - i0));
      st.weight[0] = 1.0;
      return st;
    }
    st.count = 3;
    if (a + b <= 1.0 || i0 + j0 + 2 > K) {
      if (a + b > 1.0) {
        const double sc = 1.0 / (a + b);
        a *= sc;
        b *= sc;
      }
      st.index = {static_cast<std::uint32_t>(lattice_index(i0, j0)), static_cast<std::uint32_t>(lattice_index(i0 + 1, j0)),
                  static_cast<std::uint32_t>(lattice_index(i0, j0 + 1))};
      st.weight = {std::max(0.0, 1.0 - a - b), a, b};
    } else {
      st.index = {static_cast<std::uint32_t>(lattice_index(i0 + 1, j0 + 1)),
                  static_cast<std::uint32_t>(lattice_index(i0, j0 + 1)),
                  static_cast<std::uint32_t>(lattice_index(i0 + 1, j0))};
      st.weight = {a + b - 1.0, 1.0 - a, 1.0 - b};
    }
    return st;
  }
  st.count = 1;
  st.index[0] = static_cast<std::uint32_t>(nearest(x));
  st.weight[0] = 1.0;
  return st;
}

}  // namespace kesten
