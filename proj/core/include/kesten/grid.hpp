#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "kesten/cone.hpp"

namespace kesten {

// Discretization of the positive part of the unit sphere.
//   d = 1: the single point 1.
//   d = 2: angles (k + 1/2) pi / (2K), linear interpolation in angle.
//   d = 3: K-fold subdivision of the octant simplex, barycentric interpolation.
//   d >= 4: K low-discrepancy points, nearest-node interpolation (coarse).
class SphereGrid {
 public:
  struct Stencil {
    std::array<std::uint32_t, 3> index{};
    std::array<double, 3> weight{};
    int count = 0;
  };

  static SphereGrid build(int dim, int resolution);

  int dim() const { return dim_; }
  int resolution() const { return resolution_; }
  std::size_t size() const { return static_cast<std::size_t>(nodes_.cols()); }
  Vector node(std::size_t i) const { return nodes_.col(static_cast<Eigen::Index>(i)); }
  const Matrix& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  double surface_measure() const;

  // Nonnegative weights summing to 1 that represent the point x/|x|.
  Stencil locate(const Vector& x) const;
  std::size_t nearest(const Vector& x) const;

 private:
  int dim_ = 0;
  int resolution_ = 0;
  Matrix nodes_;
  std::vector<double> weights_;
  std::vector<std::size_t> row_offset_;  // d = 3 lattice rows
  std::size_t lattice_index(int i, int j) const { return row_offset_[i] + static_cast<std::size_t>(j); }
};

}  // namespace kesten
