#pragma once

#include <array>
#include <stdexcept>

#include "lofno/tensor.hpp"

namespace lofno {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  return n > 0 ? (1.0 / n) * a : Vec3{0, 0, 0};
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Cartesian sampling lattice. Voxel centers sit at origin + (i+1/2)*spacing.
struct VoxelGrid {
  std::array<int64_t, 3> dims{2, 2, 2};
  Vec3 spacing{1, 1, 1};
  Vec3 origin{0, 0, 0};

  VoxelGrid() = default;
  VoxelGrid(std::array<int64_t, 3> d, Vec3 sp, Vec3 o) : dims(d), spacing(sp), origin(o) {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 2) throw std::invalid_argument("VoxelGrid: dims must be >= 2");
      if (!(spacing[a] > 0)) throw std::invalid_argument("VoxelGrid: spacing must be > 0");
    }
  }

  /// Cube grid over [lo, lo+extent]^3 with n voxels per axis.
  static VoxelGrid cube(int64_t n, double extent = 1.0, Vec3 lo = {0, 0, 0}) {
    double h = extent / double(n);
    return VoxelGrid({n, n, n}, {h, h, h}, lo);
  }

  int64_t nvox() const { return dims[0] * dims[1] * dims[2]; }

  Vec3 center(int64_t i, int64_t j, int64_t k) const {
    return {origin[0] + (double(i) + 0.5) * spacing[0],
            origin[1] + (double(j) + 0.5) * spacing[1],
            origin[2] + (double(k) + 0.5) * spacing[2]};
  }

  int64_t index(int64_t i, int64_t j, int64_t k) const {
    return (i * dims[1] + j) * dims[2] + k;
  }

  bool operator==(const VoxelGrid& o) const {
    return dims == o.dims && spacing == o.spacing && origin == o.origin;
  }
};

/// Binary characteristic function of the fluid domain on a grid.
struct ChiField {
  VoxelGrid grid;
  std::vector<uint8_t> values;  // exactly 0 or 1, one per voxel

  ChiField() = default;
  explicit ChiField(const VoxelGrid& g) : grid(g), values(size_t(g.nvox()), 0) {}

  int64_t count() const {
    int64_t c = 0;
    for (uint8_t b : values) c += b;
    return c;
  }

  /// values as a [X,Y,Z] tensor of 0/1 doubles.
  Tensor as_tensor() const {
    Tensor t({grid.dims[0], grid.dims[1], grid.dims[2]});
    for (size_t i = 0; i < values.size(); ++i) t.v[i] = values[i];
    return t;
  }
};

}  // namespace lofno
