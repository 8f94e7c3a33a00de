#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <queue>

#include "lofno/grid.hpp"

namespace lofno {

/// Parameters for a synthetic vessel: a cubic centerline, a smoothly
/// varying radius profile, and an optional aneurysm-like bulge blended
/// into the tube wall.
struct BulgeSpec {
  double position = 0.5;   // arclength fraction along the centerline
  double radius = 0.15;    // bulge sphere radius (grid units)
  double offset = 0.8;     // offset of the bulge center, in tube radii
};

struct VesselSpec {
  std::array<Vec3, 4> control_points{Vec3{0.15, 0.5, 0.5}, Vec3{0.4, 0.5, 0.5},
                                     Vec3{0.6, 0.5, 0.5}, Vec3{0.85, 0.5, 0.5}};
  double base_radius = 0.12;
  double radius_variation = 0.0;   // relative sinusoidal variation of the radius
  double radius_freq = 1.0;
  double bend_jitter = 0.0;        // seed-driven perturbation of the inner control points
  double radius_jitter = 0.0;      // seed-driven relative perturbation of base_radius
  std::optional<BulgeSpec> bulge;
};

struct NormalField {
  VoxelGrid grid;
  // boundary voxel flat index -> outward unit normal
  std::vector<std::pair<int64_t, Vec3>> normals;
};

namespace detail {
inline double smin(double a, double b, double k) {
  // polynomial smooth minimum, blend width k
  if (k <= 0) return std::min(a, b);
  double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b + h * (a - b) - k * h * (1.0 - h);
}
}  // namespace detail

/// Analytic signed-distance description of a vessel. The centerline is a
/// cubic Bezier sampled into a dense polyline; the tube is the union of
/// capsules around the polyline (round caps close the ends), with the
/// bulge sphere blended in by a smooth minimum.
class VesselGeometry {
 public:
  VesselGeometry(const VesselSpec& spec, int polyline_segments = 256) : spec_(spec) {
    const auto& cp = spec.control_points;
    points_.resize(polyline_segments + 1);
    for (int i = 0; i <= polyline_segments; ++i) {
      double t = double(i) / polyline_segments;
      double u = 1.0 - t;
      points_[i] = (u * u * u) * cp[0] + (3 * u * u * t) * cp[1] + (3 * u * t * t) * cp[2] +
                   (t * t * t) * cp[3];
    }
    arclen_.resize(points_.size());
    arclen_[0] = 0;
    for (size_t i = 1; i < points_.size(); ++i)
      arclen_[i] = arclen_[i - 1] + norm(points_[i] - points_[i - 1]);
    length_ = arclen_.back();
    if (length_ <= 1e-9) throw std::invalid_argument("vessel: degenerate zero-length centerline");
    for (size_t i = 0; i < points_.size(); ++i) {
      double r = radius_at(arclen_[i]);
      if (!(r > 0)) throw std::invalid_argument("vessel: radius profile must stay positive");
    }
    if (spec.bulge) {
      if (!(spec.bulge->radius < length_ / 2))
        throw std::invalid_argument("vessel: bulge radius must be < tube length/2");
      double s = std::clamp(spec.bulge->position, 0.0, 1.0) * length_;
      Vec3 c = point_at(s);
      Vec3 t = tangent_at(s);
      // offset direction: any unit vector normal to the tangent, deterministic
      Vec3 ref = std::abs(t[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
      Vec3 n = normalized(cross(t, ref));
      bulge_center_ = c + (spec.bulge->offset * radius_at(s)) * n;
      bulge_radius_ = spec.bulge->radius;
    }
  }

  double radius_at(double s) const {
    double r = spec_.base_radius;
    if (spec_.radius_variation != 0)
      r *= 1.0 + spec_.radius_variation *
                     std::sin(2.0 * M_PI * spec_.radius_freq * s / std::max(length_, 1e-12));
    return r;
  }

  double length() const { return length_; }
  const VesselSpec& spec() const { return spec_; }

  Vec3 point_at(double s) const {
    size_t i = seg_of(s);
    double t = (s - arclen_[i]) / std::max(arclen_[i + 1] - arclen_[i], 1e-30);
    return points_[i] + t * (points_[i + 1] - points_[i]);
  }

  Vec3 tangent_at(double s) const {
    size_t i = seg_of(s);
    return normalized(points_[i + 1] - points_[i]);
  }

  /// Closest point on the centerline polyline: arclength s and radial distance.
  void closest(const Vec3& p, double& s_out, double& rho_out) const {
    double best = 1e300, bs = 0;
    for (size_t i = 0; i + 1 < points_.size(); ++i) {
      Vec3 d = points_[i + 1] - points_[i];
      double L2 = dot(d, d);
      double t = L2 > 0 ? std::clamp(dot(p - points_[i], d) / L2, 0.0, 1.0) : 0.0;
      Vec3 q = points_[i] + t * d;
      double dist = norm(p - q);
      if (dist < best) {
        best = dist;
        bs = arclen_[i] + t * (arclen_[i + 1] - arclen_[i]);
      }
    }
    s_out = bs;
    rho_out = best;
  }

  /// Signed distance, negative inside the vessel.
  double sdf(const Vec3& p) const {
    double s, rho;
    closest(p, s, rho);
    double d = rho - radius_at(s);
    if (bulge_radius_ > 0) {
      double db = norm(p - bulge_center_) - bulge_radius_;
      d = detail::smin(d, db, bulge_radius_ / 4.0);
    }
    return d;
  }

  Vec3 sdf_gradient(const Vec3& p, double h = 1e-4) const {
    Vec3 g;
    for (int a = 0; a < 3; ++a) {
      Vec3 pp = p, pm = p;
      pp[a] += h;
      pm[a] -= h;
      g[a] = (sdf(pp) - sdf(pm)) / (2 * h);
    }
    return g;
  }

  /// Axis-aligned bounding box of the tube plus bulge, with margin.
  void bounding_box(Vec3& lo, Vec3& hi, double margin = 0.05) const {
    lo = {1e300, 1e300, 1e300};
    hi = {-1e300, -1e300, -1e300};
    for (size_t i = 0; i < points_.size(); ++i) {
      double r = radius_at(arclen_[i]);
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], points_[i][a] - r);
        hi[a] = std::max(hi[a], points_[i][a] + r);
      }
    }
    if (bulge_radius_ > 0)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], bulge_center_[a] - bulge_radius_);
        hi[a] = std::max(hi[a], bulge_center_[a] + bulge_radius_);
      }
    for (int a = 0; a < 3; ++a) {
      lo[a] -= margin;
      hi[a] += margin;
    }
  }

  bool has_bulge() const { return bulge_radius_ > 0; }
  Vec3 bulge_center() const { return bulge_center_; }
  double bulge_radius() const { return bulge_radius_; }

 private:
  size_t seg_of(double s) const {
    s = std::clamp(s, 0.0, length_);
    size_t i = size_t(std::upper_bound(arclen_.begin(), arclen_.end(), s) - arclen_.begin());
    if (i > 0) --i;
    return std::min(i, points_.size() - 2);
  }

  VesselSpec spec_;
  std::vector<Vec3> points_;
  std::vector<double> arclen_;
  double length_ = 0;
  Vec3 bulge_center_{0, 0, 0};
  double bulge_radius_ = 0;
};

inline ChiField sample_chi(const VesselGeometry& geom, const VoxelGrid& grid) {
  ChiField chi(grid);
  int64_t n = 0;
  for (int64_t i = 0; i < grid.dims[0]; ++i)
    for (int64_t j = 0; j < grid.dims[1]; ++j)
      for (int64_t k = 0; k < grid.dims[2]; ++k) {
        bool inside = geom.sdf(grid.center(i, j, k)) < 0;
        chi.values[size_t(grid.index(i, j, k))] = inside ? 1 : 0;
        n += inside;
      }
  if (n == 0) throw std::runtime_error("sample_chi: empty domain");
  return chi;
}

namespace detail {
/// Number of 6-connected components among chi=1 voxels.
inline int chi_components(const ChiField& chi) {
  const auto& g = chi.grid;
  std::vector<uint8_t> seen(chi.values.size(), 0);
  int comps = 0;
  for (int64_t start = 0; start < g.nvox(); ++start) {
    if (!chi.values[size_t(start)] || seen[size_t(start)]) continue;
    ++comps;
    std::queue<int64_t> q;
    q.push(start);
    seen[size_t(start)] = 1;
    while (!q.empty()) {
      int64_t idx = q.front();
      q.pop();
      int64_t k = idx % g.dims[2];
      int64_t j = (idx / g.dims[2]) % g.dims[1];
      int64_t i = idx / (g.dims[2] * g.dims[1]);
      const int64_t di[6] = {1, -1, 0, 0, 0, 0};
      const int64_t dj[6] = {0, 0, 1, -1, 0, 0};
      const int64_t dk[6] = {0, 0, 0, 0, 1, -1};
      for (int d = 0; d < 6; ++d) {
        int64_t ii = i + di[d], jj = j + dj[d], kk = k + dk[d];
        if (ii < 0 || jj < 0 || kk < 0 || ii >= g.dims[0] || jj >= g.dims[1] || kk >= g.dims[2])
          continue;
        int64_t nidx = g.index(ii, jj, kk);
        if (chi.values[size_t(nidx)] && !seen[size_t(nidx)]) {
          seen[size_t(nidx)] = 1;
          q.push(nidx);
        }
      }
    }
  }
  return comps;
}
}  // namespace detail

/// Deterministic synthetic vessel. The seed jitters the inner control
/// points and the base radius within the amounts allowed by the spec.
/// Specs whose interior is empty or disconnected at the coarsest (8^3)
/// grid are rejected.
inline VesselGeometry generate_vessel(const VesselSpec& spec, uint64_t seed) {
  VesselSpec s = spec;
  auto rng = make_rng(seed, /*stream=*/11);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int i = 1; i <= 2; ++i)
    for (int a = 0; a < 3; ++a) s.control_points[i][a] += spec.bend_jitter * ud(rng);
  s.base_radius *= 1.0 + spec.radius_jitter * ud(rng);
  VesselGeometry geom(s);
  Vec3 lo, hi;
  geom.bounding_box(lo, hi);
  double ext = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  VoxelGrid coarse({8, 8, 8}, {ext / 8, ext / 8, ext / 8}, lo);
  ChiField chi = sample_chi(geom, coarse);  // throws on empty interior
  int comps = detail::chi_components(chi);
  if (comps != 1)
    throw std::runtime_error("generate_vessel: interior disconnected at 8^3 grid (" +
                             std::to_string(comps) + " components)");
  return geom;
}

/// Outward unit normals on boundary voxels (chi=1 voxels with a
/// 6-neighbor chi=0 voxel or at the grid edge), from the central-difference
/// SDF gradient at the voxel center.
inline NormalField boundary_normals(const VesselGeometry& geom, const ChiField& chi) {
  const auto& g = chi.grid;
  NormalField nf;
  nf.grid = g;
  for (int64_t i = 0; i < g.dims[0]; ++i)
    for (int64_t j = 0; j < g.dims[1]; ++j)
      for (int64_t k = 0; k < g.dims[2]; ++k) {
        int64_t idx = g.index(i, j, k);
        if (!chi.values[size_t(idx)]) continue;
        bool boundary = false;
        const int64_t di[6] = {1, -1, 0, 0, 0, 0};
        const int64_t dj[6] = {0, 0, 1, -1, 0, 0};
        const int64_t dk[6] = {0, 0, 0, 0, 1, -1};
        for (int d = 0; d < 6 && !boundary; ++d) {
          int64_t ii = i + di[d], jj = j + dj[d], kk = k + dk[d];
          if (ii < 0 || jj < 0 || kk < 0 || ii >= g.dims[0] || jj >= g.dims[1] ||
              kk >= g.dims[2] || !chi.values[size_t(g.index(ii, jj, kk))])
            boundary = true;
        }
        if (!boundary) continue;
        Vec3 p = g.center(i, j, k);
        Vec3 n = normalized(geom.sdf_gradient(p, 0.5 * std::min({g.spacing[0], g.spacing[1], g.spacing[2]})));
        if (norm(n) == 0) n = {1, 0, 0};
        nf.normals.emplace_back(idx, n);
      }
  if (nf.normals.empty()) throw std::runtime_error("boundary_normals: no boundary voxels");
  return nf;
}

}  // namespace lofno
