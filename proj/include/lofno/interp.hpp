#pragma once

#include <Eigen/Dense>
#include <iostream>

#include "lofno/wss.hpp"

namespace lofno {

struct InterpResult {
  FlowField field;
  bool time_clamped = false;  // target times beyond the input range were clamped
};

namespace detail {

/// Trilinear sample without border clamping of the fractional part, so
/// affine fields are reproduced exactly (linear extrapolation at borders).
inline double sample_frame(const double* frame, const VoxelGrid& g, const Vec3& p) {
  double fx = (p[0] - g.origin[0]) / g.spacing[0] - 0.5;
  double fy = (p[1] - g.origin[1]) / g.spacing[1] - 0.5;
  double fz = (p[2] - g.origin[2]) / g.spacing[2] - 0.5;
  auto cell = [](double f, int64_t n) {
    return std::clamp<int64_t>(int64_t(std::floor(f)), 0, n - 2);
  };
  int64_t i0 = cell(fx, g.dims[0]), j0 = cell(fy, g.dims[1]), k0 = cell(fz, g.dims[2]);
  double tx = fx - double(i0), ty = fy - double(j0), tz = fz - double(k0);
  double acc = 0;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < 2; ++dk) {
        double w = (di ? tx : 1 - tx) * (dj ? ty : 1 - ty) * (dk ? tz : 1 - tz);
        acc += w * frame[g.index(i0 + di, j0 + dj, k0 + dk)];
      }
  return acc;
}

}  // namespace detail

/// Separable trilinear interpolation in space, piecewise linear in time;
/// exact at input sample locations. Target times beyond the last input
/// timestep are clamped and flagged.
inline InterpResult linear_upsample(const FlowField& input, const VoxelGrid& target_grid,
                                    const std::vector<double>& target_times) {
  const int64_t Tin = input.T(), Tout = int64_t(target_times.size());
  const int64_t n_in = input.grid.nvox(), n_out = target_grid.nvox();
  InterpResult res;
  res.field.grid = target_grid;
  res.field.times = target_times;
  res.field.velocity =
      Tensor({3, Tout, target_grid.dims[0], target_grid.dims[1], target_grid.dims[2]});

  std::vector<double> frame(size_t(n_in), 0.0);
  for (int64_t t = 0; t < Tout; ++t) {
    double tt = target_times[size_t(t)];
    // bracketing input frames
    int64_t lo = 0;
    while (lo + 1 < Tin && input.times[size_t(lo + 1)] <= tt) ++lo;
    int64_t hi = std::min(lo + 1, Tin - 1);
    double w = 0;
    if (hi > lo) {
      double t0 = input.times[size_t(lo)], t1 = input.times[size_t(hi)];
      w = std::clamp((tt - t0) / (t1 - t0), 0.0, 1.0);
    }
    if (tt > input.times.back() + 1e-12 || tt < input.times.front() - 1e-12)
      res.time_clamped = true;
    for (int c = 0; c < 3; ++c) {
      const double* f0 = input.velocity.v.data() + (int64_t(c) * Tin + lo) * n_in;
      const double* f1 = input.velocity.v.data() + (int64_t(c) * Tin + hi) * n_in;
      for (int64_t p = 0; p < n_in; ++p) frame[size_t(p)] = (1 - w) * f0[p] + w * f1[p];
      double* out = res.field.velocity.v.data() + (int64_t(c) * Tout + t) * n_out;
      for (int64_t i = 0; i < target_grid.dims[0]; ++i)
        for (int64_t j = 0; j < target_grid.dims[1]; ++j)
          for (int64_t k = 0; k < target_grid.dims[2]; ++k)
            out[target_grid.index(i, j, k)] =
                detail::sample_frame(frame.data(), input.grid, target_grid.center(i, j, k));
    }
  }
  return res;
}

struct RbfSpec {
  int64_t max_points = 20000;  // dense-solve cap; farthest-point subsample above it
};

/// Thin-plate-spline scattered interpolation of each timestep and velocity
/// component from chi=1 input voxel centers onto chi=1 target voxels;
/// exterior stays 0. First-order polynomial tail, centered for
/// conditioning; rank-deficient systems resolve to the minimum-norm
/// solution (a single data point yields the constant field).
inline FlowField rbf_upsample(const FlowField& input, const ChiField& chi_in,
                              const VoxelGrid& target_grid, const ChiField& chi_out,
                              const RbfSpec& spec = {}) {
  const auto& g = input.grid;
  std::vector<int64_t> pts;
  for (int64_t p = 0; p < g.nvox(); ++p)
    if (chi_in.values[size_t(p)]) pts.push_back(p);
  if (pts.empty()) throw std::runtime_error("rbf_upsample: no interior input points");

  auto center_of = [&](int64_t flat) {
    int64_t k = flat % g.dims[2];
    int64_t j = (flat / g.dims[2]) % g.dims[1];
    int64_t i = flat / (g.dims[2] * g.dims[1]);
    return g.center(i, j, k);
  };

  // farthest-point subsample above the dense-solve cap
  if (int64_t(pts.size()) > spec.max_points) {
    std::vector<int64_t> keep{pts[0]};
    std::vector<double> dist(pts.size(), 1e300);
    while (int64_t(keep.size()) < spec.max_points) {
      Vec3 last = center_of(keep.back());
      int64_t best = -1;
      double bd = -1;
      for (size_t i = 0; i < pts.size(); ++i) {
        Vec3 d = center_of(pts[i]) - last;
        dist[i] = std::min(dist[i], dot(d, d));
        if (dist[i] > bd) {
          bd = dist[i];
          best = int64_t(i);
        }
      }
      keep.push_back(pts[size_t(best)]);
    }
    pts = keep;
  }

  const int64_t m = int64_t(pts.size());
  std::vector<Vec3> xs(size_t(m), Vec3{0, 0, 0});
  Vec3 centroid{0, 0, 0};
  for (int64_t i = 0; i < m; ++i) {
    xs[size_t(i)] = center_of(pts[size_t(i)]);
    centroid = centroid + (1.0 / double(m)) * xs[size_t(i)];
  }

  auto phi = [](double r) { return r > 0 ? r * r * std::log(r) : 0.0; };

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 4, m + 4);
  double trace_k = 0;
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < m; ++j) {
      double k = phi(norm(xs[size_t(i)] - xs[size_t(j)]));
      A(i, j) = k;
      if (i == j) trace_k += k;
    }
    Vec3 d = xs[size_t(i)] - centroid;
    A(i, m) = A(m, i) = 1.0;
    for (int a = 0; a < 3; ++a) A(i, m + 1 + a) = A(m + 1 + a, i) = d[a];
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> solver(A);
  bool regularized = false;
  if (solver.rank() < m + 4) {
    // singular interpolation matrix: Tikhonov-regularize the kernel block
    double lam = 1e-10 * std::max(trace_k, 1.0);
    for (int64_t i = 0; i < m; ++i) A(i, i) += lam;
    solver.compute(A);
    regularized = true;
    std::cerr << "rbf_upsample: singular interpolation matrix, regularized (lambda=" << lam
              << ")\n";
  }
  (void)regularized;

  std::vector<int64_t> targets;
  for (int64_t p = 0; p < target_grid.nvox(); ++p)
    if (chi_out.values[size_t(p)]) targets.push_back(p);

  const int64_t Tn = input.T(), n_in = g.nvox(), n_out = target_grid.nvox();
  FlowField out;
  out.grid = target_grid;
  out.times = input.times;
  out.velocity = Tensor({3, Tn, target_grid.dims[0], target_grid.dims[1], target_grid.dims[2]});

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 4);
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < Tn; ++t) {
      const double* frame = input.velocity.v.data() + (int64_t(c) * Tn + t) * n_in;
      for (int64_t i = 0; i < m; ++i) rhs[i] = frame[pts[size_t(i)]];
      Eigen::VectorXd sol = solver.solve(rhs);
      double* dst = out.velocity.v.data() + (int64_t(c) * Tn + t) * n_out;
      for (int64_t tp : targets) {
        int64_t k = tp % target_grid.dims[2];
        int64_t j = (tp / target_grid.dims[2]) % target_grid.dims[1];
        int64_t i = tp / (target_grid.dims[2] * target_grid.dims[1]);
        Vec3 p = target_grid.center(i, j, k);
        double val = sol[m] + sol[m + 1] * (p[0] - centroid[0]) + sol[m + 2] * (p[1] - centroid[1]) +
                     sol[m + 3] * (p[2] - centroid[2]);
        for (int64_t q = 0; q < m; ++q) val += sol[q] * phi(norm(p - xs[size_t(q)]));
        dst[tp] = val;
      }
    }
  return out;
}

}  // namespace lofno
