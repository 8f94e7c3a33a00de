#pragma once

#include <limits>

#include "lofno/spectral.hpp"

namespace lofno {

/// Time-resolved vector field on a voxel grid. velocity is [3, T, X, Y, Z];
/// channels are u,v,w along x,y,z.
struct FlowField {
  VoxelGrid grid;
  std::vector<double> times;
  Tensor velocity;

  int64_t T() const { return int64_t(times.size()); }
};

/// Inlet pulse family: s(t) = 1 + sum_j w_j sin(2 pi (j+1) t / period + phi_j),
/// with per-sample phase jitter. The waveform scales the Poiseuille peak.
struct PulseSpec {
  double period = 1.0;      // seconds
  double amplitude = 1.0;   // peak speed, m/s
  std::vector<double> harmonic_weights{0.45, 0.1};
  double phase_jitter = 0.3;
  uint64_t seed = 0;

  double waveform(double t, const std::vector<double>& phases) const {
    double s = 1.0;
    for (size_t j = 0; j < harmonic_weights.size(); ++j)
      s += harmonic_weights[j] * std::sin(2.0 * M_PI * double(j + 1) * t / period +
                                          (j < phases.size() ? phases[j] : 0.0));
    return s;
  }

  std::vector<double> draw_phases() const {
    auto rng = make_rng(seed, /*stream=*/31);
    std::uniform_real_distribution<double> ud(-phase_jitter, phase_jitter);
    std::vector<double> ph(harmonic_weights.size());
    for (double& p : ph) p = ud(rng);
    return ph;
  }
};

/// Quasi-steady pulsatile Poiseuille flow along the centerline:
/// u(x,t) = amplitude * s(t) * (1 - (rho/R)^2)_+ * tangent, zero outside the
/// vessel and inside the bulge beyond the tube radius. Divergence-free on
/// straight segments, exact no-slip, closed-form wall shear on straight
/// tubes (2 mu U / R).
inline FlowField analytic_flow(const VesselGeometry& geom, const PulseSpec& pulse,
                               const VoxelGrid& grid, int64_t T) {
  if (T < 1) throw std::invalid_argument("analytic_flow: T must be >= 1");
  FlowField f;
  f.grid = grid;
  f.times.resize(size_t(T));
  for (int64_t t = 0; t < T; ++t) f.times[size_t(t)] = pulse.period * double(t) / double(T);
  f.velocity = Tensor({3, T, grid.dims[0], grid.dims[1], grid.dims[2]});
  const int64_t n = grid.nvox();
  auto phases = pulse.draw_phases();

  // spatial profile is time-independent; compute once
  std::vector<double> qx(size_t(n), 0), qy(size_t(n), 0), qz(size_t(n), 0);
  for (int64_t i = 0; i < grid.dims[0]; ++i)
    for (int64_t j = 0; j < grid.dims[1]; ++j)
      for (int64_t k = 0; k < grid.dims[2]; ++k) {
        Vec3 p = grid.center(i, j, k);
        if (geom.sdf(p) >= 0) continue;
        double s, rho;
        geom.closest(p, s, rho);
        double R = geom.radius_at(s);
        double prof = 1.0 - (rho / R) * (rho / R);
        if (prof <= 0) continue;
        Vec3 u = (pulse.amplitude * prof) * geom.tangent_at(s);
        int64_t idx = grid.index(i, j, k);
        qx[size_t(idx)] = u[0];
        qy[size_t(idx)] = u[1];
        qz[size_t(idx)] = u[2];
      }

  for (int64_t t = 0; t < T; ++t) {
    double st = pulse.waveform(f.times[size_t(t)], phases);
    double* u = f.velocity.v.data() + (0 * T + t) * n;
    double* v = f.velocity.v.data() + (1 * T + t) * n;
    double* w = f.velocity.v.data() + (2 * T + t) * n;
    for (int64_t p = 0; p < n; ++p) {
      u[p] = st * qx[size_t(p)];
      v[p] = st * qy[size_t(p)];
      w[p] = st * qz[size_t(p)];
    }
  }
  return f;
}

constexpr double kSnrDisabled = std::numeric_limits<double>::infinity();

/// Add i.i.d. Gaussian noise at chi=1 voxels. Per-component variance is
/// signal_power / (3 snr) with signal_power the mean squared velocity
/// magnitude over interior voxel-times, so the power ratio is snr.
inline FlowField add_noise(const FlowField& flow, const ChiField& chi, double snr, uint64_t seed) {
  if (!(snr > 0)) throw std::invalid_argument("add_noise: snr must be > 0");
  if (std::isinf(snr)) return flow;
  const int64_t n = flow.grid.nvox(), T = flow.T();
  if (chi.grid.nvox() != n) throw std::invalid_argument("add_noise: chi grid mismatch");
  double power = 0;
  int64_t count = 0;
  for (int64_t t = 0; t < T; ++t)
    for (int64_t p = 0; p < n; ++p) {
      if (!chi.values[size_t(p)]) continue;
      for (int c = 0; c < 3; ++c) {
        double x = flow.velocity.v[size_t((c * T + t) * n + p)];
        power += x * x;
      }
      ++count;
    }
  if (count == 0 || power == 0) throw std::runtime_error("add_noise: undefined SNR (zero flow)");
  power /= double(count);
  const double sigma = std::sqrt(power / (3.0 * snr));
  auto rng = make_rng(seed, /*stream=*/43);
  std::normal_distribution<double> nd(0.0, sigma);
  FlowField out = flow;
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t p = 0; p < n; ++p)
        if (chi.values[size_t(p)]) out.velocity.v[size_t((c * T + t) * n + p)] += nd(rng);
  return out;
}

/// Strided point subsampling in space (offset 0); spacing scales by the
/// factor and the origin shifts so low-res voxel centers coincide with the
/// retained high-res centers.
inline FlowField downsample_space(const FlowField& flow, int64_t factor) {
  if (factor < 1) throw std::invalid_argument("downsample_space: factor must be >= 1");
  const auto& g = flow.grid;
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] % factor != 0)
      throw std::invalid_argument("downsample_space: factor does not divide grid dims");
  if (factor == 1) return flow;
  FlowField out;
  out.times = flow.times;
  std::array<int64_t, 3> nd{g.dims[0] / factor, g.dims[1] / factor, g.dims[2] / factor};
  Vec3 sp{g.spacing[0] * factor, g.spacing[1] * factor, g.spacing[2] * factor};
  Vec3 o{g.origin[0] - g.spacing[0] * double(factor - 1) / 2.0,
         g.origin[1] - g.spacing[1] * double(factor - 1) / 2.0,
         g.origin[2] - g.spacing[2] * double(factor - 1) / 2.0};
  out.grid = VoxelGrid(nd, sp, o);
  const int64_t T = flow.T(), n = g.nvox(), m = out.grid.nvox();
  out.velocity = Tensor({3, T, nd[0], nd[1], nd[2]});
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t i = 0; i < nd[0]; ++i)
        for (int64_t j = 0; j < nd[1]; ++j)
          for (int64_t k = 0; k < nd[2]; ++k)
            out.velocity.v[size_t((int64_t(c) * T + t) * m + out.grid.index(i, j, k))] =
                flow.velocity.v[size_t((int64_t(c) * T + t) * n +
                                       g.index(i * factor, j * factor, k * factor))];
  return out;
}

/// Keep `keep` timesteps at uniform stride starting at t=0; keep=1 keeps
/// only the initial frame.
inline FlowField downsample_time(const FlowField& flow, int64_t keep) {
  const int64_t T = flow.T();
  if (keep < 1 || keep > T) throw std::invalid_argument("downsample_time: keep out of range");
  if (keep != 1 && T % keep != 0)
    throw std::invalid_argument("downsample_time: keep must divide T (or be 1)");
  if (keep == T) return flow;
  const int64_t stride = keep == 1 ? T : T / keep;
  FlowField out;
  out.grid = flow.grid;
  const int64_t n = flow.grid.nvox();
  out.velocity = Tensor({3, keep, flow.grid.dims[0], flow.grid.dims[1], flow.grid.dims[2]});
  for (int64_t t = 0; t < keep; ++t) out.times.push_back(flow.times[size_t(t * stride)]);
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < keep; ++t)
      std::copy_n(flow.velocity.v.data() + (int64_t(c) * T + t * stride) * n, n,
                  out.velocity.v.data() + (int64_t(c) * keep + t) * n);
  return out;
}

}  // namespace lofno
