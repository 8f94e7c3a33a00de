#pragma once

#include "lofno/interp.hpp"
#include "lofno/model.hpp"
#include "lofno/wss.hpp"

namespace lofno {

enum class TaskKind { spatial, temporal, prediction };

/// Degradation task: spatial_x{2,3,4}, temporal_x{2,4}, prediction.
struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::spatial;
  int64_t scale = 2;  // spatial subsampling factor (1 for temporal tasks)
  int64_t t_keep = 0; // input timesteps (0 = all)

  static TaskSpec parse(const std::string& id, int64_t T) {
    TaskSpec t;
    t.id = id;
    if (id == "spatial_x2") { t.kind = TaskKind::spatial; t.scale = 2; t.t_keep = T; }
    else if (id == "spatial_x3") { t.kind = TaskKind::spatial; t.scale = 3; t.t_keep = T; }
    else if (id == "spatial_x4") { t.kind = TaskKind::spatial; t.scale = 4; t.t_keep = T; }
    else if (id == "temporal_x2") { t.kind = TaskKind::temporal; t.scale = 1; t.t_keep = T / 2; }
    else if (id == "temporal_x4") { t.kind = TaskKind::temporal; t.scale = 1; t.t_keep = T / 4; }
    else if (id == "prediction") { t.kind = TaskKind::prediction; t.scale = 1; t.t_keep = 1; }
    else throw std::invalid_argument("unknown task '" + id + "'");
    if (t.t_keep < 1) throw std::invalid_argument("task " + id + ": too few timesteps (T=" +
                                                  std::to_string(T) + ")");
    return t;
  }
};

/// One training/evaluation pair: degraded input, clean target, and the
/// geometric context. The geometry is kept so wall-shear evaluation can
/// probe the SDF; it is reproducible from (vessel spec, seed).
struct FlowSample {
  std::string id;
  FlowField input;   // noisy, degraded
  FlowField target;  // clean, high-res
  ChiField chi_hr, chi_lr;
  PriorChannels prior_lr, prior_hr;
  SurfaceMesh mesh;
  WssField wss_truth;
  std::shared_ptr<VesselGeometry> geom;
  uint64_t geometry_seed = 0, pulse_seed = 0, noise_seed = 0;
  std::string task;
  double snr = 10.0;
  double mu = 3.5e-3;

  /// input velocity flattened to [3*T_in, x, y, z]
  Tensor input_channels() const {
    Tensor t = input.velocity;
    t.shape = {3 * input.T(), input.grid.dims[0], input.grid.dims[1], input.grid.dims[2]};
    return t;
  }
};

struct DatasetConfig {
  int64_t n_train = 8, n_test = 2;
  int64_t hr_dim = 32;      // target grid voxels per axis
  int64_t T = 24;           // target timesteps
  std::string task = "spatial_x2";
  double snr = 10.0;        // power ratio; infinity disables noise
  int64_t Ne = 32;          // eigenvector prior channels
  EigenOrder eigen_order = EigenOrder::largest_nonzero;
  int64_t mesh_resolution = 24;
  double gaussian_radius_factor = 1.5;  // kernel sigma in units of fine-grid spacing
  VesselSpec vessel;
  PulseSpec pulse;
  double mu = 3.5e-3;   // dynamic viscosity, Pa s
  double rho = 1060.0;  // kg/m^3
  uint64_t seed = 0;

  DatasetConfig() {
    vessel.bend_jitter = 0.04;
    vessel.radius_jitter = 0.15;
    vessel.radius_variation = 0.1;
    vessel.bulge = BulgeSpec{};
    pulse.harmonic_weights = {0.45, 0.1};
    pulse.phase_jitter = 0.3;
  }

  std::vector<uint64_t> train_seeds() const {
    std::vector<uint64_t> s;
    for (int64_t i = 0; i < n_train; ++i) s.push_back(seed * 1000 + 1 + uint64_t(i));
    return s;
  }
  std::vector<uint64_t> test_seeds() const {
    std::vector<uint64_t> s;
    for (int64_t i = 0; i < n_test; ++i) s.push_back(seed * 1000 + 500 + uint64_t(i));
    return s;
  }
};

/// Build one sample end to end: geometry, prior channels, analytic flow,
/// wall-shear truth, noise, degradation.
inline FlowSample make_sample(const DatasetConfig& cfg, const TaskSpec& task, uint64_t geo_seed,
                              const std::string& id) {
  FlowSample s;
  s.id = id;
  s.task = task.id;
  s.snr = cfg.snr;
  s.mu = cfg.mu;
  s.geometry_seed = geo_seed;
  s.pulse_seed = geo_seed * 31 + 7;
  s.noise_seed = geo_seed * 131 + 17;

  s.geom = std::make_shared<VesselGeometry>(generate_vessel(cfg.vessel, geo_seed));
  Vec3 lo, hi;
  s.geom->bounding_box(lo, hi);
  VoxelGrid grid_hr({cfg.hr_dim, cfg.hr_dim, cfg.hr_dim},
                    {(hi[0] - lo[0]) / double(cfg.hr_dim), (hi[1] - lo[1]) / double(cfg.hr_dim),
                     (hi[2] - lo[2]) / double(cfg.hr_dim)},
                    lo);
  s.chi_hr = sample_chi(*s.geom, grid_hr);

  s.mesh = extract_surface_mesh(*s.geom, int(cfg.mesh_resolution));
  PulseSpec pulse = cfg.pulse;
  pulse.seed = s.pulse_seed;
  s.target = analytic_flow(*s.geom, pulse, grid_hr, cfg.T);
  s.wss_truth = compute_wss(s.target, *s.geom, s.mesh, cfg.mu);

  FlowField noisy = add_noise(s.target, s.chi_hr, cfg.snr, s.noise_seed);
  FlowField degraded = downsample_space(noisy, task.scale);
  s.input = downsample_time(degraded, task.t_keep);
  s.chi_lr = task.scale == 1 ? s.chi_hr : sample_chi(*s.geom, s.input.grid);

  if (cfg.Ne > 0) {
    auto graph = build_graph(s.mesh);
    auto L = normalized_laplacian(graph);
    auto spec = top_k_eigenpairs(L, int(cfg.Ne), cfg.eigen_order, geo_seed);
    double radius = cfg.gaussian_radius_factor *
                    std::min({grid_hr.spacing[0], grid_hr.spacing[1], grid_hr.spacing[2]});
    s.prior_hr = gaussian_resample(s.mesh, spec.eigenvectors, grid_hr, radius);
    s.prior_lr = gaussian_resample(s.mesh, spec.eigenvectors, s.input.grid, radius);
  } else {
    s.prior_hr.grid = grid_hr;
    s.prior_lr.grid = s.input.grid;
  }
  return s;
}

struct Dataset {
  std::vector<FlowSample> train, test;
  TaskSpec task;
  DatasetConfig cfg;
};

/// Generate the full dataset with disjoint train/test geometry seeds.
inline Dataset make_dataset(const DatasetConfig& cfg) {
  Dataset ds;
  ds.cfg = cfg;
  ds.task = TaskSpec::parse(cfg.task, cfg.T);
  auto tr = cfg.train_seeds(), te = cfg.test_seeds();
  for (uint64_t a : tr)
    for (uint64_t b : te)
      if (a == b) throw std::invalid_argument("make_dataset: train/test seed sets overlap");
  for (size_t i = 0; i < tr.size(); ++i)
    ds.train.push_back(make_sample(cfg, ds.task, tr[i], "train_" + std::to_string(i)));
  for (size_t i = 0; i < te.size(); ++i)
    ds.test.push_back(make_sample(cfg, ds.task, te[i], "test_" + std::to_string(i)));
  return ds;
}

/// Assemble the tape-ready input bundle from a sample.
inline ModelInput to_model_input(const FlowSample& s, const ModelConfig& cfg) {
  ModelInput in;
  in.u_lr = s.input_channels();
  in.chi_hr = s.chi_hr.as_tensor();
  if (cfg.uses_prior()) {
    in.prior_lr = s.prior_lr.channels;
    in.prior_hr = s.prior_hr.channels;
  }
  if (cfg.kind == ModelKind::srcnn) {
    auto up = linear_upsample(s.input, s.target.grid, s.target.times);
    Tensor t = up.field.velocity;
    t.shape = {3 * s.target.T(), s.target.grid.dims[0], s.target.grid.dims[1],
               s.target.grid.dims[2]};
    in.u_pre = t;
  }
  return in;
}

}  // namespace lofno
