#include <catch2/catch_amalgamated.hpp>

#include "lofno/dataset.hpp"
#include "lofno/train.hpp"

using namespace lofno;

namespace {

// affine-in-space, linear-in-time test field
double affine_val(int c, const Vec3& p, double t) {
  return double(c + 1) + 2.0 * p[0] - 1.0 * p[1] + 0.5 * p[2] + 0.3 * t;
}

FlowField affine_field(const VoxelGrid& g, std::vector<double> times) {
  FlowField f;
  f.grid = g;
  f.times = std::move(times);
  const int64_t T = f.T(), n = g.nvox();
  f.velocity = Tensor({3, T, g.dims[0], g.dims[1], g.dims[2]});
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t i = 0; i < g.dims[0]; ++i)
        for (int64_t j = 0; j < g.dims[1]; ++j)
          for (int64_t k = 0; k < g.dims[2]; ++k)
            f.velocity.v[size_t((int64_t(c) * T + t) * n + g.index(i, j, k))] =
                affine_val(c, g.center(i, j, k), f.times[size_t(t)]);
  return f;
}

DatasetConfig tiny_dataset_cfg() {
  DatasetConfig cfg;
  cfg.n_train = 1;
  cfg.n_test = 1;
  cfg.hr_dim = 8;
  cfg.T = 4;
  cfg.task = "spatial_x2";
  cfg.Ne = 2;
  cfg.mesh_resolution = 12;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("trilinear upsampling reproduces affine fields exactly") {
  VoxelGrid in_g = VoxelGrid::cube(8, 1.0, {0, 0, 0});
  FlowField f = affine_field(in_g, {0.0, 1.0});
  VoxelGrid out_g = VoxelGrid::cube(16, 1.0, {0, 0, 0});
  InterpResult r = linear_upsample(f, out_g, {0.25, 0.75});
  CHECK_FALSE(r.time_clamped);
  const int64_t n = out_g.nvox();
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < 2; ++t)
      for (int64_t i = 0; i < 16; ++i)
        for (int64_t j = 0; j < 16; ++j)
          for (int64_t k = 0; k < 16; ++k) {
            double want = affine_val(c, out_g.center(i, j, k), r.field.times[size_t(t)]);
            CHECK(r.field.velocity.v[size_t((int64_t(c) * 2 + t) * n + out_g.index(i, j, k))] ==
                  Catch::Approx(want).margin(1e-9));
          }
}

TEST_CASE("trilinear upsampling is exact at the input sample points") {
  auto rng = make_rng(17, 0);
  VoxelGrid g = VoxelGrid::cube(6, 1.0, {0, 0, 0});
  FlowField f;
  f.grid = g;
  f.times = {0.0, 0.5, 1.0};
  f.velocity = randn({3, 3, 6, 6, 6}, rng);
  InterpResult r = linear_upsample(f, g, f.times);
  REQUIRE(r.field.velocity.v.size() == f.velocity.v.size());
  for (size_t i = 0; i < f.velocity.v.size(); ++i)
    CHECK(r.field.velocity.v[i] == Catch::Approx(f.velocity.v[i]).margin(1e-12));
}

TEST_CASE("trilinear upsampling flags and clamps out-of-range target times") {
  VoxelGrid g = VoxelGrid::cube(4, 1.0, {0, 0, 0});
  FlowField f = affine_field(g, {0.0, 1.0});
  InterpResult r = linear_upsample(f, g, {2.0});
  CHECK(r.time_clamped);
  const int64_t n = g.nvox();
  // clamped to the last input frame
  for (int c = 0; c < 3; ++c)
    for (int64_t p = 0; p < n; ++p)
      CHECK(r.field.velocity.v[size_t(int64_t(c) * n + p)] ==
            Catch::Approx(f.velocity.v[size_t((int64_t(c) * 2 + 1) * n + p)]).margin(1e-12));
}

TEST_CASE("thin-plate-spline interpolation is exact at its data points") {
  auto rng = make_rng(23, 0);
  VoxelGrid g = VoxelGrid::cube(6, 1.0, {0, 0, 0});
  ChiField chi(g);
  // a small ball of interior points
  int64_t m = 0;
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 6; ++j)
      for (int64_t k = 0; k < 6; ++k)
        if (norm(g.center(i, j, k) - Vec3{0.5, 0.5, 0.5}) < 0.3) {
          chi.values[size_t(g.index(i, j, k))] = 1;
          ++m;
        }
  REQUIRE(m >= 10);
  FlowField f;
  f.grid = g;
  f.times = {0.0, 1.0};
  f.velocity = randn({3, 2, 6, 6, 6}, rng);
  FlowField out = rbf_upsample(f, chi, g, chi);
  const int64_t n = g.nvox();
  for (int c = 0; c < 3; ++c)
    for (int64_t t = 0; t < 2; ++t)
      for (int64_t p = 0; p < n; ++p) {
        double got = out.velocity.v[size_t((int64_t(c) * 2 + t) * n + p)];
        if (chi.values[size_t(p)])
          CHECK(got ==
                Catch::Approx(f.velocity.v[size_t((int64_t(c) * 2 + t) * n + p)]).margin(1e-6));
        else
          CHECK(got == 0.0);  // exterior untouched
      }
}

TEST_CASE("thin-plate spline from a single data point is the constant field") {
  VoxelGrid g = VoxelGrid::cube(4, 1.0, {0, 0, 0});
  ChiField one(g);
  one.values[size_t(g.index(1, 2, 1))] = 1;
  FlowField f;
  f.grid = g;
  f.times = {0.0};
  f.velocity = Tensor({3, 1, 4, 4, 4});
  f.velocity.v[size_t(g.index(1, 2, 1))] = 2.5;  // u component
  ChiField all(g);
  std::fill(all.values.begin(), all.values.end(), 1);
  FlowField out = rbf_upsample(f, one, g, all);
  const int64_t n = g.nvox();
  for (int64_t p = 0; p < n; ++p) {
    CHECK(out.velocity.v[size_t(p)] == Catch::Approx(2.5).margin(1e-6));
    CHECK(out.velocity.v[size_t(n + p)] == Catch::Approx(0.0).margin(1e-6));
  }
}

TEST_CASE("farthest-point cap keeps the solve bounded and still interpolates") {
  auto rng = make_rng(29, 0);
  VoxelGrid g = VoxelGrid::cube(6, 1.0, {0, 0, 0});
  ChiField chi(g);
  std::fill(chi.values.begin(), chi.values.end(), 1);
  FlowField f = affine_field(g, {0.0});
  RbfSpec spec;
  spec.max_points = 20;  // well below the 216 interior points
  FlowField out = rbf_upsample(f, chi, g, chi, spec);
  CHECK(out.velocity.all_finite());
  // affine fields live in the spline's polynomial tail, so the subsampled
  // fit still reproduces them
  const int64_t n = g.nvox();
  for (int c = 0; c < 3; ++c)
    for (int64_t p = 0; p < n; ++p)
      CHECK(out.velocity.v[size_t(int64_t(c) * n + p)] ==
            Catch::Approx(f.velocity.v[size_t(int64_t(c) * n + p)]).margin(1e-5));
}

TEST_CASE("classical predictors return full-resolution masked fields on a real sample") {
  DatasetConfig cfg = tiny_dataset_cfg();
  TaskSpec task = TaskSpec::parse(cfg.task, cfg.T);
  FlowSample s = make_sample(cfg, task, 42, "t");

  Tensor lin = linear_predictor()(s);
  REQUIRE(lin.shape == std::vector<int64_t>{3, cfg.T, 8, 8, 8});
  CHECK(lin.all_finite());

  Tensor rbf = rbf_predictor()(s);
  REQUIRE(rbf.shape == std::vector<int64_t>{3, cfg.T, 8, 8, 8});
  CHECK(rbf.all_finite());
  // rbf leaves the exterior at zero
  const int64_t n = s.target.grid.nvox();
  for (int64_t p = 0; p < n; ++p)
    if (!s.chi_hr.values[size_t(p)]) CHECK(rbf.v[size_t(p)] == 0.0);
}

TEST_CASE("degradation tasks parse to the expected input resolutions") {
  CHECK(TaskSpec::parse("spatial_x2", 24).scale == 2);
  CHECK(TaskSpec::parse("spatial_x4", 24).t_keep == 24);
  CHECK(TaskSpec::parse("temporal_x2", 24).t_keep == 12);
  CHECK(TaskSpec::parse("temporal_x4", 24).t_keep == 6);
  CHECK(TaskSpec::parse("prediction", 24).t_keep == 1);
  CHECK_THROWS(TaskSpec::parse("spatial_x5", 24));
  CHECK_THROWS(TaskSpec::parse("temporal_x4", 3));  // t_keep would be 0
}
