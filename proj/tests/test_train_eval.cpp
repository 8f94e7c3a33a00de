#include <catch2/catch_amalgamated.hpp>

#include "lofno/train.hpp"

using namespace lofno;

namespace {

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

ModelConfig tiny_model_cfg(const DatasetConfig& d) {
  ModelConfig cfg;
  cfg.kind = ModelKind::lofno;
  cfg.d_h = 4;
  cfg.L = 2;
  cfg.N_m = 2;
  cfg.Ne = d.Ne;
  cfg.edsr.n_blocks = 1;
  cfg.edsr.width = 4;
  cfg.T_in = d.T;
  cfg.T_out = d.T;
  cfg.scale = 2;
  return cfg;
}

}  // namespace

TEST_CASE("cosine schedule starts at lr and ends at lr_min") {
  TrainConfig cfg;
  cfg.epochs = 101;
  cfg.lr = 1e-3;
  cfg.lr_min = 1e-5;
  CHECK(cosine_lr(cfg, 0) == Catch::Approx(1e-3).margin(1e-15));
  CHECK(cosine_lr(cfg, 100) == Catch::Approx(1e-5).margin(1e-15));
  CHECK(cosine_lr(cfg, 50) == Catch::Approx(0.5 * (1e-3 + 1e-5)).margin(1e-12));
  for (int64_t e = 1; e <= 100; ++e) CHECK(cosine_lr(cfg, e) < cosine_lr(cfg, e - 1));
}

TEST_CASE("adam update matches the bias-corrected closed form") {
  ModelParams p;
  Tensor w({2});
  w.v = {1.0, -2.0};
  p.add("w", w);
  AdamState st;
  st.init_like(p);
  TrainConfig cfg;  // beta1=0.9, beta2=0.999, eps=1e-8
  Tensor g({2});
  g.v = {0.5, -0.25};
  const double lr = 0.01;

  double m[2] = {0, 0}, v[2] = {0, 0}, want[2] = {1.0, -2.0};
  for (int step = 1; step <= 3; ++step) {
    adam_step(p, st, {g}, cfg, lr);
    for (int j = 0; j < 2; ++j) {
      m[j] = 0.9 * m[j] + 0.1 * g.v[size_t(j)];
      v[j] = 0.999 * v[j] + 0.001 * g.v[size_t(j)] * g.v[size_t(j)];
      double mh = m[j] / (1 - std::pow(0.9, step));
      double vh = v[j] / (1 - std::pow(0.999, step));
      want[j] -= lr * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.at("w").v[size_t(j)] == Catch::Approx(want[j]).margin(1e-14));
    }
  }
  CHECK(st.step == 3);
}

TEST_CASE("relative loss and velocity error agree with hand-computed values") {
  VoxelGrid g({2, 2, 2}, {1, 1, 1}, {0, 0, 0});
  FlowField target;
  target.grid = g;
  target.times = {0.0};
  target.velocity = Tensor({3, 1, 2, 2, 2});
  ChiField chi(g);
  chi.values[0] = 1;  // voxel A: u = (3,4,0), |u| = 5
  chi.values[3] = 1;  // voxel B: u = 0 (denominator floors at eps)
  const int64_t n = 8;
  target.velocity.v[0] = 3.0;
  target.velocity.v[size_t(n)] = 4.0;

  Tensor pred = target.velocity;
  pred.v[0] += 1.0;  // A: diff (1,2,2), |diff| = 3
  pred.v[size_t(n)] += 2.0;
  pred.v[size_t(2 * n)] += 2.0;
  pred.v[3] += 0.06;  // B: diff (0.06,0.08,0), |diff| = 0.1
  pred.v[size_t(n + 3)] += 0.08;

  const double eps = 0.5;
  CHECK(relative_loss(pred, target, chi, eps) == Catch::Approx(3.0 / 5.0 + 0.1 / 0.5).margin(1e-12));
  CHECK(err_velocity(pred, target, chi) == Catch::Approx((3.0 + 0.1) / 2.0).margin(1e-12));

  Tensor w = loss_weights(target, chi, eps);
  REQUIRE(w.numel() == n);
  CHECK(w.v[0] == Catch::Approx(1.0 / 5.0).margin(1e-12));
  CHECK(w.v[3] == Catch::Approx(1.0 / 0.5).margin(1e-12));
  CHECK(w.v[1] == 0.0);

  Tensor bad({3, 1, 2, 2});
  CHECK_THROWS(relative_loss(bad, target, chi, eps));
}

TEST_CASE("tape loss reduction equals the reference relative loss") {
  auto rng = make_rng(5, 0);
  VoxelGrid g({4, 4, 4}, {1, 1, 1}, {0, 0, 0});
  FlowField target;
  target.grid = g;
  target.times = {0.0, 0.5};
  target.velocity = randn({3, 2, 4, 4, 4}, rng);
  ChiField chi(g);
  std::bernoulli_distribution bd(0.5);
  for (auto& c : chi.values) c = bd(rng);
  chi.values[0] = 1;
  Tensor pred = randn({3, 2, 4, 4, 4}, rng);
  const double eps = 0.3;

  Tensor w = loss_weights(target, chi, eps);
  ad::Tape tape;
  auto loss = tape.weighted_vec_norm_sum(tape.constant(pred), target.velocity, w);
  CHECK(loss->val.v[0] == Catch::Approx(relative_loss(pred, target, chi, eps)).margin(1e-10));
}

TEST_CASE("wall-shear error averages over vertices valid in both fields") {
  WssField a, b;
  a.tau = {{{1, 0, 0}, {0, 2, 0}, {0, 0, 1}}};
  b.tau = {{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
  a.missing = {0, 0, 1};
  b.missing = {0, 1, 0};
  a.missing_count = 1;
  b.missing_count = 1;
  // only vertex 0 is valid in both: error |(1,0,0)| = 1
  CHECK(err_wss(a, b) == Catch::Approx(1.0).margin(1e-12));
  WssField allmiss = a;
  allmiss.missing = {1, 1, 1};
  CHECK_THROWS(err_wss(allmiss, b));
  WssField wrong;
  wrong.tau = {{{0, 0, 0}}};
  wrong.missing = {0};
  CHECK_THROWS(err_wss(wrong, b));
}

TEST_CASE("wall shear on a steady straight-tube flow matches 2 mu U / R within 10%") {
  VesselSpec spec;  // straight tube, R = 0.12
  VesselGeometry geom(spec);
  PulseSpec pulse;
  pulse.harmonic_weights = {};  // steady, peak speed U = 1
  Vec3 lo, hi;
  geom.bounding_box(lo, hi);
  VoxelGrid grid({32, 32, 32},
                 {(hi[0] - lo[0]) / 32, (hi[1] - lo[1]) / 32, (hi[2] - lo[2]) / 32}, lo);
  FlowField f = analytic_flow(geom, pulse, grid, 1);
  SurfaceMesh mesh = extract_surface_mesh(geom, 24);
  const double mu = 3.5e-3;
  WssField w = compute_wss(f, geom, mesh, mu);

  const double want = 2.0 * mu * 1.0 / 0.12;
  double acc = 0;
  int64_t cnt = 0;
  for (size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (w.missing[v]) continue;
    if (mesh.vertices[v][0] < 0.35 || mesh.vertices[v][0] > 0.65) continue;  // skip end caps
    acc += norm(w.tau[0][v]);
    ++cnt;
  }
  REQUIRE(cnt > 50);
  double mean_tau = acc / double(cnt);
  INFO("mean |tau| " << mean_tau << " vs analytic " << want);
  CHECK(std::abs(mean_tau - want) <= 0.10 * want);
}

TEST_CASE("training is deterministic and resumable in memory") {
  DatasetConfig dc = tiny_dataset_cfg();
  Dataset ds = make_dataset(dc);
  ModelConfig mc = tiny_model_cfg(dc);
  TrainConfig tc;
  tc.epochs = 4;
  tc.checkpoint_every = 0;
  tc.seed = 3;

  ModelParams p0 = init_params(mc, 3);
  TrainResult a = train(ds, mc, tc, p0);
  TrainResult b = train(ds, mc, tc, p0);
  for (size_t i = 0; i < a.params.tensors.size(); ++i)
    CHECK(a.params.tensors[i].v == b.params.tensors[i].v);
  REQUIRE(a.history.size() == 4);
  CHECK(a.history[0].lr == Catch::Approx(tc.lr).margin(1e-15));

  // capture the checkpoint state after epoch 2, then resume from it: the
  // tail must be bit-identical to the uninterrupted run
  ModelParams cp_params;
  AdamState cp_opt;
  std::vector<EpochRecord> cp_history;
  TrainConfig with_cp = tc;
  with_cp.checkpoint_every = 2;
  train(ds, mc, with_cp, p0, {}, 0, {},
        [&](int64_t epoch, const ModelParams& p, const AdamState& o,
            const std::vector<EpochRecord>& h) {
          if (epoch == 2) {
            cp_params = p;
            cp_opt = o;
            cp_history = h;
          }
        });
  REQUIRE(cp_history.size() == 2);
  TrainResult second = train(ds, mc, tc, cp_params, cp_opt, /*start_epoch=*/2, cp_history);
  REQUIRE(second.history.size() == 4);
  for (size_t i = 0; i < a.params.tensors.size(); ++i)
    CHECK(second.params.tensors[i].v == a.params.tensors[i].v);
  for (size_t e = 0; e < 4; ++e)
    CHECK(second.history[e].mean_loss == a.history[e].mean_loss);
}

TEST_CASE("a tiny model overfits one sample: loss decreases over training") {
  DatasetConfig dc = tiny_dataset_cfg();
  Dataset ds = make_dataset(dc);
  ModelConfig mc = tiny_model_cfg(dc);
  TrainConfig tc;
  tc.epochs = 15;
  tc.checkpoint_every = 0;
  TrainResult r = train(ds, mc, tc, init_params(mc, 1));
  REQUIRE(r.history.size() == 15);
  CHECK(r.history.back().mean_loss < r.history.front().mean_loss);
  CHECK(r.params.all_finite());
  CHECK(r.eps_rel > 0);
}

TEST_CASE("evaluation reports per-model velocity and wall-shear errors") {
  DatasetConfig dc = tiny_dataset_cfg();
  Dataset ds = make_dataset(dc);
  EvalReport rep = evaluate(
      ds, {{"linear", linear_predictor()}, {"rbf", rbf_predictor()}}, dc.mu);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    CHECK(row.task == "spatial_x2");
    REQUIRE(row.per_sample.size() == 1);
    CHECK(row.err_u > 0);
    CHECK(std::isfinite(row.err_u));
    CHECK(std::isfinite(row.err_tau));
    CHECK(row.per_sample[0].sample == "test_0");
  }
  std::string csv = rep.csv();
  CHECK(csv.rfind("model,task,err_u,err_wss\n", 0) == 0);
  CHECK(csv.find("linear,spatial_x2,") != std::string::npos);
  CHECK(rep.table().find("rbf") != std::string::npos);

  Dataset empty = ds;
  empty.test.clear();
  CHECK_THROWS(evaluate(empty, {{"linear", linear_predictor()}}));
}
