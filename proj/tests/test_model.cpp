#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "lofno/model.hpp"

using namespace lofno;

namespace {

ModelConfig tiny_cfg(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.d_h = 4;
  cfg.L = 2;
  cfg.N_m = 2;
  cfg.Ne = 2;
  cfg.edsr.n_blocks = 1;
  cfg.edsr.width = 4;
  cfg.T_in = 2;
  cfg.T_out = 2;
  cfg.scale = 2;
  return cfg;
}

ModelInput tiny_input(const ModelConfig& cfg, uint64_t seed) {
  auto rng = make_rng(seed, 1);
  const int64_t x = 4, X = x * cfg.scale;
  ModelInput in;
  in.u_lr = randn({3 * cfg.T_in, x, x, x}, rng);
  in.prior_lr = randn({cfg.Ne, x, x, x}, rng);
  in.prior_hr = randn({cfg.Ne, X, X, X}, rng);
  in.chi_hr = Tensor({X, X, X});
  std::bernoulli_distribution bd(0.5);
  for (double& c : in.chi_hr.v) c = bd(rng) ? 1.0 : 0.0;
  in.u_pre = randn({3 * cfg.T_out, X, X, X}, rng);
  return in;
}

}  // namespace

TEST_CASE("conv3 matches a direct convolution loop") {
  auto rng = make_rng(7, 0);
  const int64_t ci = 2, co = 3, X = 5, Y = 4, Z = 6, k = 3, r = k / 2;
  Tensor x = randn({ci, X, Y, Z}, rng), w = randn({co, ci, k, k, k}, rng), b = randn({co}, rng);

  ad::Tape tape;
  auto out = tape.conv3(tape.constant(x), tape.constant(w), tape.constant(b));

  for (int64_t oc = 0; oc < co; ++oc)
    for (int64_t i = 0; i < X; ++i)
      for (int64_t j = 0; j < Y; ++j)
        for (int64_t z = 0; z < Z; ++z) {
          double acc = b.v[size_t(oc)];
          for (int64_t ic = 0; ic < ci; ++ic)
            for (int64_t dx = -r; dx <= r; ++dx)
              for (int64_t dy = -r; dy <= r; ++dy)
                for (int64_t dz = -r; dz <= r; ++dz) {
                  int64_t ii = i + dx, jj = j + dy, zz = z + dz;
                  if (ii < 0 || jj < 0 || zz < 0 || ii >= X || jj >= Y || zz >= Z) continue;
                  acc += w.v[size_t((((oc * ci + ic) * k + dx + r) * k + dy + r) * k + dz + r)] *
                         x.v[size_t(((ic * X + ii) * Y + jj) * Z + zz)];
                }
          CHECK(out->val.v[size_t(((oc * X + i) * Y + j) * Z + z)] ==
                Catch::Approx(acc).margin(1e-6));
        }
}

TEST_CASE("affine matches a per-point matrix-vector loop") {
  auto rng = make_rng(8, 0);
  const int64_t ci = 5, co = 3, n = 24;
  Tensor x = randn({ci, n}, rng), W = randn({co, ci}, rng), b = randn({co}, rng);
  ad::Tape tape;
  auto out = tape.affine(tape.constant(x), tape.constant(W), tape.constant(b));
  for (int64_t o = 0; o < co; ++o)
    for (int64_t p = 0; p < n; ++p) {
      double acc = b.v[size_t(o)];
      for (int64_t i = 0; i < ci; ++i)
        acc += W.v[size_t(o * ci + i)] * x.v[size_t(i * n + p)];
      CHECK(out->val.v[size_t(o * n + p)] == Catch::Approx(acc).margin(1e-6));
    }
}

TEST_CASE("spectral_multiply matches a per-mode complex matmul with folded indices") {
  auto rng = make_rng(9, 0);
  const int64_t d = 3, X = 4, Y = 6, Z = 4, Kz = Z / 2 + 1, Nm = 2;
  Tensor h = randn({d, X, Y, Kz}, rng, 1.0, /*cplx=*/true);
  Tensor w = randn({d, d, Nm, Nm, Nm}, rng, 1.0, /*cplx=*/true);
  ad::Tape tape;
  auto out = tape.spectral_multiply(tape.constant(h), tape.constant(w), Z);

  auto ch = [&](const Tensor& t, int64_t i) {
    return std::complex<double>(t.v[size_t(2 * i)], t.v[size_t(2 * i + 1)]);
  };
  const int64_t nmode = X * Y * Kz;
  for (int64_t kx = 0; kx < X; ++kx)
    for (int64_t ky = 0; ky < Y; ++ky)
      for (int64_t kz = 0; kz < Kz; ++kz) {
        int64_t ax = std::min(kx, X - kx), ay = std::min(ky, Y - ky);
        int64_t p = (kx * Y + ky) * Kz + kz;
        for (int64_t o = 0; o < d; ++o) {
          std::complex<double> want(0, 0);
          if (ax < Nm && ay < Nm && kz < Nm)
            for (int64_t i = 0; i < d; ++i)
              want += ch(w, (o * d + i) * Nm * Nm * Nm + (ax * Nm + ay) * Nm + kz) *
                      ch(h, i * nmode + p);
          std::complex<double> got = ch(out->val, o * nmode + p);
          CHECK(std::abs(got - want) < 1e-6);
        }
      }

  // N_m beyond the grid Nyquist is rejected
  Tensor wbig = randn({d, d, 4, 4, 4}, rng, 1.0, true);
  ad::Tape t2;
  CHECK_THROWS_WITH(t2.spectral_multiply(t2.constant(h), t2.constant(wbig), Z),
                    Catch::Matchers::ContainsSubstring("Nyquist"));
}

TEST_CASE("shuffle3 places channel blocks into sub-voxel offsets") {
  auto rng = make_rng(10, 0);
  const int64_t C = 2, s = 2, X = 3;
  Tensor x = randn({C * s * s * s, X, X, X}, rng);
  ad::Tape tape;
  auto out = tape.shuffle3(tape.constant(x), s);
  REQUIRE(out->val.shape == std::vector<int64_t>{C, s * X, s * X, s * X});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < s * X; ++i)
      for (int64_t j = 0; j < s * X; ++j)
        for (int64_t k = 0; k < s * X; ++k) {
          int64_t chs = c * s * s * s + ((i % s) * s + j % s) * s + k % s;
          CHECK(out->val.v[size_t(((c * s * X + i) * s * X + j) * s * X + k)] ==
                x.v[size_t(((chs * X + i / s) * X + j / s) * X + k / s)]);
        }
}

TEST_CASE("localized layer with chi == 0 reduces exactly to the pointwise path") {
  ModelConfig cfg = tiny_cfg(ModelKind::lofno);
  ModelParams params = init_params(cfg, 1);
  auto rng = make_rng(2, 0);
  const int64_t X = 8;
  Tensor hval = randn({cfg.d_h, X, X, X}, rng);
  Tensor chi({X, X, X});  // all zero
  Tensor chi_dh({cfg.d_h, X, X, X});

  ad::Tape tape;
  BoundParams bp(tape, params, false);
  auto i_chi =
      tape.ifft3(tape.spectral_multiply(tape.fft3(tape.constant(chi_dh)), bp.at("fourier.v"), X));
  auto out = dafno_layer(tape, tape.constant(hval), chi, i_chi, bp, cfg, X);

  ad::Tape t2;
  BoundParams bp2(t2, params, false);
  auto want = t2.activation(
      t2.affine(t2.constant(hval), bp2.at("fourier.w"), bp2.at("fourier.b")), cfg.activation);
  CHECK(out->val.v == want->val.v);  // bit-exact
}

TEST_CASE("localized layer: perturbing h at a chi=0 voxel leaves all other voxels unchanged") {
  ModelConfig cfg = tiny_cfg(ModelKind::lofno);
  ModelParams params = init_params(cfg, 3);
  auto rng = make_rng(4, 0);
  const int64_t X = 8, n = X * X * X;
  Tensor hval = randn({cfg.d_h, X, X, X}, rng);
  Tensor chi({X, X, X});
  std::bernoulli_distribution bd(0.6);
  for (double& c : chi.v) c = bd(rng) ? 1.0 : 0.0;
  int64_t dead = -1;
  for (int64_t p = 0; p < n; ++p)
    if (chi.v[size_t(p)] == 0.0) dead = p;
  REQUIRE(dead >= 0);

  Tensor chi_dh({cfg.d_h, X, X, X});
  for (int64_t c = 0; c < cfg.d_h; ++c)
    std::copy(chi.v.begin(), chi.v.end(), chi_dh.v.begin() + c * n);

  auto run = [&](const Tensor& h) {
    ad::Tape tape;
    BoundParams bp(tape, params, false);
    auto i_chi = tape.ifft3(
        tape.spectral_multiply(tape.fft3(tape.constant(chi_dh)), bp.at("fourier.v"), X));
    return dafno_layer(tape, tape.constant(h), chi, i_chi, bp, cfg, X)->val;
  };

  Tensor base = run(hval);
  Tensor hpert = hval;
  for (int64_t c = 0; c < cfg.d_h; ++c) hpert.v[size_t(c * n + dead)] += 10.0;
  Tensor pert = run(hpert);
  int64_t diffs = 0;
  for (int64_t c = 0; c < cfg.d_h; ++c)
    for (int64_t p = 0; p < n; ++p) {
      double delta = std::abs(pert.v[size_t(c * n + p)] - base.v[size_t(c * n + p)]);
      if (p == dead)
        diffs += delta != 0;
      else
        CHECK(delta < 1e-6);
    }
  CHECK(diffs > 0);  // the perturbed voxel itself does change (pointwise path)
}

TEST_CASE("masked model output is exactly zero outside the vessel") {
  ModelConfig cfg = tiny_cfg(ModelKind::lofno);
  cfg.validate();
  ModelParams params = init_params(cfg, 5);
  ModelInput in = tiny_input(cfg, 6);
  Tensor out = predict(params, cfg, in);
  REQUIRE(out.shape == std::vector<int64_t>{3, cfg.T_out, 8, 8, 8});
  const int64_t n = 8 * 8 * 8;
  for (int64_t c = 0; c < 3 * cfg.T_out; ++c)
    for (int64_t p = 0; p < n; ++p)
      if (in.chi_hr.v[size_t(p)] == 0.0) CHECK(out.v[size_t(c * n + p)] == 0.0);
}

TEST_CASE("weight sharing: parameter count independent of layer count") {
  ModelConfig a = tiny_cfg(ModelKind::lofno), b = a;
  a.L = 2;
  b.L = 8;
  ModelParams pa = init_params(a, 7), pb = init_params(b, 7);
  CHECK(pa.count() == pb.count());
  REQUIRE(pa.names == pb.names);
  for (size_t i = 0; i < pa.tensors.size(); ++i) CHECK(pa.tensors[i].v == pb.tensors[i].v);
  // but the forward pass does depend on L
  ModelInput in = tiny_input(a, 8);
  Tensor ya = predict(pa, a, in), yb = predict(pb, b, in);
  CHECK(ya.v != yb.v);
}

TEST_CASE("initialization is deterministic in the seed") {
  ModelConfig cfg = tiny_cfg(ModelKind::lofno);
  ModelParams a = init_params(cfg, 11), b = init_params(cfg, 11), c = init_params(cfg, 12);
  REQUIRE(a.names == b.names);
  for (size_t i = 0; i < a.tensors.size(); ++i) CHECK(a.tensors[i].v == b.tensors[i].v);
  bool any_diff = false;
  for (size_t i = 0; i < a.tensors.size(); ++i) any_diff |= a.tensors[i].v != c.tensors[i].v;
  CHECK(any_diff);
}

TEST_CASE("all model kinds produce high-resolution output of the right shape") {
  for (ModelKind kind : {ModelKind::lofno, ModelKind::lofno_wo_lep, ModelKind::fno_edsr,
                         ModelKind::edsr, ModelKind::srcnn}) {
    ModelConfig cfg = tiny_cfg(kind);
    ModelParams params = init_params(cfg, 21);
    ModelInput in = tiny_input(cfg, 22);
    Tensor out = predict(params, cfg, in);
    INFO("kind " << to_string(kind));
    CHECK(out.shape == std::vector<int64_t>{3, cfg.T_out, 8, 8, 8});
    CHECK(out.all_finite());
  }
  // the prior only feeds the full model
  ModelConfig ab = tiny_cfg(ModelKind::lofno_wo_lep);
  CHECK_FALSE(ab.uses_prior());
  CHECK(tiny_cfg(ModelKind::lofno).uses_prior());
}

TEST_CASE("temporal upsampling: T_in < T_out expands the channel count") {
  ModelConfig cfg = tiny_cfg(ModelKind::lofno);
  cfg.T_in = 1;
  cfg.T_out = 4;
  cfg.scale = 1;
  ModelParams params = init_params(cfg, 31);
  auto rng = make_rng(32, 1);
  ModelInput in;
  in.u_lr = randn({3, 8, 8, 8}, rng);
  in.prior_lr = randn({cfg.Ne, 8, 8, 8}, rng);
  in.prior_hr = in.prior_lr;
  in.chi_hr = Tensor({8, 8, 8});
  in.chi_hr.fill(1.0);
  Tensor out = predict(params, cfg, in);
  CHECK(out.shape == std::vector<int64_t>{3, 4, 8, 8, 8});
}

TEST_CASE("model kind parsing round-trips; unknown names rejected") {
  for (const char* s : {"lofno", "lofno_wo_lep", "fno_edsr", "edsr", "srcnn"})
    CHECK(to_string(model_kind_from_string(s)) == s);
  CHECK(model_kind_from_string("fno") == ModelKind::fno_edsr);
  CHECK_THROWS_WITH(model_kind_from_string("resnet"),
                    Catch::Matchers::ContainsSubstring("unknown model"));
  ModelConfig bad = tiny_cfg(ModelKind::lofno);
  bad.scale = 5;
  CHECK_THROWS(bad.validate());
  bad = tiny_cfg(ModelKind::lofno);
  bad.T_in = 4;
  bad.T_out = 2;
  CHECK_THROWS(bad.validate());
}
