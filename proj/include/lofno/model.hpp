#pragma once

#include <unordered_map>

#include "lofno/autodiff.hpp"
#include "lofno/grid.hpp"

namespace lofno {

struct EdsrConfig {
  int64_t n_blocks = 8;
  int64_t width = 64;
  double residual_scale = 0.1;
};

enum class ModelKind { lofno, lofno_wo_lep, fno_edsr, edsr, srcnn };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "lofno") return ModelKind::lofno;
  if (s == "lofno_wo_lep") return ModelKind::lofno_wo_lep;
  if (s == "fno_edsr" || s == "fno") return ModelKind::fno_edsr;
  if (s == "edsr") return ModelKind::edsr;
  if (s == "srcnn") return ModelKind::srcnn;
  throw std::invalid_argument("unknown model '" + s +
                              "' (valid: lofno, lofno_wo_lep, fno_edsr, edsr, srcnn, linear, rbf)");
}

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::lofno: return "lofno";
    case ModelKind::lofno_wo_lep: return "lofno_wo_lep";
    case ModelKind::fno_edsr: return "fno_edsr";
    case ModelKind::edsr: return "edsr";
    case ModelKind::srcnn: return "srcnn";
  }
  return "?";
}

struct ModelConfig {
  ModelKind kind = ModelKind::lofno;
  int64_t d_h = 32;    // Fourier layer width
  int64_t L = 4;       // layer count (parameters are shared across layers)
  int64_t N_m = 8;     // retained modes per axis
  int64_t Ne = 32;     // prior channels (0 disables the eigenvector prior)
  EdsrConfig edsr;
  int64_t T_in = 24, T_out = 24;
  int64_t scale = 2;   // spatial upsampling factor
  std::string activation = "gelu";
  bool prior_hr_injection = true;  // re-concatenate the prior on the high-res grid
  bool mask_output = true;
  int64_t srcnn_n1 = 16, srcnn_n2 = 8;
  uint64_t seed = 0;

  void validate() const {
    if (d_h < 1 || L < 1 || N_m < 1) throw std::invalid_argument("ModelConfig: d_h, L, N_m >= 1");
    if (T_in > T_out) throw std::invalid_argument("ModelConfig: T_in must be <= T_out");
    if (scale < 1 || scale > 4) throw std::invalid_argument("ModelConfig: scale in {1,2,3,4}");
    if (Ne < 0) throw std::invalid_argument("ModelConfig: Ne >= 0");
  }

  bool uses_prior() const {
    return Ne > 0 && (kind == ModelKind::lofno);
  }
  int64_t edsr_in_channels() const { return 3 * T_in + (uses_prior() ? Ne : 0); }
  int64_t lift_in_channels() const {
    return 3 * T_out + ((uses_prior() && prior_hr_injection) ? Ne : 0);
  }
};

/// Named learnable tensors with a stable iteration order.
struct ModelParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::unordered_map<std::string, size_t> index;

  void add(const std::string& name, Tensor t) {
    index.emplace(name, names.size());
    names.push_back(name);
    tensors.push_back(std::move(t));
  }
  Tensor& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::out_of_range("ModelParams: missing tensor " + name);
    return tensors[it->second];
  }
  const Tensor& at(const std::string& name) const {
    return const_cast<ModelParams*>(this)->at(name);
  }
  bool has(const std::string& name) const { return index.count(name) > 0; }
  int64_t count() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += int64_t(t.v.size());
    return n;
  }
  bool all_finite() const {
    for (const auto& t : tensors)
      if (!t.all_finite()) return false;
    return true;
  }
};

/// Parameters bound to tape leaves for one forward/backward pass.
struct BoundParams {
  std::vector<ad::Value> values;
  const ModelParams* src = nullptr;

  BoundParams(ad::Tape& tape, const ModelParams& p, bool trainable = true) : src(&p) {
    values.reserve(p.tensors.size());
    for (const auto& t : p.tensors) values.push_back(tape.leaf(t, trainable));
  }
  const ad::Value& at(const std::string& name) const {
    auto it = src->index.find(name);
    if (it == src->index.end()) throw std::out_of_range("BoundParams: missing tensor " + name);
    return values[it->second];
  }
};

namespace detail {

inline Tensor init_fanin(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng) {
  return randn(std::move(shape), rng, 1.0 / std::sqrt(double(std::max<int64_t>(fan_in, 1))));
}

inline void add_conv(ModelParams& p, const std::string& name, int64_t co, int64_t ci, int64_t k,
                     std::mt19937_64& rng) {
  p.add(name + ".w", init_fanin({co, ci, k, k, k}, ci * k * k * k, rng));
  p.add(name + ".b", Tensor({co}));
}

inline void add_linear(ModelParams& p, const std::string& name, int64_t co, int64_t ci,
                       std::mt19937_64& rng) {
  p.add(name + ".w", init_fanin({co, ci}, ci, rng));
  p.add(name + ".b", Tensor({co}));
}

}  // namespace detail

inline ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  auto rng = make_rng(seed, /*stream=*/101);
  ModelParams p;
  const int64_t s3 = cfg.scale * cfg.scale * cfg.scale;

  if (cfg.kind == ModelKind::srcnn) {
    detail::add_conv(p, "srcnn.c1", cfg.srcnn_n1, 3 * cfg.T_out, 9, rng);
    detail::add_conv(p, "srcnn.c2", cfg.srcnn_n2, cfg.srcnn_n1, 1, rng);
    detail::add_conv(p, "srcnn.c3", 3 * cfg.T_out, cfg.srcnn_n2, 5, rng);
    return p;
  }

  detail::add_conv(p, "edsr.in", cfg.edsr.width, cfg.edsr_in_channels(), 3, rng);
  for (int64_t i = 0; i < cfg.edsr.n_blocks; ++i) {
    detail::add_conv(p, "edsr.b" + std::to_string(i) + ".c1", cfg.edsr.width, cfg.edsr.width, 3, rng);
    detail::add_conv(p, "edsr.b" + std::to_string(i) + ".c2", cfg.edsr.width, cfg.edsr.width, 3, rng);
  }
  detail::add_conv(p, "edsr.mid", cfg.edsr.width, cfg.edsr.width, 3, rng);
  detail::add_conv(p, "edsr.head", 3 * cfg.T_out * s3, cfg.edsr.width, 1, rng);
  if (cfg.kind == ModelKind::edsr) return p;

  detail::add_linear(p, "lift.1", cfg.d_h, cfg.lift_in_channels(), rng);
  detail::add_linear(p, "lift.2", cfg.d_h, cfg.d_h, rng);
  detail::add_linear(p, "proj.1", cfg.d_h, cfg.d_h, rng);
  detail::add_linear(p, "proj.2", 3 * cfg.T_out, cfg.d_h, rng);

  // one shared set of spectral/pointwise weights regardless of L (implicit FNO)
  double sw_scale = 1.0 / (double(cfg.d_h) * double(cfg.N_m) * double(cfg.N_m) * double(cfg.N_m));
  p.add("fourier.v", randn({cfg.d_h, cfg.d_h, cfg.N_m, cfg.N_m, cfg.N_m}, rng, sw_scale, true));
  detail::add_linear(p, "fourier", cfg.d_h, cfg.d_h, rng);  // fourier.w, fourier.b = W, c
  return p;
}

namespace detail {

inline ad::Value mlp2(ad::Tape& tape, const ad::Value& x, const BoundParams& bp,
                      const std::string& name, const std::string& act) {
  auto h = tape.activation(tape.affine(x, bp.at(name + ".1.w"), bp.at(name + ".1.b")), act);
  return tape.affine(h, bp.at(name + ".2.w"), bp.at(name + ".2.b"));
}

inline ad::Value resblock(ad::Tape& tape, const ad::Value& x, const BoundParams& bp,
                          const std::string& name, double res_scale, const std::string& act) {
  auto y = tape.conv3(x, bp.at(name + ".c1.w"), bp.at(name + ".c1.b"));
  y = tape.activation(y, act);
  y = tape.conv3(y, bp.at(name + ".c2.w"), bp.at(name + ".c2.b"));
  return tape.add(x, tape.scale(y, res_scale));
}

}  // namespace detail

/// EDSR front-end: residual conv body on the low-resolution grid, then a
/// linear sub-voxel shuffle head that also realizes the temporal channel
/// expansion T_in -> T_out. Input [C_in, x, y, z] -> [3*T_out, sx, sy, sz].
inline ad::Value edsr_upsample(ad::Tape& tape, const ad::Value& in, const BoundParams& bp,
                               const ModelConfig& cfg) {
  auto x0 = tape.conv3(in, bp.at("edsr.in.w"), bp.at("edsr.in.b"));
  auto x = x0;
  for (int64_t i = 0; i < cfg.edsr.n_blocks; ++i)
    x = detail::resblock(tape, x, bp, "edsr.b" + std::to_string(i), cfg.edsr.residual_scale,
                         cfg.activation);
  x = tape.conv3(x, bp.at("edsr.mid.w"), bp.at("edsr.mid.b"));
  x = tape.add(x, x0);
  x = tape.conv3(x, bp.at("edsr.head.w"), bp.at("edsr.head.b"));
  return tape.shuffle3(x, cfg.scale);
}

/// One localized Fourier layer:
/// sigma( chi * (I(chi h) - h * I(chi)) + W h + c ).
/// `i_chi` is I(chi) lifted to d_h channels, shared across layers.
inline ad::Value dafno_layer(ad::Tape& tape, const ad::Value& h, const Tensor& chi,
                             const ad::Value& i_chi, const BoundParams& bp,
                             const ModelConfig& cfg, int64_t Z) {
  auto i_chih = tape.ifft3(tape.spectral_multiply(tape.fft3(tape.mask(h, chi)), bp.at("fourier.v"), Z));
  auto nonlocal = tape.mask(tape.sub(i_chih, tape.mul(h, i_chi)), chi);
  auto local = tape.affine(h, bp.at("fourier.w"), bp.at("fourier.b"));
  return tape.activation(tape.add(nonlocal, local), cfg.activation);
}

/// Plain FNO layer: sigma( I(h) + W h + c ).
inline ad::Value fno_layer(ad::Tape& tape, const ad::Value& h, const BoundParams& bp,
                           const ModelConfig& cfg, int64_t Z) {
  auto ih = tape.ifft3(tape.spectral_multiply(tape.fft3(h), bp.at("fourier.v"), Z));
  auto local = tape.affine(h, bp.at("fourier.w"), bp.at("fourier.b"));
  return tape.activation(tape.add(ih, local), cfg.activation);
}

/// Inputs for one forward pass. Channel tensors are flattened over time:
/// u_lr is [3*T_in, x, y, z] (component-major, matching [3,T,X,Y,Z] layout).
struct ModelInput {
  Tensor u_lr;       // [3*T_in, x, y, z]
  Tensor prior_lr;   // [Ne, x, y, z] (may be empty when unused)
  Tensor prior_hr;   // [Ne, X, Y, Z]
  Tensor chi_hr;     // [X, Y, Z] of 0/1
  Tensor u_pre;      // [3*T_out, X, Y, Z]; pre-upsampled input (SRCNN only)
};

/// Full forward pass for any neural model kind; returns the prediction as a
/// tape value of shape [3*T_out, X, Y, Z].
inline ad::Value model_forward(ad::Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                               const ModelInput& in) {
  cfg.validate();
  if (cfg.kind == ModelKind::srcnn) {
    auto x = tape.constant(in.u_pre);
    auto y = tape.conv3(x, bp.at("srcnn.c1.w"), bp.at("srcnn.c1.b"));
    y = tape.relu(y);
    y = tape.conv3(y, bp.at("srcnn.c2.w"), bp.at("srcnn.c2.b"));
    y = tape.relu(y);
    return tape.conv3(y, bp.at("srcnn.c3.w"), bp.at("srcnn.c3.b"));
  }

  auto u = tape.constant(in.u_lr);
  ad::Value front_in = u;
  if (cfg.uses_prior()) front_in = tape.concat_channels(u, tape.constant(in.prior_lr));
  auto hr = edsr_upsample(tape, front_in, bp, cfg);
  if (cfg.kind == ModelKind::edsr) return hr;

  const int64_t Z = in.chi_hr.shape[2];
  ad::Value z = hr;
  if (cfg.uses_prior() && cfg.prior_hr_injection)
    z = tape.concat_channels(hr, tape.constant(in.prior_hr));
  auto h = detail::mlp2(tape, z, bp, "lift", cfg.activation);

  if (cfg.kind == ModelKind::fno_edsr) {
    for (int64_t l = 0; l < cfg.L; ++l) h = fno_layer(tape, h, bp, cfg, Z);
  } else {
    // I(chi) is layer-independent because the spectral weights are shared
    std::vector<int64_t> cs{cfg.d_h, in.chi_hr.shape[0], in.chi_hr.shape[1], in.chi_hr.shape[2]};
    Tensor chi_dh(cs);
    const int64_t n = in.chi_hr.numel();
    for (int64_t c = 0; c < cfg.d_h; ++c)
      std::copy(in.chi_hr.v.begin(), in.chi_hr.v.end(), chi_dh.v.begin() + c * n);
    auto i_chi = tape.ifft3(
        tape.spectral_multiply(tape.fft3(tape.constant(chi_dh)), bp.at("fourier.v"), Z));
    for (int64_t l = 0; l < cfg.L; ++l)
      h = dafno_layer(tape, h, in.chi_hr, i_chi, bp, cfg, Z);
  }

  auto q = detail::mlp2(tape, h, bp, "proj", cfg.activation);
  if (cfg.mask_output && cfg.kind != ModelKind::fno_edsr) q = tape.mask(q, in.chi_hr);
  return q;
}

/// Convenience wrapper: run the model without tracking gradients and return
/// the prediction reshaped to [3, T_out, X, Y, Z].
inline Tensor predict(const ModelParams& params, const ModelConfig& cfg, const ModelInput& in) {
  ad::Tape tape;
  BoundParams bp(tape, params, /*trainable=*/false);
  auto out = model_forward(tape, bp, cfg, in);
  Tensor t = out->val;
  t.shape = {3, cfg.T_out, t.shape[1], t.shape[2], t.shape[3]};
  return t;
}

}  // namespace lofno
