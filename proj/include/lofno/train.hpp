#pragma once

#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lofno/dataset.hpp"

namespace lofno {

struct TrainConfig {
  int64_t epochs = 500;
  double lr = 1e-3, lr_min = 1e-5;  // cosine decay from lr to lr_min
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double eps_rel_factor = 1e-6;  // eps_rel = factor * mean training speed
  int64_t checkpoint_every = 50; // epochs; 0 disables
  uint64_t seed = 0;
};

/// lr schedule: cosine from lr down to lr_min over the full run.
inline double cosine_lr(const TrainConfig& cfg, int64_t epoch) {
  if (cfg.epochs <= 1) return cfg.lr_min;
  double u = double(epoch) / double(cfg.epochs - 1);
  return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(M_PI * u));
}

struct AdamState {
  std::vector<Tensor> m, v;
  int64_t step = 0;

  void init_like(const ModelParams& p) {
    m.clear();
    v.clear();
    for (const auto& t : p.tensors) {
      Tensor z(t.shape, t.complex);
      m.push_back(z);
      v.push_back(z);
    }
  }
  bool matches(const ModelParams& p) const {
    if (m.size() != p.tensors.size()) return false;
    for (size_t i = 0; i < m.size(); ++i)
      if (m[i].v.size() != p.tensors[i].v.size()) return false;
    return true;
  }
};

/// One Adam update over all parameters from accumulated gradients.
inline void adam_step(ModelParams& p, AdamState& st, const std::vector<Tensor>& grads,
                      const TrainConfig& cfg, double lr) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    auto& w = p.tensors[i].v;
    const auto& g = grads[i].v;
    auto& m = st.m[i].v;
    auto& v = st.v[i].v;
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1 - cfg.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.adam_eps);
    }
  }
}

/// Mean speed over chi=1 voxel-times of the training targets; sets the loss
/// denominator floor eps_rel.
inline double dataset_mean_speed(const std::vector<FlowSample>& samples) {
  double acc = 0;
  int64_t cnt = 0;
  for (const auto& s : samples) {
    const int64_t n = s.target.grid.nvox(), T = s.target.T();
    const double* u = s.target.velocity.v.data();
    for (int64_t t = 0; t < T; ++t)
      for (int64_t p = 0; p < n; ++p) {
        if (!s.chi_hr.values[size_t(p)]) continue;
        double x = u[t * n + p], y = u[(T + t) * n + p], z = u[(2 * T + t) * n + p];
        acc += std::sqrt(x * x + y * y + z * z);
        ++cnt;
      }
  }
  if (cnt == 0) throw std::runtime_error("dataset_mean_speed: no interior sites");
  return acc / double(cnt);
}

/// Per-(time,voxel) weights chi / max(||u||, eps_rel) for the relative loss.
inline Tensor loss_weights(const FlowField& target, const ChiField& chi, double eps_rel) {
  const int64_t n = target.grid.nvox(), T = target.T();
  Tensor w({T, target.grid.dims[0], target.grid.dims[1], target.grid.dims[2]});
  const double* u = target.velocity.v.data();
  for (int64_t t = 0; t < T; ++t)
    for (int64_t p = 0; p < n; ++p) {
      if (!chi.values[size_t(p)]) continue;
      double x = u[t * n + p], y = u[(T + t) * n + p], z = u[(2 * T + t) * n + p];
      double sp = std::sqrt(x * x + y * y + z * z);
      w.v[size_t(t * n + p)] = 1.0 / std::max(sp, eps_rel);
    }
  return w;
}

/// sum over chi=1 voxel-times of ||u - u_hat|| / max(||u||, eps_rel).
/// Reference (non-differentiated) form of the training objective.
inline double relative_loss(const Tensor& pred, const FlowField& target, const ChiField& chi,
                            double eps_rel) {
  const int64_t n = target.grid.nvox(), T = target.T();
  if (pred.numel() != 3 * T * n) throw std::invalid_argument("relative_loss: shape mismatch");
  const double* u = target.velocity.v.data();
  const double* q = pred.v.data();
  double s = 0;
  for (int64_t t = 0; t < T; ++t)
    for (int64_t p = 0; p < n; ++p) {
      if (!chi.values[size_t(p)]) continue;
      double x = u[t * n + p], y = u[(T + t) * n + p], z = u[(2 * T + t) * n + p];
      double dx = q[t * n + p] - x, dy = q[(T + t) * n + p] - y, dz = q[(2 * T + t) * n + p] - z;
      s += std::sqrt(dx * dx + dy * dy + dz * dz) /
           std::max(std::sqrt(x * x + y * y + z * z), eps_rel);
    }
  return s;
}

/// Mean Euclidean error over chi=1 voxel-times.
inline double err_velocity(const Tensor& pred, const FlowField& target, const ChiField& chi) {
  const int64_t n = target.grid.nvox(), T = target.T();
  if (pred.numel() != 3 * T * n) throw std::invalid_argument("err_velocity: shape mismatch");
  const double* u = target.velocity.v.data();
  const double* q = pred.v.data();
  double s = 0;
  int64_t cnt = 0;
  for (int64_t t = 0; t < T; ++t)
    for (int64_t p = 0; p < n; ++p) {
      if (!chi.values[size_t(p)]) continue;
      double dx = q[t * n + p] - u[t * n + p];
      double dy = q[(T + t) * n + p] - u[(T + t) * n + p];
      double dz = q[(2 * T + t) * n + p] - u[(2 * T + t) * n + p];
      s += std::sqrt(dx * dx + dy * dy + dz * dz);
      ++cnt;
    }
  if (cnt == 0) throw std::runtime_error("err_velocity: no interior sites");
  return s / double(cnt);
}

/// Mean Euclidean error of wall-shear vectors over vertices valid in both
/// fields, across all timesteps.
inline double err_wss(const WssField& pred, const WssField& truth) {
  if (pred.missing.size() != truth.missing.size() || pred.tau.size() != truth.tau.size())
    throw std::invalid_argument("err_wss: field size mismatch");
  double s = 0;
  int64_t cnt = 0;
  for (size_t t = 0; t < truth.tau.size(); ++t)
    for (size_t v = 0; v < truth.missing.size(); ++v) {
      if (truth.missing[v] || pred.missing[v]) continue;
      s += norm(pred.tau[t][v] - truth.tau[t][v]);
      ++cnt;
    }
  if (cnt == 0) throw std::runtime_error("err_wss: no valid vertices");
  return s / double(cnt);
}

struct EpochRecord {
  int64_t epoch = 0;
  double mean_loss = 0;  // mean per-sample relative loss
  double lr = 0;
};

struct TrainResult {
  ModelParams params;
  AdamState opt;
  std::vector<EpochRecord> history;
  double eps_rel = 0;
};

using CheckpointFn =
    std::function<void(int64_t epoch, const ModelParams&, const AdamState&,
                       const std::vector<EpochRecord>&)>;

/// Train one neural model on the dataset. Batch size is 1 sample (one Adam
/// step per sample); the visiting order is reshuffled each epoch from
/// (seed, epoch) only, so runs and resumed runs are bit-reproducible.
/// `start_epoch` > 0 resumes with the provided params/optimizer state.
inline TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         ModelParams params, AdamState opt = {}, int64_t start_epoch = 0,
                         std::vector<EpochRecord> history = {},
                         const CheckpointFn& checkpoint = nullptr, bool verbose = false) {
  mcfg.validate();
  if (ds.train.empty()) throw std::invalid_argument("train: empty training set");
  if (!opt.matches(params)) {
    if (start_epoch > 0) throw std::invalid_argument("train: optimizer state does not match params");
    opt.init_like(params);
  }

  const double eps_rel = tcfg.eps_rel_factor * dataset_mean_speed(ds.train);

  // per-sample constants, built once
  std::vector<ModelInput> inputs;
  std::vector<Tensor> weights;
  for (const auto& s : ds.train) {
    inputs.push_back(to_model_input(s, mcfg));
    weights.push_back(loss_weights(s.target, s.chi_hr, eps_rel));
  }

  std::vector<size_t> order(ds.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult res;
  res.history = std::move(history);
  res.eps_rel = eps_rel;

  for (int64_t epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    auto rng = make_rng(tcfg.seed, /*stream=*/uint64_t(9000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cosine_lr(tcfg, epoch);
    double loss_acc = 0;

    for (size_t oi = 0; oi < order.size(); ++oi) {
      size_t si = order[oi];
      const auto& s = ds.train[si];
      ad::Tape tape;
      BoundParams bp(tape, params, /*trainable=*/true);
      ad::Value loss;
      try {
        auto out = model_forward(tape, bp, mcfg, inputs[si]);
        loss = tape.weighted_vec_norm_sum(out, s.target.velocity, weights[si]);
        tape.backward(loss);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) + ", sample " +
                                 s.id + ": " + e.what());
      }
      loss_acc += loss->val.v[0];

      std::vector<Tensor> grads;
      grads.reserve(bp.values.size());
      for (const auto& v : bp.values) {
        if (v->grad.v.empty()) {
          grads.push_back(Tensor(v->val.shape, v->val.complex));
        } else {
          if (!v->grad.all_finite())
            throw std::runtime_error("train: non-finite gradient at epoch " +
                                     std::to_string(epoch) + ", sample " + s.id);
          grads.push_back(v->grad);
        }
      }
      adam_step(params, opt, grads, tcfg, lr);
    }

    EpochRecord rec{epoch, loss_acc / double(ds.train.size()), lr};
    res.history.push_back(rec);
    if (verbose)
      std::cerr << "epoch " << epoch << " loss " << std::setprecision(6) << rec.mean_loss
                << " lr " << lr << "\n";
    if (checkpoint && tcfg.checkpoint_every > 0 &&
        ((epoch + 1) % tcfg.checkpoint_every == 0 || epoch + 1 == tcfg.epochs))
      checkpoint(epoch + 1, params, opt, res.history);
  }

  res.params = std::move(params);
  res.opt = std::move(opt);
  return res;
}

// ---------------------------------------------------------------------------
// evaluation

/// A predictor maps a sample to a velocity tensor [3, T_out, X, Y, Z] on the
/// target grid.
using Predictor = std::function<Tensor(const FlowSample&)>;

inline Predictor neural_predictor(const ModelParams& params, const ModelConfig& cfg) {
  return [&params, cfg](const FlowSample& s) {
    return predict(params, cfg, to_model_input(s, cfg));
  };
}

inline Predictor linear_predictor() {
  return [](const FlowSample& s) {
    auto r = linear_upsample(s.input, s.target.grid, s.target.times);
    return r.field.velocity;
  };
}

inline Predictor rbf_predictor(RbfSpec spec = {}) {
  return [spec](const FlowSample& s) {
    FlowField in = s.input;
    if (in.T() != s.target.T()) {  // temporal tasks: linear in time first
      auto r = linear_upsample(in, in.grid, s.target.times);
      in = r.field;
    }
    return rbf_upsample(in, s.chi_lr, s.target.grid, s.chi_hr, spec).velocity;
  };
}

struct SampleEval {
  std::string sample;
  double err_u = 0, err_tau = 0;
  int64_t wss_missing = 0;  // vertices without a valid wall-shear probe
};

struct EvalRow {
  std::string model, task;
  double err_u = 0, err_tau = 0;  // means over test samples
  std::vector<SampleEval> per_sample;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::string csv() const {
    std::ostringstream os;
    os << "model,task,err_u,err_wss\n";
    for (const auto& r : rows)
      os << r.model << "," << r.task << "," << std::setprecision(10) << r.err_u << ","
         << r.err_tau << "\n";
    return os.str();
  }

  std::string table() const {
    std::ostringstream os;
    os << std::left << std::setw(14) << "model" << std::setw(14) << "task" << std::right
       << std::setw(12) << "err_u" << std::setw(12) << "err_wss" << "\n";
    for (const auto& r : rows)
      os << std::left << std::setw(14) << r.model << std::setw(14) << r.task << std::right
         << std::fixed << std::setprecision(4) << std::setw(12) << r.err_u << std::setw(12)
         << r.err_tau << "\n";
    return os.str();
  }
};

/// Run each named predictor over the test split; velocity error on the grid,
/// wall-shear error on the mesh (both vs the clean analytic truth).
inline EvalReport evaluate(const Dataset& ds,
                           const std::vector<std::pair<std::string, Predictor>>& models,
                           double mu = 3.5e-3) {
  if (ds.test.empty()) throw std::invalid_argument("evaluate: empty test set");
  EvalReport rep;
  for (const auto& [name, pred] : models) {
    EvalRow row;
    row.model = name;
    row.task = ds.task.id;
    for (const auto& s : ds.test) {
      Tensor u_hat = pred(s);
      SampleEval se;
      se.sample = s.id;
      se.err_u = err_velocity(u_hat, s.target, s.chi_hr);
      FlowField f;
      f.grid = s.target.grid;
      f.times = s.target.times;
      f.velocity = u_hat;
      f.velocity.shape = s.target.velocity.shape;
      WssField w = compute_wss(f, *s.geom, s.mesh, mu);
      se.err_tau = err_wss(w, s.wss_truth);
      se.wss_missing = w.missing_count;
      row.err_u += se.err_u / double(ds.test.size());
      row.err_tau += se.err_tau / double(ds.test.size());
      row.per_sample.push_back(se);
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace lofno
