#pragma once

#include "lofno/config.hpp"
#include "lofno/png.hpp"

namespace lofno {

/// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

namespace cli_detail {

namespace fs = io::fs;

inline uint64_t config_hash(const RunConfig& cfg) {
  std::string s = serialize_config(cfg);
  return fnv1a(s.data(), s.size());
}

inline std::string hex64(uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Worker-thread cap from LOFNO_THREADS; the pipeline itself is
/// single-threaded, so this only validates and bounds the setting.
inline int64_t thread_cap() {
  const char* env = std::getenv("LOFNO_THREADS");
  if (!env) return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (!end || *end != '\0' || v < 1)
    throw CliError(2, "LOFNO_THREADS must be a positive integer");
  return v;
}

inline fs::path checkpoint_path(const RunConfig& cfg, const fs::path& out_root,
                                const std::string& kind) {
  return out_root / cfg.dataset.task / kind / "checkpoint.lfno";
}

inline Dataset load_dataset_checked(const RunConfig& cfg, const fs::path& data_root) {
  Dataset ds;
  try {
    ds = io::read_dataset(data_root);
  } catch (const std::exception& e) {
    throw CliError(3, e.what());
  }
  if (ds.cfg.task != cfg.dataset.task)
    throw CliError(2, "config task '" + cfg.dataset.task + "' does not match dataset task '" +
                          ds.cfg.task + "'");
  return ds;
}

inline void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& hist) {
  std::ostringstream os;
  os << "epoch,loss,lr\n";
  os.precision(17);
  for (const auto& r : hist) os << r.epoch << "," << r.mean_loss << "," << r.lr << "\n";
  io::atomic_write(path, os.str());
}

}  // namespace cli_detail

inline int cmd_gen(const RunConfig& cfg, const io::fs::path& data_root, bool force,
                   std::ostream& log) {
  namespace fs = io::fs;
  cli_detail::thread_cap();
  fs::path mpath = data_root / "manifest.json";
  std::string chash = cli_detail::hex64(cli_detail::config_hash(cfg));

  if (fs::exists(mpath)) {
    try {
      auto manifest = io::json::parse(io::read_file(mpath));
      if (manifest.value("config_hash", "") == chash) {
        io::read_dataset(data_root);  // verifies content hashes
        log << "up to date (" << mpath.string() << ")\n";
        return 0;
      }
    } catch (const std::exception&) {
      // fall through: treat as stale
    }
    if (!force)
      throw CliError(3, "dataset at " + data_root.string() +
                            " was generated from a different config; use --force to regenerate");
  } else if (fs::exists(data_root) && !fs::is_empty(data_root) && !force) {
    throw CliError(3, "partial dataset at " + data_root.string() +
                          " (no manifest); use --force to regenerate");
  }
  if (fs::exists(data_root)) fs::remove_all(data_root);

  Dataset ds;
  try {
    ds = make_dataset(cfg.dataset);
  } catch (const std::invalid_argument& e) {
    throw CliError(2, e.what());
  } catch (const std::exception& e) {
    throw CliError(4, e.what());
  }
  try {
    fs::create_directories(data_root);
    io::write_dataset(data_root, ds);
    // append the config hash so reruns can detect "up to date"
    auto manifest = io::json::parse(io::read_file(mpath));
    manifest["config_hash"] = chash;
    io::atomic_write(mpath, manifest.dump(2) + "\n");
    io::atomic_write(data_root / "config.toml", serialize_config(cfg));
  } catch (const std::exception& e) {
    throw CliError(3, e.what());
  }
  log << "wrote " << ds.train.size() << " train + " << ds.test.size() << " test samples to "
      << data_root.string() << "\n";
  return 0;
}

inline int cmd_train(const RunConfig& cfg, const io::fs::path& data_root,
                     const io::fs::path& out_root, const std::string& kind, std::ostream& log) {
  namespace fs = io::fs;
  cli_detail::thread_cap();
  if (kind == "linear" || kind == "rbf")
    throw CliError(2, "model '" + kind + "' has no trainable parameters");
  ModelConfig mcfg;
  try {
    mcfg = cfg.model_config(kind);
  } catch (const std::exception& e) {
    throw CliError(2, e.what());
  }
  Dataset ds = cli_detail::load_dataset_checked(cfg, data_root);

  fs::path ckpath = cli_detail::checkpoint_path(cfg, out_root, kind);
  fs::create_directories(ckpath.parent_path());
  io::json echo = config_echo(cfg);
  echo["model_kind"] = kind;
  echo["seed"] = cfg.train.seed;

  ModelParams params = init_params(mcfg, mcfg.seed);
  AdamState opt;
  std::vector<EpochRecord> history;
  int64_t start_epoch = 0;
  if (fs::exists(ckpath)) {
    io::Checkpoint ck;
    try {
      ck = io::read_checkpoint(ckpath);
    } catch (const std::exception& e) {
      throw CliError(3, e.what());
    }
    if (ck.meta.value("model_kind", "") != kind ||
        ck.meta.value("config", "") != echo["config"].get<std::string>())
      throw CliError(2, "existing checkpoint at " + ckpath.string() +
                            " was trained with a different config");
    params = std::move(ck.params);
    opt = std::move(ck.opt);
    history = std::move(ck.history);
    start_epoch = ck.epoch;
    if (start_epoch >= cfg.train.epochs) {
      log << "already trained to epoch " << start_epoch << " (" << ckpath.string() << ")\n";
      return 0;
    }
    log << "resuming from epoch " << start_epoch << "\n";
  }

  auto save = [&](int64_t epoch, const ModelParams& p, const AdamState& o,
                  const std::vector<EpochRecord>& h) {
    io::write_checkpoint(ckpath, p, o, h, echo, epoch);
    cli_detail::write_history_csv(ckpath.parent_path() / "history.csv", h);
  };

  TrainResult res;
  try {
    res = train(ds, mcfg, cfg.train, std::move(params), std::move(opt), start_epoch,
                std::move(history), save, /*verbose=*/true);
  } catch (const std::invalid_argument& e) {
    throw CliError(2, e.what());
  } catch (const std::exception& e) {
    throw CliError(4, e.what());
  }
  save(cfg.train.epochs, res.params, res.opt, res.history);
  log << "trained " << kind << " for " << cfg.train.epochs << " epochs; final loss "
      << (res.history.empty() ? 0.0 : res.history.back().mean_loss) << "\n";
  return 0;
}

inline int cmd_eval(const RunConfig& cfg, const io::fs::path& data_root,
                    const io::fs::path& out_root, std::ostream& log) {
  namespace fs = io::fs;
  cli_detail::thread_cap();
  Dataset ds = cli_detail::load_dataset_checked(cfg, data_root);

  // keep loaded checkpoints alive for the predictors
  std::vector<std::shared_ptr<io::Checkpoint>> held;
  std::vector<std::pair<std::string, Predictor>> models;
  for (const std::string& name : cfg.eval_models) {
    if (name == "linear") {
      models.emplace_back(name, linear_predictor());
    } else if (name == "rbf") {
      RbfSpec rs;
      rs.max_points = cfg.rbf_max_points;
      models.emplace_back(name, rbf_predictor(rs));
    } else {
      ModelConfig mcfg;
      try {
        mcfg = cfg.model_config(name);
      } catch (const std::exception& e) {
        throw CliError(2, e.what());
      }
      fs::path ckpath = cli_detail::checkpoint_path(cfg, out_root, name);
      if (!fs::exists(ckpath))
        throw CliError(3, "no checkpoint for model '" + name + "' at " + ckpath.string());
      auto ck = std::make_shared<io::Checkpoint>(io::read_checkpoint(ckpath));
      held.push_back(ck);
      models.emplace_back(name, neural_predictor(ck->params, mcfg));
    }
  }

  EvalReport rep;
  try {
    rep = evaluate(ds, models, cfg.dataset.mu);
  } catch (const std::exception& e) {
    throw CliError(4, e.what());
  }
  fs::path rdir = out_root / cfg.dataset.task / "reports";
  try {
    io::write_reports(rdir, rep);
  } catch (const std::exception& e) {
    throw CliError(3, e.what());
  }
  log << rep.table();
  log << "reports written to " << rdir.string() << "\n";
  return 0;
}

inline int cmd_render(const RunConfig& cfg, const io::fs::path& data_root,
                      const io::fs::path& out_root, std::ostream& log) {
  namespace fs = io::fs;
  cli_detail::thread_cap();
  Dataset ds = cli_detail::load_dataset_checked(cfg, data_root);

  const FlowSample* sample = nullptr;
  for (const auto& s : ds.test)
    if (s.id == cfg.render_sample) sample = &s;
  for (const auto& s : ds.train)
    if (s.id == cfg.render_sample) sample = &s;
  if (!sample) throw CliError(3, "sample '" + cfg.render_sample + "' not found in dataset");

  Tensor u;
  const std::string& model = cfg.render_model;
  if (model == "truth") {
    u = sample->target.velocity;
  } else if (model == "linear") {
    u = linear_predictor()(*sample);
  } else if (model == "rbf") {
    u = rbf_predictor()(*sample);
  } else {
    ModelConfig mcfg;
    try {
      mcfg = cfg.model_config(model);
    } catch (const std::exception& e) {
      throw CliError(2, e.what());
    }
    fs::path ckpath = cli_detail::checkpoint_path(cfg, out_root, model);
    if (!fs::exists(ckpath))
      throw CliError(3, "no checkpoint for model '" + model + "' at " + ckpath.string());
    io::Checkpoint ck = io::read_checkpoint(ckpath);
    u = neural_predictor(ck.params, mcfg)(*sample);
  }

  FlowField f;
  f.grid = sample->target.grid;
  f.times = sample->target.times;
  f.velocity = u;
  f.velocity.shape = sample->target.velocity.shape;

  int axis = cfg.render_axis == "x" ? 0 : cfg.render_axis == "y" ? 1 : 2;
  int64_t slice = cfg.render_slice >= 0 ? cfg.render_slice : f.grid.dims[size_t(axis)] / 2;
  int64_t t = cfg.render_timestep;
  fs::path dir = out_root / cfg.dataset.task / "render" /
                 (cfg.render_sample + "_" + model + "_t" + std::to_string(t) + "_" +
                  cfg.render_axis + std::to_string(slice));
  try {
    fs::create_directories(dir);
    const char* names[3] = {"u.png", "v.png", "w.png"};
    for (int c = 0; c < 3; ++c)
      write_png(dir / names[c], render_slice(f, c, t, axis, slice));
    WssField w = compute_wss(f, *sample->geom, sample->mesh, cfg.dataset.mu);
    write_png(dir / "wss.png", render_wss(w, sample->mesh, f.grid, t, axis));
  } catch (const std::out_of_range& e) {
    throw CliError(2, e.what());
  } catch (const std::exception& e) {
    throw CliError(3, e.what());
  }
  log << "wrote 4 images to " << dir.string() << "\n";
  return 0;
}

/// Parsed command line; paths are resolved relative to the config file.
struct CliArgs {
  std::string command;
  std::string config_path;
  std::string model;  // optional override
  std::string task;   // optional override
  int64_t seed = -1;  // optional override
  bool force = false;
};

inline int run_cli(const CliArgs& args, std::ostream& log, std::ostream& err) {
  namespace fs = io::fs;
  try {
    RunConfig cfg;
    try {
      cfg = parse_config(io::read_file(args.config_path));
      if (!args.task.empty()) cfg.dataset.task = args.task;
      if (args.seed >= 0) {
        cfg.dataset.seed = uint64_t(args.seed);
        cfg.train.seed = uint64_t(args.seed);
      }
      if (!args.task.empty()) TaskSpec::parse(cfg.dataset.task, cfg.dataset.T);
    } catch (const CliError&) {
      throw;
    } catch (const std::exception& e) {
      throw CliError(2, e.what());
    }
    fs::path base = fs::absolute(fs::path(args.config_path)).parent_path();
    fs::path data_root = base / cfg.data_root;
    fs::path out_root = base / cfg.out_root;

    if (args.command == "gen") return cmd_gen(cfg, data_root, args.force, log);
    if (args.command == "train") {
      std::string kind = args.model.empty() ? cfg.model_kind : args.model;
      return cmd_train(cfg, data_root, out_root, kind, log);
    }
    if (args.command == "eval") {
      if (!args.model.empty()) cfg.eval_models = {args.model};
      return cmd_eval(cfg, data_root, out_root, log);
    }
    if (args.command == "render") {
      if (!args.model.empty()) cfg.render_model = args.model;
      return cmd_render(cfg, data_root, out_root, log);
    }
    throw CliError(2, "unknown command '" + args.command + "' (expected gen|train|eval|render)");
  } catch (const CliError& e) {
    err << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace lofno
