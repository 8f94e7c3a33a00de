#pragma once

#include <map>
#include <set>

#include "lofno/io.hpp"

namespace lofno {

/// Everything a run needs, merged from one TOML-style document. Unknown
/// keys are rejected; the saved echo materializes all defaults.
struct RunConfig {
  // [paths] — resolved relative to the config file location
  std::string data_root = "data";
  std::string out_root = "runs";

  DatasetConfig dataset;

  // [model]
  std::string model_kind = "lofno";
  int64_t d_h = 32, L = 4, N_m = 8;
  int64_t edsr_blocks = 8, edsr_width = 64;
  double residual_scale = 0.1;
  std::string activation = "gelu";
  bool prior_hr_injection = true, mask_output = true;
  int64_t srcnn_n1 = 16, srcnn_n2 = 8;

  TrainConfig train;

  // [eval]
  std::vector<std::string> eval_models{"lofno", "linear"};
  int64_t rbf_max_points = 20000;

  // [render]
  std::string render_sample = "test_0";
  std::string render_model = "truth";
  std::string render_axis = "z";
  int64_t render_slice = -1;  // -1 = middle
  int64_t render_timestep = 0;

  /// Materialize the model config for a given kind and the dataset's task.
  ModelConfig model_config(const std::string& kind) const {
    TaskSpec task = TaskSpec::parse(dataset.task, dataset.T);
    ModelConfig m;
    m.kind = model_kind_from_string(kind);
    m.d_h = d_h;
    m.L = L;
    m.N_m = N_m;
    m.Ne = dataset.Ne;
    m.edsr.n_blocks = edsr_blocks;
    m.edsr.width = edsr_width;
    m.edsr.residual_scale = residual_scale;
    m.T_in = task.t_keep;
    m.T_out = dataset.T;
    m.scale = task.scale;
    m.activation = activation;
    m.prior_hr_injection = prior_hr_injection;
    m.mask_output = mask_output;
    m.srcnn_n1 = srcnn_n1;
    m.srcnn_n2 = srcnn_n2;
    m.seed = dataset.seed;
    m.validate();
    return m;
  }
};

namespace config_detail {

struct Raw {
  // section -> key -> value string
  std::map<std::string, std::map<std::string, std::string>> kv;
};

inline std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline Raw parse_toml(const std::string& text) {
  Raw raw;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside quotes
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      else if (line[i] == '#' && !quoted) {
        line = line.substr(0, i);
        break;
      }
    }
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section");
      section = strip(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = strip(line.substr(0, eq));
    std::string val = strip(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key or value");
    if (!raw.kv[section].emplace(key, val).second)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": duplicate key " + key);
  }
  return raw;
}

/// Pull typed values out of Raw, tracking consumption so leftovers can be
/// rejected as unknown keys.
struct Reader {
  Raw raw;
  std::map<std::string, std::set<std::string>> seen;

  const std::string* find(const std::string& sec, const std::string& key) {
    auto s = raw.kv.find(sec);
    if (s == raw.kv.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    seen[sec].insert(key);
    return &k->second;
  }

  void get(const std::string& sec, const std::string& key, std::string& out) {
    if (const std::string* v = find(sec, key)) {
      if (v->size() >= 2 && v->front() == '"' && v->back() == '"')
        out = v->substr(1, v->size() - 2);
      else
        out = *v;
    }
  }
  void get(const std::string& sec, const std::string& key, bool& out) {
    if (const std::string* v = find(sec, key)) {
      if (*v == "true") out = true;
      else if (*v == "false") out = false;
      else throw std::invalid_argument("config: " + sec + "." + key + " must be true/false");
    }
  }
  void get(const std::string& sec, const std::string& key, double& out) {
    if (const std::string* v = find(sec, key)) {
      if (*v == "inf" || *v == "\"inf\"") {
        out = std::numeric_limits<double>::infinity();
        return;
      }
      size_t pos = 0;
      out = std::stod(*v, &pos);
      if (pos != v->size())
        throw std::invalid_argument("config: " + sec + "." + key + ": bad number '" + *v + "'");
    }
  }
  void get(const std::string& sec, const std::string& key, int64_t& out) {
    if (const std::string* v = find(sec, key)) {
      size_t pos = 0;
      out = std::stoll(*v, &pos);
      if (pos != v->size())
        throw std::invalid_argument("config: " + sec + "." + key + ": bad integer '" + *v + "'");
    }
  }
  void get(const std::string& sec, const std::string& key, uint64_t& out) {
    int64_t t = int64_t(out);
    get(sec, key, t);
    if (t < 0) throw std::invalid_argument("config: " + sec + "." + key + " must be >= 0");
    out = uint64_t(t);
  }

  void reject_unknown() const {
    for (const auto& [sec, keys] : raw.kv) {
      auto s = seen.find(sec);
      for (const auto& [key, val] : keys) {
        if (s == seen.end() || !s->second.count(key))
          throw std::invalid_argument("config: unknown key " +
                                      (sec.empty() ? key : sec + "." + key));
      }
    }
  }
};

}  // namespace config_detail

inline RunConfig parse_config(const std::string& text) {
  config_detail::Reader r{config_detail::parse_toml(text), {}};
  RunConfig c;

  r.get("paths", "data_root", c.data_root);
  r.get("paths", "out_root", c.out_root);

  auto& d = c.dataset;
  r.get("dataset", "n_train", d.n_train);
  r.get("dataset", "n_test", d.n_test);
  r.get("dataset", "hr_dim", d.hr_dim);
  r.get("dataset", "T", d.T);
  r.get("dataset", "task", d.task);
  r.get("dataset", "snr", d.snr);
  r.get("dataset", "Ne", d.Ne);
  std::string order = d.eigen_order == EigenOrder::largest_nonzero ? "largest_nonzero"
                                                                   : "smallest_nonzero";
  r.get("dataset", "eigen_order", order);
  if (order == "largest_nonzero") d.eigen_order = EigenOrder::largest_nonzero;
  else if (order == "smallest_nonzero") d.eigen_order = EigenOrder::smallest_nonzero;
  else throw std::invalid_argument("config: dataset.eigen_order must be largest_nonzero or smallest_nonzero");
  r.get("dataset", "mesh_resolution", d.mesh_resolution);
  r.get("dataset", "gaussian_radius_factor", d.gaussian_radius_factor);
  r.get("dataset", "seed", d.seed);
  r.get("dataset", "mu", d.mu);
  r.get("dataset", "rho", d.rho);

  r.get("vessel", "base_radius", d.vessel.base_radius);
  r.get("vessel", "radius_variation", d.vessel.radius_variation);
  r.get("vessel", "radius_freq", d.vessel.radius_freq);
  r.get("vessel", "bend_jitter", d.vessel.bend_jitter);
  r.get("vessel", "radius_jitter", d.vessel.radius_jitter);
  bool bulge = d.vessel.bulge.has_value();
  r.get("vessel", "bulge", bulge);
  if (bulge) {
    BulgeSpec b = d.vessel.bulge.value_or(BulgeSpec{});
    r.get("vessel", "bulge_position", b.position);
    r.get("vessel", "bulge_radius", b.radius);
    r.get("vessel", "bulge_offset", b.offset);
    d.vessel.bulge = b;
  } else {
    d.vessel.bulge.reset();
  }

  r.get("pulse", "period", d.pulse.period);
  r.get("pulse", "amplitude", d.pulse.amplitude);
  r.get("pulse", "phase_jitter", d.pulse.phase_jitter);

  r.get("model", "kind", c.model_kind);
  r.get("model", "d_h", c.d_h);
  r.get("model", "L", c.L);
  r.get("model", "N_m", c.N_m);
  r.get("model", "edsr_blocks", c.edsr_blocks);
  r.get("model", "edsr_width", c.edsr_width);
  r.get("model", "residual_scale", c.residual_scale);
  r.get("model", "activation", c.activation);
  r.get("model", "prior_hr_injection", c.prior_hr_injection);
  r.get("model", "mask_output", c.mask_output);
  r.get("model", "srcnn_n1", c.srcnn_n1);
  r.get("model", "srcnn_n2", c.srcnn_n2);

  r.get("train", "epochs", c.train.epochs);
  r.get("train", "lr", c.train.lr);
  r.get("train", "lr_min", c.train.lr_min);
  r.get("train", "beta1", c.train.beta1);
  r.get("train", "beta2", c.train.beta2);
  r.get("train", "adam_eps", c.train.adam_eps);
  r.get("train", "eps_rel_factor", c.train.eps_rel_factor);
  r.get("train", "checkpoint_every", c.train.checkpoint_every);
  r.get("train", "seed", c.train.seed);

  std::string models;
  for (const auto& m : c.eval_models) models += (models.empty() ? "" : ",") + m;
  r.get("eval", "models", models);
  c.eval_models.clear();
  std::istringstream ms(models);
  std::string tok;
  while (std::getline(ms, tok, ','))
    if (!config_detail::strip(tok).empty()) c.eval_models.push_back(config_detail::strip(tok));
  r.get("eval", "rbf_max_points", c.rbf_max_points);

  r.get("render", "sample", c.render_sample);
  r.get("render", "model", c.render_model);
  r.get("render", "axis", c.render_axis);
  r.get("render", "slice", c.render_slice);
  r.get("render", "timestep", c.render_timestep);

  r.reject_unknown();

  TaskSpec::parse(d.task, d.T);  // validates task id and T compatibility
  if (d.task.rfind("spatial_x", 0) == 0) {
    int64_t scale = d.task.back() - '0';
    if (d.hr_dim % scale != 0)
      throw std::invalid_argument("config: hr_dim must be divisible by the spatial scale");
  }
  if (c.render_axis != "x" && c.render_axis != "y" && c.render_axis != "z")
    throw std::invalid_argument("config: render.axis must be x, y or z");
  return c;
}

/// Serialize with every default materialized; parse(serialize(c)) == c.
inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  auto str = [](const std::string& s) { return "\"" + s + "\""; };
  const auto& d = c.dataset;
  os << "[paths]\n"
     << "data_root = " << str(c.data_root) << "\n"
     << "out_root = " << str(c.out_root) << "\n\n";
  os << "[dataset]\n"
     << "n_train = " << d.n_train << "\nn_test = " << d.n_test << "\nhr_dim = " << d.hr_dim
     << "\nT = " << d.T << "\ntask = " << str(d.task) << "\nsnr = "
     << (std::isinf(d.snr) ? std::string("inf") : ([&] { std::ostringstream t; t.precision(17); t << d.snr; return t.str(); })())
     << "\nNe = " << d.Ne << "\neigen_order = "
     << str(d.eigen_order == EigenOrder::largest_nonzero ? "largest_nonzero" : "smallest_nonzero")
     << "\nmesh_resolution = " << d.mesh_resolution
     << "\ngaussian_radius_factor = " << d.gaussian_radius_factor << "\nseed = " << d.seed
     << "\nmu = " << d.mu << "\nrho = " << d.rho << "\n\n";
  os << "[vessel]\n"
     << "base_radius = " << d.vessel.base_radius
     << "\nradius_variation = " << d.vessel.radius_variation
     << "\nradius_freq = " << d.vessel.radius_freq << "\nbend_jitter = " << d.vessel.bend_jitter
     << "\nradius_jitter = " << d.vessel.radius_jitter
     << "\nbulge = " << (d.vessel.bulge ? "true" : "false") << "\n";
  if (d.vessel.bulge)
    os << "bulge_position = " << d.vessel.bulge->position
       << "\nbulge_radius = " << d.vessel.bulge->radius
       << "\nbulge_offset = " << d.vessel.bulge->offset << "\n";
  os << "\n[pulse]\n"
     << "period = " << d.pulse.period << "\namplitude = " << d.pulse.amplitude
     << "\nphase_jitter = " << d.pulse.phase_jitter << "\n\n";
  os << "[model]\n"
     << "kind = " << str(c.model_kind) << "\nd_h = " << c.d_h << "\nL = " << c.L
     << "\nN_m = " << c.N_m << "\nedsr_blocks = " << c.edsr_blocks
     << "\nedsr_width = " << c.edsr_width << "\nresidual_scale = " << c.residual_scale
     << "\nactivation = " << str(c.activation)
     << "\nprior_hr_injection = " << (c.prior_hr_injection ? "true" : "false")
     << "\nmask_output = " << (c.mask_output ? "true" : "false") << "\nsrcnn_n1 = " << c.srcnn_n1
     << "\nsrcnn_n2 = " << c.srcnn_n2 << "\n\n";
  os << "[train]\n"
     << "epochs = " << c.train.epochs << "\nlr = " << c.train.lr << "\nlr_min = " << c.train.lr_min
     << "\nbeta1 = " << c.train.beta1 << "\nbeta2 = " << c.train.beta2
     << "\nadam_eps = " << c.train.adam_eps << "\neps_rel_factor = " << c.train.eps_rel_factor
     << "\ncheckpoint_every = " << c.train.checkpoint_every << "\nseed = " << c.train.seed
     << "\n\n";
  os << "[eval]\n"
     << "models = " << str([&] {
          std::string m;
          for (const auto& x : c.eval_models) m += (m.empty() ? "" : ",") + x;
          return m;
        }())
     << "\nrbf_max_points = " << c.rbf_max_points << "\n\n";
  os << "[render]\n"
     << "sample = " << str(c.render_sample) << "\nmodel = " << str(c.render_model)
     << "\naxis = " << str(c.render_axis) << "\nslice = " << c.render_slice
     << "\ntimestep = " << c.render_timestep << "\n";
  return os.str();
}

inline io::json config_echo(const RunConfig& c) {
  io::json j;
  j["config"] = serialize_config(c);
  return j;
}

}  // namespace lofno
