#pragma once

#include <bit>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "lofno/train.hpp"

namespace lofno::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

// ---------------------------------------------------------------------------
// low-level helpers

inline std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// temp-file + rename so partially written artifacts are never visible
inline void atomic_write(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline uint64_t hash_file(const fs::path& path) {
  std::string b = read_file(path);
  return fnv1a(b.data(), b.size());
}

namespace detail {

template <class T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("truncated binary file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// flat tensor file (.bin): 8 x uint32 header (magic, rank, dims[6]; unused
// dims = 1), then little-endian float32 values in row-major order.

constexpr uint32_t kBinMagic = 0x424E464Cu;  // "LFNB"

inline void write_tensor(const fs::path& path, const Tensor& t) {
  if (t.complex) throw std::invalid_argument("write_tensor: complex tensors not supported in .bin");
  if (t.shape.size() > 6) throw std::invalid_argument("write_tensor: rank > 6");
  std::string out;
  detail::put<uint32_t>(out, kBinMagic);
  detail::put<uint32_t>(out, uint32_t(t.shape.size()));
  for (size_t i = 0; i < 6; ++i)
    detail::put<uint32_t>(out, i < t.shape.size() ? uint32_t(t.shape[i]) : 1u);
  for (double x : t.v) detail::put<float>(out, float(x));
  atomic_write(path, out);
}

inline Tensor read_tensor(const fs::path& path) {
  std::string in = read_file(path);
  size_t pos = 0;
  if (detail::get<uint32_t>(in, pos) != kBinMagic)
    throw std::runtime_error("bad tensor magic in " + path.string());
  uint32_t rank = detail::get<uint32_t>(in, pos);
  if (rank > 6) throw std::runtime_error("bad tensor rank in " + path.string());
  std::vector<int64_t> shape;
  for (uint32_t i = 0; i < 6; ++i) {
    uint32_t d = detail::get<uint32_t>(in, pos);
    if (i < rank) shape.push_back(int64_t(d));
  }
  Tensor t(shape);
  for (auto& x : t.v) x = double(detail::get<float>(in, pos));
  if (pos != in.size()) throw std::runtime_error("trailing bytes in " + path.string());
  return t;
}

// ---------------------------------------------------------------------------
// container: magic "LFNO", version u32, JSON header length u64, JSON header,
// raw little-endian tensor payloads. Shared by checkpoints, spectrum caches
// and anything needing named tensors + metadata in one file.

constexpr uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor t;
  bool f32 = false;  // payload precision
};

struct Container {
  std::vector<NamedTensor> tensors;
  json meta;

  const Tensor& at(const std::string& name) const {
    for (const auto& nt : tensors)
      if (nt.name == name) return nt.t;
    throw std::out_of_range("container: missing tensor " + name);
  }
  bool has(const std::string& name) const {
    for (const auto& nt : tensors)
      if (nt.name == name) return true;
    return false;
  }
};

inline void write_container(const fs::path& path, const std::vector<NamedTensor>& tensors,
                            const json& meta) {
  json header;
  header["meta"] = meta;
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& nt : tensors) {
    json e;
    e["name"] = nt.name;
    e["shape"] = nt.t.shape;
    e["dtype"] = nt.f32 ? "f32" : "f64";
    e["complex"] = nt.t.complex;
    e["offset"] = offset;
    header["tensors"].push_back(e);
    offset += uint64_t(nt.t.v.size()) * (nt.f32 ? 4 : 8);
  }
  std::string hs = header.dump();
  std::string out;
  out.append("LFNO", 4);
  detail::put<uint32_t>(out, kContainerVersion);
  detail::put<uint64_t>(out, uint64_t(hs.size()));
  out += hs;
  for (const auto& nt : tensors) {
    if (nt.f32)
      for (double x : nt.t.v) detail::put<float>(out, float(x));
    else
      for (double x : nt.t.v) detail::put<double>(out, x);
  }
  atomic_write(path, out);
}

inline Container read_container(const fs::path& path) {
  std::string in = read_file(path);
  size_t pos = 0;
  if (in.size() < 16 || in.compare(0, 4, "LFNO") != 0)
    throw std::runtime_error("bad container magic in " + path.string());
  pos = 4;
  uint32_t ver = detail::get<uint32_t>(in, pos);
  if (ver != kContainerVersion)
    throw std::runtime_error("unsupported container version " + std::to_string(ver) + " in " +
                             path.string());
  uint64_t hlen = detail::get<uint64_t>(in, pos);
  if (pos + hlen > in.size()) throw std::runtime_error("truncated container " + path.string());
  json header = json::parse(in.substr(pos, size_t(hlen)));
  pos += size_t(hlen);

  Container c;
  c.meta = header.value("meta", json::object());
  for (const auto& e : header.at("tensors")) {
    NamedTensor nt;
    nt.name = e.at("name").get<std::string>();
    nt.f32 = e.at("dtype").get<std::string>() == "f32";
    std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
    nt.t = Tensor(shape, e.value("complex", false));
    size_t p = pos + size_t(e.at("offset").get<uint64_t>());
    if (nt.f32)
      for (auto& x : nt.t.v) x = double(detail::get<float>(in, p));
    else
      for (auto& x : nt.t.v) x = detail::get<double>(in, p);
    c.tensors.push_back(std::move(nt));
  }
  return c;
}

// ---------------------------------------------------------------------------
// OBJ reader (v/f lines only; counterpart of write_obj)

inline SurfaceMesh read_obj(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  SurfaceMesh m;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      ss >> p[0] >> p[1] >> p[2];
      m.vertices.push_back(p);
    } else if (tag == "f") {
      std::array<int, 3> tri{};
      for (int a = 0; a < 3; ++a) {
        std::string tok;
        ss >> tok;
        tri[size_t(a)] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      m.faces.push_back(tri);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// dataset directory layout:
//   <root>/<split>/<sample_id>/{input.bin, target.bin, chi.bin, prior.bin,
//                               prior_lr.bin, chi_lr.bin, mesh.obj, meta.json}
// manifest.json at the root is written last and doubles as the completion
// marker; content hashes verify on load.

inline json vessel_to_json(const VesselSpec& v) {
  json j;
  j["control_points"] = json::array();
  for (const auto& p : v.control_points) j["control_points"].push_back({p[0], p[1], p[2]});
  j["base_radius"] = v.base_radius;
  j["radius_variation"] = v.radius_variation;
  j["radius_freq"] = v.radius_freq;
  j["bend_jitter"] = v.bend_jitter;
  j["radius_jitter"] = v.radius_jitter;
  if (v.bulge) {
    j["bulge"] = {{"position", v.bulge->position},
                  {"radius", v.bulge->radius},
                  {"offset", v.bulge->offset}};
  }
  return j;
}

inline VesselSpec vessel_from_json(const json& j) {
  VesselSpec v;
  for (size_t i = 0; i < 4; ++i)
    for (int a = 0; a < 3; ++a) v.control_points[i][a] = j.at("control_points")[i][size_t(a)];
  v.base_radius = j.at("base_radius");
  v.radius_variation = j.at("radius_variation");
  v.radius_freq = j.at("radius_freq");
  v.bend_jitter = j.at("bend_jitter");
  v.radius_jitter = j.at("radius_jitter");
  if (j.contains("bulge")) {
    BulgeSpec b;
    b.position = j["bulge"].at("position");
    b.radius = j["bulge"].at("radius");
    b.offset = j["bulge"].at("offset");
    v.bulge = b;
  }
  return v;
}

inline json grid_to_json(const VoxelGrid& g) {
  return json{{"dims", g.dims},
              {"spacing", {g.spacing[0], g.spacing[1], g.spacing[2]}},
              {"origin", {g.origin[0], g.origin[1], g.origin[2]}}};
}

inline VoxelGrid grid_from_json(const json& j) {
  VoxelGrid g;
  for (int a = 0; a < 3; ++a) {
    g.dims[size_t(a)] = j.at("dims")[size_t(a)];
    g.spacing[a] = j.at("spacing")[size_t(a)];
    g.origin[a] = j.at("origin")[size_t(a)];
  }
  return g;
}

inline void write_sample(const fs::path& dir, const FlowSample& s, const DatasetConfig& cfg) {
  fs::create_directories(dir);
  write_tensor(dir / "input.bin", s.input.velocity);
  write_tensor(dir / "target.bin", s.target.velocity);
  write_tensor(dir / "chi.bin", s.chi_hr.as_tensor());
  write_tensor(dir / "chi_lr.bin", s.chi_lr.as_tensor());
  Tensor prior = s.prior_hr.channels.v.empty() ? Tensor({0, 0, 0, 0}) : s.prior_hr.channels;
  Tensor prior_lr = s.prior_lr.channels.v.empty() ? Tensor({0, 0, 0, 0}) : s.prior_lr.channels;
  write_tensor(dir / "prior.bin", prior);
  write_tensor(dir / "prior_lr.bin", prior_lr);
  {
    std::ostringstream os;
    write_obj(s.mesh, os);
    atomic_write(dir / "mesh.obj", os.str());
  }
  json meta;
  meta["id"] = s.id;
  meta["task"] = s.task;
  meta["snr"] = std::isinf(s.snr) ? json("inf") : json(s.snr);
  meta["snr_convention"] = "power_ratio";
  meta["mu"] = s.mu;
  meta["units"] = {{"velocity", "m/s"}, {"wss", "Pa"}, {"time", "s"}};
  meta["seeds"] = {{"geometry", s.geometry_seed}, {"pulse", s.pulse_seed}, {"noise", s.noise_seed}};
  meta["input_shape"] = s.input.velocity.shape;
  meta["target_shape"] = s.target.velocity.shape;
  meta["input_grid"] = grid_to_json(s.input.grid);
  meta["target_grid"] = grid_to_json(s.target.grid);
  meta["input_times"] = s.input.times;
  meta["target_times"] = s.target.times;
  meta["vessel"] = vessel_to_json(cfg.vessel);
  meta["pulse"] = {{"period", cfg.pulse.period},
                   {"amplitude", cfg.pulse.amplitude},
                   {"harmonic_weights", cfg.pulse.harmonic_weights},
                   {"phase_jitter", cfg.pulse.phase_jitter}};
  atomic_write(dir / "meta.json", meta.dump(2) + "\n");
}

inline const std::vector<std::string>& sample_files() {
  static const std::vector<std::string> f{"input.bin",    "target.bin", "chi.bin",
                                          "chi_lr.bin",   "prior.bin",  "prior_lr.bin",
                                          "mesh.obj",     "meta.json"};
  return f;
}

/// Write the dataset and its manifest; the manifest lands last.
inline void write_dataset(const fs::path& root, const Dataset& ds) {
  json manifest;
  manifest["schema_version"] = 1;
  manifest["task"] = ds.task.id;
  manifest["seed"] = ds.cfg.seed;
  manifest["snr"] = std::isinf(ds.cfg.snr) ? json("inf") : json(ds.cfg.snr);
  manifest["hr_dim"] = ds.cfg.hr_dim;
  manifest["T"] = ds.cfg.T;
  manifest["Ne"] = ds.cfg.Ne;
  manifest["units"] = {{"velocity", "m/s"}, {"wss", "Pa"}, {"time", "s"}};
  manifest["samples"] = json::array();

  auto emit = [&](const std::string& split, const std::vector<FlowSample>& samples) {
    for (const auto& s : samples) {
      fs::path dir = root / split / s.id;
      write_sample(dir, s, ds.cfg);
      json entry;
      entry["id"] = s.id;
      entry["split"] = split;
      json hashes;
      for (const auto& f : sample_files()) {
        std::ostringstream h;
        h << std::hex << std::setw(16) << std::setfill('0') << hash_file(dir / f);
        hashes[f] = h.str();
      }
      entry["hashes"] = hashes;
      manifest["samples"].push_back(entry);
    }
  };
  emit("train", ds.train);
  emit("test", ds.test);
  atomic_write(root / "manifest.json", manifest.dump(2) + "\n");
}

/// Load one sample directory; the vessel geometry and wall-shear truth are
/// regenerated deterministically from the recorded spec + seeds.
inline FlowSample read_sample(const fs::path& dir) {
  json meta = json::parse(read_file(dir / "meta.json"));
  FlowSample s;
  s.id = meta.at("id");
  s.task = meta.at("task");
  s.snr = meta.at("snr").is_string() ? std::numeric_limits<double>::infinity()
                                     : meta.at("snr").get<double>();
  s.mu = meta.at("mu");
  s.geometry_seed = meta.at("seeds").at("geometry");
  s.pulse_seed = meta.at("seeds").at("pulse");
  s.noise_seed = meta.at("seeds").at("noise");

  s.input.grid = grid_from_json(meta.at("input_grid"));
  s.target.grid = grid_from_json(meta.at("target_grid"));
  s.input.times = meta.at("input_times").get<std::vector<double>>();
  s.target.times = meta.at("target_times").get<std::vector<double>>();
  s.input.velocity = read_tensor(dir / "input.bin");
  s.target.velocity = read_tensor(dir / "target.bin");

  auto chi_from = [](const Tensor& t, const VoxelGrid& g) {
    ChiField c(g);
    for (size_t i = 0; i < c.values.size(); ++i) c.values[i] = t.v[i] != 0 ? 1 : 0;
    return c;
  };
  s.chi_hr = chi_from(read_tensor(dir / "chi.bin"), s.target.grid);
  s.chi_lr = chi_from(read_tensor(dir / "chi_lr.bin"), s.input.grid);
  s.prior_hr.grid = s.target.grid;
  s.prior_hr.channels = read_tensor(dir / "prior.bin");
  s.prior_lr.grid = s.input.grid;
  s.prior_lr.channels = read_tensor(dir / "prior_lr.bin");
  s.mesh = read_obj(dir / "mesh.obj");

  VesselSpec vspec = vessel_from_json(meta.at("vessel"));
  s.geom = std::make_shared<VesselGeometry>(generate_vessel(vspec, s.geometry_seed));
  s.wss_truth = compute_wss(s.target, *s.geom, s.mesh, s.mu);
  return s;
}

/// Load a dataset directory, verifying the manifest's content hashes.
inline Dataset read_dataset(const fs::path& root) {
  fs::path mpath = root / "manifest.json";
  if (!fs::exists(mpath))
    throw std::runtime_error("no manifest at " + mpath.string() +
                             " (incomplete dataset? regenerate or pass --force)");
  json manifest = json::parse(read_file(mpath));
  if (manifest.at("schema_version").get<int>() != 1)
    throw std::runtime_error("unsupported dataset schema version");
  Dataset ds;
  ds.cfg.T = manifest.at("T");
  ds.cfg.hr_dim = manifest.at("hr_dim");
  ds.cfg.Ne = manifest.at("Ne");
  ds.cfg.seed = manifest.at("seed");
  ds.cfg.task = manifest.at("task");
  ds.cfg.snr = manifest.at("snr").is_string() ? std::numeric_limits<double>::infinity()
                                              : manifest.at("snr").get<double>();
  ds.task = TaskSpec::parse(manifest.at("task"), ds.cfg.T);
  for (const auto& entry : manifest.at("samples")) {
    std::string split = entry.at("split"), id = entry.at("id");
    fs::path dir = root / split / id;
    for (const auto& [f, want] : entry.at("hashes").items()) {
      std::ostringstream h;
      h << std::hex << std::setw(16) << std::setfill('0') << hash_file(dir / f);
      if (h.str() != want.get<std::string>())
        throw std::runtime_error("hash mismatch for " + (dir / f).string());
    }
    (split == "train" ? ds.train : ds.test).push_back(read_sample(dir));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// checkpoints: container with named parameter/optimizer tensors (f64 so a
// resumed run continues from the exact state) + JSON meta.

inline void write_checkpoint(const fs::path& path, const ModelParams& params, const AdamState& opt,
                             const std::vector<EpochRecord>& history, const json& cfg_echo,
                             int64_t epoch) {
  std::vector<NamedTensor> ts;
  for (size_t i = 0; i < params.names.size(); ++i) {
    ts.push_back({"param." + params.names[i], params.tensors[i], false});
    ts.push_back({"adam.m." + params.names[i], opt.m[i], false});
    ts.push_back({"adam.v." + params.names[i], opt.v[i], false});
  }
  json meta = cfg_echo;
  meta["epoch"] = epoch;
  meta["adam_step"] = opt.step;
  json hist = json::array();
  for (const auto& r : history) hist.push_back({{"epoch", r.epoch}, {"loss", r.mean_loss}, {"lr", r.lr}});
  meta["history"] = hist;
  uint64_t hh = 0xcbf29ce484222325ULL;
  for (const auto& r : history) hh = fnv1a(&r.mean_loss, sizeof(double), hh);
  std::ostringstream h;
  h << std::hex << hh;
  meta["history_hash"] = h.str();
  write_container(path, ts, meta);
}

struct Checkpoint {
  ModelParams params;
  AdamState opt;
  std::vector<EpochRecord> history;
  json meta;
  int64_t epoch = 0;
};

inline Checkpoint read_checkpoint(const fs::path& path) {
  Container c = read_container(path);
  Checkpoint ck;
  ck.meta = c.meta;
  ck.epoch = c.meta.at("epoch");
  ck.opt.step = c.meta.at("adam_step");
  for (const auto& nt : c.tensors) {
    if (nt.name.rfind("param.", 0) == 0) {
      ck.params.add(nt.name.substr(6), nt.t);
      ck.opt.m.push_back(c.at("adam.m." + nt.name.substr(6)));
      ck.opt.v.push_back(c.at("adam.v." + nt.name.substr(6)));
    }
  }
  for (const auto& r : c.meta.at("history"))
    ck.history.push_back({r.at("epoch").get<int64_t>(), r.at("loss").get<double>(),
                          r.at("lr").get<double>()});
  return ck;
}

// ---------------------------------------------------------------------------
// spectrum cache: container keyed by geometry hash + k + order

inline fs::path spectrum_cache_path(const fs::path& dir, uint64_t geo_hash, int k,
                                    EigenOrder order) {
  std::ostringstream os;
  os << "spectrum_" << std::hex << geo_hash << std::dec << "_k" << k << "_"
     << (order == EigenOrder::largest_nonzero ? "largest" : "smallest") << ".lfno";
  return dir / os.str();
}

inline void write_spectrum(const fs::path& path, const LaplacianSpectrum& spec) {
  Tensor lam({int64_t(spec.eigenvalues.size())});
  for (size_t i = 0; i < spec.eigenvalues.size(); ++i) lam.v[i] = spec.eigenvalues[size_t(i)];
  Tensor V({spec.eigenvectors.rows(), spec.eigenvectors.cols()});
  for (int64_t i = 0; i < spec.eigenvectors.rows(); ++i)
    for (int64_t j = 0; j < spec.eigenvectors.cols(); ++j)
      V.v[size_t(i * spec.eigenvectors.cols() + j)] = spec.eigenvectors(i, j);
  write_container(path, {{"lambda", lam, false}, {"V", V, true}}, json::object());
}

inline LaplacianSpectrum read_spectrum(const fs::path& path) {
  Container c = read_container(path);
  LaplacianSpectrum spec;
  const Tensor& lam = c.at("lambda");
  const Tensor& V = c.at("V");
  spec.eigenvalues.assign(lam.v.begin(), lam.v.end());
  spec.eigenvectors = Eigen::MatrixXd(V.shape[0], V.shape[1]);
  for (int64_t i = 0; i < V.shape[0]; ++i)
    for (int64_t j = 0; j < V.shape[1]; ++j)
      spec.eigenvectors(i, j) = V.v[size_t(i * V.shape[1] + j)];
  return spec;
}

// ---------------------------------------------------------------------------
// reports

inline void write_reports(const fs::path& dir, const EvalReport& rep) {
  fs::create_directories(dir);
  atomic_write(dir / "report.csv", rep.csv());
  atomic_write(dir / "report.txt", rep.table());
  std::ostringstream jl;
  for (const auto& row : rep.rows)
    for (const auto& se : row.per_sample) {
      json e = {{"model", row.model},  {"task", row.task},      {"sample", se.sample},
                {"err_u", se.err_u},   {"err_wss", se.err_tau}, {"wss_missing", se.wss_missing}};
      jl << e.dump() << "\n";
    }
  atomic_write(dir / "per_sample.jsonl", jl.str());
}

}  // namespace lofno::io
