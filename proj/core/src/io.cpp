#include "splatct/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "splatct/error.hpp"

namespace splatct::io {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const char* magic) { out_.append(magic, 8); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void f32(double v) { raw(to_little(static_cast<float>(v))); }
  void bytes(const std::string& s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  template <class T>
  void raw(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, const char* magic) : bytes_(bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 8, magic) != 0)
      throw ParseError(std::string("bad magic, expected ") + magic);
    pos_ = 8;
  }
  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  double f32() { return static_cast<double>(to_little(raw<float>())); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f32_block(std::vector<double>& out, std::size_t n) {
    need(n * 4);
    out.resize(n);
    for (auto& v : out) v = f32();
  }
  void finish() const {
    if (pos_ != bytes_.size()) throw ParseError("trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("file is truncated");
  }
  template <class T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void write_dims(Writer& w, const GridDims& d, const Vec3& extent) {
  w.u32(d.nx);
  w.u32(d.ny);
  w.u32(d.nz);
  for (int a = 0; a < 3; ++a) w.f32(extent[a]);
}

std::pair<GridDims, Vec3> read_dims(Reader& r) {
  GridDims d;
  d.nx = static_cast<int>(r.u32());
  d.ny = static_cast<int>(r.u32());
  d.nz = static_cast<int>(r.u32());
  Vec3 e;
  for (int a = 0; a < 3; ++a) e[a] = r.f32();
  if (d.nx < 1 || d.ny < 1 || d.nz < 1) throw ParseError("grid dims must be positive");
  if (!(e.minCoeff() > 0.0) || !e.allFinite()) throw ParseError("extent must be positive");
  return {d, e};
}

constexpr const char* kVolumeMagic = "XGRMVOX1";
constexpr const char* kCloudMagic = "XGRMVGS1";
constexpr const char* kProjMagic = "XGRMPRJ1";
constexpr const char* kModelMagic = "XGRMMDL1";
constexpr const char* kConfigTensor = "config";

template <class T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("missing key \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = get<T>(j, key);
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

std::vector<double> config_values(const ToyModelConfig& c) {
  return {double(c.patch_size), double(c.embed_dim),  double(c.n_encoder_layers),
          double(c.n_fusion_layers), double(c.n_heads), double(c.mlp_ratio),
          c.input_scale, double(c.detector_nu), double(c.detector_nv), c.reference_pitch};
}

ToyModelConfig config_from_values(const std::vector<double>& v) {
  if (v.size() != 10) throw ParseError("model config tensor has the wrong size");
  ToyModelConfig c;
  c.patch_size = static_cast<int>(v[0]);
  c.embed_dim = static_cast<int>(v[1]);
  c.n_encoder_layers = static_cast<int>(v[2]);
  c.n_fusion_layers = static_cast<int>(v[3]);
  c.n_heads = static_cast<int>(v[4]);
  c.mlp_ratio = static_cast<int>(v[5]);
  c.input_scale = v[6];
  c.detector_nu = static_cast<int>(v[7]);
  c.detector_nv = static_cast<int>(v[8]);
  c.reference_pitch = v[9];
  return c;
}

void write_tensor(Writer& w, const std::string& name, const std::vector<int>& shape,
                  const std::vector<double>& data) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : data) w.f32(v);
}

}  // namespace

std::string encode_volume(const VoxelVolume& vol) {
  require(vol.data.size() == vol.dims.count(), "volume data does not match its dims");
  Writer w(kVolumeMagic);
  write_dims(w, vol.dims, vol.extent);
  for (double v : vol.data) w.f32(v);
  return w.take();
}

VoxelVolume decode_volume(const std::string& bytes) {
  Reader r(bytes, kVolumeMagic);
  const auto [dims, extent] = read_dims(r);
  VoxelVolume vol(dims, extent);
  r.f32_block(vol.data, dims.count());
  r.finish();
  return vol;
}

std::string encode_cloud(const VoxGSCloud& cloud) {
  const std::size_t n = cloud.size();
  require(n == cloud.dims().count() && cloud.scale_param.size() == 3 * n &&
              cloud.rot_param.size() == 4 * n,
          "cloud parameter blocks do not match its dims");
  Writer w(kCloudMagic);
  write_dims(w, cloud.dims(), cloud.extent());
  for (double v : cloud.alpha) w.f32(v);
  for (double v : cloud.scale_param) w.f32(v);
  for (double v : cloud.rot_param) w.f32(v);
  return w.take();
}

VoxGSCloud decode_cloud(const std::string& bytes) {
  Reader r(bytes, kCloudMagic);
  const auto [dims, extent] = read_dims(r);
  VoxGSCloud cloud(dims, extent);
  const std::size_t n = dims.count();
  r.f32_block(cloud.alpha, n);
  r.f32_block(cloud.scale_param, 3 * n);
  r.f32_block(cloud.rot_param, 4 * n);
  r.finish();
  return cloud;
}

std::string encode_projections(const std::vector<Projection>& views) {
  require(!views.empty(), "no views to write");
  const int nu = views[0].nu;
  const int nv = views[0].nv;
  Writer w(kProjMagic);
  w.u32(static_cast<std::uint32_t>(views.size()));
  w.u32(nu);
  w.u32(nv);
  for (const auto& p : views) {
    require(p.nu == nu && p.nv == nv && p.data.size() == static_cast<std::size_t>(nu) * nv,
            "all views must share the detector size");
    w.f32(p.angle);
    for (double v : p.data) w.f32(v);
  }
  return w.take();
}

std::vector<Projection> decode_projections(const std::string& bytes) {
  Reader r(bytes, kProjMagic);
  const int n = static_cast<int>(r.u32());
  const int nu = static_cast<int>(r.u32());
  const int nv = static_cast<int>(r.u32());
  if (n < 1 || nu < 1 || nv < 1) throw ParseError("projection header has a zero size");
  std::vector<Projection> views;
  for (int k = 0; k < n; ++k) {
    Projection p(nu, nv, k);
    p.angle = r.f32();
    r.f32_block(p.data, static_cast<std::size_t>(nu) * nv);
    views.push_back(std::move(p));
  }
  r.finish();
  return views;
}

std::string encode_model(const ToyModel& model) {
  Writer w(kModelMagic);
  w.u32(static_cast<std::uint32_t>(model.weights.size() + 1));
  const std::vector<double> cfg = config_values(model.config);
  write_tensor(w, kConfigTensor, {static_cast<int>(cfg.size())}, cfg);
  for (const auto& [name, t] : model.weights) write_tensor(w, name, t.shape, t.data);
  return w.take();
}

ToyModel decode_model(const std::string& bytes) {
  Reader r(bytes, kModelMagic);
  const std::uint32_t count = r.u32();
  ToyModel model;
  bool have_config = false;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw ParseError("tensor rank too large in " + name);
    std::vector<int> shape(rank);
    std::size_t size = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.u32());
      size *= static_cast<std::size_t>(d);
    }
    nn::Tensor t;
    t.shape = shape;
    r.f32_block(t.data, size);
    if (name == kConfigTensor) {
      model.config = config_from_values(t.data);
      have_config = true;
    } else if (!model.weights.emplace(name, std::move(t)).second) {
      throw ParseError("duplicate tensor " + name);
    }
  }
  r.finish();
  if (!have_config) throw ParseError("model file has no config tensor");
  try {
    model.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(std::string("model file is inconsistent: ") + e.what());
  }
  return model;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes, bool overwrite) {
  require(overwrite || !std::filesystem::exists(path),
          path.string() + " exists (pass --force to overwrite)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), "write failed for " + path.string());
}

ScannerGeometry geometry_from_json(const std::string& text) {
  const json j = parse_json(text);
  ScannerGeometry g;
  g.dso = get<double>(j, "dso_mm");
  g.dsd = get<double>(j, "dsd_mm");
  const json det = get<json>(j, "detector");
  g.detector_nu = get<int>(det, "nu");
  g.detector_nv = get<int>(det, "nv");
  g.detector_du = get<double>(det, "du_mm");
  g.detector_dv = get<double>(det, "dv_mm");
  const json vol = get<json>(j, "volume");
  g.volume_dims = {get<int>(vol, "nx"), get<int>(vol, "ny"), get<int>(vol, "nz")};
  const json ext = get<json>(vol, "extent_mm");
  if (ext.is_array()) {
    const auto e = get<std::vector<double>>(vol, "extent_mm");
    if (e.size() != 3) throw ParseError("extent_mm must be a number or 3 numbers");
    g.volume_extent = Vec3(e[0], e[1], e[2]);
  } else {
    const double e = get<double>(vol, "extent_mm");
    g.volume_extent = Vec3(e, e, e);
  }
  const double deg = std::numbers::pi / 180.0;
  if (j.contains("angles_deg")) {
    for (double a : get<std::vector<double>>(j, "angles_deg")) g.angles.push_back(a * deg);
  } else if (j.contains("n_views")) {
    double arc = 360.0;
    get_opt(j, "arc_deg", arc);
    try {
      g.angles = uniform_angles(get<int>(j, "n_views"), arc * deg);
    } catch (const PreconditionError& e) {
      throw ParseError(e.what());
    }
  } else {
    throw ParseError("geometry needs angles_deg or n_views");
  }
  try {
    g.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(std::string("invalid geometry: ") + e.what());
  }
  return g;
}

std::string geometry_to_json(const ScannerGeometry& g) {
  json j;
  j["dso_mm"] = g.dso;
  j["dsd_mm"] = g.dsd;
  j["detector"] = {{"nu", g.detector_nu}, {"nv", g.detector_nv},
                   {"du_mm", g.detector_du}, {"dv_mm", g.detector_dv}};
  const Vec3& e = g.volume_extent;
  json vol = {{"nx", g.volume_dims.nx}, {"ny", g.volume_dims.ny}, {"nz", g.volume_dims.nz}};
  if (e[0] == e[1] && e[1] == e[2])
    vol["extent_mm"] = e[0];
  else
    vol["extent_mm"] = {e[0], e[1], e[2]};
  j["volume"] = vol;
  std::vector<double> deg;
  for (double a : g.angles) deg.push_back(a * 180.0 / std::numbers::pi);
  j["angles_deg"] = deg;
  return j.dump(2) + "\n";
}

ProjectionSet assemble_projections(const ScannerGeometry& geom, std::vector<Projection> views) {
  ProjectionSet set;
  set.geometry = geom;
  set.geometry.angles.clear();
  for (std::size_t k = 0; k < views.size(); ++k) {
    require(views[k].nu == geom.detector_nu && views[k].nv == geom.detector_nv,
            "projection size does not match the geometry detector");
    views[k].pose_index = static_cast<int>(k);
    set.geometry.angles.push_back(views[k].angle);
  }
  set.views = std::move(views);
  set.validate();
  return set;
}

ToyExperimentConfig toy_config_from_json(const std::string& text) {
  const json j = parse_json(text);
  ToyExperimentConfig cfg;
  if (j.contains("model")) {
    const json m = get<json>(j, "model");
    ToyModelConfig& c = cfg.model;
    get_opt(m, "patch_size", c.patch_size);
    get_opt(m, "embed_dim", c.embed_dim);
    get_opt(m, "n_encoder_layers", c.n_encoder_layers);
    get_opt(m, "n_fusion_layers", c.n_fusion_layers);
    get_opt(m, "n_heads", c.n_heads);
    get_opt(m, "mlp_ratio", c.mlp_ratio);
    get_opt(m, "input_scale", c.input_scale);
    get_opt(m, "init_seed", cfg.init_seed);
  }
  if (j.contains("train")) {
    const json t = get<json>(j, "train");
    ToyTrainConfig& c = cfg.train;
    get_opt(t, "steps", c.steps);
    get_opt(t, "view_counts", c.view_counts);
    get_opt(t, "learning_rate", c.learning_rate);
    get_opt(t, "final_lr_fraction", c.final_lr_fraction);
    get_opt(t, "beta1", c.beta1);
    get_opt(t, "beta2", c.beta2);
    get_opt(t, "weight_decay", c.weight_decay);
    get_opt(t, "seed", c.seed);
    get_opt(t, "subvolume_factor", c.subvolume_factor);
    get_opt(t, "volume_weight", c.volume_weight);
    get_opt(t, "render_weight", c.render_weight);
    get_opt(t, "lambda_l1", c.render_loss.lambda_l1);
    get_opt(t, "lambda_ssim", c.render_loss.lambda_ssim);
  }
  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(std::string("invalid training config: ") + e.what());
  }
  return cfg;
}

std::string toy_config_to_json(const ToyExperimentConfig& cfg) {
  const ToyModelConfig& m = cfg.model;
  const ToyTrainConfig& t = cfg.train;
  json j;
  j["model"] = {{"patch_size", m.patch_size},
                {"embed_dim", m.embed_dim},
                {"n_encoder_layers", m.n_encoder_layers},
                {"n_fusion_layers", m.n_fusion_layers},
                {"n_heads", m.n_heads},
                {"mlp_ratio", m.mlp_ratio},
                {"input_scale", m.input_scale},
                {"init_seed", cfg.init_seed}};
  j["train"] = {{"steps", t.steps},
                {"view_counts", t.view_counts},
                {"learning_rate", t.learning_rate},
                {"final_lr_fraction", t.final_lr_fraction},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"weight_decay", t.weight_decay},
                {"seed", t.seed},
                {"subvolume_factor", t.subvolume_factor},
                {"volume_weight", t.volume_weight},
                {"render_weight", t.render_weight},
                {"lambda_l1", t.render_loss.lambda_l1},
                {"lambda_ssim", t.render_loss.lambda_ssim}};
  return j.dump(2) + "\n";
}

std::string metrics_to_json(const MetricsReport& r) {
  json j = {{"psnr_db", r.psnr_db}, {"ssim", r.ssim}, {"mse_sum", r.mse_sum}, {"mse_mean", r.mse_mean}};
  return j.dump(2) + "\n";
}

std::string manifest_to_json(const RunManifest& m) {
  auto pairs = [](const auto& v) {
    json o = json::array();
    for (const auto& [k, val] : v) o.push_back({k, val});
    return o;
  };
  json j;
  j["command"] = m.command;
  j["options"] = pairs(m.options);
  j["inputs"] = pairs(m.inputs);
  j["outputs"] = pairs(m.outputs);
  j["seed"] = m.seed;
  j["deterministic"] = m.deterministic;
  j["version"] = m.version;
  j["timings_s"] = pairs(m.timings_s);
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  const json j = parse_json(text);
  RunManifest m;
  m.command = get<std::string>(j, "command");
  m.options = get<std::vector<std::pair<std::string, std::string>>>(j, "options");
  m.inputs = get<std::vector<std::pair<std::string, std::string>>>(j, "inputs");
  m.outputs = get<std::vector<std::pair<std::string, std::string>>>(j, "outputs");
  m.seed = get<std::uint64_t>(j, "seed");
  m.deterministic = get<bool>(j, "deterministic");
  m.version = get<std::string>(j, "version");
  m.timings_s = get<std::vector<std::pair<std::string, double>>>(j, "timings_s");
  return m;
}

std::string encode_pgm_slice(const VoxelVolume& vol, int z, double lo, double hi) {
  require(z >= 0 && z < vol.dims.nz, "slice index out of range");
  require(hi > lo, "PGM window must have hi > lo");
  std::string out = "P5\n" + std::to_string(vol.dims.nx) + " " + std::to_string(vol.dims.ny) + "\n65535\n";
  for (int y = 0; y < vol.dims.ny; ++y)
    for (int x = 0; x < vol.dims.nx; ++x) {
      const double t = std::clamp((vol.at(x, y, z) - lo) / (hi - lo), 0.0, 1.0);
      const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
      out.push_back(static_cast<char>(v >> 8));  // PGM samples are big-endian
      out.push_back(static_cast<char>(v & 0xff));
    }
  return out;
}

std::string trace_csv(const std::vector<double>& values, const std::string& column) {
  std::ostringstream ss;
  ss << "iteration," << column << "\n" << std::setprecision(17);
  for (std::size_t i = 0; i < values.size(); ++i) ss << i + 1 << "," << values[i] << "\n";
  return ss.str();
}

}  // namespace splatct::io
