#include "otproto/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "otproto/error.hpp"

namespace otproto::io {

namespace fs = std::filesystem;

namespace {

class Writer {
 public:
  void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void expect_magic(std::string_view m) {
    need(m.size());
    if (std::memcmp(in_.data() + pos_, m.data(), m.size()) != 0) {
      throw Error(ErrorCode::BadMagic, "expected magic '" + std::string(m) + "'");
    }
    pos_ += m.size();
  }
  void expect_version() {
    const std::uint16_t v = u16();
    if (v != kFormatVersion) {
      throw Error(ErrorCode::BadVersion, "unsupported format version " + std::to_string(v));
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = in_[pos_] | (in_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    const float v = std::bit_cast<float>(u32());
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteFloat, "stored float is NaN or Inf");
    return v;
  }
  std::vector<float> f32_array(std::uint64_t count) {
    need_count(count, 4);
    std::vector<float> out(count);
    for (auto& v : out) v = f32();
    return out;
  }
  std::span<const std::uint8_t> raw(std::uint64_t count) {
    need_count(count, 1);
    auto s = in_.subspan(pos_, count);
    pos_ += count;
    return s;
  }
  void expect_end() const {
    if (pos_ != in_.size()) {
      throw Error(ErrorCode::TruncatedPayload,
                  std::to_string(in_.size() - pos_) + " unexpected trailing bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorCode::TruncatedPayload, "unexpected end of data");
  }
  void need_count(std::uint64_t count, std::uint64_t width) const {
    const std::uint64_t left = in_.size() - pos_;
    if (count > left / width) throw Error(ErrorCode::TruncatedPayload, "payload is truncated");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint64_t checked_product(std::initializer_list<std::uint64_t> dims) {
  std::uint64_t p = 1;
  for (auto d : dims) {
    if (d != 0 && p > std::numeric_limits<std::uint64_t>::max() / 8 / d) {
      throw Error(ErrorCode::TruncatedPayload, "declared dimensions overflow");
    }
    p *= d;
  }
  return p;
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

std::uint16_t to_u16(int v, const char* what) {
  if (v < 0 || v > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + " does not fit in 16 bits");
  }
  return static_cast<std::uint16_t>(v);
}

}  // namespace

Bytes encode_feature_grid(const FeatureGrid& grid) {
  Writer w;
  w.magic("FGRD");
  w.u16(kFormatVersion);
  w.u16(to_u16(grid.scale_id(), "scale_id"));
  w.u32(to_u32(grid.height(), "H"));
  w.u32(to_u32(grid.width(), "W"));
  w.u32(to_u32(grid.dim(), "D"));
  for (float v : grid.features()) w.f32(v);
  return w.take();
}

FeatureGrid decode_feature_grid(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("FGRD");
  r.expect_version();
  const int scale = r.u16();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint32_t d = r.u32();
  std::vector<float> data = r.f32_array(checked_product({h, w, d}));
  r.expect_end();
  return make_feature_grid(h, w, d, std::move(data), scale);
}

Bytes encode_mask(const Mask& mask) {
  if (mask.values.size() != mask.height * mask.width) {
    throw Error(ErrorCode::DimMismatch, "mask buffer has wrong length");
  }
  Writer w;
  w.magic("AMSK");
  w.u16(kFormatVersion);
  w.u32(to_u32(mask.height, "mask height"));
  w.u32(to_u32(mask.width, "mask width"));
  w.bytes(mask.values);
  return w.take();
}

Mask decode_mask(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("AMSK");
  r.expect_version();
  Mask m;
  m.height = r.u32();
  m.width = r.u32();
  if (m.height == 0 || m.width == 0) throw Error(ErrorCode::ZeroDim, "mask is empty");
  const auto payload = r.raw(checked_product({m.height, m.width}));
  m.values.assign(payload.begin(), payload.end());
  r.expect_end();
  return m;
}

Bytes encode_checkpoint(const Checkpoint& ckpt) {
  const PrototypeSet& p = ckpt.protos;
  Writer w;
  w.magic("PRDT");
  w.u16(kFormatVersion);
  w.u16(to_u16(p.scale_id(), "scale_id"));
  w.u32(to_u32(p.per_cell(), "n"));
  w.u32(to_u32(p.height(), "H"));
  w.u32(to_u32(p.width(), "W"));
  w.u32(to_u32(p.dim(), "D"));
  w.f32(static_cast<float>(p.alpha()));
  w.f32(ckpt.eta);
  w.f32(ckpt.epsilon);
  w.u32(ckpt.epoch);
  for (float v : p.weights()) w.f32(v);
  w.u32(to_u32(ckpt.rng_state.size(), "rng state"));
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(ckpt.rng_state.data()),
                    ckpt.rng_state.size()));
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("PRDT");
  r.expect_version();
  const int scale = r.u16();
  const std::uint32_t n = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint32_t d = r.u32();
  const float alpha = r.f32();
  const float eta = r.f32();
  const float epsilon = r.f32();
  const std::uint32_t epoch = r.u32();
  std::vector<float> weights = r.f32_array(checked_product({n, h, w, d}));
  const std::uint32_t rng_len = r.u32();
  const auto rng = r.raw(rng_len);
  r.expect_end();
  return Checkpoint{
      PrototypeSet::from_weights(n, h, w, d, alpha, scale, std::move(weights)), eta, epsilon,
      epoch, std::string(rng.begin(), rng.end())};
}

Bytes encode_anomaly_map(const AnomalyMap& map) {
  Writer w;
  w.magic("AMAP");
  w.u16(kFormatVersion);
  w.u32(to_u32(map.height(), "map height"));
  w.u32(to_u32(map.width(), "map width"));
  w.f32(map.image_score());
  for (float v : map.scores()) w.f32(v);
  return w.take();
}

AnomalyMap decode_anomaly_map(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic("AMAP");
  r.expect_version();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const float stored_max = r.f32();
  std::vector<float> scores = r.f32_array(checked_product({h, w}));
  r.expect_end();
  AnomalyMap map = AnomalyMap::from_scores(h, w, std::move(scores));
  if (map.image_score() != stored_max) {
    throw Error(ErrorCode::InvalidConfig, "stored image score is not the map maximum");
  }
  return map;
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, path.string() + " not found");
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "failed reading " + path.string());
  return data;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

void write_text(const fs::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

template <class T, class Decode>
T read_with_context(const fs::path& path, Decode decode) {
  const Bytes bytes = read_file(path);
  try {
    return decode(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace

FeatureGrid read_feature_grid(const fs::path& path) {
  return read_with_context<FeatureGrid>(path, decode_feature_grid);
}
void write_feature_grid(const fs::path& path, const FeatureGrid& grid) {
  write_file(path, encode_feature_grid(grid));
}
Mask read_mask(const fs::path& path) { return read_with_context<Mask>(path, decode_mask); }
void write_mask(const fs::path& path, const Mask& mask) { write_file(path, encode_mask(mask)); }
Checkpoint read_checkpoint(const fs::path& path) {
  return read_with_context<Checkpoint>(path, decode_checkpoint);
}
void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}
AnomalyMap read_anomaly_map(const fs::path& path) {
  return read_with_context<AnomalyMap>(path, decode_anomaly_map);
}
void write_anomaly_map(const fs::path& path, const AnomalyMap& map) {
  write_file(path, encode_anomaly_map(map));
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw Error(ErrorCode::InvalidConfig, "corrupt generator state");
  return rng;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<int> DatasetManifest::scales() const {
  std::set<int> s;
  for (const auto& sample : samples) {
    for (const auto& [scale, path] : sample.grids) s.insert(scale);
  }
  return {s.begin(), s.end()};
}

std::vector<const ManifestSample*> DatasetManifest::split(Split which) const {
  std::vector<const ManifestSample*> out;
  for (const auto& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

namespace {

using nlohmann::json;

[[noreturn]] void manifest_error(const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, "manifest: " + msg);
}

int parse_scale_key(const std::string& key) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), v);
  if (ec != std::errc() || ptr != key.data() + key.size()) {
    manifest_error("scale key '" + key + "' is not an integer");
  }
  return v;
}

}  // namespace

DatasetManifest parse_manifest(std::string_view json_text, const fs::path& base_dir,
                               bool check_files) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    manifest_error(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) manifest_error("top level must be an object");

  DatasetManifest m;
  try {
    m.category = doc.value("category", std::string("default"));
    if (doc.contains("image_height")) m.image_height = doc.at("image_height").get<std::size_t>();
    if (doc.contains("image_width")) m.image_width = doc.at("image_width").get<std::size_t>();
    if (!doc.contains("samples") || !doc.at("samples").is_array()) {
      manifest_error("'samples' array is required");
    }
    for (const auto& js : doc.at("samples")) {
      ManifestSample s;
      s.id = js.at("id").get<std::string>();
      const auto split = js.at("split").get<std::string>();
      if (split == "train") {
        s.split = Split::Train;
      } else if (split == "test") {
        s.split = Split::Test;
      } else {
        manifest_error("sample '" + s.id + "' has unknown split '" + split + "'");
      }
      for (const auto& [key, value] : js.at("grids").items()) {
        s.grids[parse_scale_key(key)] = base_dir / value.get<std::string>();
      }
      if (js.contains("mask") && !js.at("mask").is_null()) {
        s.mask = base_dir / js.at("mask").get<std::string>();
      }
      s.tag = js.value("tag", std::string());
      if (!s.tag.empty() && s.tag != "good" && s.tag != "structural" && s.tag != "logical") {
        manifest_error("sample '" + s.id + "' has unknown tag '" + s.tag + "'");
      }
      if (js.contains("saturation")) {
        for (const auto& [key, value] : js.at("saturation").items()) {
          if (key == "*") {
            s.saturation.all = value.get<double>();
          } else {
            s.saturation.by_value[parse_scale_key(key)] = value.get<double>();
          }
        }
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    manifest_error(e.what());
  }

  std::set<std::string> ids;
  const std::vector<int> scales = m.scales();
  if (scales.empty()) manifest_error("no feature grids listed");
  for (const auto& s : m.samples) {
    if (!ids.insert(s.id).second) manifest_error("duplicate sample id '" + s.id + "'");
    if (s.split == Split::Train && s.mask) {
      manifest_error("training sample '" + s.id + "' must not carry a mask");
    }
    if (s.grids.size() != scales.size()) {
      manifest_error("sample '" + s.id + "' does not list every scale");
    }
    if (check_files) {
      for (const auto& [scale, path] : s.grids) {
        if (!fs::exists(path)) {
          throw Error(ErrorCode::NotFound, "manifest references missing file " + path.string());
        }
      }
      if (s.mask && !fs::exists(*s.mask)) {
        throw Error(ErrorCode::NotFound, "manifest references missing file " + s.mask->string());
      }
    }
  }
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "manifest not found: " + path.string());
  const Bytes bytes = read_file(path);
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                        path.parent_path());
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    const fs::path r = base.empty() ? p : p.lexically_relative(base);
    return (r.empty() ? p : r).generic_string();
  };
  json doc;
  doc["category"] = manifest.category;
  if (manifest.image_height) doc["image_height"] = *manifest.image_height;
  if (manifest.image_width) doc["image_width"] = *manifest.image_width;
  doc["samples"] = json::array();
  for (const auto& s : manifest.samples) {
    json js;
    js["id"] = s.id;
    js["split"] = s.split == Split::Train ? "train" : "test";
    json grids = json::object();
    for (const auto& [scale, p] : s.grids) grids[std::to_string(scale)] = rel(p);
    js["grids"] = grids;
    if (s.mask) js["mask"] = rel(*s.mask);
    if (!s.tag.empty()) js["tag"] = s.tag;
    if (!s.saturation.by_value.empty() || s.saturation.all) {
      json sat = json::object();
      for (const auto& [v, a] : s.saturation.by_value) sat[std::to_string(v)] = a;
      if (s.saturation.all) sat["*"] = *s.saturation.all;
      js["saturation"] = sat;
    }
    doc["samples"].push_back(js);
  }
  write_text(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Config

namespace {

[[noreturn]] void config_error(std::string_view key, const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, std::string(key) + ": " + msg);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    config_error(key, "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    config_error(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  config_error(key, "expected a boolean, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto size_field = [&](std::string name, auto member) {
      f.push_back({name,
                   [name, member](RunConfig& c, std::string_view v) {
                     c.*member = parse_uint(name, v);
                   },
                   [member](const RunConfig& c) { return std::to_string(c.*member); }});
    };
    auto train_size = [&](std::string name, auto member) {
      f.push_back({name,
                   [name, member](RunConfig& c, std::string_view v) {
                     c.train.*member = parse_uint(name, v);
                   },
                   [member](const RunConfig& c) { return std::to_string(c.train.*member); }});
    };
    auto train_double = [&](std::string name, auto member) {
      f.push_back({name,
                   [name, member](RunConfig& c, std::string_view v) {
                     c.train.*member = parse_double(name, v);
                   },
                   [member](const RunConfig& c) { return fmt_double(c.train.*member); }});
    };
    auto run_double = [&](std::string name, auto member) {
      f.push_back({name,
                   [name, member](RunConfig& c, std::string_view v) {
                     c.*member = parse_double(name, v);
                   },
                   [member](const RunConfig& c) { return fmt_double(c.*member); }});
    };
    train_size("n", &TrainConfig::n);
    train_double("eta", &TrainConfig::eta);
    train_double("alpha_local", &TrainConfig::alpha_local);
    train_double("epsilon", &TrainConfig::epsilon);
    train_size("max_sinkhorn_iters", &TrainConfig::max_sinkhorn_iters);
    train_size("epochs", &TrainConfig::epochs);
    train_size("batch_size", &TrainConfig::batch_size);
    train_size("rng_seed", &TrainConfig::rng_seed);
    train_double("init_std", &TrainConfig::init_std);
    train_double("init_mean", &TrainConfig::init_mean);
    train_double("marginal_tol", &TrainConfig::marginal_tol);
    f.push_back({"log_domain",
                 [](RunConfig& c, std::string_view v) {
                   c.train.log_domain = parse_bool("log_domain", v);
                 },
                 [](const RunConfig& c) { return std::string(c.train.log_domain ? "true" : "false"); }});
    f.push_back({"zero_vector_policy",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "error") {
                     c.train.zero_vectors = ZeroVectorPolicy::Error;
                   } else if (v == "clamp") {
                     c.train.zero_vectors = ZeroVectorPolicy::Clamp;
                   } else {
                     config_error("zero_vector_policy", "expected 'error' or 'clamp'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.zero_vectors == ZeroVectorPolicy::Clamp ? "clamp"
                                                                                      : "error");
                 }});
    train_double("early_stop_tol", &TrainConfig::early_stop_tol);
    size_field("image_height", &RunConfig::image_height);
    size_field("image_width", &RunConfig::image_width);
    run_double("smooth_sigma", &RunConfig::smooth_sigma);
    run_double("fpr_cap", &RunConfig::fpr_cap);
    size_field("workers", &RunConfig::workers);
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  field(key).set(cfg, trim(value));
}

std::string config_value(const RunConfig& cfg, std::string_view key) { return field(key).get(cfg); }

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig,
                  "line " + std::to_string(line_no) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    }
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

RunConfig load_config(const fs::path& path, RunConfig base) {
  if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "config not found: " + path.string());
  const Bytes bytes = read_file(path);
  for (const auto& [key, value] : parse_config_text(
           std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()))) {
    apply_setting(base, key, value);
  }
  return base;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.name + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace otproto::io
