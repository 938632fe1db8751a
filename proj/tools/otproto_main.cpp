// otproto: command-line driver for the prototype-learning pipeline.
//
//   otproto synth          planted-anomaly dataset (grids, masks, manifest)
//   otproto train          learn global and local prototype banks per scale
//   otproto infer          anomaly maps and image scores for a split
//   otproto eval           image/pixel AU-ROC and AU-sPRO per category and tag
//   otproto export-protos  training feature closest to every prototype
//   otproto assignments    per-cell assignments and restore recipe of one sample
//
// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
// Log lines go to stderr as "otproto <command> key=value ...".

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "otproto/error.hpp"
#include "otproto/io.hpp"
#include "otproto/learn.hpp"
#include "otproto/metrics.hpp"
#include "otproto/score.hpp"
#include "otproto/simd.hpp"
#include "otproto/synth.hpp"

namespace fs = std::filesystem;
using namespace otproto;

namespace {

// Bad invocation: mapped to exit status 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class Log {
 public:
  explicit Log(std::string command) : command_(std::move(command)) {}

  void line(const std::vector<std::pair<std::string, std::string>>& fields) const {
    std::string out = "otproto " + command_;
    for (const auto& [k, v] : fields) out += " " + k + "=" + v;
    out += "\n";
    std::cerr << out;
    if (sink_) *sink_ += out;
  }
  void capture(std::string* sink) { sink_ = sink; }

 private:
  std::string command_;
  std::string* sink_ = nullptr;
};

// ---------------------------------------------------------------------------
// Config plumbing shared by the pipeline commands

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> help{
      {"n", "prototypes per lattice cell"},
      {"eta", "EMA momentum of the prototype update"},
      {"alpha_local", "structural weight of the local bank"},
      {"epsilon", "entropic regularization"},
      {"max_sinkhorn_iters", "Sinkhorn iteration cap per batch"},
      {"epochs", "training epochs"},
      {"batch_size", "training grids per batch"},
      {"rng_seed", "seed for initialization and shuffling"},
      {"init_std", "std of the Gaussian prototype init"},
      {"init_mean", "mean of the Gaussian prototype init"},
      {"marginal_tol", "Sinkhorn stopping tolerance (L-inf row residual)"},
      {"log_domain", "log-sum-exp Sinkhorn iterations"},
      {"zero_vector_policy", "error | clamp"},
      {"early_stop_tol", "relative mean-cost change that stops training; 0 disables"},
      {"image_height", "anomaly map height"},
      {"image_width", "anomaly map width"},
      {"smooth_sigma", "Gaussian smoothing of the final map; 0 disables"},
      {"fpr_cap", "FPR integration limit of AU-sPRO"},
      {"workers", "threads for per-image work"},
  };
  return help;
}

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key=value configuration file");
  const io::RunConfig defaults;
  for (const auto& key : io::config_keys()) {
    auto* opt = cmd->add_option("--" + key, flags.values[key], key_help().at(key));
    opt->type_name("VALUE")->default_str(io::config_value(defaults, key));
    flags.options[key] = opt;
  }
}

struct Resolved {
  io::RunConfig cfg;
  std::set<std::string> explicit_keys;
};

// Defaults, then the config file, then command-line flags.
Resolved resolve(const ConfigFlags& flags) {
  Resolved r;
  if (!flags.config_path.empty()) {
    if (!fs::exists(flags.config_path)) {
      throw UsageError("config not found: " + flags.config_path);
    }
    const auto bytes = io::read_file(flags.config_path);
    for (const auto& [k, v] : io::parse_config_text(
             std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()))) {
      io::apply_setting(r.cfg, k, v);
      r.explicit_keys.insert(k);
    }
  }
  for (const auto& [key, opt] : flags.options) {
    if (opt->count() > 0) {
      io::apply_setting(r.cfg, key, flags.values.at(key));
      r.explicit_keys.insert(key);
    }
  }
  if (r.cfg.workers == 0) throw Error(ErrorCode::InvalidConfig, "workers must be >= 1");
  return r;
}

// The manifest may carry the image size; explicit settings win.
void adopt_image_size(Resolved& r, const io::DatasetManifest& m) {
  if (m.image_height && !r.explicit_keys.count("image_height")) r.cfg.image_height = *m.image_height;
  if (m.image_width && !r.explicit_keys.count("image_width")) r.cfg.image_width = *m.image_width;
}

io::DatasetManifest open_manifest(const std::string& path) {
  if (path.empty()) throw UsageError("--manifest is required");
  if (!fs::exists(path)) throw UsageError("manifest not found: " + path);
  return io::load_manifest(path);
}

// Runs fn(i) for i in [0, count) on `workers` threads. Exceptions are
// rethrown for the lowest failing index so errors do not depend on timing.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

fs::path checkpoint_path(const fs::path& dir, int scale, bool local) {
  return dir / ("protos_scale" + std::to_string(scale) + (local ? "_local" : "_global") + ".prdt");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::string kind = "logical";
  std::string scales = "2";
  SynthSpec spec;
};

int run_synth(const SynthArgs& args) {
  if (args.out.empty()) throw UsageError("--out is required");
  SynthSpec spec = args.spec;
  if (args.kind == "logical") {
    spec.kind = AnomalyKind::Logical;
  } else if (args.kind == "structural") {
    spec.kind = AnomalyKind::Structural;
  } else {
    throw UsageError("--kind must be logical or structural");
  }
  spec.scales.clear();
  std::stringstream ss(args.scales);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      std::size_t used = 0;
      spec.scales.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("--scales expects comma-separated integers, got '" + args.scales + "'");
    }
  }
  const SynthDataset data = synth_dataset(spec);
  const auto manifest = write_synth_dataset(data, args.out);
  Log("synth").line({{"out", args.out},
                     {"kind", args.kind},
                     {"samples", std::to_string(manifest.samples.size())},
                     {"scales", args.scales},
                     {"seed", std::to_string(spec.seed)}});
  return 0;
}

// ---------------------------------------------------------------------------
// train

std::vector<ScaleData> load_split(const io::DatasetManifest& m, io::Split split,
                                  std::size_t workers) {
  const auto samples = m.split(split);
  if (samples.empty()) {
    throw Error(ErrorCode::EmptyDataset,
                std::string(split == io::Split::Train ? "train" : "test") + " split is empty");
  }
  std::vector<ScaleData> data;
  for (int scale : m.scales()) {
    ScaleData sd{scale, {}};
    std::vector<std::optional<FeatureGrid>> grids(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
      FeatureGrid g = io::read_feature_grid(samples[i]->grids.at(scale));
      if (g.scale_id() != scale) {
        throw Error(ErrorCode::DimMismatch, "grid of '" + samples[i]->id + "' is tagged scale " +
                                                std::to_string(g.scale_id()) + ", manifest says " +
                                                std::to_string(scale));
      }
      grids[i] = std::move(g);
    });
    for (auto& g : grids) sd.grids.push_back(std::move(*g));
    data.push_back(std::move(sd));
  }
  return data;
}

void save_checkpoints(const fs::path& out, const TrainState& state, const TrainConfig& cfg) {
  const std::string rng = io::serialize_rng(state.rng);
  for (const auto& bank : state.banks) {
    io::Checkpoint ck{bank.protos, static_cast<float>(cfg.eta), static_cast<float>(cfg.epsilon),
                      static_cast<std::uint32_t>(state.epoch), rng};
    io::write_checkpoint(checkpoint_path(out, bank.protos.scale_id(), bank.protos.alpha() > 0.0),
                         ck);
  }
}

// Rebuilds the training state from the checkpoints of an interrupted run.
TrainState resume_state(const fs::path& out, const std::vector<ScaleData>& data,
                        const TrainConfig& cfg) {
  TrainState fresh = init_train_state(data, cfg);
  TrainState state;
  std::optional<std::uint32_t> epoch;
  std::string rng;
  for (const auto& bank : fresh.banks) {
    const int scale = bank.protos.scale_id();
    const bool local = bank.protos.alpha() > 0.0;
    const fs::path path = checkpoint_path(out, scale, local);
    if (!fs::exists(path)) throw Error(ErrorCode::NotFound, "cannot resume: missing " + path.string());
    io::Checkpoint ck = io::read_checkpoint(path);
    const auto& p = ck.protos;
    if (p.per_cell() != cfg.n || p.height() != bank.protos.height() ||
        p.width() != bank.protos.width() || p.dim() != bank.protos.dim() ||
        p.alpha() != bank.protos.alpha() || ck.eta != static_cast<float>(cfg.eta) ||
        ck.epsilon != static_cast<float>(cfg.epsilon)) {
      throw Error(ErrorCode::InvalidConfig,
                  "cannot resume: " + path.string() + " was written with different settings");
    }
    if (epoch && (*epoch != ck.epoch || rng != ck.rng_state)) {
      throw Error(ErrorCode::InvalidConfig, "cannot resume: checkpoints are from different epochs");
    }
    epoch = ck.epoch;
    rng = ck.rng_state;
    state.banks.push_back({std::move(ck.protos), {}});
  }
  state.epoch = *epoch;
  state.rng = io::deserialize_rng(rng);
  return state;
}

int run_train(const std::string& manifest_path, const std::string& out_dir, bool resume,
              const ConfigFlags& flags) {
  if (out_dir.empty()) throw UsageError("--out is required");
  Resolved r = resolve(flags);
  const TrainConfig& cfg = r.cfg.train;
  cfg.validate();
  const auto manifest = open_manifest(manifest_path);
  const auto data = load_split(manifest, io::Split::Train, r.cfg.workers);

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::string log_text;
  Log log("train");
  log.capture(&log_text);
  const fs::path log_path = out / "train.log";
  if (resume && fs::exists(log_path)) {
    const auto prev = io::read_file(log_path);
    log_text.assign(prev.begin(), prev.end());
  }

  TrainState state = resume ? resume_state(out, data, cfg) : init_train_state(data, cfg);
  log.line({{"category", manifest.category},
            {"samples", std::to_string(data.front().grids.size())},
            {"scales", std::to_string(data.size())},
            {"banks", std::to_string(state.banks.size())},
            {"start_epoch", std::to_string(state.epoch)},
            {"epochs", std::to_string(cfg.epochs)},
            {"simd", std::string(simd::to_string(simd::active().backend))}});

  auto on_epoch = [&](const TrainState& s) {
    for (const auto& bank : s.banks) {
      log.line({{"epoch", std::to_string(s.epoch)},
                {"scale", std::to_string(bank.protos.scale_id())},
                {"bank", bank.protos.alpha() > 0.0 ? "local" : "global"},
                {"alpha", fmt(bank.protos.alpha())},
                {"mean_cost", fmt(bank.diagnostics.mean_cost.back())},
                {"converged", fmt(bank.diagnostics.converged_fraction.back())}});
    }
    save_checkpoints(out, s, cfg);
    io::write_text(log_path, log_text);
  };
  train(state, data, cfg, on_epoch);
  if (state.stopped_early) log.line({{"stopped_early", "true"}, {"epoch", std::to_string(state.epoch)}});
  // Covers the case where no epoch ran (already complete on resume).
  save_checkpoints(out, state, cfg);
  log.line({{"done", "true"}, {"out", out.string()}});
  io::write_text(log_path, log_text);
  return 0;
}

// ---------------------------------------------------------------------------
// Loading banks for inference

struct ScaleBanks {
  int scale = 0;
  std::optional<PrototypeSet> global;
  std::optional<PrototypeSet> local;
};

std::vector<ScaleBanks> load_banks(const fs::path& dir, const std::vector<int>& scales,
                                   const std::string& which) {
  if (which != "both" && which != "global" && which != "local") {
    throw UsageError("--banks must be both, global or local");
  }
  std::vector<ScaleBanks> out;
  for (int scale : scales) {
    ScaleBanks sb{scale, {}, {}};
    for (bool local : {false, true}) {
      if ((local && which == "global") || (!local && which == "local")) continue;
      const fs::path path = checkpoint_path(dir, scale, local);
      if (!fs::exists(path)) {
        throw Error(ErrorCode::NotFound, "no " + std::string(local ? "local" : "global") +
                                             " checkpoint for scale " + std::to_string(scale) +
                                             " (" + path.string() + ")");
      }
      PrototypeSet p = io::read_checkpoint(path).protos;
      if (p.scale_id() != scale) {
        throw Error(ErrorCode::DimMismatch, path.string() + " holds scale " +
                                                std::to_string(p.scale_id()) + ", expected " +
                                                std::to_string(scale));
      }
      (local ? sb.local : sb.global) = std::move(p);
    }
    out.push_back(std::move(sb));
  }
  return out;
}

void check_grid(const FeatureGrid& g, const PrototypeSet& p, const std::string& id) {
  if (g.height() != p.height() || g.width() != p.width() || g.dim() != p.dim()) {
    throw Error(ErrorCode::DimMismatch,
                "scale " + std::to_string(p.scale_id()) + ": grid of '" + id + "' is " +
                    std::to_string(g.height()) + "x" + std::to_string(g.width()) + "x" +
                    std::to_string(g.dim()) + ", checkpoint expects " +
                    std::to_string(p.height()) + "x" + std::to_string(p.width()) + "x" +
                    std::to_string(p.dim()));
  }
}

std::vector<const io::ManifestSample*> select_split(const io::DatasetManifest& m,
                                                    const std::string& split) {
  if (split == "test") return m.split(io::Split::Test);
  if (split == "train") return m.split(io::Split::Train);
  if (split == "all") {
    std::vector<const io::ManifestSample*> all;
    for (const auto& s : m.samples) all.push_back(&s);
    return all;
  }
  throw UsageError("--split must be test, train or all");
}

// ---------------------------------------------------------------------------
// infer

int run_infer(const std::string& manifest_path, const std::string& ckpt_dir,
              const std::string& out_dir, const std::string& banks, const std::string& split,
              const ConfigFlags& flags) {
  if (out_dir.empty()) throw UsageError("--out is required");
  if (ckpt_dir.empty()) throw UsageError("--checkpoints is required");
  Resolved r = resolve(flags);
  const auto manifest = open_manifest(manifest_path);
  adopt_image_size(r, manifest);
  const auto& cfg = r.cfg;
  const auto samples = select_split(manifest, split);
  const auto bank_sets = load_banks(ckpt_dir, manifest.scales(), banks);

  const fs::path out(out_dir);
  std::vector<float> image_scores(samples.size());
  parallel_for(samples.size(), cfg.workers, [&](std::size_t i) {
    const auto& s = *samples[i];
    std::vector<ScaleFields> fields;
    for (const auto& sb : bank_sets) {
      const FeatureGrid g = io::read_feature_grid(s.grids.at(sb.scale));
      std::optional<ScoreField> global, local;
      if (sb.global) {
        check_grid(g, *sb.global, s.id);
        global = score_grid(g, *sb.global, cfg.train.zero_vectors).field;
      }
      if (sb.local) {
        check_grid(g, *sb.local, s.id);
        local = score_grid(g, *sb.local, cfg.train.zero_vectors).field;
      }
      // A single bank stands in for both halves of the per-scale mean.
      fields.push_back({global ? *global : *local, local ? *local : *global});
    }
    const AnomalyMap map = aggregate(fields, cfg.image_height, cfg.image_width, cfg.smooth_sigma);
    io::write_anomaly_map(out / "maps" / (s.id + ".amap"), map);
    image_scores[i] = map.image_score();
  });

  std::string table = "image_id\timage_score\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    table += samples[i]->id + "\t" + fmt(image_scores[i]) + "\n";
  }
  io::write_text(out / "scores.tsv", table);
  Log("infer").line({{"category", manifest.category},
                     {"split", split},
                     {"images", std::to_string(samples.size())},
                     {"banks", banks},
                     {"image_size", std::to_string(cfg.image_height) + "x" +
                                        std::to_string(cfg.image_width)},
                     {"out", out.string()}});
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int run_eval(const std::vector<std::string>& manifests, const std::vector<std::string>& map_dirs,
             const std::string& out_dir, const ConfigFlags& flags) {
  if (out_dir.empty()) throw UsageError("--out is required");
  if (manifests.empty()) throw UsageError("--manifest is required");
  if (map_dirs.size() != manifests.size()) {
    throw UsageError("give one --maps directory per --manifest");
  }
  const Resolved r = resolve(flags);
  const double cap = r.cfg.fpr_cap;
  Log log("eval");

  std::vector<CategoryReport> reports;
  for (std::size_t c = 0; c < manifests.size(); ++c) {
    const auto manifest = open_manifest(manifests[c]);
    const auto samples = manifest.split(io::Split::Test);
    if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "test split is empty");
    std::vector<std::optional<AnomalyMap>> maps(samples.size());
    std::vector<EvalSample> eval(samples.size());
    parallel_for(samples.size(), r.cfg.workers, [&](std::size_t i) {
      const auto& s = *samples[i];
      const fs::path path = fs::path(map_dirs[c]) / (s.id + ".amap");
      if (!fs::exists(path)) {
        throw Error(ErrorCode::NotFound, "no anomaly map for '" + s.id + "' (" + path.string() + ")");
      }
      maps[i] = io::read_anomaly_map(path);
      Mask mask = s.mask ? io::read_mask(*s.mask)
                         : Mask{maps[i]->height(), maps[i]->width(),
                                std::vector<std::uint8_t>(maps[i]->height() * maps[i]->width(), 0)};
      auto regions = extract_regions(mask, s.saturation);
      eval[i] = {s.id, s.tag, nullptr, std::move(mask), std::move(regions)};
    });
    for (std::size_t i = 0; i < samples.size(); ++i) eval[i].map = &*maps[i];
    reports.push_back(evaluate_category(manifest.category, eval, cap));
    log.line({{"category", manifest.category}, {"images", std::to_string(samples.size())}});
  }

  const std::string text = format_report_text(reports, cap);
  const fs::path out(out_dir);
  io::write_text(out / "report.txt", text);
  io::write_text(out / "report.kv", format_report_kv(reports, cap));
  std::cout << text;
  log.line({{"categories", std::to_string(reports.size())}, {"out", out.string()}});
  return 0;
}

// ---------------------------------------------------------------------------
// export-protos and assignments

struct TrainIndex {
  std::vector<ScaleData> data;
  std::vector<std::string> ids;
};

TrainIndex load_train_index(const io::DatasetManifest& m, std::size_t workers) {
  TrainIndex t{load_split(m, io::Split::Train, workers), {}};
  for (const auto* s : m.split(io::Split::Train)) t.ids.push_back(s->id);
  return t;
}

std::vector<Provenance> provenance_for(const TrainIndex& t, const PrototypeSet& p,
                                       ZeroVectorPolicy policy) {
  for (const auto& sd : t.data) {
    if (sd.scale_id != p.scale_id()) continue;
    std::vector<NamedGrid> named;
    for (std::size_t i = 0; i < sd.grids.size(); ++i) named.push_back({t.ids[i], &sd.grids[i]});
    return reconstruct_prototypes(p, named, policy);
  }
  throw Error(ErrorCode::NotFound, "no training grids for scale " + std::to_string(p.scale_id()));
}

int run_export(const std::string& manifest_path, const std::string& ckpt_dir,
               const std::string& out_path, const ConfigFlags& flags) {
  if (out_path.empty()) throw UsageError("--out is required");
  if (ckpt_dir.empty()) throw UsageError("--checkpoints is required");
  const Resolved r = resolve(flags);
  const auto manifest = open_manifest(manifest_path);
  const auto index = load_train_index(manifest, r.cfg.workers);
  const auto bank_sets = load_banks(ckpt_dir, manifest.scales(), "both");

  std::string table = "scale\tbank\tprototype\trow\tcol\tslot\tsample_id\tsample_row\tsample_col"
                      "\tsimilarity\n";
  std::size_t count = 0;
  for (const auto& sb : bank_sets) {
    for (const PrototypeSet* p : {&*sb.global, &*sb.local}) {
      const auto prov = provenance_for(index, *p, r.cfg.train.zero_vectors);
      const std::string bank = p->alpha() > 0.0 ? "local" : "global";
      for (std::size_t i = 0; i < prov.size(); ++i) {
        table += std::to_string(sb.scale) + "\t" + bank + "\t" + std::to_string(i) + "\t" +
                 std::to_string(p->row_of(i)) + "\t" + std::to_string(p->col_of(i)) + "\t" +
                 std::to_string(p->slot_of(i)) + "\t" + prov[i].sample_id + "\t" +
                 std::to_string(prov[i].row) + "\t" + std::to_string(prov[i].col) + "\t" +
                 fmt(prov[i].similarity) + "\n";
      }
      count += prov.size();
    }
  }
  io::write_text(out_path, table);
  Log("export-protos").line({{"prototypes", std::to_string(count)}, {"out", out_path}});
  return 0;
}

int run_assignments(const std::string& manifest_path, const std::string& ckpt_dir,
                    const std::string& sample_id, const std::string& out_dir,
                    const ConfigFlags& flags) {
  if (out_dir.empty()) throw UsageError("--out is required");
  if (ckpt_dir.empty()) throw UsageError("--checkpoints is required");
  if (sample_id.empty()) throw UsageError("--sample is required");
  const Resolved r = resolve(flags);
  const auto manifest = open_manifest(manifest_path);
  const io::ManifestSample* sample = nullptr;
  for (const auto& s : manifest.samples) {
    if (s.id == sample_id) sample = &s;
  }
  if (sample == nullptr) throw UsageError("sample '" + sample_id + "' is not in the manifest");
  const auto index = load_train_index(manifest, r.cfg.workers);
  const auto bank_sets = load_banks(ckpt_dir, manifest.scales(), "both");

  const fs::path out(out_dir);
  for (const auto& sb : bank_sets) {
    const FeatureGrid g = io::read_feature_grid(sample->grids.at(sb.scale));
    for (const PrototypeSet* p : {&*sb.global, &*sb.local}) {
      check_grid(g, *p, sample_id);
      const auto scored = score_grid(g, *p, r.cfg.train.zero_vectors);
      const auto recipe =
          restore_image_patches(scored.assignments, provenance_for(index, *p, r.cfg.train.zero_vectors));
      const std::string bank = p->alpha() > 0.0 ? "local" : "global";
      std::string table = "row\tcol\tprototype\tproto_row\tproto_col\tslot\tcost\tsample_id"
                          "\tsample_row\tsample_col\n";
      for (std::size_t c = 0; c < g.cells(); ++c) {
        const auto& a = scored.assignments.cells[c];
        const auto& src = recipe.cells[c];
        table += std::to_string(c / g.width()) + "\t" + std::to_string(c % g.width()) + "\t" +
                 std::to_string(a.prototype) + "\t" + std::to_string(a.proto_row) + "\t" +
                 std::to_string(a.proto_col) + "\t" + std::to_string(p->slot_of(a.prototype)) +
                 "\t" + fmt(a.cost) + "\t" + src.sample_id + "\t" + std::to_string(src.row) +
                 "\t" + std::to_string(src.col) + "\n";
      }
      io::write_text(out / (sample_id + "_scale" + std::to_string(sb.scale) + "_" + bank + ".tsv"),
                     table);
    }
  }
  Log("assignments").line({{"sample", sample_id},
                           {"scales", std::to_string(bank_sets.size())},
                           {"out", out.string()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic-OT prototype learning for anomaly detection on feature grids", "otproto"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a planted-anomaly dataset");
  synth->add_option("--out", synth_args.out, "Output directory")->required();
  synth->add_option("--kind", synth_args.kind, "logical | structural")->capture_default_str();
  synth->add_option("--scales", synth_args.scales, "Comma-separated scale ids; each halves the grid")
      ->capture_default_str();
  synth->add_option("--clusters", synth_args.spec.clusters, "Horizontal bands of cluster means")
      ->capture_default_str();
  synth->add_option("--grid_height", synth_args.spec.height, "Grid height of the first scale")
      ->capture_default_str();
  synth->add_option("--grid_width", synth_args.spec.width, "Grid width of the first scale")
      ->capture_default_str();
  synth->add_option("--dim", synth_args.spec.dim, "Feature dimension")->capture_default_str();
  synth->add_option("--noise", synth_args.spec.noise, "Std of per-cell Gaussian noise")
      ->capture_default_str();
  synth->add_option("--train_count", synth_args.spec.train_count, "Training grids")
      ->capture_default_str();
  synth->add_option("--test_count", synth_args.spec.test_count, "Test grids; the first half are good")
      ->capture_default_str();
  synth->add_option("--seed", synth_args.spec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--image_height", synth_args.spec.image_height, "Mask height")
      ->capture_default_str();
  synth->add_option("--image_width", synth_args.spec.image_width, "Mask width")
      ->capture_default_str();
  synth->add_option("--category", synth_args.spec.category, "Category name")->capture_default_str();

  std::string manifest, out, checkpoints, banks = "both", split = "test", sample;
  bool resume = false;
  std::vector<std::string> eval_manifests, eval_maps;

  ConfigFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Learn global and local prototype banks");
  train_cmd->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
  train_cmd->add_option("--out", out, "Checkpoint directory")->required();
  train_cmd->add_flag("--resume", resume, "Continue from the checkpoints in --out");
  add_config_flags(train_cmd, train_flags);

  ConfigFlags infer_flags;
  auto* infer = app.add_subcommand("infer", "Write anomaly maps and image scores");
  infer->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
  infer->add_option("--checkpoints", checkpoints, "Directory written by train")->required();
  infer->add_option("--out", out, "Output directory (maps/ and scores.tsv)")->required();
  infer->add_option("--banks", banks, "both | global | local")->capture_default_str();
  infer->add_option("--split", split, "test | train | all")->capture_default_str();
  add_config_flags(infer, infer_flags);

  ConfigFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "Compute AU-ROC and AU-sPRO reports");
  eval->add_option("--manifest", eval_manifests, "Dataset manifest; repeat per category")
      ->required();
  eval->add_option("--maps", eval_maps, "Map directory; one per --manifest")->required();
  eval->add_option("--out", out, "Report directory")->required();
  add_config_flags(eval, eval_flags);

  ConfigFlags export_flags;
  auto* exp = app.add_subcommand("export-protos", "Closest training feature of every prototype");
  exp->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
  exp->add_option("--checkpoints", checkpoints, "Directory written by train")->required();
  exp->add_option("--out", out, "Output TSV file")->required();
  add_config_flags(exp, export_flags);

  ConfigFlags assign_flags;
  auto* assign = app.add_subcommand("assignments", "Per-cell prototype assignments of one sample");
  assign->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
  assign->add_option("--checkpoints", checkpoints, "Directory written by train")->required();
  assign->add_option("--sample", sample, "Sample id")->required();
  assign->add_option("--out", out, "Output directory")->required();
  add_config_flags(assign, assign_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*synth) return run_synth(synth_args);
    if (*train_cmd) return run_train(manifest, out, resume, train_flags);
    if (*infer) return run_infer(manifest, checkpoints, out, banks, split, infer_flags);
    if (*eval) return run_eval(eval_manifests, eval_maps, out, eval_flags);
    if (*exp) return run_export(manifest, checkpoints, out, export_flags);
    if (*assign) return run_assignments(manifest, checkpoints, sample, out, assign_flags);
  } catch (const UsageError& e) {
    std::cerr << "otproto " << command << " error=usage message=\"" << e.what() << "\"\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "otproto " << command << " error=" << to_string(e.code()) << " message=\""
              << e.what() << "\"\n";
    return e.code() == ErrorCode::InvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "otproto " << command << " error=internal message=\"" << e.what() << "\"\n";
    return 1;
  }
  return 2;
}
