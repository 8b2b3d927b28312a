#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <type_traits>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/config/toml.hpp"
#include "facet/disentangle/bvae.hpp"
#include "facet/error.hpp"
#include "facet/keypoints/frame.hpp"
#include "facet/keypoints/io.hpp"
#include "facet/translate/train.hpp"

namespace facet::config {

struct DataConfig {
  std::string x;  // directory or file of domain-X tracks; empty = <out>/synth/X
  std::string y;
  std::string format;  // jsonl | packed; empty = from each file's extension
  std::size_t landmarks = kp::kDefaultLandmarks;
  double fps = kp::kCanonicalFps;
  std::size_t clip_length = 64;
  std::size_t stride = 64;
  double split_ratio = 0.9;
  std::size_t frames_per_clip = 4;  // beta-VAE training frames sampled per clip, 0 = all
};

struct AnalysisConfig {
  std::size_t bins = 40;
  std::size_t k = 0;  // 0 = BIC scan
  std::size_t k_max = 10;
  bool include_phi = false;
  std::string split = "test";  // train | test | all
};

struct SynthConfig {
  std::size_t clip_count = 2000;
  std::size_t t = 64;
  std::size_t landmarks = kp::kDefaultLandmarks;
  double noise_std = 0.005;
  double changepoint_fraction = 0.55;
  std::size_t changepoint_jitter = 6;
  std::string plant = "default";  // default | null
  std::string format = "packed";
  std::optional<std::uint64_t> seed;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  DataConfig data;
  vae::BvaeConfig bvae;
  std::string bvae_init;  // checkpoint directory to continue from
  translate::TrainConfig translate;
  std::optional<std::uint64_t> translate_seed;
  std::string direction = "xy";
  AnalysisConfig analysis;
  SynthConfig synth;

  std::uint64_t synth_seed() const { return synth.seed.value_or(seed); }
  std::uint64_t translate_run_seed() const { return translate_seed.value_or(seed); }
};

namespace detail {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read through the size_t path");

class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("[" + name_ + "] must be a table");
  }

  std::string key_name(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    read(j_.at(key), key, out);
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    T v{};
    read(j_.at(key), key, v);
    out = v;
  }

  void ignore(const std::string& key) { used_.insert(key); }

  /// Rejects every key that no reader asked for.
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown config key '" + key_name(k) + "'");
  }

 private:
  [[noreturn]] void type_error(const std::string& key, const char* want) const {
    throw ConfigError(key_name(key) + ": expected " + want);
  }
  void read(const nlohmann::json& v, const std::string& key, std::size_t& out) const {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) type_error(key, "a non-negative integer");
    out = v.get<std::size_t>();
  }
  void read(const nlohmann::json& v, const std::string& key, double& out) const {
    if (!v.is_number()) type_error(key, "a number");
    out = v.get<double>();
  }
  void read(const nlohmann::json& v, const std::string& key, bool& out) const {
    if (!v.is_boolean()) type_error(key, "true or false");
    out = v.get<bool>();
  }
  void read(const nlohmann::json& v, const std::string& key, std::string& out) const {
    if (!v.is_string()) type_error(key, "a string");
    out = v.get<std::string>();
  }
  void read(const nlohmann::json& v, const std::string& key, std::vector<std::size_t>& out) const {
    if (!v.is_array()) type_error(key, "an array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < 0) type_error(key, "an array of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
  }

  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> used_;
};

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.out.empty()) throw ConfigError("out must not be empty");
  const DataConfig& d = c.data;
  if (!d.format.empty()) {
    try {
      kp::parse_format(d.format);
    } catch (const Error&) {
      throw ConfigError("data.format must be 'jsonl' or 'packed', got '" + d.format + "'");
    }
  }
  if (d.landmarks == 0) throw ConfigError("data.landmarks must be >= 1");
  if (!(d.fps > 0.0)) throw ConfigError("data.fps must be > 0");
  if (d.clip_length < 2) throw ConfigError("data.clip_length must be >= 2");
  if (d.stride == 0) throw ConfigError("data.stride must be >= 1");
  if (!(d.split_ratio > 0.0 && d.split_ratio < 1.0)) throw ConfigError("data.split_ratio must lie in (0, 1)");
  try {
    c.bvae.validate();
    c.translate.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (c.direction != "xy" && c.direction != "yx") throw ConfigError("translate.direction must be 'xy' or 'yx'");
  const AnalysisConfig& a = c.analysis;
  if (a.bins == 0) throw ConfigError("analysis.bins must be >= 1");
  if (a.k_max == 0) throw ConfigError("analysis.k_max must be >= 1");
  if (a.split != "train" && a.split != "test" && a.split != "all") {
    throw ConfigError("analysis.split must be 'train', 'test' or 'all'");
  }
  const SynthConfig& s = c.synth;
  if (s.plant != "default" && s.plant != "null") throw ConfigError("synth.plant must be 'default' or 'null'");
  if (s.format != "jsonl" && s.format != "packed") throw ConfigError("synth.format must be 'jsonl' or 'packed'");
  if (s.clip_count == 0) throw ConfigError("synth.clip_count must be >= 1");
  if (s.t < 2) throw ConfigError("synth.t must be >= 2");
  if (s.landmarks == 0) throw ConfigError("synth.landmarks must be >= 1");
  if (!(s.changepoint_fraction > 0.0 && s.changepoint_fraction < 1.0)) {
    throw ConfigError("synth.changepoint_fraction must lie in (0, 1)");
  }
  if (s.noise_std < 0.0) throw ConfigError("synth.noise_std must be >= 0");
}

/// Builds a RunConfig from a parsed document, rejecting unknown sections and
/// keys, then validates every field.
inline RunConfig from_json(const nlohmann::json& doc) {
  RunConfig c;
  static const std::set<std::string> sections{"data", "bvae", "translate", "analysis", "synth"};
  detail::Section root(doc, "");
  root.get("seed", c.seed);
  root.get("out", c.out);
  for (const auto& [k, v] : doc.items())
    if (sections.count(k)) root.ignore(k);
  root.finish();

  auto section = [&](const char* name) {
    static const nlohmann::json empty = nlohmann::json::object();
    return detail::Section(doc.contains(name) ? doc.at(name) : empty, name);
  };

  auto data = section("data");
  data.get("x", c.data.x);
  data.get("y", c.data.y);
  data.get("format", c.data.format);
  data.get("landmarks", c.data.landmarks);
  data.get("fps", c.data.fps);
  data.get("clip_length", c.data.clip_length);
  data.get("stride", c.data.stride);
  data.get("split_ratio", c.data.split_ratio);
  data.get("frames_per_clip", c.data.frames_per_clip);
  data.finish();

  auto bvae = section("bvae");
  bvae.get("latent_dim", c.bvae.latent_dim);
  bvae.get("hidden", c.bvae.hidden);
  bvae.get("beta", c.bvae.beta_final);
  bvae.get("warmup_fraction", c.bvae.warmup_fraction);
  bvae.get("epochs", c.bvae.epochs);
  bvae.get("batch_size", c.bvae.batch_size);
  bvae.get("lr", c.bvae.lr);
  bvae.get("eval_frames", c.bvae.eval_frames);
  bvae.get("init", c.bvae_init);
  bvae.finish();

  auto tr = section("translate");
  std::string mode = translate::to_string(c.translate.model.mode);
  std::string partition = translate::to_string(c.translate.model.partition);
  std::string form = translate::to_string(c.translate.model.form);
  tr.get("mode", mode);
  tr.get("partition", partition);
  tr.get("translator_form", form);
  tr.get("c", c.translate.model.c);
  tr.get("Q", c.translate.model.q);
  tr.get("p", c.translate.model.p);
  tr.get("entropy_weight", c.translate.model.entropy_weight);
  tr.get("disc_dropout", c.translate.model.disc_dropout);
  tr.get("lr", c.translate.lr);
  tr.get("epochs", c.translate.epochs);
  tr.get("batch_size", c.translate.batch_size);
  tr.get("metric_window", c.translate.metric_window);
  tr.get("train_generator", c.translate.train_generator);
  tr.get("direction", c.direction);
  tr.get("seed", c.translate_seed);
  tr.finish();
  c.translate.model.mode = translate::parse_gen_mode(mode);
  c.translate.model.partition = translate::parse_partition(partition);
  c.translate.model.form = translate::parse_translator_form(form);

  auto an = section("analysis");
  an.get("bins", c.analysis.bins);
  an.get("k", c.analysis.k);
  an.get("k_max", c.analysis.k_max);
  an.get("include_phi", c.analysis.include_phi);
  an.get("split", c.analysis.split);
  an.finish();

  auto sy = section("synth");
  sy.get("clip_count", c.synth.clip_count);
  sy.get("t", c.synth.t);
  sy.get("landmarks", c.synth.landmarks);
  sy.get("noise_std", c.synth.noise_std);
  sy.get("changepoint_fraction", c.synth.changepoint_fraction);
  sy.get("changepoint_jitter", c.synth.changepoint_jitter);
  sy.get("plant", c.synth.plant);
  sy.get("format", c.synth.format);
  sy.get("seed", c.synth.seed);
  sy.finish();

  c.translate.seed = c.translate_run_seed();
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return from_json(load_toml(path)); }

/// Effective configuration as JSON (stable key order), used for hashing and
/// recorded next to every artifact.
inline nlohmann::json to_json(const RunConfig& c) {
  const auto& m = c.translate.model;
  nlohmann::json j = {
      {"seed", c.seed},
      {"out", c.out},
      {"data",
       {{"x", c.data.x},
        {"y", c.data.y},
        {"format", c.data.format},
        {"landmarks", c.data.landmarks},
        {"fps", c.data.fps},
        {"clip_length", c.data.clip_length},
        {"stride", c.data.stride},
        {"split_ratio", c.data.split_ratio},
        {"frames_per_clip", c.data.frames_per_clip}}},
      {"bvae",
       {{"latent_dim", c.bvae.latent_dim},
        {"hidden", c.bvae.hidden},
        {"beta", c.bvae.beta_final},
        {"warmup_fraction", c.bvae.warmup_fraction},
        {"epochs", c.bvae.epochs},
        {"batch_size", c.bvae.batch_size},
        {"lr", c.bvae.lr},
        {"eval_frames", c.bvae.eval_frames},
        {"init", c.bvae_init}}},
      {"translate",
       {{"mode", translate::to_string(m.mode)},
        {"partition", translate::to_string(m.partition)},
        {"translator_form", translate::to_string(m.form)},
        {"c", m.c},
        {"Q", m.q},
        {"p", m.p},
        {"entropy_weight", m.entropy_weight},
        {"disc_dropout", m.disc_dropout},
        {"lr", c.translate.lr},
        {"epochs", c.translate.epochs},
        {"batch_size", c.translate.batch_size},
        {"metric_window", c.translate.metric_window},
        {"train_generator", c.translate.train_generator},
        {"direction", c.direction},
        {"seed", c.translate.seed}}},
      {"analysis",
       {{"bins", c.analysis.bins},
        {"k", c.analysis.k},
        {"k_max", c.analysis.k_max},
        {"include_phi", c.analysis.include_phi},
        {"split", c.analysis.split}}},
      {"synth",
       {{"clip_count", c.synth.clip_count},
        {"t", c.synth.t},
        {"landmarks", c.synth.landmarks},
        {"noise_std", c.synth.noise_std},
        {"changepoint_fraction", c.synth.changepoint_fraction},
        {"changepoint_jitter", c.synth.changepoint_jitter},
        {"plant", c.synth.plant},
        {"format", c.synth.format},
        {"seed", c.synth_seed()}}}};
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of everything that affects results; the output directory is left out.
inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("out");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

/// --seed replaces the run seed and every per-section seed.
inline void apply_seed_override(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.translate_seed.reset();
  c.synth.seed.reset();
  c.translate.seed = seed;
}

}  // namespace facet::config
