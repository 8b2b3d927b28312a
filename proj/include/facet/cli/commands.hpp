#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "facet/cli/artifacts.hpp"
#include "facet/discover/metrics.hpp"
#include "facet/discover/report.hpp"
#include "facet/synthbench/recovery.hpp"
#include "facet/translate/pipeline.hpp"
#include "facet/translate/train.hpp"

namespace facet::cli {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> direction;
  bool grid = false;
  std::string input, output;     // translate-clip
  std::vector<std::string> runs;  // aggregate
};

inline void note(const std::string& msg) { std::cerr << "[facet] " << msg << '\n'; }

/// Config file (or defaults when none is given) with command-line overrides,
/// validated before anything runs.
inline config::RunConfig resolve_config(const Options& o) {
  config::RunConfig c = o.config.empty() ? config::from_json(nlohmann::json::object()) : config::load_run_config(o.config);
  if (o.seed) config::apply_seed_override(c, *o.seed);
  if (o.out) c.out = *o.out;
  if (o.direction) c.direction = *o.direction;
  config::validate(c);
  return c;
}

inline bool synthetic_data(const config::RunConfig& c) { return c.data.x.empty() && c.data.y.empty(); }

inline fs::path data_path(const config::RunConfig& c, kp::Domain d) {
  const std::string& p = d == kp::Domain::x ? c.data.x : c.data.y;
  if (!p.empty()) return p;
  if (!synthetic_data(c)) throw ConfigError(std::string("data.") + (d == kp::Domain::x ? "y" : "x") + " is set but data." +
                                            (d == kp::Domain::x ? "x" : "y") + " is not");
  return Layout{c.out}.synth() / kp::domain_name(d);
}

inline std::size_t data_landmarks(const config::RunConfig& c) {
  return synthetic_data(c) ? c.synth.landmarks : c.data.landmarks;
}

inline nlohmann::json run_record(const config::RunConfig& c, const std::string& command) {
  return {{"command", command}, {"config_hash", config::config_hash(c)}, {"config", config::to_json(c)}};
}

inline kp::Domain source_domain(const std::string& direction) { return direction == "yx" ? kp::Domain::y : kp::Domain::x; }
inline kp::Domain other(kp::Domain d) { return d == kp::Domain::x ? kp::Domain::y : kp::Domain::x; }

// ---- synth ----------------------------------------------------------------------

inline synth::SynthSpec synth_spec(const config::RunConfig& c) {
  synth::SynthSpec s = c.synth.plant == "null" ? synth::null_spec(c.synth_seed()) : synth::default_spec(c.synth_seed());
  s.clip_count = c.synth.clip_count;
  s.t = c.synth.t;
  s.landmarks = c.synth.landmarks;
  s.noise_std = c.synth.noise_std;
  s.changepoint_fractions = {c.synth.changepoint_fraction};
  s.changepoint_jitter = c.synth.changepoint_jitter;
  return s;
}

inline void cmd_synth(const config::RunConfig& c) {
  const Layout L{c.out};
  synth::DomainPair pair(synth_spec(c));
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) fs::remove_all(L.synth() / kp::domain_name(d));
  note("synth: writing " + std::to_string(pair.size()) + " clips per domain to " + L.synth().string());
  synth::write_domain_pair(pair, L.synth(), kp::parse_format(c.synth.format));
  write_json_file(L.synth() / "run.json", run_record(c, "synth"));
}

// ---- prep -------------------------------------------------------------------------

inline void cmd_prep(const config::RunConfig& c) {
  const Layout L{c.out};
  ClipIndex idx;
  idx.clip_length = c.data.clip_length;
  idx.stride = c.data.stride;
  idx.landmarks = data_landmarks(c);
  idx.fps = c.data.fps;
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
    auto& refs = idx.of(d);
    for (const fs::path& f : list_tracks(data_path(c, d))) {
      const kp::Format fmt = c.data.format.empty() ? kp::format_from_path(f) : kp::parse_format(c.data.format);
      const kp::KeypointTrack track = kp::ingest_track(f, fmt, idx.landmarks);
      const std::size_t n = track.fps == idx.fps ? track.frames.size()
                                                  : kp::resample_fps(track.frames, track.fps, idx.fps).size();
      for (std::size_t s : kp::window_starts(n, idx.clip_length, idx.stride)) {
        refs.push_back({f.string(), fmt == kp::Format::jsonl ? "jsonl" : "packed", s,
                        f.stem().string() + "@" + std::to_string(s), true});
      }
    }
    if (refs.size() < 2) {
      throw DependencyError(std::string("domain ") + kp::domain_name(d) + " yields " + std::to_string(refs.size()) +
                            " clip(s) of " + std::to_string(idx.clip_length) + " frames; need at least 2");
    }
    const auto split = kp::split_indices(refs.size(), c.data.split_ratio, c.seed ^ (d == kp::Domain::x ? 0x51ULL : 0x59ULL));
    for (auto i : split.test) refs[i].train = false;
    note(std::string("prep: ") + kp::domain_name(d) + " " + std::to_string(refs.size()) + " clips (" +
         std::to_string(split.train.size()) + " train)");
  }
  kp::NormAccumulator acc;
  ClipReader reader(idx);
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y})
    for (const auto& r : idx.of(d))
      if (r.train)
        for (const auto& f : reader.load(r, d).frames) acc.add(f.points);
  fs::create_directories(L.prep());
  kp::save_norm(L.norm(), acc.finish());
  write_json_file(L.clip_index(), to_json(idx));
  write_json_file(L.prep() / "run.json", run_record(c, "prep"));
}

// ---- train-bvae -------------------------------------------------------------------

inline void cmd_train_bvae(const config::RunConfig& c) {
  const Layout L{c.out};
  require(L.clip_index(), "prep");
  require(L.norm(), "prep");
  const ClipIndex idx = load_clip_index(L.clip_index());
  const kp::NormStats norm = kp::load_norm(L.norm());
  std::optional<vae::BvaeModel> init;
  if (!c.bvae_init.empty()) init = vae::load_bvae(c.bvae_init);

  std::mt19937_64 rng(c.seed);
  std::vector<std::vector<double>> rows;
  ClipReader reader(idx);
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
    for (const auto& r : idx.of(d)) {
      if (!r.train) continue;
      const kp::Clip clip = reader.load(r, d);
      std::vector<std::size_t> pick(clip.frames.size());
      std::iota(pick.begin(), pick.end(), 0);
      if (c.data.frames_per_clip > 0 && c.data.frames_per_clip < pick.size()) {
        std::shuffle(pick.begin(), pick.end(), rng);
        pick.resize(c.data.frames_per_clip);
        std::sort(pick.begin(), pick.end());
      }
      for (auto i : pick) rows.push_back(kp::apply_normalizer(norm, clip.frames[i]));
    }
  }
  ad::Tensor frames = ad::Tensor::zeros(rows.size(), norm.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), frames.row_span(i).begin());
  rows.clear();
  rows.shrink_to_fit();
  note("train-bvae: " + std::to_string(frames.rows()) + " frames, latent_dim " + std::to_string(c.bvae.latent_dim) +
       ", " + std::to_string(c.bvae.epochs) + " epochs");

  auto res = vae::train_bvae(frames, norm, c.bvae, init ? &*init : nullptr, c.seed, [&](const vae::LossLogEntry& e) {
    note("train-bvae: epoch " + std::to_string(e.epoch) + " beta " + std::to_string(e.beta) + " recon " +
         std::to_string(e.recon) + " kl " + std::to_string(e.kl));
  });
  vae::BvaeModel m = std::move(res.model);
  m.dims = vae::active_dims(m);
  if (m.dims.active.empty()) throw DegenerateModelError("train-bvae: no active latent dimensions");
  save_bvae(L.bvae(), m, L.norm(), res.log.back());
  {
    std::ofstream os(L.bvae() / "loss.csv", std::ios::trunc);
    os << "epoch,beta,recon,kl,total\n";
    os.precision(17);
    for (const auto& e : res.log) os << e.epoch << ',' << e.beta << ',' << e.recon << ',' << e.kl << ',' << e.total << '\n';
    if (!os) throw Error("cannot write " + (L.bvae() / "loss.csv").string());
  }
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
    std::vector<vae::LatentClip> lat;
    for (const auto& r : idx.of(d)) lat.push_back(vae::encode_clip(m, reader.load(r, d)));
    save_latents(L.latents(d), lat);
  }
  write_json_file(L.bvae() / "run.json", run_record(c, "train-bvae"));
}

// ---- train-translate --------------------------------------------------------------

struct LatentSets {
  ClipIndex index;
  vae::BvaeModel bvae;
  std::array<std::vector<vae::LatentClip>, 2> latents;  // X, Y

  const std::vector<vae::LatentClip>& of(kp::Domain d) const { return latents[d == kp::Domain::x ? 0 : 1]; }
};

inline LatentSets load_latent_sets(const Layout& L) {
  require(L.clip_index(), "prep");
  require(L.bvae() / "bvae.json", "train-bvae");
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) require(L.latents(d), "train-bvae");
  LatentSets s{load_clip_index(L.clip_index()), vae::load_bvae(L.bvae()), {}};
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y})
    s.latents[d == kp::Domain::x ? 0 : 1] = load_latents(L.latents(d), s.index.of(d), d);
  return s;
}

inline translate::TranslationData translation_data(const LatentSets& s, kp::Domain src) {
  auto stack = [&](kp::Domain d, bool train) {
    std::vector<ad::Tensor> z;
    const auto& refs = s.index.of(d);
    for (std::size_t i = 0; i < refs.size(); ++i)
      if (refs[i].train == train) z.push_back(translate::flatten_clip(s.of(d)[i].latents));
    return translate::stack_clips(z);
  };
  const auto& first = s.of(src).front().latents;
  return {stack(src, true), stack(src, false), stack(other(src), true), stack(other(src), false), first.rows(), first.cols()};
}

/// Planted-translator recovery of a model trained X -> Y on synthbench clips.
inline synth::RecoveryScore synth_recovery(const config::RunConfig& c, const LatentSets& s,
                                           const translate::TranslationModel& m) {
  synth::DomainPair pair(synth_spec(c));
  const auto& refs = s.index.of(kp::Domain::x);
  const auto& lat = s.of(kp::Domain::x);
  constexpr std::size_t kEvery = 8;
  std::vector<synth::SynthClip> truth;
  std::size_t samples = 0;
  for (const auto& r : refs) {
    const std::string stem = fs::path(r.file).stem().string();
    if (stem.rfind("X_", 0) != 0) throw DependencyError("clip " + r.id + " is not a synthbench clip");
    truth.push_back(pair.get(kp::Domain::x, std::stoul(stem.substr(2))));
    if (r.start != 0 || truth.back().clip.frames.size() != m.t) throw DependencyError("synthbench clips must map 1:1 to translation clips");
    samples += (m.t + kEvery - 1) / kEvery;
  }
  ad::Tensor az = ad::Tensor::zeros(samples, m.l), af = ad::Tensor::zeros(samples, pair.spec().n_factors);
  std::size_t row = 0;
  std::vector<synth::LearnedClip> learned;
  std::vector<std::vector<std::size_t>> cps;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (std::size_t f = 0; f < m.t; f += kEvery, ++row) {
      std::copy(lat[i].latents.row_span(f).begin(), lat[i].latents.row_span(f).end(), az.row_span(row).begin());
      std::copy(truth[i].truth.factors.row_span(f).begin(), truth[i].truth.factors.row_span(f).end(), af.row_span(row).begin());
    }
    auto tr = translate::translate_latents(m, lat[i].latents);
    learned.push_back({tr.plan.tau, tr.translators});
    cps.push_back(truth[i].truth.changepoints);
  }
  const auto align = synth::align_latents(az, af, s.bvae.dims.active);
  return synth::recovery_error(align, s.bvae.dims.active.size(), learned, cps, pair.spec().planted);
}

inline nlohmann::json recovery_json(const synth::RecoveryScore& r) {
  return {{"shift_mae", r.shift_mae}, {"scale_mae", r.scale_mae}, {"changepoint_mae", r.changepoint_mae},
          {"active_dim_match", r.active_dim_match}, {"alignment_complete", r.alignment_complete}};
}

inline double run_translation(const config::RunConfig& c, const translate::TrainConfig& tc, const LatentSets& s,
                              const std::string& direction, const fs::path& dir) {
  const translate::TranslationData data = translation_data(s, source_domain(direction));
  const std::string tag = dir.filename().string();
  auto run = translate::train_translation(data, tc, [&](const translate::EpochMetrics& e) {
    if (e.epoch % 25 == 0 || e.epoch == tc.epochs)
      note("train-translate " + tag + ": epoch " + std::to_string(e.epoch) + " disc_acc " + std::to_string(e.disc_accuracy));
  });
  fs::remove_all(dir);
  translate::save_translation(dir, run.model, run.disc, {{"direction", direction}, {"seed", tc.seed}});
  translate::write_metrics_csv(dir / "metrics.csv", run.log);
  nlohmann::json result = {{"final_accuracy", run.final_accuracy},
                           {"metric_window", tc.metric_window},
                           {"epochs", tc.epochs},
                           {"direction", direction},
                           {"seed", tc.seed},
                           {"model", translate::model_json(run.model)},
                           {"config_hash", config::config_hash(c)}};
  if (synthetic_data(c) && direction == "xy" && c.synth.plant == "default") result["recovery"] = recovery_json(synth_recovery(c, s, run.model));
  write_json_file(dir / "result.json", result);
  note("train-translate " + tag + ": final accuracy " + std::to_string(run.final_accuracy));
  return run.final_accuracy;
}

struct GridCell {
  translate::GenMode mode;
  translate::PartitionKind partition;
  std::size_t c;
};

/// Valid generator-mode x partition x chunk-count combinations.
inline std::vector<GridCell> grid_cells() {
  std::vector<GridCell> out;
  for (auto mode : {translate::GenMode::predicted, translate::GenMode::fixed_set}) {
    out.push_back({mode, translate::PartitionKind::none, 1});
    for (auto part : {translate::PartitionKind::fixed_chunks, translate::PartitionKind::variable})
      for (std::size_t k : {2, 7}) out.push_back({mode, part, k});
  }
  return out;
}

inline std::string grid_name(const GridCell& g, const std::string& direction) {
  return translate::to_string(g.mode) + "_" + translate::to_string(g.partition) + "_c" + std::to_string(g.c) + "_" + direction;
}

inline void cmd_train_translate(const config::RunConfig& c, bool grid, bool direction_given) {
  const Layout L{c.out};
  const LatentSets s = load_latent_sets(L);
  if (!grid) {
    run_translation(c, c.translate, s, c.direction, L.translate(c.direction));
    return;
  }
  std::vector<std::string> dirs = direction_given ? std::vector<std::string>{c.direction} : std::vector<std::string>{"xy", "yx"};
  std::ofstream csv;
  fs::create_directories(L.grid());
  csv.open(L.grid() / "grid.csv", std::ios::trunc);
  csv << "run,mode,partition,c,direction,final_accuracy\n";
  csv.precision(17);
  for (const auto& d : dirs) {
    for (const GridCell& g : grid_cells()) {
      translate::TrainConfig tc = c.translate;
      tc.model.mode = g.mode;
      tc.model.partition = g.partition;
      tc.model.c = g.c;
      const std::string name = grid_name(g, d);
      const double acc = run_translation(c, tc, s, d, L.grid() / name);
      csv << name << ',' << translate::to_string(g.mode) << ',' << translate::to_string(g.partition) << ',' << g.c << ','
          << d << ',' << acc << '\n';
    }
  }
  if (!csv) throw Error("cannot write " + (L.grid() / "grid.csv").string());
}

// ---- analyze ----------------------------------------------------------------------

inline void cmd_analyze(const config::RunConfig& c) {
  const Layout L{c.out};
  const fs::path tdir = L.translate(c.direction);
  require(tdir / "translate.json", "train-translate");
  const LatentSets s = load_latent_sets(L);
  const auto tr = translate::load_translation(tdir);
  const kp::Domain src = source_domain(c.direction);
  const auto source = select_split(s.of(src), s.index.of(src), c.analysis.split);
  const auto target = select_split(s.of(other(src)), s.index.of(other(src)), c.analysis.split);
  discover::ReportConfig rc;
  rc.bins = c.analysis.bins;
  if (c.analysis.k > 0) rc.k = c.analysis.k;
  rc.k_max = c.analysis.k_max;
  rc.include_phi = c.analysis.include_phi;
  rc.seed = c.seed;
  const auto rep = discover::generate_report(s.bvae, tr.model, source, target, rc,
                                             {{"direction", c.direction},
                                              {"split", c.analysis.split},
                                              {"config_hash", config::config_hash(c)}});
  fs::remove_all(L.report());
  discover::write_report(L.report(), rep);
  note("analyze: report in " + L.report().string() + ", top mean-shift latent " + std::to_string(rep.top_shift_latent()) +
       ", k = " + std::to_string(rep.clusters.k));
}

// ---- translate-clip -----------------------------------------------------------------

inline void cmd_translate_clip(const config::RunConfig& c, const std::string& input, const std::string& output) {
  if (input.empty() || output.empty()) throw ConfigError("translate-clip needs --input and --output");
  const Layout L{c.out};
  const fs::path tdir = L.translate(c.direction);
  require(L.bvae() / "bvae.json", "train-bvae");
  require(tdir / "translate.json", "train-translate");
  const vae::BvaeModel bvae = vae::load_bvae(L.bvae());
  const auto tr = translate::load_translation(tdir);
  const kp::Format in_fmt = c.data.format.empty() ? kp::format_from_path(input) : kp::parse_format(c.data.format);
  const kp::KeypointTrack track = kp::ingest_track(input, in_fmt, bvae.input_dim() / 3);
  const auto frames = track.fps == c.data.fps ? track.frames : kp::resample_fps(track.frames, track.fps, c.data.fps);
  const auto clips = kp::extract_clips(frames, tr.model.t, tr.model.t, source_domain(c.direction), c.data.fps, track.source_id);
  if (clips.empty()) {
    throw ParameterError(input + ": " + std::to_string(frames.size()) + " frames, shorter than one " +
                         std::to_string(tr.model.t) + "-frame clip");
  }
  if (frames.size() % tr.model.t != 0) warn("translate-clip: dropping " + std::to_string(frames.size() % tr.model.t) + " trailing frame(s)");
  kp::KeypointTrack out{{}, c.data.fps, track.source_id, kp::domain_name(other(source_domain(c.direction)))};
  for (const auto& clip : clips) {
    auto t = translate::translate_clip(bvae, tr.model, clip);
    for (auto& f : t.clip.frames) out.frames.push_back(std::move(f));
  }
  if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path());
  kp::write_track(output, out, kp::format_from_path(output));
  note("translate-clip: wrote " + std::to_string(out.frames.size()) + " frames to " + output);
}

// ---- aggregate ----------------------------------------------------------------------

inline fs::path metrics_of(const fs::path& run, const std::string& direction) {
  if (fs::exists(run / "metrics.csv")) return run / "metrics.csv";
  const fs::path nested = Layout{run}.translate(direction) / "metrics.csv";
  if (fs::exists(nested)) return nested;
  throw DependencyError("missing metric log under " + run.string() + " (looked for metrics.csv and " + nested.string() + ")");
}

/// Writes <out>/aggregate.csv (final trailing-window accuracy) and
/// <out>/aggregate_epochs.csv (per-epoch accuracy), both mean +- 95% CI.
inline void cmd_aggregate(const config::RunConfig& c, const std::vector<std::string>& runs) {
  if (runs.size() < 2) throw ConfigError("aggregate needs at least 2 run directories, got " + std::to_string(runs.size()));
  std::vector<std::vector<double>> curves;
  std::vector<double> finals;
  for (const auto& r : runs) {
    const auto log = translate::read_metrics_csv(metrics_of(r, c.direction));
    std::vector<double> acc;
    for (const auto& e : log) acc.push_back(e.disc_accuracy);
    curves.push_back(std::move(acc));
    finals.push_back(discover::trailing_accuracy(log, c.translate.metric_window));
  }
  const auto per_epoch = discover::aggregate_runs(curves);
  const auto fin = discover::aggregate_values(finals);
  fs::create_directories(c.out);
  std::ofstream os(fs::path(c.out) / "aggregate.csv", std::ios::trunc);
  os.precision(17);
  os << "metric,mean,ci_half_width,n\n";
  os << "final_disc_accuracy," << fin.mean << ',' << fin.half_width << ',' << fin.n << '\n';
  std::ofstream oe(fs::path(c.out) / "aggregate_epochs.csv", std::ios::trunc);
  oe.precision(17);
  oe << "epoch,mean,ci_half_width,n\n";
  for (std::size_t i = 0; i < per_epoch.size(); ++i)
    oe << i + 1 << ',' << per_epoch[i].mean << ',' << per_epoch[i].half_width << ',' << per_epoch[i].n << '\n';
  if (!os || !oe) throw Error("cannot write aggregate CSVs under " + c.out);
  note("aggregate: final accuracy " + std::to_string(fin.mean) + " +- " + std::to_string(fin.half_width) + " over " +
       std::to_string(fin.n) + " runs");
}

}  // namespace facet::cli
