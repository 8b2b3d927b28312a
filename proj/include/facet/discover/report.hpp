#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/discover/cluster.hpp"
#include "facet/discover/histogram.hpp"
#include "facet/discover/probe.hpp"
#include "facet/discover/svg.hpp"
#include "facet/disentangle/bvae.hpp"
#include "facet/translate/model.hpp"
#include "facet/util/json_io.hpp"

namespace facet::discover {

struct ReportConfig {
  std::size_t bins = kDefaultBins;
  std::optional<std::size_t> k;  // absent = BIC scan over 1..k_max
  std::size_t k_max = 10;
  bool include_phi = false;      // cluster on (omega, tau, phi) instead of (omega, tau)
  std::size_t exemplars = 5;
  std::uint64_t seed = 0;
};

/// Translation of every source clip, with chunk-level features for clustering.
struct ChunkTable {
  std::vector<translate::ClipTranslation> clips;
  Tensor features;                                   // one row per (clip, chunk)
  std::vector<std::pair<std::size_t, std::size_t>> owner;  // (clip, chunk) of every row
};

/// Feature of chunk k: omega (and phi when asked) on `dims`, then the chunk
/// bounds tau_{k-1}/t and tau_k/t with tau_0 = 0 and tau_c = t.
inline ChunkTable chunk_table(const translate::TranslationModel& m, const std::vector<vae::LatentClip>& source,
                              const std::vector<std::size_t>& dims, bool include_phi) {
  ChunkTable tab;
  std::vector<std::vector<double>> rows;
  const double t = static_cast<double>(m.t);
  for (std::size_t c = 0; c < source.size(); ++c) {
    tab.clips.push_back(translate::translate_latents(m, source[c].latents));
    const auto& tr = tab.clips.back();
    for (std::size_t k = 0; k < tr.translators.size(); ++k) {
      std::vector<double> f;
      for (auto d : dims) f.push_back(tr.translators[k].omega[d]);
      if (include_phi)
        for (auto d : dims) f.push_back(tr.translators[k].phi[d]);
      f.push_back(k == 0 ? 0.0 : tr.plan.tau[k - 1] / t);
      f.push_back(k + 1 == tr.translators.size() ? 1.0 : tr.plan.tau[k] / t);
      rows.push_back(std::move(f));
      tab.owner.emplace_back(c, k);
    }
  }
  tab.features = Tensor::zeros(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), tab.features.row_span(r).begin());
  return tab;
}

/// Chunk that owns each frame under the hard (argmax) reading of a plan.
inline std::vector<std::size_t> frame_chunks(const translate::PartitionPlan& plan) {
  std::vector<std::size_t> out(plan.frames());
  for (std::size_t f = 0; f < plan.frames(); ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < plan.chunks(); ++k)
      if (plan.weights.at(k, f) > plan.weights.at(best, f)) best = k;
    out[f] = best;
  }
  return out;
}

inline Tensor stack_frames(const std::vector<const Tensor*>& parts, std::size_t l) {
  std::size_t n = 0;
  for (const Tensor* p : parts) n += p->rows();
  Tensor out = Tensor::zeros(n, l);
  std::size_t r = 0;
  for (const Tensor* p : parts) {
    std::copy(p->data().begin(), p->data().end(), out.row_span(r).begin());
    r += p->rows();
  }
  return out;
}

inline nlohmann::json histograms_json(const std::vector<LatentHistogram>& hs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& h : hs) {
    nlohmann::json counts, modes;
    for (Condition c : kConditions) {
      counts[condition_name(c)] = h.count(c);
      modes[condition_name(c)] = h.mode(c);
    }
    arr.push_back({{"index", h.latent_index}, {"edges", h.bin_edges}, {"counts", counts}, {"modes", modes},
                   {"mean_shift", h.mean_shift}});
  }
  return arr;
}

struct ClusterReport {
  std::size_t id = 0;
  std::size_t size = 0;  // chunks
  std::vector<std::string> exemplars;
  std::vector<LatentHistogram> latents;
};

struct DiscoveryReport {
  nlohmann::json meta;
  std::vector<LatentHistogram> latents;
  ClusterModel clusters;
  std::vector<ClusterReport> cluster_reports;
  TransitionMatrix transitions;
  ProbeResult probe;

  /// Latent with the largest |mean_shift|.
  std::size_t top_shift_latent() const {
    if (latents.empty()) throw ReportError("report has no latent histograms");
    auto it = std::max_element(latents.begin(), latents.end(), [](const auto& a, const auto& b) {
      return std::abs(a.mean_shift) < std::abs(b.mean_shift);
    });
    return it->latent_index;
  }

  nlohmann::json to_json() const {
    nlohmann::json cl = nlohmann::json::array();
    for (const auto& c : cluster_reports) {
      std::vector<double> centroid(clusters.centroids.row_span(c.id).begin(), clusters.centroids.row_span(c.id).end());
      cl.push_back({{"id", c.id},
                    {"size", c.size},
                    {"exemplars", c.exemplars},
                    {"centroid", centroid},
                    {"latents", histograms_json(c.latents)}});
    }
    nlohmann::json m = meta;
    m["top_mean_shift_latent"] = top_shift_latent();
    m["bic"] = clusters.bic;
    return {{"meta", m},
            {"latents", histograms_json(latents)},
            {"clusters", cl},
            {"transitions", {{"k", transitions.k}, {"counts", transitions.counts}}},
            {"probe",
             {{"weights", probe.weights},
              {"bias", probe.bias},
              {"train_accuracy", probe.train_accuracy},
              {"test_accuracy", probe.test_accuracy}}}};
  }
};

/// Histograms of source/target/translated latents on the active dims,
/// translator clusters over source-domain chunks, their transitions, a
/// frame-level domain probe and one sub-report per cluster. Pure in its
/// inputs; `meta` is copied into the report.
inline DiscoveryReport generate_report(const vae::BvaeModel& bvae, const translate::TranslationModel& model,
                                       const std::vector<vae::LatentClip>& source,
                                       const std::vector<vae::LatentClip>& target, const ReportConfig& cfg,
                                       nlohmann::json meta = nlohmann::json::object()) {
  if (source.empty()) throw DependencyError("generate_report: no source clips to analyze");
  if (target.empty()) throw DependencyError("generate_report: no target clips to analyze");
  if (bvae.latent_dim != model.l) throw DimensionError("generate_report: beta-VAE and translation latent widths differ");
  std::vector<std::size_t> dims = bvae.dims.active;
  if (dims.empty()) throw ReportError("generate_report: the beta-VAE has no active dimensions");
  const std::size_t l = model.l;

  DiscoveryReport rep;
  const ChunkTable tab = chunk_table(model, source, dims, cfg.include_phi);
  std::vector<const Tensor*> src, tgt, trn;
  for (std::size_t c = 0; c < source.size(); ++c) {
    src.push_back(&source[c].latents);
    trn.push_back(&tab.clips[c].translated);
  }
  for (const auto& c : target) tgt.push_back(&c.latents);
  const Tensor src_all = stack_frames(src, l), tgt_all = stack_frames(tgt, l), trn_all = stack_frames(trn, l);
  rep.latents = latent_histograms(src_all, tgt_all, trn_all, dims, cfg.bins);

  KMeansConfig km;
  km.seed = cfg.seed;
  rep.clusters = cluster_translators(tab.features, cfg.k, cfg.k_max, km);

  std::vector<std::vector<std::size_t>> seqs(source.size());
  for (std::size_t r = 0; r < tab.owner.size(); ++r) seqs[tab.owner[r].first].push_back(rep.clusters.assignments[r]);
  rep.transitions = transition_matrix(seqs, rep.clusters.k);

  for (std::size_t id = 0; id < rep.clusters.k; ++id) {
    ClusterReport cr;
    cr.id = id;
    std::vector<std::pair<double, std::size_t>> members;
    std::vector<std::vector<double>> src_rows, trn_rows;
    for (std::size_t r = 0; r < tab.owner.size(); ++r) {
      if (rep.clusters.assignments[r] != id) continue;
      members.emplace_back(squared_distance(tab.features, r, rep.clusters.centroids, id), r);
      const auto [c, k] = tab.owner[r];
      const auto owner = frame_chunks(tab.clips[c].plan);
      for (std::size_t f = 0; f < owner.size(); ++f) {
        if (owner[f] != k) continue;
        auto s = source[c].latents.row_span(f);
        auto t = tab.clips[c].translated.row_span(f);
        src_rows.emplace_back(s.begin(), s.end());
        trn_rows.emplace_back(t.begin(), t.end());
      }
    }
    cr.size = members.size();
    std::sort(members.begin(), members.end());
    for (const auto& [d, r] : members) {
      if (cr.exemplars.size() >= cfg.exemplars) break;
      const std::string& id_str = source[tab.owner[r].first].participant_id;
      if (std::find(cr.exemplars.begin(), cr.exemplars.end(), id_str) == cr.exemplars.end()) cr.exemplars.push_back(id_str);
    }
    if (!src_rows.empty()) {
      Tensor s = Tensor::zeros(src_rows.size(), l), t = Tensor::zeros(trn_rows.size(), l);
      for (std::size_t r = 0; r < src_rows.size(); ++r) {
        std::copy(src_rows[r].begin(), src_rows[r].end(), s.row_span(r).begin());
        std::copy(trn_rows[r].begin(), trn_rows[r].end(), t.row_span(r).begin());
      }
      cr.latents = latent_histograms(s, tgt_all, t, dims, cfg.bins);
    }
    rep.cluster_reports.push_back(std::move(cr));
  }

  Tensor probe_x = stack_frames({&src_all, &tgt_all}, l);
  std::vector<int> labels(src_all.rows(), 0);
  labels.resize(src_all.rows() + tgt_all.rows(), 1);
  ProbeConfig pc;
  pc.seed = cfg.seed;
  rep.probe = frame_classifier_probe(probe_x, labels, pc);

  meta["seed"] = cfg.seed;
  meta["bins"] = cfg.bins;
  meta["k_max"] = cfg.k_max;
  meta["k"] = rep.clusters.k;
  meta["include_phi"] = cfg.include_phi;
  meta["source_clips"] = source.size();
  meta["target_clips"] = target.size();
  meta["active_dims"] = dims;
  meta["translation"] = translate::model_json(model);
  rep.meta = std::move(meta);
  return rep;
}

/// report.json, latent_<i>.svg per active latent, transitions.svg and
/// clusters/<id>_latent_<i>.svg.
inline void write_report(const std::filesystem::path& dir, const DiscoveryReport& rep) {
  std::filesystem::create_directories(dir);
  write_json_file(dir / "report.json", rep.to_json());
  for (const auto& h : rep.latents)
    detail::write_text(dir / ("latent_" + std::to_string(h.latent_index) + ".svg"), histogram_svg(h));
  detail::write_text(dir / "transitions.svg", transitions_svg(rep.transitions));
  for (const auto& c : rep.cluster_reports)
    for (const auto& h : c.latents) {
      detail::write_text(dir / "clusters" / (std::to_string(c.id) + "_latent_" + std::to_string(h.latent_index) + ".svg"),
                         histogram_svg(h));
    }
}

}  // namespace facet::discover
