#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/autodiff/checkpoint.hpp"
#include "facet/config/run_config.hpp"
#include "facet/disentangle/bvae.hpp"
#include "facet/keypoints/clips.hpp"
#include "facet/keypoints/io.hpp"
#include "facet/util/json_io.hpp"

// On-disk layout shared by the commands:
//   <out>/synth/{X,Y}/..., ledger.json
//   <out>/prep/clips.json, norm.json
//   <out>/bvae/{encoder,decoder}.facw, bvae.json, loss.csv, latents_{X,Y}.facw
//   <out>/translate/<xy|yx>/... and translate/grid/<run>/...
//   <out>/report/...

namespace facet::cli {

namespace fs = std::filesystem;

struct Layout {
  fs::path out;

  fs::path synth() const { return out / "synth"; }
  fs::path prep() const { return out / "prep"; }
  fs::path clip_index() const { return prep() / "clips.json"; }
  fs::path norm() const { return prep() / "norm.json"; }
  fs::path bvae() const { return out / "bvae"; }
  fs::path latents(kp::Domain d) const { return bvae() / (std::string("latents_") + kp::domain_name(d) + ".facw"); }
  fs::path translate(const std::string& direction) const { return out / "translate" / direction; }
  fs::path grid() const { return out / "translate" / "grid"; }
  fs::path report() const { return out / "report"; }
};

inline void require(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) throw DependencyError("missing artifact " + p.string() + " (run '" + producer + "' first)");
}

/// One window of one keypoint file.
struct ClipRef {
  std::string file;
  std::string format;
  std::size_t start = 0;
  std::string id;  // <file stem>@<start>
  bool train = true;
};

struct ClipIndex {
  std::size_t clip_length = 0;
  std::size_t stride = 0;
  std::size_t landmarks = 0;
  double fps = kp::kCanonicalFps;
  std::array<std::vector<ClipRef>, 2> domains;  // X, Y

  std::vector<ClipRef>& of(kp::Domain d) { return domains[d == kp::Domain::x ? 0 : 1]; }
  const std::vector<ClipRef>& of(kp::Domain d) const { return domains[d == kp::Domain::x ? 0 : 1]; }
};

inline nlohmann::json to_json(const ClipIndex& idx) {
  nlohmann::json doms = nlohmann::json::object();
  for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : idx.of(d))
      arr.push_back({{"file", c.file}, {"format", c.format}, {"start", c.start}, {"id", c.id},
                     {"split", c.train ? "train" : "test"}});
    doms[kp::domain_name(d)] = arr;
  }
  return {{"clip_length", idx.clip_length}, {"stride", idx.stride}, {"landmarks", idx.landmarks},
          {"fps", idx.fps}, {"domains", doms}};
}

inline ClipIndex load_clip_index(const fs::path& p) {
  const nlohmann::json j = read_json_file(p);
  ClipIndex idx;
  try {
    idx.clip_length = j.at("clip_length").get<std::size_t>();
    idx.stride = j.at("stride").get<std::size_t>();
    idx.landmarks = j.at("landmarks").get<std::size_t>();
    idx.fps = j.at("fps").get<double>();
    for (kp::Domain d : {kp::Domain::x, kp::Domain::y}) {
      for (const auto& e : j.at("domains").at(kp::domain_name(d))) {
        idx.of(d).push_back({e.at("file").get<std::string>(), e.at("format").get<std::string>(),
                             e.at("start").get<std::size_t>(), e.at("id").get<std::string>(),
                             e.at("split").get<std::string>() == "train"});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  return idx;
}

/// Keypoint files under a data path: the file itself, or every .jsonl/.fkp
/// file of a directory in name order.
inline std::vector<fs::path> list_tracks(const fs::path& p) {
  if (!fs::exists(p)) throw DependencyError("missing data path " + p.string());
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".jsonl" || ext == ".fkp")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DependencyError("no .jsonl or .fkp files in " + p.string());
  return out;
}

/// Reads clips lazily, keeping the most recent file in memory.
class ClipReader {
 public:
  explicit ClipReader(const ClipIndex& idx) : idx_(idx) {}

  kp::Clip load(const ClipRef& ref, kp::Domain d) {
    if (ref.file != cached_) {
      kp::KeypointTrack track = kp::ingest_track(ref.file, kp::parse_format(ref.format), idx_.landmarks);
      frames_ = track.fps == idx_.fps ? std::move(track.frames) : kp::resample_fps(track.frames, track.fps, idx_.fps);
      cached_ = ref.file;
    }
    if (ref.start + idx_.clip_length > frames_.size()) {
      throw FormatError(ref.file + ": clip " + ref.id + " runs past the end of the track");
    }
    kp::Clip c;
    c.domain = d;
    c.fps = idx_.fps;
    c.participant_id = ref.id;
    c.frames.assign(frames_.begin() + static_cast<std::ptrdiff_t>(ref.start),
                    frames_.begin() + static_cast<std::ptrdiff_t>(ref.start + idx_.clip_length));
    return c;
  }

 private:
  const ClipIndex& idx_;
  std::string cached_;
  std::vector<kp::FrameKeypoints> frames_;
};

/// Latent clips of one domain stored as a single n x (t l) matrix.
inline void save_latents(const fs::path& p, const std::vector<vae::LatentClip>& clips) {
  if (clips.empty()) throw ParameterError("save_latents: no clips");
  const std::size_t t = clips.front().latents.rows(), l = clips.front().latents.cols();
  ad::Tensor m = ad::Tensor::zeros(clips.size(), t * l);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].latents.rows() != t || clips[i].latents.cols() != l) throw DimensionError("latent clips differ in shape");
    std::copy(clips[i].latents.data().begin(), clips[i].latents.data().end(), m.row_span(i).begin());
  }
  // layer 0 holds the clips, layer 1 the (t, l) shape
  ad::Tensor shape = ad::Tensor::row({static_cast<double>(t), static_cast<double>(l)});
  ad::write_facw(p, {{m, ad::Tensor::zeros(1, m.cols())}, {shape, ad::Tensor::zeros(1, 2)}});
}

inline std::vector<vae::LatentClip> load_latents(const fs::path& p, const std::vector<ClipRef>& refs, kp::Domain d) {
  const auto raw = ad::read_facw(p);
  if (raw.size() != 2 || raw[1].weight.size() != 2) throw FormatError(p.string() + ": not a latent cache");
  const auto t = static_cast<std::size_t>(raw[1].weight.data()[0]);
  const auto l = static_cast<std::size_t>(raw[1].weight.data()[1]);
  const ad::Tensor& m = raw[0].weight;
  if (m.rows() != refs.size() || m.cols() != t * l) {
    throw DimensionError(p.string() + ": " + std::to_string(m.rows()) + " cached clips, clip index lists " +
                         std::to_string(refs.size()));
  }
  std::vector<vae::LatentClip> out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    ad::Tensor z = ad::Tensor::zeros(t, l);
    std::copy(m.row_span(i).begin(), m.row_span(i).end(), z.data().begin());
    out.push_back({std::move(z), d, refs[i].id});
  }
  return out;
}

/// Clips of `split` ("train", "test" or "all").
template <class T>
std::vector<T> select_split(const std::vector<T>& items, const std::vector<ClipRef>& refs, const std::string& split) {
  std::vector<T> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (split == "all" || refs[i].train == (split == "train")) out.push_back(items[i]);
  return out;
}

}  // namespace facet::cli
