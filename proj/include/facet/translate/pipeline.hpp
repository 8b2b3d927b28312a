#pragma once

#include <vector>

#include "facet/disentangle/bvae.hpp"
#include "facet/keypoints/frame.hpp"
#include "facet/translate/model.hpp"

namespace facet::translate {

struct TranslatedClip {
  kp::Clip clip;
  std::vector<Translator> translators;
  PartitionPlan plan;
  Tensor latents;             // encoded input, t x l
  Tensor translated_latents;  // t x l
};

/// Encodes `clip`, translates its latents and decodes back to keypoints in
/// the original (unnormalized) coordinates.
inline TranslatedClip translate_clip(const vae::BvaeModel& bvae, const TranslationModel& m, const kp::Clip& clip) {
  if (clip.frames.size() != m.t) {
    throw DimensionError("clip has " + std::to_string(clip.frames.size()) + " frames, translation model expects " +
                         std::to_string(m.t));
  }
  if (bvae.latent_dim != m.l) {
    throw DimensionError("beta-VAE latent width " + std::to_string(bvae.latent_dim) +
                         " != translation latent width " + std::to_string(m.l));
  }
  TranslatedClip out;
  out.latents = vae::encode_clip(bvae, clip).latents;
  ClipTranslation tr = translate_latents(m, out.latents);
  out.plan = std::move(tr.plan);
  out.translators = std::move(tr.translators);
  out.translated_latents = std::move(tr.translated);
  const Tensor decoded = vae::decode_batch(bvae, out.translated_latents);
  out.clip.domain = clip.domain == kp::Domain::x ? kp::Domain::y : kp::Domain::x;
  out.clip.fps = clip.fps;
  out.clip.participant_id = clip.participant_id;
  for (std::size_t r = 0; r < decoded.rows(); ++r) {
    kp::FrameKeypoints f = kp::invert_normalizer(bvae.norm, decoded.row_span(r));
    f.timestamp = clip.frames[r].timestamp;
    f.source_id = clip.frames[r].source_id;
    out.clip.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace facet::translate
