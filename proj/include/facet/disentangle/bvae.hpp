#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/autodiff/adam.hpp"
#include "facet/autodiff/checkpoint.hpp"
#include "facet/autodiff/mlp.hpp"
#include "facet/keypoints/frame.hpp"
#include "facet/keypoints/normalize.hpp"
#include "facet/util/json_io.hpp"
#include "facet/util/log.hpp"

namespace facet::vae {

using ad::Tape;
using ad::Tensor;
using ad::Var;

/// beta(epoch) = beta_final * min(1, epoch / warmup_epochs); epochs count from 1.
struct BetaSchedule {
  double beta_final = 4.0;
  std::size_t warmup_epochs = 0;
  std::size_t total_epochs = 1;

  double beta(std::size_t epoch) const {
    if (warmup_epochs == 0) return beta_final;
    return beta_final * std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
  }
};

struct BvaeConfig {
  std::size_t latent_dim = 16;
  std::vector<std::size_t> hidden{512, 512, 256, 256, 128};
  double beta_final = 4.0;
  double warmup_fraction = 0.2;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::size_t eval_frames = 2048;  // fixed subset scored after every epoch

  BetaSchedule schedule() const {
    return {beta_final, static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(epochs))), epochs};
  }

  void validate() const {
    if (latent_dim == 0) throw ConfigError("bvae.latent_dim must be >= 1");
    if (hidden.empty()) throw ConfigError("bvae.hidden must list at least one layer");
    for (auto h : hidden)
      if (h == 0) throw ConfigError("bvae.hidden entries must be >= 1");
    if (beta_final < 0.0) throw ParameterError("bvae.beta_final must be >= 0");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ConfigError("bvae.warmup_fraction must lie in [0, 1]");
    if (batch_size == 0) throw ConfigError("bvae.batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("bvae.lr must be >= 0");
  }
};

struct ActiveDims {
  std::vector<std::size_t> active;
  std::vector<double> scores;
};

/// Encoder: D -> hidden... -> 2l (mu then logvar). Decoder mirrors the hidden
/// widths back to D. Hidden layers are leaky-ReLU, heads are linear.
struct BvaeModel {
  ad::MlpParams encoder;
  ad::MlpParams decoder;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> hidden;
  double beta = 0.0;
  kp::NormStats norm;
  ActiveDims dims;

  std::size_t input_dim() const { return encoder.in_dim(); }
};

inline BvaeModel make_bvae(std::size_t input_dim, const BvaeConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<ad::LayerSpec> enc, dec;
  for (auto h : cfg.hidden) enc.push_back({h, ad::Activation::leaky_relu, 0.0});
  enc.push_back({2 * cfg.latent_dim, ad::Activation::identity, 0.0});
  for (auto it = cfg.hidden.rbegin(); it != cfg.hidden.rend(); ++it) dec.push_back({*it, ad::Activation::leaky_relu, 0.0});
  dec.push_back({input_dim, ad::Activation::identity, 0.0});
  BvaeModel m;
  m.encoder = ad::make_mlp(input_dim, enc, seed);
  m.decoder = ad::make_mlp(cfg.latent_dim, dec, seed ^ 0x9e3779b97f4a7c15ULL);
  m.latent_dim = cfg.latent_dim;
  m.hidden = cfg.hidden;
  return m;
}

// ---- scalar reference forms ----------------------------------------------

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Unit-variance Gaussian reconstruction plus beta-weighted KL to N(0, I).
inline LossTerms bvae_loss(std::span<const double> frame, std::span<const double> reconstruction,
                           std::span<const double> mu, std::span<const double> logvar, double beta) {
  if (beta < 0.0) throw ParameterError("bvae_loss: beta must be >= 0, got " + std::to_string(beta));
  if (frame.size() != reconstruction.size() || mu.size() != logvar.size()) {
    throw DimensionError("bvae_loss: shape mismatch");
  }
  LossTerms t;
  for (std::size_t i = 0; i < frame.size(); ++i) t.recon += 0.5 * (frame[i] - reconstruction[i]) * (frame[i] - reconstruction[i]);
  for (std::size_t i = 0; i < mu.size(); ++i) t.kl += 0.5 * (mu[i] * mu[i] + std::exp(logvar[i]) - logvar[i] - 1.0);
  t.total = t.recon + beta * t.kl;
  return t;
}

inline std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                          std::span<const double> noise) {
  if (mu.size() != logvar.size() || mu.size() != noise.size()) throw DimensionError("reparameterize: shape mismatch");
  std::vector<double> z(mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * noise[i];
  return z;
}

// ---- taped forms -----------------------------------------------------------

struct TapedLoss {
  Var total, recon, kl;
};

/// Batch loss averaged over rows: each row contributes its per-frame terms.
inline TapedLoss bvae_loss(Tape& t, Var x, Var recon, Var mu, Var logvar, double beta) {
  if (beta < 0.0) throw ParameterError("bvae_loss: beta must be >= 0, got " + std::to_string(beta));
  const double inv_rows = 1.0 / static_cast<double>(x.rows());
  Var r = ad::scale(ad::sum(ad::square(ad::sub(x, recon))), 0.5 * inv_rows);
  Var inner = ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
  Var k = ad::scale(ad::sum(inner), 0.5 * inv_rows);
  (void)t;
  return {ad::add(r, ad::scale(k, beta)), r, k};
}

struct TapedForward {
  Var mu, logvar, z, recon;
};

/// Full encoder -> reparameterize -> decoder pass on a batch. `noise` has
/// rows(x) x l entries; zero noise gives the deterministic (z = mu) pass.
inline TapedForward bvae_forward(Tape& t, const BvaeModel& m, Var x, const Tensor& noise) {
  std::mt19937_64 unused(0);  // no dropout in the autoencoder
  Var h = ad::mlp_apply(t, m.encoder, x, ad::Mode::train, unused);
  Var mu = ad::slice_cols(h, 0, m.latent_dim);
  Var logvar = ad::slice_cols(h, m.latent_dim, 2 * m.latent_dim);
  Var z = ad::add(mu, ad::mul(ad::exp(ad::scale(logvar, 0.5)), t.constant(noise)));
  Var recon = ad::mlp_apply(t, m.decoder, z, ad::Mode::train, unused);
  return {mu, logvar, z, recon};
}

// ---- encode / decode ---------------------------------------------------------

struct Posterior {
  Tensor mu;      // rows x l
  Tensor logvar;  // rows x l
};

inline void warn_input_scale(const Tensor& x) {
  for (double v : x.data()) {
    if (std::abs(v) > 1e3) {
      warn("encode: input value " + std::to_string(v) + " looks unstandardized (|value| > 1e3)");
      return;
    }
  }
}

/// Batch posterior for standardized frames (rows of x).
inline Posterior encode_batch(const BvaeModel& m, const Tensor& x) {
  warn_input_scale(x);
  const Tensor h = ad::mlp_infer(m.encoder, x);
  Posterior p{Tensor::zeros(x.rows(), m.latent_dim), Tensor::zeros(x.rows(), m.latent_dim)};
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < m.latent_dim; ++j) {
      p.mu.at(r, j) = h.at(r, j);
      p.logvar.at(r, j) = h.at(r, m.latent_dim + j);
    }
  return p;
}

inline Posterior encode(const BvaeModel& m, std::span<const double> frame) {
  return encode_batch(m, Tensor::matrix(1, frame.size(), std::vector<double>(frame.begin(), frame.end())));
}

/// Standardized reconstructions for latent rows.
inline Tensor decode_batch(const BvaeModel& m, const Tensor& z) { return ad::mlp_infer(m.decoder, z); }

inline std::vector<double> decode(const BvaeModel& m, std::span<const double> z) {
  return decode_batch(m, Tensor::matrix(1, z.size(), std::vector<double>(z.begin(), z.end()))).values();
}

/// Standardizes every frame of a clip into a t x D matrix.
inline Tensor standardize_clip(const kp::NormStats& norm, const kp::Clip& clip) {
  if (clip.frames.empty()) throw ParameterError("standardize_clip: empty clip");
  Tensor x = Tensor::zeros(clip.frames.size(), norm.dim());
  for (std::size_t r = 0; r < clip.frames.size(); ++r) {
    const auto z = kp::apply_normalizer(norm, clip.frames[r]);
    std::copy(z.begin(), z.end(), x.row_span(r).begin());
  }
  return x;
}

struct LatentClip {
  Tensor latents;  // t x l posterior means
  kp::Domain domain = kp::Domain::x;
  std::string participant_id;

  std::size_t length() const { return latents.rows(); }
};

inline LatentClip encode_clip(const BvaeModel& m, const kp::Clip& clip) {
  return {encode_batch(m, standardize_clip(m.norm, clip)).mu, clip.domain, clip.participant_id};
}

// ---- training ------------------------------------------------------------------

struct LossLogEntry {
  std::size_t epoch = 0;  // 0 = before any update
  double beta = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct BvaeTrainResult {
  BvaeModel model;
  std::vector<LossLogEntry> log;
};

namespace detail {

/// Deterministic (z = mu) per-frame loss over the evaluation rows.
inline LossLogEntry evaluate(const BvaeModel& m, const Tensor& frames, const std::vector<std::size_t>& rows,
                             double beta, std::size_t epoch) {
  LossLogEntry e{epoch, beta, 0.0, 0.0, 0.0};
  constexpr std::size_t kChunk = 256;
  for (std::size_t s = 0; s < rows.size(); s += kChunk) {
    const std::size_t n = std::min(kChunk, rows.size() - s);
    Tensor x = Tensor::zeros(n, frames.cols());
    for (std::size_t i = 0; i < n; ++i) {
      auto src = frames.row_span(rows[s + i]);
      std::copy(src.begin(), src.end(), x.row_span(i).begin());
    }
    const Posterior p = encode_batch(m, x);
    const Tensor rec = decode_batch(m, p.mu);
    for (std::size_t i = 0; i < n; ++i) {
      const auto t = bvae_loss(x.row_span(i), rec.row_span(i), p.mu.row_span(i), p.logvar.row_span(i), beta);
      e.recon += t.recon;
      e.kl += t.kl;
    }
  }
  e.recon /= static_cast<double>(rows.size());
  e.kl /= static_cast<double>(rows.size());
  e.total = e.recon + beta * e.kl;
  return e;
}

inline std::vector<std::size_t> eval_rows(std::size_t n, std::size_t cap) {
  const std::size_t k = std::min(n, std::max<std::size_t>(cap, 1));
  std::vector<std::size_t> rows(k);
  for (std::size_t i = 0; i < k; ++i) rows[i] = i * n / k;
  return rows;
}

}  // namespace detail

using EpochCallback = std::function<void(const LossLogEntry&)>;

/// Trains on standardized frames (rows of `frames`). With `init` the weights
/// are copied from it and the epoch-0 log entry uses its beta, so it repeats
/// the checkpoint's final entry.
inline BvaeTrainResult train_bvae(const Tensor& frames, const kp::NormStats& norm, const BvaeConfig& cfg,
                                  const BvaeModel* init, std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (frames.rows() == 0) throw ParameterError("train_bvae: no training frames");
  if (frames.cols() != norm.dim()) {
    throw DimensionError("train_bvae: frame width " + std::to_string(frames.cols()) + " != norm width " +
                         std::to_string(norm.dim()));
  }
  BvaeModel m;
  if (init) {
    if (init->input_dim() != frames.cols() || init->latent_dim != cfg.latent_dim) {
      throw DimensionError("train_bvae: init checkpoint shape does not match the configuration");
    }
    m = *init;
  } else {
    m = make_bvae(frames.cols(), cfg, seed);
  }
  m.norm = norm;
  const BetaSchedule sched = cfg.schedule();
  const auto eval = detail::eval_rows(frames.rows(), cfg.eval_frames);

  BvaeTrainResult res;
  res.log.push_back(detail::evaluate(m, frames, eval, init ? init->beta : sched.beta(0), 0));
  if (on_epoch) on_epoch(res.log.back());

  std::vector<ad::Parameter*> params = m.encoder.parameters();
  for (auto* p : m.decoder.parameters()) params.push_back(p);
  std::vector<const ad::Parameter*> cparams(params.begin(), params.end());
  ad::AdamState adam(ad::AdamConfig{cfg.lr});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(frames.rows());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double beta = sched.beta(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    try {
      for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
        const std::size_t n = std::min(cfg.batch_size, order.size() - s);
        Tensor x = Tensor::zeros(n, frames.cols());
        for (std::size_t i = 0; i < n; ++i) {
          auto src = frames.row_span(order[s + i]);
          std::copy(src.begin(), src.end(), x.row_span(i).begin());
        }
        Tensor noise = Tensor::zeros(n, m.latent_dim);
        for (double& v : noise.data()) v = normal(rng);
        Tape tape;
        Var xv = tape.constant(std::move(x));
        const TapedForward f = bvae_forward(tape, m, xv, noise);
        const TapedLoss loss = bvae_loss(tape, xv, f.recon, f.mu, f.logvar, beta);
        tape.backward(loss.total);
        const auto grads = tape.gradients(cparams);
        adam.step(params, grads);
      }
      m.beta = beta;
      res.log.push_back(detail::evaluate(m, frames, eval, beta, epoch));
    } catch (const NumericError& e) {
      throw DivergenceError(std::string("beta-VAE training diverged: ") + e.what(), static_cast<int>(epoch));
    }
    if (!std::isfinite(res.log.back().total)) throw DivergenceError("beta-VAE loss is not finite", static_cast<int>(epoch));
    if (on_epoch) on_epoch(res.log.back());
  }
  if (cfg.epochs == 0) m.beta = init ? init->beta : sched.beta(0);
  res.model = std::move(m);
  return res;
}

/// Standardizes up to `frames_per_clip` frames of every clip (0 = all),
/// picked by a seeded shuffle, into one matrix.
inline Tensor collect_frames(const std::vector<kp::Clip>& clips, const kp::NormStats& norm,
                             std::size_t frames_per_clip, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> rows;
  for (const kp::Clip& c : clips) {
    std::vector<std::size_t> idx(c.frames.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (frames_per_clip > 0 && frames_per_clip < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(frames_per_clip);
      std::sort(idx.begin(), idx.end());
    }
    for (auto i : idx) rows.push_back(kp::apply_normalizer(norm, c.frames[i]));
  }
  if (rows.empty()) throw ParameterError("collect_frames: no frames");
  Tensor x = Tensor::zeros(rows.size(), norm.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), x.row_span(r).begin());
  return x;
}

inline BvaeTrainResult train_bvae(const std::vector<kp::Clip>& clips, const BvaeConfig& cfg, const BvaeModel* init,
                                  std::uint64_t seed, std::size_t frames_per_clip = 0) {
  if (clips.empty()) throw ParameterError("train_bvae: need at least one training clip");
  const kp::NormStats norm = init ? init->norm : kp::fit_normalizer(clips);
  return train_bvae(collect_frames(clips, norm, frames_per_clip, seed), norm, cfg, init, seed);
}

// ---- analysis ----------------------------------------------------------------------

/// Mean per-landmark distance between denormalized decodes of z = lo * e_i and
/// z = hi * e_i. Active iff score >= ratio * max score.
inline ActiveDims active_dims(const BvaeModel& m, double lo = -3.0, double hi = 3.0, double ratio = 0.1) {
  const std::size_t l = m.latent_dim;
  Tensor z = Tensor::zeros(2 * l, l);
  for (std::size_t i = 0; i < l; ++i) {
    z.at(2 * i, i) = lo;
    z.at(2 * i + 1, i) = hi;
  }
  const Tensor dec = decode_batch(m, z);
  const bool denorm = m.norm.dim() == dec.cols();
  ActiveDims out;
  out.scores.resize(l);
  for (std::size_t i = 0; i < l; ++i) {
    auto a = dec.row_span(2 * i), b = dec.row_span(2 * i + 1);
    const std::size_t landmarks = dec.cols() / 3;
    double total = 0.0;
    for (std::size_t k = 0; k < landmarks; ++k) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t j = 3 * k + c;
        const double s = denorm ? m.norm.std[j] : 1.0;
        sq += (a[j] - b[j]) * s * (a[j] - b[j]) * s;
      }
      total += std::sqrt(sq);
    }
    out.scores[i] = total / static_cast<double>(landmarks);
  }
  const double mx = *std::max_element(out.scores.begin(), out.scores.end());
  if (!(mx > 0.0)) throw DegenerateModelError("active_dims: every latent traversal decodes to the same frame");
  for (std::size_t i = 0; i < l; ++i)
    if (out.scores[i] >= ratio * mx) out.active.push_back(i);
  return out;
}

/// Decoded (denormalized) frames for z = base with coordinate `dim` set to each value.
inline std::vector<kp::FrameKeypoints> latent_traversal(const BvaeModel& m, std::size_t dim,
                                                        const std::vector<double>& values,
                                                        std::span<const double> base) {
  if (dim >= m.latent_dim) throw DimensionError("latent_traversal: dim " + std::to_string(dim) + " >= l");
  if (base.size() != m.latent_dim) throw DimensionError("latent_traversal: base has wrong length");
  std::vector<kp::FrameKeypoints> out;
  if (values.empty()) return out;
  Tensor z = Tensor::zeros(values.size(), m.latent_dim);
  for (std::size_t r = 0; r < values.size(); ++r) {
    for (std::size_t j = 0; j < m.latent_dim; ++j) z.at(r, j) = base[j];
    z.at(r, dim) = values[r];
  }
  const Tensor dec = decode_batch(m, z);
  for (std::size_t r = 0; r < values.size(); ++r) {
    auto row = dec.row_span(r);
    if (m.norm.dim() == dec.cols()) {
      out.push_back(kp::invert_normalizer(m.norm, row));
    } else {
      out.push_back(kp::FrameKeypoints{std::vector<double>(row.begin(), row.end()), 0.0, {}});
    }
  }
  return out;
}

// ---- persistence ---------------------------------------------------------------------

inline nlohmann::json log_entry_json(const LossLogEntry& e) {
  return {{"epoch", e.epoch}, {"beta", e.beta}, {"recon", e.recon}, {"kl", e.kl}, {"total", e.total}};
}

/// Writes encoder.facw, decoder.facw and bvae.json into `dir`. `norm_path` is
/// recorded relative to `dir` when possible.
inline void save_bvae(const std::filesystem::path& dir, const BvaeModel& m, const std::filesystem::path& norm_path,
                      const std::optional<LossLogEntry>& final_loss = std::nullopt) {
  std::filesystem::create_directories(dir);
  ad::save_mlp(dir / "encoder.facw", m.encoder);
  ad::save_mlp(dir / "decoder.facw", m.decoder);
  nlohmann::json j = {{"latent_dim", m.latent_dim},
                      {"input_dim", m.input_dim()},
                      {"hidden", m.hidden},
                      {"beta", m.beta},
                      {"beta_final", m.beta},
                      {"active_dims", m.dims.active},
                      {"active_scores", m.dims.scores},
                      {"norm_stats_path", std::filesystem::relative(norm_path, dir).generic_string()}};
  if (final_loss) j["final_loss"] = log_entry_json(*final_loss);
  write_json_file(dir / "bvae.json", j);
}

inline BvaeModel load_bvae(const std::filesystem::path& dir) {
  const nlohmann::json j = read_json_file(dir / "bvae.json");
  BvaeModel m;
  try {
    BvaeConfig cfg;
    cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
    cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    m = make_bvae(j.at("input_dim").get<std::size_t>(), cfg, 0);
    m.beta = j.at("beta").get<double>();
    m.dims.active = j.at("active_dims").get<std::vector<std::size_t>>();
    m.dims.scores = j.value("active_scores", std::vector<double>{});
    m.norm = kp::load_norm(dir / j.at("norm_stats_path").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "bvae.json").string() + ": " + e.what());
  }
  ad::load_mlp(dir / "encoder.facw", m.encoder);
  ad::load_mlp(dir / "decoder.facw", m.decoder);
  if (m.norm.dim() != m.input_dim()) throw DimensionError("load_bvae: norm stats width does not match the encoder");
  return m;
}

}  // namespace facet::vae
