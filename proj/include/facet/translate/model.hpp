#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facet/autodiff/checkpoint.hpp"
#include "facet/autodiff/mlp.hpp"
#include "facet/translate/partition.hpp"
#include "facet/util/json_io.hpp"

namespace facet::translate {

enum class GenMode { predicted, fixed_set };
enum class PartitionKind { none, fixed_chunks, variable };
enum class TranslatorForm { full, scale_only, shift_only };

inline std::string to_string(GenMode m) { return m == GenMode::predicted ? "predicted" : "fixed_set"; }
inline std::string to_string(PartitionKind p) {
  switch (p) {
    case PartitionKind::none: return "none";
    case PartitionKind::fixed_chunks: return "fixed_chunks";
    case PartitionKind::variable: return "variable";
  }
  return "?";
}
inline std::string to_string(TranslatorForm f) {
  switch (f) {
    case TranslatorForm::full: return "full";
    case TranslatorForm::scale_only: return "scale_only";
    case TranslatorForm::shift_only: return "shift_only";
  }
  return "?";
}

inline GenMode parse_gen_mode(const std::string& s) {
  if (s == "predicted") return GenMode::predicted;
  if (s == "fixed_set") return GenMode::fixed_set;
  throw ConfigError("unknown translator mode '" + s + "' (expected predicted or fixed_set)");
}
inline PartitionKind parse_partition(const std::string& s) {
  if (s == "none") return PartitionKind::none;
  if (s == "fixed_chunks") return PartitionKind::fixed_chunks;
  if (s == "variable") return PartitionKind::variable;
  throw ConfigError("unknown partition '" + s + "' (expected none, fixed_chunks or variable)");
}
inline TranslatorForm parse_translator_form(const std::string& s) {
  if (s == "full") return TranslatorForm::full;
  if (s == "scale_only") return TranslatorForm::scale_only;
  if (s == "shift_only") return TranslatorForm::shift_only;
  throw ConfigError("unknown translator form '" + s + "' (expected full, scale_only or shift_only)");
}

/// Architecture of a translation model.
struct ModelConfig {
  GenMode mode = GenMode::predicted;
  PartitionKind partition = PartitionKind::variable;
  TranslatorForm form = TranslatorForm::full;
  std::size_t c = 2;
  double q = kDefaultQ;
  std::size_t p = 32;
  double entropy_weight = 0.1;
  double disc_dropout = 0.5;

  void validate() const {
    if (c == 0) throw ConfigError("translate.c must be >= 1");
    if (partition == PartitionKind::none && c != 1) {
      throw ConfigError("translate.c = " + std::to_string(c) + " requires a partition; partition none needs c = 1");
    }
    if (!(q > 0.0)) throw ConfigError("translate.Q must be > 0");
    if (mode == GenMode::fixed_set && p < 1) throw ConfigError("translate.p must be >= 1");
    if (entropy_weight < 0.0) throw ConfigError("translate.entropy_weight must be >= 0");
    if (disc_dropout < 0.0 || disc_dropout >= 1.0) throw ConfigError("discriminator dropout must lie in [0, 1)");
  }
};

struct Translator {
  std::vector<double> omega;
  std::vector<double> phi;

  static Translator identity(std::size_t l) { return {std::vector<double>(l, 1.0), std::vector<double>(l, 0.0)}; }
};

/// p x 2l translator table (row i = [omega_i, phi_i]) and the classifier that
/// picks from it.
struct FixedTranslatorSet {
  ad::Parameter table;
  ad::MlpParams classifier;
  double entropy_weight = 0.1;

  std::size_t size() const { return table.value.rows(); }
};

struct TranslationModel {
  ModelConfig cfg;
  std::size_t t = 0;
  std::size_t l = 0;
  std::optional<ad::MlpParams> g_t;
  std::optional<ad::MlpParams> g_f;
  std::optional<FixedTranslatorSet> fixed_set;

  std::size_t input_dim() const { return t * l; }

  std::vector<ad::Parameter*> parameters() {
    std::vector<ad::Parameter*> out;
    if (g_t) for (auto* p : g_t->parameters()) out.push_back(p);
    if (g_f) for (auto* p : g_f->parameters()) out.push_back(p);
    if (fixed_set) {
      for (auto* p : fixed_set->classifier.parameters()) out.push_back(p);
      out.push_back(&fixed_set->table);
    }
    return out;
  }
  std::vector<const ad::Parameter*> parameters() const {
    auto ps = const_cast<TranslationModel*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }
};

struct Discriminator {
  ad::MlpParams net;
};

/// Two hidden widths shrinking by a factor of 8, never below the output width.
inline std::pair<std::size_t, std::size_t> shrinking_widths(std::size_t in, std::size_t out) {
  const std::size_t h1 = std::max({in / 8, out, std::size_t{2}});
  const std::size_t h2 = std::max({h1 / 8, out, std::size_t{2}});
  return {h1, h2};
}

inline ad::MlpParams make_head(std::size_t in, std::size_t out, ad::Activation last, double dropout,
                               std::uint64_t seed) {
  const auto [h1, h2] = shrinking_widths(in, out);
  return ad::make_mlp(in,
                      {{h1, ad::Activation::leaky_relu, dropout},
                       {h2, ad::Activation::leaky_relu, dropout},
                       {out, last, 0.0}},
                      seed);
}

inline bool has_changepoint_net(const ModelConfig& cfg) {
  return cfg.partition == PartitionKind::variable && cfg.c >= 2;
}

/// Fresh model. G_t and G_f start with zero final layers, so the initial
/// change-points are evenly spaced and every predicted translator is the
/// identity.
inline TranslationModel make_translation_model(const ModelConfig& cfg, std::size_t t, std::size_t l,
                                               std::uint64_t seed) {
  cfg.validate();
  if (t == 0 || l == 0) throw ConfigError("translation model needs t >= 1 and l >= 1");
  TranslationModel m{cfg, t, l, {}, {}, {}};
  const std::size_t in = t * l;
  std::mt19937_64 rng(seed);
  if (has_changepoint_net(cfg)) {
    m.g_t = make_head(in, cfg.c, ad::Activation::identity, 0.0, rng());
    ad::zero_last_layer(*m.g_t);
  }
  if (cfg.mode == GenMode::predicted) {
    m.g_f = make_head(in, 2 * l, ad::Activation::identity, 0.0, rng());
    ad::zero_last_layer(*m.g_f);
  } else {
    FixedTranslatorSet set;
    set.entropy_weight = cfg.entropy_weight;
    set.classifier = make_head(in, cfg.p, ad::Activation::identity, 0.0, rng());
    ad::zero_last_layer(set.classifier);
    std::normal_distribution<double> n(0.0, 0.1);
    Tensor table = Tensor::zeros(cfg.p, 2 * l);
    for (std::size_t i = 0; i < cfg.p; ++i)
      for (std::size_t j = 0; j < 2 * l; ++j) table.at(i, j) = (j < l ? 1.0 : 0.0) + n(rng);
    set.table = ad::Parameter{std::move(table)};
    m.fixed_set = std::move(set);
  }
  return m;
}

inline Discriminator make_discriminator(std::size_t t, std::size_t l, double dropout, std::uint64_t seed) {
  return {make_head(t * l, 1, ad::Activation::sigmoid, dropout, seed)};
}

/// Evenly spaced integer change-points round(k t / c), k = 1..c-1.
inline std::vector<double> fixed_chunk_changepoints(std::size_t t, std::size_t c) {
  std::vector<double> tau;
  for (std::size_t k = 1; k < c; ++k) tau.push_back(std::round(static_cast<double>(k * t) / static_cast<double>(c)));
  return tau;
}

/// Everything the generator computes for a batch of flattened latent clips.
struct GeneratorForward {
  Var translated;              // B x (t l)
  std::optional<Var> tau;      // B x (c-1)
  std::vector<Var> weights;    // c of B x t
  std::vector<Var> masked;     // c of B x (t l), inputs of G_f / classifier
  std::vector<Var> omega_off;  // c of B x l, omega - 1 (absent for shift_only)
  std::vector<Var> phi;        // c of B x l (absent for scale_only)
  std::vector<Var> selection;  // c of B x p (fixed_set only)
  std::optional<Var> entropy;  // mean selection entropy (fixed_set only)
};

/// Blends per-chunk translators into the latent sequence:
/// z' = z + sum_k w_k * ((omega_k - 1) z + phi_k). With every omega_k - 1 and
/// phi_k exactly zero this returns z bit for bit.
inline Var blend_translators(Var z, const std::vector<Var>& weights, const std::vector<Var>& omega_off,
                             const std::vector<Var>& phi, std::size_t t, std::size_t l) {
  std::optional<Var> delta;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    std::optional<Var> chunk;
    if (!omega_off.empty()) chunk = ad::mul(ad::tile(omega_off[k], t), z);
    if (!phi.empty()) {
      Var shift = ad::tile(phi[k], t);
      chunk = chunk ? ad::add(*chunk, shift) : shift;
    }
    if (!chunk) continue;
    Var term = ad::mul(ad::repeat_each(weights[k], l), *chunk);
    delta = delta ? ad::add(*delta, term) : term;
  }
  return delta ? ad::add(z, *delta) : z;
}

inline Var changepoints_from_logits(Var logits, std::size_t t) {
  const std::size_t c = logits.cols();
  Var fractions = ad::softmax_rows(logits);
  return ad::scale(ad::slice_cols(ad::cumsum_cols(fractions), 0, c - 1), static_cast<double>(t));
}

/// Records the generator on `tape`. `z` is B x (t l), frame-major.
inline GeneratorForward generator_forward(Tape& tape, const TranslationModel& m, Var z) {
  if (z.cols() != m.input_dim()) {
    throw DimensionError("translation input width " + std::to_string(z.cols()) + " != t*l = " +
                         std::to_string(m.input_dim()));
  }
  const std::size_t batch = z.rows(), c = m.cfg.c, t = m.t, l = m.l;
  std::mt19937_64 unused_rng(0);  // generator networks carry no dropout
  GeneratorForward out;
  if (c >= 2) {
    if (m.g_t) {
      out.tau = changepoints_from_logits(ad::mlp_apply(tape, *m.g_t, z, ad::Mode::eval, unused_rng), t);
    } else {
      const auto grid = fixed_chunk_changepoints(t, c);
      Tensor tau = Tensor::zeros(batch, c - 1);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k + 1 < c; ++k) tau.at(b, k) = grid[k];
      out.tau = tape.constant(std::move(tau));
    }
  }
  out.weights = partition_weights(tape, out.tau ? &*out.tau : nullptr, batch, t, c, m.cfg.q);

  std::optional<Var> entropy_sum;
  for (std::size_t k = 0; k < c; ++k) {
    Var masked = c == 1 ? z : ad::mul(z, ad::repeat_each(out.weights[k], l));
    out.masked.push_back(masked);
    Var params;  // B x 2l: [omega - 1, phi]
    if (m.cfg.mode == GenMode::predicted) {
      params = ad::mlp_apply(tape, *m.g_f, masked, ad::Mode::eval, unused_rng);
    } else {
      const FixedTranslatorSet& set = *m.fixed_set;
      Var s = ad::softmax_rows(ad::mlp_apply(tape, set.classifier, masked, ad::Mode::eval, unused_rng));
      out.selection.push_back(s);
      Var h = ad::scale(ad::sum(ad::mul(s, ad::log_clamped(s, 1e-300))), -1.0 / static_cast<double>(batch));
      entropy_sum = entropy_sum ? ad::add(*entropy_sum, h) : h;
      Var chosen = ad::matmul(s, tape.parameter(set.table));
      params = ad::concat_cols({ad::add_scalar(ad::slice_cols(chosen, 0, l), -1.0), ad::slice_cols(chosen, l, 2 * l)});
    }
    if (m.cfg.form != TranslatorForm::shift_only) out.omega_off.push_back(ad::slice_cols(params, 0, l));
    if (m.cfg.form != TranslatorForm::scale_only) out.phi.push_back(ad::slice_cols(params, l, 2 * l));
  }
  if (entropy_sum) out.entropy = ad::scale(*entropy_sum, 1.0 / static_cast<double>(c));
  out.translated = blend_translators(z, out.weights, out.omega_off, out.phi, t, l);
  return out;
}

// ---- per-clip API ---------------------------------------------------------------------

inline Tensor flatten_clip(const Tensor& latents) { return latents.reshaped(ad::Shape{1, latents.size()}); }

inline void check_clip(const TranslationModel& m, const Tensor& latents) {
  if (latents.rows() != m.t || latents.cols() != m.l) {
    throw DimensionError("latent clip is " + std::to_string(latents.rows()) + " x " + std::to_string(latents.cols()) +
                         ", model expects " + std::to_string(m.t) + " x " + std::to_string(m.l));
  }
}

/// Change-points predicted by G_t for one t x l latent clip.
inline std::vector<double> predict_changepoints(const TranslationModel& m, const Tensor& latents) {
  if (!m.g_t) {
    throw ModeError("predict_changepoints needs a variable partition with c >= 2 (model has partition " +
                    to_string(m.cfg.partition) + ", c = " + std::to_string(m.cfg.c) + ")");
  }
  check_clip(m, latents);
  Tape tape;
  std::mt19937_64 rng(0);
  Var logits = ad::mlp_apply(tape, *m.g_t, tape.constant(flatten_clip(latents)), ad::Mode::eval, rng);
  std::vector<double> tau = changepoints_from_logits(logits, m.t).value().values();
  check_tau(tau, m.t);
  return tau;
}

/// The partition the model uses for a clip.
inline PartitionPlan plan_for(const TranslationModel& m, const Tensor& latents) {
  if (m.cfg.c == 1) return soft_partition({}, m.t, m.cfg.q);
  if (m.g_t) return soft_partition(predict_changepoints(m, latents), m.t, m.cfg.q);
  return soft_partition(fixed_chunk_changepoints(m.t, m.cfg.c), m.t, m.cfg.q);
}

inline Tensor mask_clip(const Tensor& latents, const std::vector<double>& w) {
  Tensor out = latents;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double& v : out.row_span(r)) v *= w[r];
  return out;
}

inline Translator translator_from_params(std::span<const double> raw, std::size_t l, TranslatorForm form,
                                         bool raw_is_offset) {
  Translator tr = Translator::identity(l);
  for (std::size_t j = 0; j < l; ++j) {
    if (form != TranslatorForm::shift_only) tr.omega[j] = raw_is_offset ? 1.0 + raw[j] : raw[j];
    if (form != TranslatorForm::scale_only) tr.phi[j] = raw[l + j];
  }
  return tr;
}

struct FixedSelection {
  std::vector<double> s;
  Translator translator;
  double entropy = 0.0;
};

/// Softmax selection over the set for one flattened (1 x t l) masked clip.
inline FixedSelection select_fixed_translator(const FixedTranslatorSet& set, const Tensor& masked,
                                              TranslatorForm form = TranslatorForm::full) {
  Tape tape;
  std::mt19937_64 rng(0);
  Var logits = ad::mlp_apply(tape, set.classifier, tape.constant(masked.reshaped(ad::Shape{1, masked.size()})),
                             ad::Mode::eval, rng);
  FixedSelection out;
  out.s = ad::softmax_rows(logits).value().values();
  for (double si : out.s)
    if (si > 0.0) out.entropy -= si * std::log(si);
  const std::size_t l = set.table.value.cols() / 2;
  std::vector<double> mixed(2 * l, 0.0);
  for (std::size_t i = 0; i < out.s.size(); ++i)
    for (std::size_t j = 0; j < 2 * l; ++j) mixed[j] += out.s[i] * set.table.value.at(i, j);
  out.translator = translator_from_params(mixed, l, form, false);
  return out;
}

/// One translator per chunk of `plan`.
inline std::vector<Translator> predict_translators(const TranslationModel& m, const Tensor& latents,
                                                   const PartitionPlan& plan) {
  check_clip(m, latents);
  if (plan.chunks() != m.cfg.c || plan.frames() != m.t) {
    throw DimensionError("partition has " + std::to_string(plan.chunks()) + " chunks over " +
                         std::to_string(plan.frames()) + " frames, model expects " + std::to_string(m.cfg.c) +
                         " over " + std::to_string(m.t));
  }
  std::vector<Translator> out;
  for (std::size_t k = 0; k < plan.chunks(); ++k) {
    Tensor masked = flatten_clip(plan.chunks() == 1 ? latents : mask_clip(latents, plan.chunk_weights(k)));
    if (m.g_f) {
      Tensor raw = ad::mlp_infer(*m.g_f, masked);
      out.push_back(translator_from_params(raw.data(), m.l, m.cfg.form, true));
    } else {
      out.push_back(select_fixed_translator(*m.fixed_set, masked, m.cfg.form).translator);
    }
  }
  return out;
}

/// z'[time] = sum_k w_k[time] (omega_k z[time] + phi_k), evaluated in the
/// offset form of blend_translators.
inline Tensor apply_translators(const Tensor& latents, const std::vector<Translator>& translators,
                                const PartitionPlan& plan) {
  if (translators.size() != plan.chunks()) {
    throw DimensionError(std::to_string(translators.size()) + " translators for " + std::to_string(plan.chunks()) +
                         " chunks");
  }
  const std::size_t t = latents.rows(), l = latents.cols();
  if (plan.frames() != t) throw DimensionError("partition covers " + std::to_string(plan.frames()) + " frames, clip has " + std::to_string(t));
  Tape tape;
  std::vector<Var> w, om, ph;
  for (std::size_t k = 0; k < plan.chunks(); ++k) {
    const Translator& tr = translators[k];
    if (tr.omega.size() != l || tr.phi.size() != l) throw DimensionError("translator width does not match the latent width");
    std::vector<double> off(l);
    for (std::size_t j = 0; j < l; ++j) off[j] = tr.omega[j] - 1.0;
    w.push_back(tape.constant(Tensor::row(plan.chunk_weights(k))));
    om.push_back(tape.constant(Tensor::row(off)));
    ph.push_back(tape.constant(Tensor::row(tr.phi)));
  }
  Var out = blend_translators(tape.constant(flatten_clip(latents)), w, om, ph, t, l);
  return out.value().reshaped(ad::Shape{t, l});
}

struct ClipTranslation {
  PartitionPlan plan;
  std::vector<Translator> translators;
  Tensor translated;  // t x l
};

inline ClipTranslation translate_latents(const TranslationModel& m, const Tensor& latents) {
  ClipTranslation out;
  out.plan = plan_for(m, latents);
  out.translators = predict_translators(m, latents, out.plan);
  out.translated = apply_translators(latents, out.translators, out.plan);
  return out;
}

/// Generator output for a batch of flattened clips, no gradient kept.
inline Tensor translate_batch(const TranslationModel& m, const Tensor& z) {
  Tape tape;
  return generator_forward(tape, m, tape.constant(z)).translated.value();
}

/// Discriminator probabilities (B x 1), eval mode.
inline Tensor discriminate(const Discriminator& d, const Tensor& z) { return ad::mlp_infer(d.net, z); }

// ---- persistence ---------------------------------------------------------------------

inline nlohmann::json model_json(const TranslationModel& m) {
  return {{"mode", to_string(m.cfg.mode)},
          {"partition", to_string(m.cfg.partition)},
          {"translator_form", to_string(m.cfg.form)},
          {"c", m.cfg.c},
          {"Q", m.cfg.q},
          {"t", m.t},
          {"l", m.l},
          {"p", m.cfg.p},
          {"entropy_weight", m.cfg.entropy_weight},
          {"disc_dropout", m.cfg.disc_dropout}};
}

/// Writes g_t.facw / g_f.facw / classifier.facw + translator_set.facw,
/// discriminator.facw and translate.json into `dir`.
inline void save_translation(const std::filesystem::path& dir, const TranslationModel& m, const Discriminator& d,
                             const nlohmann::json& extra = {}) {
  std::filesystem::create_directories(dir);
  if (m.g_t) ad::save_mlp(dir / "g_t.facw", *m.g_t);
  if (m.g_f) ad::save_mlp(dir / "g_f.facw", *m.g_f);
  if (m.fixed_set) {
    ad::save_mlp(dir / "classifier.facw", m.fixed_set->classifier);
    ad::write_facw(dir / "translator_set.facw",
                   {{m.fixed_set->table.value, Tensor::zeros(1, m.fixed_set->table.value.cols())}});
  }
  ad::save_mlp(dir / "discriminator.facw", d.net);
  nlohmann::json j = model_json(m);
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_json_file(dir / "translate.json", j);
}

struct LoadedTranslation {
  TranslationModel model;
  Discriminator disc;
  nlohmann::json meta;
};

inline LoadedTranslation load_translation(const std::filesystem::path& dir) {
  const nlohmann::json j = read_json_file(dir / "translate.json");
  ModelConfig cfg;
  std::size_t t = 0, l = 0;
  try {
    cfg.mode = parse_gen_mode(j.at("mode").get<std::string>());
    cfg.partition = parse_partition(j.at("partition").get<std::string>());
    cfg.form = parse_translator_form(j.at("translator_form").get<std::string>());
    cfg.c = j.at("c").get<std::size_t>();
    cfg.q = j.at("Q").get<double>();
    cfg.p = j.value("p", cfg.p);
    cfg.entropy_weight = j.value("entropy_weight", cfg.entropy_weight);
    cfg.disc_dropout = j.value("disc_dropout", cfg.disc_dropout);
    t = j.at("t").get<std::size_t>();
    l = j.at("l").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "translate.json").string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError((dir / "translate.json").string() + ": " + e.what());
  }
  LoadedTranslation out{make_translation_model(cfg, t, l, 0), make_discriminator(t, l, cfg.disc_dropout, 0), j};
  TranslationModel& m = out.model;
  if (m.g_t) ad::load_mlp(dir / "g_t.facw", *m.g_t);
  if (m.g_f) ad::load_mlp(dir / "g_f.facw", *m.g_f);
  if (m.fixed_set) {
    ad::load_mlp(dir / "classifier.facw", m.fixed_set->classifier);
    auto raw = ad::read_facw(dir / "translator_set.facw");
    if (raw.size() != 1 || raw[0].weight.shape() != m.fixed_set->table.value.shape()) {
      throw DimensionError((dir / "translator_set.facw").string() + ": translator table shape mismatch");
    }
    m.fixed_set->table.value = std::move(raw[0].weight);
    ++m.fixed_set->table.version;
  }
  ad::load_mlp(dir / "discriminator.facw", out.disc.net);
  return out;
}

}  // namespace facet::translate
