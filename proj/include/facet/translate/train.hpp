#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "facet/autodiff/adam.hpp"
#include "facet/keypoints/clips.hpp"
#include "facet/translate/adversarial.hpp"
#include "facet/translate/model.hpp"

namespace facet::translate {

struct TrainConfig {
  ModelConfig model;
  double lr = 1e-4;
  std::size_t epochs = 1000;
  std::size_t batch_size = 64;
  std::size_t metric_window = 100;  // final accuracy = mean over the last this-many epochs
  bool train_generator = true;      // false: identity generator, discriminator trained alone
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    if (!(lr > 0.0)) throw ConfigError("translate.lr must be > 0");
    if (epochs == 0) throw ConfigError("translate.epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("translate.batch_size must be >= 1");
    if (metric_window == 0) throw ConfigError("translate.metric_window must be >= 1");
  }
};

/// Flattened latent clips (rows of t*l), split into train and held-out parts.
struct TranslationData {
  Tensor x_train, x_test, y_train, y_test;
  std::size_t t = 0, l = 0;
};

inline Tensor gather_rows(const Tensor& m, std::span<const std::size_t> rows) {
  Tensor out = Tensor::zeros(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

/// Stacks t x l latent clips into an n x (t l) matrix.
inline Tensor stack_clips(const std::vector<Tensor>& clips) {
  if (clips.empty()) throw ParameterError("no latent clips");
  const std::size_t w = clips.front().size();
  Tensor out = Tensor::zeros(clips.size(), w);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].size() != w) throw DimensionError("latent clips differ in size");
    std::copy(clips[i].data().begin(), clips[i].data().end(), out.row_span(i).begin());
  }
  return out;
}

inline TranslationData split_translation_data(const Tensor& x, const Tensor& y, std::size_t t, std::size_t l,
                                              double train_ratio, std::uint64_t seed) {
  if (x.cols() != t * l || y.cols() != t * l) throw DimensionError("latent clips must be flattened to t*l columns");
  const auto sx = kp::split_indices(x.rows(), train_ratio, seed);
  const auto sy = kp::split_indices(y.rows(), train_ratio, seed ^ 0x5bd1e995ULL);
  if (sx.test.empty() || sy.test.empty()) throw ParameterError("translation needs at least 2 clips per domain");
  return {gather_rows(x, sx.train), gather_rows(x, sx.test), gather_rows(y, sy.train), gather_rows(y, sy.test), t, l};
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double disc_accuracy = 0.0;
};

struct TranslationRun {
  TranslationModel model;
  Discriminator disc;
  std::vector<EpochMetrics> log;
  double final_accuracy = 0.0;
};

/// Held-out accuracy of `d` at telling real Y from translated X (threshold 0.5).
inline double discriminator_accuracy(const Discriminator& d, const TranslationModel& m, const Tensor& x_test,
                                     const Tensor& y_test) {
  const Tensor real = discriminate(d, y_test);
  const Tensor fake = discriminate(d, translate_batch(m, x_test));
  std::size_t correct = 0;
  for (double p : real.data()) correct += p >= 0.5;
  for (double p : fake.data()) correct += p < 0.5;
  return static_cast<double>(correct) / static_cast<double>(real.size() + fake.size());
}

inline double final_accuracy(const std::vector<EpochMetrics>& log, std::size_t window) {
  if (log.empty()) return 0.0;
  const std::size_t n = std::min(window, log.size());
  // running mean: exact when every entry is equal
  double m = 0.0, k = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) m += (log[i].disc_accuracy - m) / ++k;
  return m;
}

using TranslationCallback = std::function<void(const EpochMetrics&)>;

/// Alternating adversarial training: per batch one discriminator step, then
/// one generator step. Deterministic for a given seed.
inline TranslationRun train_translation(const TranslationData& data, const TrainConfig& cfg,
                                        const TranslationCallback& on_epoch = {}) {
  cfg.validate();
  if (data.x_train.rows() == 0 || data.y_train.rows() == 0) throw ParameterError("empty translation training set");
  std::mt19937_64 seeder(cfg.seed);
  TranslationRun run{make_translation_model(cfg.model, data.t, data.l, seeder()),
                     make_discriminator(data.t, data.l, cfg.model.disc_dropout, seeder()), {}, 0.0};
  std::mt19937_64 rng(seeder());
  ad::AdamState adam_d(ad::AdamConfig{cfg.lr});
  ad::AdamState adam_g(ad::AdamConfig{cfg.lr});
  auto d_params = run.disc.net.parameters();
  const std::vector<const ad::Parameter*> d_cparams(d_params.begin(), d_params.end());
  auto g_params = run.model.parameters();
  const std::vector<const ad::Parameter*> g_cparams(g_params.begin(), g_params.end());

  const std::size_t nx = data.x_train.rows(), ny = data.y_train.rows();
  std::vector<std::size_t> order_x(nx), order_y(ny);
  std::iota(order_x.begin(), order_x.end(), 0);
  std::iota(order_y.begin(), order_y.end(), 0);
  std::size_t y_cursor = ny;  // forces a reshuffle on first use

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      std::shuffle(order_x.begin(), order_x.end(), rng);
      double d_sum = 0.0, g_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < nx; start += cfg.batch_size) {
        const std::size_t n = std::min(cfg.batch_size, nx - start);
        std::vector<std::size_t> yb;
        while (yb.size() < n) {
          if (y_cursor == ny) {
            std::shuffle(order_y.begin(), order_y.end(), rng);
            y_cursor = 0;
          }
          yb.push_back(order_y[y_cursor++]);
        }
        const Tensor xb = gather_rows(data.x_train, std::span(order_x).subspan(start, n));
        const Tensor ybt = gather_rows(data.y_train, yb);

        {
          Tape tape;
          Var fake = tape.constant(translate_batch(run.model, xb));
          Var d_real = ad::mlp_apply(tape, run.disc.net, tape.constant(ybt), ad::Mode::train, rng);
          Var d_fake = ad::mlp_apply(tape, run.disc.net, fake, ad::Mode::train, rng);
          auto losses = adversarial_losses(d_real, d_fake);
          d_sum += losses.d_loss.value().item();
          g_sum += losses.g_loss.value().item();
          tape.backward(losses.d_loss);
          adam_d.step(d_params, tape.gradients(d_cparams));
        }
        if (cfg.train_generator) {
          Tape tape;
          auto gen = generator_forward(tape, run.model, tape.constant(xb));
          Var d_fake = ad::mlp_apply(tape, run.disc.net, gen.translated, ad::Mode::train, rng);
          Var loss = ad::scale(ad::mean(ad::log_clamped(d_fake, kLogFloor)), -1.0);
          if (gen.entropy) loss = ad::add(loss, ad::scale(*gen.entropy, run.model.cfg.entropy_weight));
          tape.backward(loss);
          adam_g.step(g_params, tape.gradients(g_cparams));
        }
        ++batches;
      }
      EpochMetrics em{epoch, d_sum / static_cast<double>(batches), g_sum / static_cast<double>(batches),
                      discriminator_accuracy(run.disc, run.model, data.x_test, data.y_test)};
      run.log.push_back(em);
      if (on_epoch) on_epoch(em);
    } catch (const NumericError& e) {
      throw DivergenceError("translation training diverged at epoch " + std::to_string(epoch) + ": " + e.what(),
                            static_cast<int>(epoch));
    }
  }
  run.final_accuracy = final_accuracy(run.log, cfg.metric_window);
  return run;
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << "epoch,d_loss,g_loss,disc_accuracy\n";
  os.precision(17);
  for (const EpochMetrics& m : log) os << m.epoch << ',' << m.d_loss << ',' << m.g_loss << ',' << m.disc_accuracy << '\n';
}

inline std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DependencyError("missing metric log: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "epoch,d_loss,g_loss,disc_accuracy") {
    throw FormatError(path.string() + ": unexpected header");
  }
  std::vector<EpochMetrics> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    EpochMetrics m;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream ss(line);
    if (!(ss >> m.epoch >> c1 >> m.d_loss >> c2 >> m.g_loss >> c3 >> m.disc_accuracy) || c1 != ',' || c2 != ',' ||
        c3 != ',') {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed metric row");
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace facet::translate
