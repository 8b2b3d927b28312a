// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Criteria 3, 4, 5, 7 and 8 run the command pipeline on the shipped synthbench
// configurations (about half an hour on one core).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "facet/autodiff/grad_check.hpp"
#include "facet/cli/commands.hpp"
#include "facet/discover/cluster.hpp"
#include "facet/discover/metrics.hpp"
#include "facet/discover/probe.hpp"
#include "facet/translate/adversarial.hpp"
#include "facet/translate/partition.hpp"

using namespace facet;
namespace fs = std::filesystem;
using ad::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// ---- 1: gradient fidelity ---------------------------------------------------------

double bvae_grad_error(std::uint64_t seed, bool& usable) {
  vae::BvaeConfig cfg;
  cfg.latent_dim = 3;
  cfg.hidden = {5, 4};
  cfg.beta_final = 0.5 + static_cast<double>(seed % 4);
  vae::BvaeModel m = vae::make_bvae(6, cfg, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor x = Tensor::zeros(4, 6), noise = Tensor::zeros(4, 3);
  for (double& v : x.data()) v = nd(rng);
  for (double& v : noise.data()) v = nd(rng);
  for (auto* net : {&m.encoder, &m.decoder})
    for (auto& l : net->layers)
      for (double& v : l.bias.value.data()) v = 0.5 + 0.3 * nd(rng);
  const auto post = vae::encode_batch(m, x);
  Tensor z = Tensor::zeros(4, 3);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = post.mu[i] + std::exp(0.5 * post.logvar[i]) * noise[i];
  // central differences must not straddle a leaky-ReLU kink
  usable = std::min(ad::min_kink_distance(m.encoder, x), ad::min_kink_distance(m.decoder, z)) >= 0.05;
  if (!usable) return 0.0;
  std::vector<ad::Parameter*> params = m.encoder.parameters();
  for (auto* p : m.decoder.parameters()) params.push_back(p);
  auto f = [&](ad::Tape& t) {
    ad::Var xv = t.constant(x);
    const auto fw = vae::bvae_forward(t, m, xv, noise);
    return vae::bvae_loss(t, xv, fw.recon, fw.mu, fw.logvar, cfg.beta_final).total;
  };
  return ad::grad_check_params(f, params, 1e-5);
}

double generator_grad_error(std::uint64_t seed, bool& usable) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t t = 8, l = 3, batch = 4;
  translate::ModelConfig mc;
  mc.partition = translate::PartitionKind::variable;
  mc.c = 2;
  mc.q = 0.12;
  auto model = translate::make_translation_model(mc, t, l, rng());
  auto disc = translate::make_discriminator(t, l, 0.5, rng());
  Tensor z = Tensor::zeros(batch, t * l);
  auto perturb = [&](ad::MlpParams& net) {
    for (ad::Layer& layer : net.layers)
      for (double& v : layer.bias.value.data()) v = 0.5 + 0.3 * n(rng);
    for (double& v : net.layers.back().weight.value.data()) v = 0.5 * n(rng);
  };
  perturb(*model.g_t);
  perturb(*model.g_f);
  perturb(disc.net);
  for (double& v : z.data()) v = n(rng);
  {
    ad::Tape tape;
    auto gen = translate::generator_forward(tape, model, tape.constant(z));
    double margin = ad::min_kink_distance(*model.g_t, z);
    for (const ad::Var& masked : gen.masked) margin = std::min(margin, ad::min_kink_distance(*model.g_f, masked.value()));
    margin = std::min(margin, ad::min_kink_distance(disc.net, gen.translated.value()));
    usable = margin >= 0.01;
    if (!usable) return 0.0;
  }
  auto params = model.parameters();
  auto loss = [&](ad::Tape& tape) {
    std::mt19937_64 drop(99);
    auto gen = translate::generator_forward(tape, model, tape.constant(z));
    ad::Var d = ad::mlp_apply(tape, disc.net, gen.translated, ad::Mode::train, drop);
    return translate::adversarial_losses(tape.constant(Tensor(ad::Shape{1, 1}, 0.5)), d).g_loss;
  };
  return ad::grad_check_params(loss, params, 4e-4);
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  double worst_b = 0.0, worst_g = 0.0;
  int nb = 0, ng = 0;
  for (std::uint64_t s = 0; nb < 100 && s < 5000; ++s) {
    bool ok = false;
    const double e = bvae_grad_error(s, ok);
    if (ok) ++nb, worst_b = std::max(worst_b, e);
  }
  for (std::uint64_t s = 0; ng < 100 && s < 5000; ++s) {
    bool ok = false;
    const double e = generator_grad_error(s, ok);
    if (ok) ++ng, worst_g = std::max(worst_g, e);
  }
  const double secs = seconds_since(t0);
  const bool pass = nb == 100 && ng == 100 && worst_b <= 1e-4 && worst_g <= 1e-4 && secs < 60.0;
  return {pass, "bvae worst rel err " + fmt("%.2e", worst_b) + " (" + std::to_string(nb) + " seeds), generator worst " +
                    fmt("%.2e", worst_g) + " (" + std::to_string(ng) + " seeds), " + fmt("%.1f", secs) + " s; need <= 1e-4, < 60 s"};
}

// ---- 2: partition correctness -------------------------------------------------------

Outcome criterion2() {
  std::mt19937_64 rng(2024);
  double worst_sum = 0.0, worst_hard = 0.0;
  const std::size_t t = 64;
  for (std::size_t c : {1u, 2u, 7u}) {
    for (int rep = 0; rep < 200; ++rep) {
      std::uniform_real_distribution<double> u(0.5, static_cast<double>(t) - 0.5);
      std::vector<double> tau;
      while (tau.size() + 1 < c) tau.push_back(u(rng));
      std::sort(tau.begin(), tau.end());
      for (double q : {translate::kDefaultQ, 1e-4}) {
        const auto plan = translate::soft_partition(tau, t, q);
        for (std::size_t j = 0; j < t; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < c; ++k) s += plan.weights.at(k, j);
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
          if (q != 1e-4) continue;
          const double frame = static_cast<double>(j + 1);
          bool near = false;
          for (double tk : tau) near |= std::abs(frame - tk) <= 1.0;
          if (near) continue;
          std::size_t chunk = 0;  // hard pulse: tau_{k-1} < frame < tau_k
          while (chunk < tau.size() && frame > tau[chunk]) ++chunk;
          for (std::size_t k = 0; k < c; ++k)
            worst_hard = std::max(worst_hard, std::abs(plan.weights.at(k, j) - (k == chunk ? 1.0 : 0.0)));
        }
      }
    }
  }
  return {worst_sum <= 1e-9 && worst_hard <= 1e-6,
          "max |sum_k w - 1| " + fmt("%.2e", worst_sum) + " (<= 1e-9), max deviation from hard pulses at Q=1e-4 " +
              fmt("%.2e", worst_hard) + " (<= 1e-6)"};
}

// ---- 6: analytic spot values ---------------------------------------------------------

Outcome criterion6() {
  const std::vector<double> none;
  const double kl = vae::bvae_loss(none, none, std::vector<double>{1.0}, std::vector<double>{0.0}, 1.0).kl;

  translate::ModelConfig fs_cfg;
  fs_cfg.mode = translate::GenMode::fixed_set;
  fs_cfg.partition = translate::PartitionKind::none;
  fs_cfg.c = 1;
  fs_cfg.p = 32;
  auto fixed = translate::make_translation_model(fs_cfg, 6, 2, 3);
  for (auto& v : fixed.fixed_set->classifier.layers.back().weight.value.data()) v = 0.0;
  for (auto& v : fixed.fixed_set->classifier.layers.back().bias.value.data()) v = 0.0;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor z = Tensor::zeros(6, 2);
  for (double& v : z.data()) v = nd(rng);
  const double ent = translate::select_fixed_translator(*fixed.fixed_set, translate::flatten_clip(z)).entropy;

  const std::vector<double> half(16, 0.5);
  const double dl = translate::adversarial_losses(half, half).d_loss;

  Tensor lat = Tensor::zeros(64, 8);
  for (double& v : lat.data()) v = nd(rng) * 3.0;
  bool exact = true;
  for (std::size_t c : {1u, 2u, 7u}) {
    translate::ModelConfig mc;
    mc.partition = c == 1 ? translate::PartitionKind::none : translate::PartitionKind::variable;
    mc.c = c;
    const auto m = translate::make_translation_model(mc, 64, 8, 17 + c);  // zero-initialized head = identity
    const auto tr = translate::translate_latents(m, lat);
    exact = exact && tr.translated.values() == lat.values();
    std::vector<translate::Translator> ids(c, translate::Translator::identity(8));
    exact = exact && translate::apply_translators(lat, ids, tr.plan).values() == lat.values();
  }
  const bool pass = kl == 0.5 && std::abs(ent - std::log(32.0)) <= 1e-9 &&
                    std::abs(dl - 2.0 * std::numbers::ln2) <= 1e-9 && exact;
  return {pass, "KL " + fmt("%.17g", kl) + " (== 0.5), entropy - ln 32 = " + fmt("%.1e", ent - std::log(32.0)) +
                    ", d_loss - 2 ln 2 = " + fmt("%.1e", dl - 2.0 * std::numbers::ln2) +
                    ", identity translators bit-exact: " + (exact ? "yes" : "no")};
}

// ---- pipeline helpers ----------------------------------------------------------------

config::RunConfig shipped(const std::string& name, const fs::path& out) {
  config::RunConfig c = config::load_run_config(fs::path(FACET_SOURCE_DIR) / "configs" / name);
  c.out = out.string();
  return c;
}

double final_accuracy_of(const fs::path& run_dir) {
  return read_json_file(run_dir / "result.json").at("final_accuracy").get<double>();
}

struct Pipeline {
  config::RunConfig cfg;
  double train_seconds = 0.0;  // train-bvae + train-translate
};

Pipeline run_pipeline(const std::string& config_name, const fs::path& out) {
  Pipeline p{shipped(config_name, out)};
  fs::remove_all(out);
  progress("synth + prep for " + config_name);
  cli::cmd_synth(p.cfg);
  cli::cmd_prep(p.cfg);
  const auto t0 = Clock::now();
  progress("train-bvae");
  cli::cmd_train_bvae(p.cfg);
  progress("train-translate");
  cli::cmd_train_translate(p.cfg, false, false);
  p.train_seconds = seconds_since(t0);
  progress("analyze");
  cli::cmd_analyze(p.cfg);
  return p;
}

// ---- 3: planted recovery ---------------------------------------------------------------

Outcome criterion3(const Pipeline& p) {
  const auto r = read_json_file(cli::Layout{p.cfg.out}.translate("xy") / "result.json").at("recovery");
  const double shift = r.at("shift_mae").get<double>(), scale = r.at("scale_mae").get<double>();
  const double cp = r.at("changepoint_mae").get<double>();
  const bool match = r.at("active_dim_match").get<bool>();
  const bool pass = shift <= 0.3 && scale <= 0.2 && cp <= 5.0 && match && p.train_seconds <= 1800.0;
  return {pass, "shift_mae " + fmt("%.3f", shift) + " (<= 0.3), scale_mae " + fmt("%.3f", scale) + " (<= 0.2), changepoint_mae " +
                    fmt("%.2f", cp) + " frames (<= 5), active_dim_match " + (match ? "true" : "false") + ", train time " +
                    fmt("%.0f", p.train_seconds) + " s (<= 1800)"};
}

// ---- 4: ordering ------------------------------------------------------------------------

Outcome criterion4(const Pipeline& p) {
  const auto t0 = Clock::now();
  const cli::Layout L{p.cfg.out};
  const cli::LatentSets s = cli::load_latent_sets(L);
  struct Variant {
    const char* name;
    std::function<void(translate::TrainConfig&)> set;
    std::vector<double> acc;
  };
  std::vector<Variant> vs = {
      {"facet", [](translate::TrainConfig&) {}, {}},
      {"fixed_chunks", [](translate::TrainConfig& t) { t.model.partition = translate::PartitionKind::fixed_chunks; }, {}},
      {"fixed_set", [](translate::TrainConfig& t) { t.model.mode = translate::GenMode::fixed_set; }, {}},
      {"frozen", [](translate::TrainConfig& t) { t.train_generator = false; }, {}},
  };
  for (auto& v : vs) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      translate::TrainConfig tc = p.cfg.translate;
      tc.seed = seed;
      v.set(tc);
      const fs::path dir = L.out / "ordering" / (std::string(v.name) + "_s" + std::to_string(seed));
      progress(std::string("ordering: ") + v.name + " seed " + std::to_string(seed));
      v.acc.push_back(cli::run_translation(p.cfg, tc, s, "xy", dir));
    }
  }
  auto mean = [](const std::vector<double>& a) { return std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size()); };
  const double facet = mean(vs[0].acc), chunks = mean(vs[1].acc), set = mean(vs[2].acc), frozen = mean(vs[3].acc);
  const double secs = seconds_since(t0);
  const bool pass = facet < chunks && chunks < set && facet <= 0.65 && frozen >= 0.95 && secs <= 7200.0;
  return {pass, "mean final disc acc facet " + fmt("%.3f", facet) + " < fixed_chunks " + fmt("%.3f", chunks) +
                    " < fixed_set " + fmt("%.3f", set) + ", facet <= 0.65, frozen-identity " + fmt("%.3f", frozen) +
                    " (>= 0.95), grid " + fmt("%.0f", secs) + " s (<= 7200)"};
}

// ---- 5: null control ----------------------------------------------------------------------

Outcome criterion5(const Pipeline& p) {
  const cli::Layout L{p.cfg.out};
  const double acc = final_accuracy_of(L.translate("xy"));
  const auto rep = read_json_file(L.report() / "report.json");
  double worst = 0.0;
  std::string per;
  for (const auto& h : rep.at("latents")) {
    const double ms = h.at("mean_shift").get<double>();
    worst = std::max(worst, std::abs(ms));
    per += (per.empty() ? "" : ", ") + std::to_string(h.at("index").get<std::size_t>()) + ":" + fmt("%+.3f", ms);
  }
  const bool pass = acc >= 0.45 && acc <= 0.60 && worst <= 0.2 && p.train_seconds <= 1800.0;
  return {pass, "final disc acc " + fmt("%.3f", acc) + " (in [0.45, 0.60]), mean_shift per active latent {" + per +
                    "} (|.| <= 0.2), train time " + fmt("%.0f", p.train_seconds) + " s (<= 1800)"};
}

// ---- 7: discovery analytics ----------------------------------------------------------------

Outcome criterion7(const Pipeline& p) {
  // transitions on the planted two-regime benchmark, k = 2
  const cli::Layout L{p.cfg.out};
  const cli::LatentSets s = cli::load_latent_sets(L);
  const auto tr = translate::load_translation(L.translate("xy"));
  const auto& dims = s.bvae.dims.active;
  const auto tab = discover::chunk_table(tr.model, s.of(kp::Domain::x), dims, false);
  discover::KMeansConfig km;
  km.seed = p.cfg.seed;
  const auto model = discover::cluster_translators(tab.features, 2, 10, km);
  // the planted first segment is the identity: its cluster is the centroid
  // with omega closest to 1 over the active latents
  auto dist_to_identity = [&](std::size_t k) {
    double d = 0.0;
    for (std::size_t j = 0; j < dims.size(); ++j) d += std::abs(model.centroids.at(k, j) - 1.0);
    return d;
  };
  const std::size_t from = dist_to_identity(0) <= dist_to_identity(1) ? 0 : 1, to = 1 - from;
  std::vector<std::vector<std::size_t>> seqs(s.of(kp::Domain::x).size());
  for (std::size_t r = 0; r < tab.owner.size(); ++r) seqs[tab.owner[r].first].push_back(model.assignments[r]);
  const auto tm = discover::transition_matrix(seqs, 2);
  const double frac = tm.total() ? static_cast<double>(tm.counts[to][from]) / static_cast<double>(tm.total()) : 0.0;

  // BIC on three separated blobs
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 0.5);
  const double centers[3][2] = {{0, 0}, {6, 0}, {0, 6}};
  Tensor blobs = Tensor::zeros(300, 2);
  for (std::size_t i = 0; i < 300; ++i)
    for (std::size_t j = 0; j < 2; ++j) blobs.at(i, j) = centers[i % 3][j] + nd(rng);
  const auto bic = discover::cluster_translators(blobs, std::nullopt, 10, km);

  // probes
  std::normal_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const std::size_t n = 20000;
  Tensor x = Tensor::zeros(n, 4);
  std::vector<int> sign_labels(n), random_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 4; ++j) x.at(i, j) = unit(rng);
    sign_labels[i] = x.at(i, 0) > 0.0 ? 1 : 0;
    random_labels[i] = coin(rng) ? 1 : 0;
  }
  discover::ProbeConfig pc;
  pc.seed = 5;
  const double sep = discover::frame_classifier_probe(x, sign_labels, pc).test_accuracy;
  const double rnd = discover::frame_classifier_probe(x, random_labels, pc).test_accuracy;

  const bool pass = frac >= 0.6 && bic.k == 3 && sep >= 0.99 && rnd >= 0.45 && rnd <= 0.55;
  return {pass, "planted transition cell " + fmt("%.3f", frac) + " of mass (>= 0.6), BIC k " + std::to_string(bic.k) +
                    " (== 3), probe sign-separable " + fmt("%.4f", sep) + " (>= 0.99), random labels " + fmt("%.4f", rnd) +
                    " (in [0.45, 0.55])"};
}

// ---- 8: determinism and aggregation -----------------------------------------------------------

Outcome criterion8(const Pipeline& p) {
  const cli::Layout L{p.cfg.out};
  const std::string report = slurp(L.report() / "report.json");
  const std::string index = slurp(L.clip_index()), norm = slurp(L.norm());
  cli::cmd_analyze(p.cfg);
  cli::cmd_prep(p.cfg);
  const bool same = !report.empty() && report == slurp(L.report() / "report.json") && index == slurp(L.clip_index()) &&
                    norm == slurp(L.norm());

  const std::vector<std::vector<double>> eight(8, std::vector<double>{0.61, 0.58, 0.57});
  double hw8 = 0.0;
  for (const auto& a : discover::aggregate_runs(eight)) hw8 = std::max(hw8, a.half_width);
  const auto two = discover::aggregate_values(std::vector<double>{1.0, 3.0});
  // 1 degree of freedom: Cauchy quantile tan(pi (0.975 - 0.5)); sd sqrt(2), n 2
  const double oracle = std::tan(std::numbers::pi * 0.475) * std::sqrt(2.0) / std::sqrt(2.0);
  const bool pass = same && hw8 == 0.0 && two.mean == 2.0 && std::abs(two.half_width - oracle) <= 1e-9 &&
                    std::abs(two.half_width - 12.71) <= 0.005;
  return {pass, std::string("rerun report/prep byte-identical: ") + (same ? "yes" : "no") + ", 8 identical logs half-width " +
                    fmt("%.3g", hw8) + ", {1,3} mean " + fmt("%.6g", two.mean) + " half-width " + fmt("%.6f", two.half_width) +
                    " (closed form " + fmt("%.6f", oracle) + ")"};
}

template <class F>
Outcome guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "facet_acceptance";
  std::vector<Outcome> out(9);
  const char* names[9] = {"",
                          "gradient fidelity",
                          "partition correctness",
                          "planted-difference recovery",
                          "ordering on synthbench",
                          "null-difference control",
                          "analytic spot values",
                          "discovery analytics",
                          "determinism and aggregation"};
  out[1] = guarded(criterion1);
  out[2] = guarded(criterion2);
  out[6] = guarded(criterion6);

  std::optional<Pipeline> planted;
  try {
    planted = run_pipeline("synthbench.toml", root / "synthbench");
  } catch (const std::exception& e) {
    for (int i : {3, 4, 7, 8}) out[i] = {false, std::string("pipeline error: ") + e.what()};
  }
  if (planted) {
    out[3] = guarded([&] { return criterion3(*planted); });
    out[7] = guarded([&] { return criterion7(*planted); });
    out[8] = guarded([&] { return criterion8(*planted); });
    out[4] = guarded([&] { return criterion4(*planted); });
    fs::remove_all(root / "synthbench" / "synth");
  }
  out[5] = guarded([&] { return criterion5(run_pipeline("synthbench_null.toml", root / "null")); });
  fs::remove_all(root / "null" / "synth");

  bool all = true;
  for (int i = 1; i <= 8; ++i) {
    std::cout << "criterion " << i << " [" << (out[i].pass ? "PASS" : "FAIL") << "] " << names[i] << ": " << out[i].detail
              << '\n';
    all = all && out[i].pass;
  }
  return all ? 0 : 1;
}
