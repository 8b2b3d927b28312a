#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "facet/discover/metrics.hpp"
#include "facet/discover/report.hpp"
#include "facet/synthbench/synthbench.hpp"

using namespace facet;
using facet::ad::Tensor;

namespace {

struct WarningCollector {
  std::vector<std::string> seen;
  WarningHandler prev;
  WarningCollector() : prev(set_warning_handler([this](const std::string& m) { seen.push_back(m); })) {}
  ~WarningCollector() { set_warning_handler(prev); }
};

Tensor gaussian(std::size_t n, std::size_t d, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  Tensor x = Tensor::zeros(n, d);
  for (double& v : x.data()) v = nd(rng);
  return x;
}

}  // namespace

// ---- discriminator accuracy --------------------------------------------------------

TEST(DiscriminatorAccuracy, ConstantClassifierIsHalf) {
  const std::vector<double> real(10, 0.5 + 1e-9), fake(10, 0.5 + 1e-9);
  EXPECT_DOUBLE_EQ(discover::accuracy_from_probs(real, fake), 0.5);
}

TEST(DiscriminatorAccuracy, DirectCount) {
  const std::vector<double> real{0.9, 0.4}, fake{0.2, 0.6};
  EXPECT_DOUBLE_EQ(discover::accuracy_from_probs(real, fake), 0.5);
}

TEST(DiscriminatorAccuracy, NetworkWithConstantOutput) {
  translate::Discriminator d = translate::make_discriminator(4, 2, 0.5, 3);
  ad::zero_last_layer(d.net);
  d.net.layers.back().bias.value[0] = 1e-6;  // sigmoid -> just above 0.5
  const Tensor real = gaussian(7, 8, 1), fake = gaussian(5, 8, 2);
  EXPECT_DOUBLE_EQ(discover::discriminator_accuracy(d, real, fake), 7.0 / 12.0);
  EXPECT_THROW(discover::discriminator_accuracy(d, Tensor{}, fake), ParameterError);
}

TEST(DiscriminatorAccuracy, TrailingWindowOfConstantLog) {
  std::vector<translate::EpochMetrics> log;
  for (std::size_t e = 1; e <= 250; ++e) log.push_back({e, 1.0, 1.0, 0.73});
  EXPECT_DOUBLE_EQ(discover::trailing_accuracy(log), 0.73);
  log[0].disc_accuracy = 0.0;  // outside the last 100 epochs
  EXPECT_DOUBLE_EQ(discover::trailing_accuracy(log), 0.73);
}

// ---- aggregation -------------------------------------------------------------------

TEST(AggregateRuns, IdenticalLogsHaveZeroWidth) {
  const std::vector<std::vector<double>> logs(8, std::vector<double>{74.11, 0.5, 3.0});
  const auto agg = discover::aggregate_runs(logs);
  ASSERT_EQ(agg.size(), 3u);
  EXPECT_NEAR(agg[0].mean, 74.11, 1e-12);
  EXPECT_DOUBLE_EQ(agg[0].half_width, 0.0);
  EXPECT_EQ(agg[0].n, 8u);
}

TEST(AggregateRuns, TwoRunsStudentT) {
  const std::vector<double> v{1.0, 3.0};
  const auto a = discover::aggregate_values(v);
  // with one degree of freedom the t distribution is Cauchy: q(p) = tan(pi (p - 1/2))
  const double t975 = std::tan(std::numbers::pi * 0.475);
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  EXPECT_NEAR(a.half_width, t975 * std::sqrt(2.0) / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(a.half_width, 12.71, 0.005);
}

TEST(AggregateRuns, ThreeRunsStudentT) {
  // two degrees of freedom: q(p) = (2p - 1) sqrt(2 / (1 - (2p - 1)^2))
  const std::vector<double> v{2.0, 4.0, 9.0};
  const double a = 0.95;
  const double t975 = a * std::sqrt(2.0 / (1.0 - a * a));
  const double mean = 5.0, sd = std::sqrt(((9.0) + 1.0 + 16.0) / 2.0);
  const auto g = discover::aggregate_values(v);
  EXPECT_DOUBLE_EQ(g.mean, mean);
  EXPECT_NEAR(g.half_width, t975 * sd / std::sqrt(3.0), 1e-9);
}

TEST(AggregateRuns, MeanIsPermutationInvariant) {
  std::vector<std::vector<double>> logs{{1.0, 2.0}, {5.0, -1.0}, {0.25, 7.0}, {3.0, 3.0}};
  const auto a = discover::aggregate_runs(logs);
  std::reverse(logs.begin(), logs.end());
  std::swap(logs[0], logs[2]);
  const auto b = discover::aggregate_runs(logs);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(a[i].mean, b[i].mean, 1e-12);
    EXPECT_NEAR(a[i].half_width, b[i].half_width, 1e-12);
  }
}

TEST(AggregateRuns, Errors) {
  EXPECT_THROW(discover::aggregate_runs({{1.0, 2.0}, {1.0}}), AlignmentError);
  EXPECT_THROW(discover::aggregate_runs({{1.0}}), ParameterError);
}

// ---- histograms --------------------------------------------------------------------

TEST(FindModes, ProminenceThreshold) {
  const std::vector<std::size_t> h{0, 5, 1, 0, 0, 2, 2, 2, 0, 9, 8, 9, 0};
  // 5 (prom 5), plateau of 2 (prom 2, middle bin 6), 9 at 9 and at 11: equal peaks
  // do not bound each other, so both keep prominence 9
  EXPECT_EQ(discover::find_modes(h, 0.0), (std::vector<std::size_t>{1, 6, 9, 11}));
  EXPECT_EQ(discover::find_modes(h, 2.0), (std::vector<std::size_t>{1, 6, 9, 11}));
  EXPECT_EQ(discover::find_modes(h, 3.0), (std::vector<std::size_t>{1, 9, 11}));
  EXPECT_EQ(discover::find_modes({0, 4, 6, 9, 3, 12, 0}, 6.5), (std::vector<std::size_t>{5}));  // 9 has prominence 9 - 3
  EXPECT_EQ(discover::find_modes({3, 1, 1}, 1.0), (std::vector<std::size_t>{0}));  // edge bin
}

TEST(LatentHistograms, IdenticalSamplesNoShift) {
  const Tensor s = gaussian(400, 4, 5), t = gaussian(300, 4, 6);
  const auto hs = discover::latent_histograms(s, t, s, {0, 2, 3});
  ASSERT_EQ(hs.size(), 3u);
  for (const auto& h : hs) {
    EXPECT_DOUBLE_EQ(h.mean_shift, 0.0);
    EXPECT_EQ(h.bin_edges.size(), 41u);
    for (std::size_t b = 0; b + 1 < h.bin_edges.size(); ++b) EXPECT_LT(h.bin_edges[b], h.bin_edges[b + 1]);
    for (discover::Condition c : discover::kConditions) {
      const auto& cnt = h.count(c);
      EXPECT_EQ(std::accumulate(cnt.begin(), cnt.end(), std::size_t{0}), c == discover::Condition::target ? 300u : 400u);
    }
  }
}

TEST(LatentHistograms, PlantedShiftOnSyntheticFactors) {
  // factor trajectories of the synthetic benchmark used as latents; factor 1 sits on latent 6
  synth::SynthSpec spec = synth::default_spec(2);
  spec.landmarks = 8;
  spec.clip_count = 600;
  synth::SegmentTranslator shift = synth::SegmentTranslator::identity(3);
  shift.phi[1] = 1.5;
  spec.planted = {shift, shift};
  const synth::DomainPair pair(spec);
  const std::vector<std::size_t> slot{1, 6, 4};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 0.05);
  Tensor src = Tensor::zeros(600 * 64, 8), trn = Tensor::zeros(600 * 64, 8);
  for (double& v : src.data()) v = nd(rng);
  for (double& v : trn.data()) v = nd(rng);
  for (std::size_t i = 0; i < 600; ++i) {
    const auto x = pair.get(kp::Domain::x, i), y = pair.get(kp::Domain::y, i);
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t f = 0; f < 3; ++f) {
        src.at(i * 64 + r, slot[f]) += x.truth.factors.at(r, f);
        trn.at(i * 64 + r, slot[f]) += y.truth.factors.at(r, f);
      }
  }
  const auto hs = discover::latent_histograms(src, trn, trn, {1, 4, 6});
  for (const auto& h : hs) {
    if (h.latent_index == 6) {
      EXPECT_NEAR(h.mean_shift, 1.5, 0.2);
    } else {
      EXPECT_NEAR(h.mean_shift, 0.0, 0.2) << "latent " << h.latent_index;
    }
  }
}

TEST(LatentHistograms, BimodalTargetTwoModes) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> a(-2.0, 0.1), b(2.0, 0.1);
  Tensor t = Tensor::zeros(2000, 1);
  for (std::size_t r = 0; r < 2000; ++r) t.at(r, 0) = r % 2 ? a(rng) : b(rng);
  const Tensor s = gaussian(500, 1, 9, 0.5);
  const auto hs = discover::latent_histograms(s, t, s, {0});
  const auto& modes = hs[0].mode(discover::Condition::target);
  ASSERT_EQ(modes.size(), 2u);
  const double width = hs[0].bin_edges[1] - hs[0].bin_edges[0];
  EXPECT_NEAR(modes[0], -2.0, width);
  EXPECT_NEAR(modes[1], 2.0, width);
}

TEST(LatentHistograms, EmptyConditionNamed) {
  const Tensor s = gaussian(10, 2, 1);
  try {
    discover::latent_histograms(s, s, Tensor{}, {0});
    FAIL();
  } catch (const ReportError& e) {
    EXPECT_NE(std::string(e.what()).find("translated"), std::string::npos);
  }
}

// ---- clustering --------------------------------------------------------------------

namespace {

Tensor rows(std::initializer_list<std::vector<double>> r) {
  Tensor t = Tensor::zeros(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& v : r) std::copy(v.begin(), v.end(), t.row_span(i++).begin());
  return t;
}

double partition_sse(const Tensor& x, unsigned mask) {
  double s = 0.0;
  for (unsigned side = 0; side < 2; ++side) {
    std::vector<double> mean(x.cols(), 0.0);
    std::size_t n = 0;
    for (std::size_t r = 0; r < x.rows(); ++r)
      if (((mask >> r) & 1u) == side) {
        ++n;
        for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += x.at(r, j);
      }
    if (n == 0) return 1e300;
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < x.rows(); ++r)
      if (((mask >> r) & 1u) == side)
        for (std::size_t j = 0; j < x.cols(); ++j) s += (x.at(r, j) - mean[j]) * (x.at(r, j) - mean[j]);
  }
  return s;
}

Tensor blobs(std::size_t per, const std::vector<std::vector<double>>& centers, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  Tensor x = Tensor::zeros(per * centers.size(), centers[0].size());
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t j = 0; j < centers[c].size(); ++j) x.at(c * per + i, j) = centers[c][j] + nd(rng);
  return x;
}

}  // namespace

TEST(KMeans, FourPointsExhaustiveOracle) {
  const Tensor x = rows({{0, 0}, {0, 1}, {10, 10}, {10, 11}});
  const auto m = discover::kmeans(x, 2);
  double best = 1e300;
  for (unsigned mask = 1; mask < 15; ++mask) best = std::min(best, partition_sse(x, mask));
  EXPECT_NEAR(m.sse, best, 1e-12);
  std::vector<std::vector<double>> c{m.centroids.row_values(0), m.centroids.row_values(1)};
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c[0], (std::vector<double>{0.0, 0.5}));
  EXPECT_EQ(c[1], (std::vector<double>{10.0, 10.5}));
}

TEST(KMeans, ObjectiveNonIncreasingAndFixedPoint) {
  const Tensor x = blobs(40, {{0, 0, 0}, {3, 0, 1}, {0, 4, 2}, {2, 2, 2}}, 1.0, 4);
  for (std::size_t k = 2; k <= 6; ++k) {
    const auto m = discover::kmeans(x, k, {10, 300, k});
    for (std::size_t i = 1; i < m.objective_trace.size(); ++i) EXPECT_LE(m.objective_trace[i], m.objective_trace[i - 1] + 1e-9);
    for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_EQ(m.assignments[r], discover::nearest_centroid(x, r, m.centroids));
    // centroids are the means of their members
    for (std::size_t c = 0; c < m.k; ++c) {
      std::vector<double> mean(3, 0.0);
      std::size_t n = 0;
      for (std::size_t r = 0; r < x.rows(); ++r)
        if (m.assignments[r] == c) {
          ++n;
          for (std::size_t j = 0; j < 3; ++j) mean[j] += x.at(r, j);
        }
      ASSERT_GT(n, 0u);
      for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.centroids.at(c, j), mean[j] / n, 1e-9);
    }
  }
}

TEST(KMeans, DuplicatePointsReduceK) {
  WarningCollector w;
  const Tensor x = rows({{1, 1}, {1, 1}, {2, 2}, {2, 2}, {2, 2}});
  const auto m = discover::kmeans(x, 4);
  EXPECT_EQ(m.k, 2u);
  EXPECT_FALSE(w.seen.empty());
}

TEST(ClusterTranslators, IdenticalPointsSelectOne) {
  const Tensor x = rows({{0.3, 1.0}, {0.3, 1.0}, {0.3, 1.0}, {0.3, 1.0}, {0.3, 1.0}});
  EXPECT_EQ(discover::cluster_translators(x, std::nullopt).k, 1u);
}

TEST(ClusterTranslators, BicRecoversThreeBlobs) {
  const Tensor x = blobs(60, {{0, 0}, {10, 0}, {5, 12}}, 0.1, 7);
  const auto m = discover::cluster_translators(x, std::nullopt, 8);
  EXPECT_EQ(m.k, 3u);
  // and on higher-dimensional features
  const Tensor y = blobs(50, {{0, 0, 0, 0}, {10, 0, 0, 3}, {0, 10, 10, 0}}, 0.1, 8);
  EXPECT_EQ(discover::cluster_translators(y, std::nullopt, 8).k, 3u);
}

TEST(ClusterTranslators, FixedKSkipsScan) {
  const Tensor x = blobs(30, {{0, 0}, {10, 0}, {5, 12}}, 0.1, 7);
  EXPECT_EQ(discover::cluster_translators(x, 5).k, 5u);
}

// ---- transitions -------------------------------------------------------------------

TEST(TransitionMatrix, DirectCount) {
  const auto t = discover::transition_matrix({{3, 3}, {2, 5}}, 6);
  EXPECT_EQ(t.counts[3][3], 1u);
  EXPECT_EQ(t.counts[5][2], 1u);
  EXPECT_EQ(t.total(), 2u);
}

TEST(TransitionMatrix, ConstantClipsDiagonal) {
  const auto t = discover::transition_matrix({{1, 1, 1}, {0, 0}, {2, 2, 2, 2}, {1}}, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(t.counts[i][j], 0u);
  EXPECT_EQ(t.total(), 2u + 1u + 3u + 0u);
}

TEST(TransitionMatrix, TotalIsChunkPairs) {
  std::mt19937_64 rng(2);
  std::vector<std::vector<std::size_t>> seqs;
  std::size_t pairs = 0;
  for (int c = 0; c < 50; ++c) {
    std::vector<std::size_t> s(1 + rng() % 7);
    for (auto& v : s) v = rng() % 4;
    pairs += s.size() - 1;
    seqs.push_back(s);
  }
  EXPECT_EQ(discover::transition_matrix(seqs, 4).total(), pairs);
  EXPECT_THROW(discover::transition_matrix({{0, 4}}, 4), ParameterError);
}

TEST(TransitionMatrix, PlantedRegimeSwitch) {
  // per-chunk features built from the plant: omega on the factors plus chunk bounds, with estimation noise
  synth::SynthSpec spec = synth::default_spec(6);
  spec.landmarks = 8;
  spec.clip_count = 200;
  const synth::DomainPair pair(spec);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.05);
  Tensor feats = Tensor::zeros(400, 5);
  for (std::size_t i = 0; i < 200; ++i) {
    const double p = static_cast<double>(pair.get(kp::Domain::x, i).truth.changepoints[0]) / 64.0;
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t f = 0; f < 3; ++f) feats.at(2 * i + k, f) = pair.spec().planted[k].omega[f] + nd(rng);
      feats.at(2 * i + k, 3) = k == 0 ? 0.0 : p;
      feats.at(2 * i + k, 4) = k == 0 ? p : 1.0;
    }
  }
  const auto m = discover::cluster_translators(feats, 2);
  std::vector<std::vector<std::size_t>> seqs;
  for (std::size_t i = 0; i < 200; ++i) seqs.push_back({m.assignments[2 * i], m.assignments[2 * i + 1]});
  const auto t = discover::transition_matrix(seqs, 2);
  // the regime-0 cluster is the one whose centroid has omega near 1 on factor 2
  const std::size_t from = std::abs(m.centroids.at(0, 2) - 1.0) < std::abs(m.centroids.at(1, 2) - 1.0) ? 0 : 1;
  const std::size_t to = 1 - from;
  EXPECT_GE(static_cast<double>(t.counts[to][from]) / static_cast<double>(t.total()), 0.6);
}

// ---- frame probe -------------------------------------------------------------------

TEST(FrameProbe, SignSeparable) {
  const Tensor x = gaussian(3000, 6, 11);
  std::vector<int> y(3000);
  for (std::size_t r = 0; r < 3000; ++r) y[r] = x.at(r, 1) > 0.0;
  const auto p = discover::frame_classifier_probe(x, y);
  EXPECT_GE(p.test_accuracy, 0.99);
  for (std::size_t j = 0; j < 6; ++j)
    if (j != 1) EXPECT_GE(std::abs(p.weights[1]), 5.0 * std::abs(p.weights[j]));
}

TEST(FrameProbe, RandomLabelsAtChance) {
  const Tensor x = gaussian(20000, 8, 12);
  std::mt19937_64 rng(13);
  std::vector<int> y(20000);
  for (auto& v : y) v = static_cast<int>(rng() & 1u);
  const auto p = discover::frame_classifier_probe(x, y);
  EXPECT_GE(p.test_accuracy, 0.45);
  EXPECT_LE(p.test_accuracy, 0.55);
  EXPECT_GE(p.train_accuracy, p.test_accuracy - 0.05);
}

TEST(FrameProbe, SingleClassRejected) {
  const Tensor x = gaussian(50, 2, 1);
  EXPECT_THROW(discover::frame_classifier_probe(x, std::vector<int>(50, 1)), ParameterError);
}

// ---- report ------------------------------------------------------------------------

namespace {

struct ReportFixture {
  vae::BvaeModel bvae;
  translate::TranslationModel model;
  std::vector<vae::LatentClip> source, target;
};

ReportFixture report_fixture(translate::PartitionKind partition, std::size_t c) {
  ReportFixture f;
  vae::BvaeConfig bc;
  bc.latent_dim = 4;
  bc.hidden = {8};
  f.bvae = vae::make_bvae(6, bc, 1);
  f.bvae.dims.active = {0, 2, 3};
  translate::ModelConfig mc;
  mc.partition = partition;
  mc.c = c;
  f.model = translate::make_translation_model(mc, 16, 4, 2);
  for (std::size_t i = 0; i < 30; ++i) {
    f.source.push_back({gaussian(16, 4, 100 + i), kp::Domain::x, "x_" + std::to_string(i)});
    f.target.push_back({gaussian(16, 4, 200 + i), kp::Domain::y, "y_" + std::to_string(i)});
  }
  return f;
}

}  // namespace

TEST(GenerateReport, PlantedShiftIsTopLatent) {
  auto f = report_fixture(translate::PartitionKind::none, 1);
  f.model.g_f->layers.back().bias.value[4 + 2] = 1.5;  // phi on latent 2
  const auto rep = discover::generate_report(f.bvae, f.model, f.source, f.target, {});
  EXPECT_EQ(rep.top_shift_latent(), 2u);
  for (const auto& h : rep.latents) EXPECT_NEAR(h.mean_shift, h.latent_index == 2 ? 1.5 : 0.0, 1e-12);
  EXPECT_EQ(rep.to_json()["meta"]["top_mean_shift_latent"].get<std::size_t>(), 2u);
}

TEST(GenerateReport, DeterministicAndSchema) {
  const auto f = report_fixture(translate::PartitionKind::variable, 2);
  discover::ReportConfig cfg;
  cfg.seed = 4;
  const auto a = discover::generate_report(f.bvae, f.model, f.source, f.target, cfg, {{"config_hash", "abc"}});
  const auto b = discover::generate_report(f.bvae, f.model, f.source, f.target, cfg, {{"config_hash", "abc"}});
  const std::string ja = a.to_json().dump(2), jb = b.to_json().dump(2);
  EXPECT_EQ(ja, jb);
  const auto j = a.to_json();
  for (const char* key : {"meta", "latents", "clusters", "transitions"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["meta"]["config_hash"], "abc");
  EXPECT_EQ(j["latents"].size(), 3u);
  EXPECT_EQ(a.transitions.total(), f.source.size());  // 2 chunks per clip
  std::size_t sized = 0;
  for (const auto& c : j["clusters"]) {
    sized += c["size"].get<std::size_t>();
    for (const auto& id : c["exemplars"]) {
      const auto s = id.get<std::string>();
      EXPECT_TRUE(std::any_of(f.source.begin(), f.source.end(), [&](const auto& lc) { return lc.participant_id == s; }));
    }
  }
  EXPECT_EQ(sized, 2 * f.source.size());
  for (const auto& h : j["latents"]) {
    const auto counts = h["counts"]["source"].get<std::vector<std::size_t>>();
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::size_t{0}), 30u * 16u);
  }
}

TEST(GenerateReport, EmptyClipSetIsDependencyError) {
  const auto f = report_fixture(translate::PartitionKind::none, 1);
  EXPECT_THROW(discover::generate_report(f.bvae, f.model, {}, f.target, {}), DependencyError);
}

TEST(GenerateReport, WritesArtifacts) {
  const auto f = report_fixture(translate::PartitionKind::variable, 2);
  const auto rep = discover::generate_report(f.bvae, f.model, f.source, f.target, {});
  const auto dir = std::filesystem::temp_directory_path() / "facet_report_test";
  std::filesystem::remove_all(dir);
  discover::write_report(dir, rep);
  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "transitions.svg"));
  for (auto d : f.bvae.dims.active) EXPECT_TRUE(std::filesystem::exists(dir / ("latent_" + std::to_string(d) + ".svg")));
  EXPECT_FALSE(std::filesystem::is_empty(dir / "clusters"));
  std::filesystem::remove_all(dir);
}
