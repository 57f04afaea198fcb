#include <gtest/gtest.h>

#include <cmath>

#include "chgo/policynet.hpp"
#include "chgo/synthetic.hpp"
#include "test_util.hpp"

namespace chgo {
namespace {

using testing::TempDir;

std::vector<std::uint8_t> random_features(int batch, int n, Rng& rng) {
  std::vector<std::uint8_t> f(static_cast<std::size_t>(batch) * kNumPlanes * n * n);
  for (auto& v : f) v = uniform_below(rng, 3) == 0 ? 1 : 0;
  return f;
}

TEST(NetworkShape, ChainFor19x19) {
  const NetworkLayout layout(NetworkConfig{19, 11, 64, 1024});
  const auto chain = layout.shape_chain();
  ASSERT_EQ(chain.size(), 1u + 2u * 7u + 3u);
  EXPECT_EQ(chain[0], (ShapeStage{"input", 19, 19, 11}));
  EXPECT_EQ(chain[1], (ShapeStage{"pad1", 25, 25, 11}));
  EXPECT_EQ(chain[2], (ShapeStage{"conv1_7x7+relu", 19, 19, 64}));
  for (int i = 1; i < 7; ++i) {
    EXPECT_EQ(chain[static_cast<std::size_t>(1 + 2 * i)].height, 23);
    EXPECT_EQ(chain[static_cast<std::size_t>(2 + 2 * i)].height, 19);
    EXPECT_EQ(chain[static_cast<std::size_t>(2 + 2 * i)].channels, 64);
  }
  EXPECT_EQ(chain[15], (ShapeStage{"flatten", 1, 1, 19 * 19 * 64}));
  EXPECT_EQ(chain[16], (ShapeStage{"dense1+relu", 1, 1, 1024}));
  EXPECT_EQ(chain[17], (ShapeStage{"dense2+softmax", 1, 1, 361}));
}

std::size_t hand_count(std::size_t n, std::size_t c, std::size_t k, std::size_t d) {
  const std::size_t first = k * c * 7 * 7 + k;
  const std::size_t hidden = 6 * (k * k * 5 * 5 + k);
  const std::size_t dense1 = d * k * n * n + d;
  const std::size_t dense2 = n * n * d + n * n;
  return first + hidden + dense1 + dense2;
}

TEST(NetworkShape, ParameterCountMatchesAHandSum) {
  for (int n : {5, 9, 19}) {
    for (int k : {4, 16, 64, 192}) {
      EXPECT_EQ(parameter_count(NetworkConfig{n, 11, k, 1024}),
                hand_count(static_cast<std::size_t>(n), 11, static_cast<std::size_t>(k), 1024));
    }
  }
  // 192 filters on 19x19: the flattened dense layer dominates at ~71M.
  const auto big = parameter_count(NetworkConfig{19, 11, 192, 1024});
  EXPECT_GT(big, 70'000'000u);
  EXPECT_LT(big, 80'000'000u);
}

TEST(NetworkShape, SlotsTileTheParameterVector) {
  const NetworkLayout layout(NetworkConfig{9, 11, 8, 32});
  std::size_t offset = 0;
  for (const auto& s : layout.slots()) {
    EXPECT_EQ(s.offset, offset) << s.name;
    offset += s.size;
  }
  EXPECT_EQ(offset, layout.parameter_count());
  EXPECT_EQ(layout.slot(layout.dense2_slot()).name, "dense2.weight");
  EXPECT_THROW(NetworkLayout(NetworkConfig{0, 11, 8, 32}), ConfigError);
}

TEST(Forward, RowsAreDistributions) {
  Rng rng(1);
  const auto params = init_network<float>(NetworkConfig{9, 11, 8, 32}, 3);
  const auto probs = forward(params, random_features(5, 9, rng), 5);
  ASSERT_EQ(probs.rows(), 5);
  ASSERT_EQ(probs.cols(), 81);
  for (int s = 0; s < 5; ++s) {
    EXPECT_NEAR(probs.row(s).sum(), 1.0f, 1e-5f);
    EXPECT_GE(probs.row(s).minCoeff(), 0.0f);
  }
}

TEST(Forward, ZeroOutputLayerGivesTheUniformDistribution) {
  Rng rng(2);
  auto params = init_network<double>(NetworkConfig{19, 11, 4, 16}, 5);
  const NetworkLayout layout(params.config);
  for (std::size_t slot : {layout.dense2_slot(), layout.dense2_slot() + 1}) {
    for (auto& v : params.slot(layout.slot(slot))) v = 0.0;
  }
  const auto feats = random_features(2, 19, rng);
  const TrainingPass<double> pass(params, feats, 2);
  for (int s = 0; s < 2; ++s) {
    for (int c = 0; c < 361; ++c) ASSERT_NEAR(pass.probabilities()(s, c), 1.0 / 361.0, 1e-15);
  }
  const std::vector<std::uint16_t> labels{0, 200};
  EXPECT_NEAR(pass.cross_entropy(labels), std::log(361.0), 1e-12);
}

TEST(Forward, PermutingTheBatchPermutesTheOutput) {
  Rng rng(3);
  const auto params = init_network<double>(NetworkConfig{7, 11, 4, 8}, 9);
  const auto feats = random_features(3, 7, rng);
  const std::size_t fb = 11 * 49;
  std::vector<std::uint8_t> swapped(feats.size());
  const int perm[3] = {2, 0, 1};
  for (int s = 0; s < 3; ++s) {
    std::copy_n(feats.begin() + static_cast<std::ptrdiff_t>(perm[s] * fb), fb,
                swapped.begin() + static_cast<std::ptrdiff_t>(s * fb));
  }
  const auto a = forward(params, feats, 3);
  const auto b = forward(params, swapped, 3);
  for (int s = 0; s < 3; ++s) EXPECT_LT((a.row(perm[s]) - b.row(s)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Forward, RejectsMismatchedInput) {
  const auto params = init_network<float>(NetworkConfig{9, 11, 4, 8}, 1);
  const std::vector<std::uint8_t> feats(11 * 81 * 2 - 1);
  EXPECT_THROW(forward(params, feats, 2), ConfigError);
  const std::vector<std::uint8_t> ok(11 * 81);
  const std::vector<std::uint16_t> bad_label{81};
  EXPECT_THROW(loss_and_gradients(params, ok, bad_label), ConfigError);
}

// Central differences on every parameter of a small double-precision network.
TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(4);
  auto params = init_network<double>(NetworkConfig{5, 11, 4, 6}, 17);
  // Nudge biases away from zero so no unit sits exactly on a ReLU kink.
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    if (params.values[i] == 0.0) params.values[i] = 0.05 * standard_normal(rng);
  }
  const auto feats = random_features(3, 5, rng);
  const std::vector<std::uint16_t> labels{3, 12, 24};
  const auto analytic = loss_and_gradients(params, feats, labels);
  // Fourth-order central stencil keeps round-off well below the tolerance.
  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_at;
  const NetworkLayout layout(params.config);
  for (const auto& slot : layout.slots()) {
    for (std::size_t j = 0; j < slot.size; ++j) {
      const std::size_t i = slot.offset + j;
      const double keep = params.values[i];
      auto loss_at = [&](double x) {
        params.values[i] = x;
        return TrainingPass<double>(params, feats, 3).cross_entropy(labels);
      };
      const double numeric =
          (-loss_at(keep + 2 * h) + 8 * loss_at(keep + h) - 8 * loss_at(keep - h) + loss_at(keep - 2 * h)) / (12 * h);
      params.values[i] = keep;
      const double a = analytic.grads[i];
      const double rel = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
      if (rel > worst) {
        worst = rel;
        worst_at = slot.name + "[" + std::to_string(j) + "]";
      }
    }
  }
  EXPECT_LT(worst, 1e-4) << "worst at " << worst_at;
}

TEST(Gradients, OutputBiasGradientIsMeanOfProbabilitiesMinusOneHot) {
  Rng rng(5);
  const auto params = init_network<double>(NetworkConfig{5, 11, 4, 6}, 2);
  const auto feats = random_features(2, 5, rng);
  const std::vector<std::uint16_t> labels{1, 7};
  const auto lg = loss_and_gradients(params, feats, labels);
  const auto probs = forward(params, feats, 2);
  const NetworkLayout layout(params.config);
  const auto& bias = layout.slot(layout.dense2_slot() + 1);
  for (int c = 0; c < 25; ++c) {
    const double expected = 0.5 * (probs(0, c) - (c == 1) + probs(1, c) - (c == 7));
    EXPECT_NEAR(lg.grads[bias.offset + static_cast<std::size_t>(c)], expected, 1e-12);
  }
}

// ---- Adadelta ---------------------------------------------------------------------

TEST(Adadelta, FirstStepFromZeroState) {
  Parameters<double> p{NetworkConfig{}, {1.0}};
  AdadeltaState<double> st;
  const std::vector<double> g{2.0};
  adadelta_step(p, std::span<const double>(g), st);
  // g2 = 0.1 * 4; u = -sqrt(1e-6) / sqrt(0.4 + 1e-6) * 2
  const double u = -std::sqrt(1e-6) / std::sqrt(0.4 + 1e-6) * 2.0;
  EXPECT_NEAR(p.values[0] - 1.0, u, 1e-15);
  EXPECT_NEAR(u, -3.162e-3, 1e-6);
  EXPECT_NEAR(st.g2[0], 0.4, 1e-15);
  EXPECT_NEAR(st.dx2[0], 0.1 * u * u, 1e-18);
}

TEST(Adadelta, ZeroGradientLeavesParametersAlone) {
  Parameters<double> p{NetworkConfig{}, {1.5, -2.0, 0.0}};
  auto st = AdadeltaState<double>::zeros(3);
  st.dx2 = {0.3, 0.2, 0.1};
  const std::vector<double> g(3, 0.0);
  adadelta_step(p, std::span<const double>(g), st);
  EXPECT_EQ(p.values, (AlignedVector<double>{1.5, -2.0, 0.0}));
}

TEST(Adadelta, NonFiniteGradientRejectsTheWholeStep) {
  Parameters<float> p{NetworkConfig{}, {1.0f, 2.0f}};
  auto st = AdadeltaState<float>::zeros(2);
  const auto before_p = p;
  const auto before_s = st;
  for (float bad : {std::nanf(""), std::numeric_limits<float>::infinity()}) {
    const std::vector<float> g{0.5f, bad};
    EXPECT_THROW(adadelta_step(p, std::span<const float>(g), st), NumericError);
    EXPECT_EQ(p, before_p);
    EXPECT_EQ(st, before_s);
  }
}

TEST(Adadelta, StepSizeSettlesUnderAConstantGradient) {
  Parameters<double> p{NetworkConfig{}, {0.0}};
  AdadeltaState<double> st;
  const std::vector<double> g{1.0};
  double prev = 0.0;
  std::vector<double> steps;
  for (int t = 0; t < 2000; ++t) {
    prev = p.values[0];
    adadelta_step(p, std::span<const double>(g), st);
    steps.push_back(p.values[0] - prev);
  }
  for (double s : steps) ASSERT_LT(s, 0.0);
  // The update-average catches up with the gradient average, so the step
  // grows and its relative change over a window keeps shrinking.
  auto drift = [&](int t) { return std::abs(steps[t + 100] - steps[t]) / std::abs(steps[t]); };
  EXPECT_LT(drift(1899), drift(900));
  EXPECT_LT(drift(900), drift(100));
  EXPECT_LT(drift(1899), 0.03);
  EXPECT_GT(std::abs(steps[1999]), std::abs(steps[0]));
}

// ---- checkpoints -------------------------------------------------------------------

TEST(Checkpoint, RoundTripsParametersAndOptimizer) {
  TempDir dir;
  auto params = init_network<float>(NetworkConfig{9, 11, 4, 8}, 5);
  auto st = AdadeltaState<float>::zeros(params.values.size());
  st.g2[3] = 0.25f;
  st.dx2[7] = 1.5f;
  save_checkpoint(dir / "m.chgm", Checkpoint{params, st, 7});
  const auto back = load_checkpoint(dir / "m.chgm");
  EXPECT_EQ(back.params, params);
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(*back.optimizer, st);
  EXPECT_EQ(back.version, 7u);

  save_checkpoint(dir / "bare.chgm", Checkpoint{params, std::nullopt, 0});
  EXPECT_FALSE(load_checkpoint(dir / "bare.chgm").optimizer.has_value());
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir;
  const auto params = init_network<float>(NetworkConfig{5, 11, 2, 4}, 1);
  const std::string good = encode_checkpoint(Checkpoint{params, std::nullopt, 1});
  auto expect_bad = [&](const std::string& bytes) {
    detail::write_file_atomic(dir / "x.chgm", bytes);
    EXPECT_THROW(load_checkpoint(dir / "x.chgm"), CorruptionError);
  };
  expect_bad(good.substr(0, good.size() - 1));
  expect_bad(good + "x");
  auto magic = good;
  magic[0] = 'Z';
  expect_bad(magic);
  expect_bad("");
  EXPECT_THROW(load_checkpoint(dir / "missing.chgm"), CorruptionError);
}

// ---- supervised training -------------------------------------------------------------

struct TinyCorpus {
  TempDir root;
  fs::path train;
  fs::path test;

  TinyCorpus(int train_games, int test_games, int n) : train(root / "train"), test(root / "test") {
    std::vector<Sample> tr;
    std::vector<Sample> te;
    for (int g = 0; g < train_games + test_games; ++g) {
      const auto rec = teacher_game(TeacherConfig{n, 0.7, 30}, static_cast<std::uint64_t>(g));
      encode_game(to_sgf(rec), "g", EncodeOptions{n, 1024}, [&](Sample s) {
        (g < train_games ? tr : te).push_back(std::move(s));
      });
    }
    write_chunks(tr, train);
    write_chunks(te, test);
  }
};

TEST(TrainSupervised, ZeroEpochsChangesNothing) {
  TinyCorpus data(2, 1, 9);
  auto params = init_network<float>(NetworkConfig{9, 11, 4, 16}, 1);
  const auto before = params;
  AdadeltaState<float> st;
  TrainOptions opts;
  opts.epochs = 0;
  EXPECT_TRUE(train_supervised(params, st, data.train, data.test, opts).empty());
  EXPECT_EQ(params, before);
}

TEST(TrainSupervised, OverfitsTwoGamesAndIsDeterministic) {
  TinyCorpus data(2, 1, 9);
  auto run = [&](std::uint64_t seed) {
    auto params = init_network<float>(NetworkConfig{9, 11, 8, 64}, 1);
    AdadeltaState<float> st;
    TrainOptions opts;
    opts.epochs = 40;
    opts.batch_size = 8;
    opts.seed = seed;
    opts.checkpoint = data.root / "ck.chgm";
    auto history = train_supervised(params, st, data.train, data.test, opts);
    return std::make_pair(history, params);
  };
  const auto [history, params] = run(3);
  ASSERT_EQ(history.size(), 40u);
  for (std::size_t i = 0; i < history.size(); ++i) {
    EXPECT_EQ(history[i].epoch, static_cast<int>(i) + 1);
    if (i > 0) {
      EXPECT_GT(history[i].samples_seen, history[i - 1].samples_seen);
    }
  }
  EXPECT_LT(history.back().loss, 0.5 * history.front().loss);
  EXPECT_EQ(load_checkpoint(data.root / "ck.chgm").params, params);

  const auto again = run(3);
  EXPECT_EQ(again.first, history);
  EXPECT_EQ(again.second, params);
}

TEST(TrainSupervised, CallbackCanStopEarly) {
  TinyCorpus data(2, 1, 9);
  auto params = init_network<float>(NetworkConfig{9, 11, 4, 16}, 1);
  AdadeltaState<float> st;
  TrainOptions opts;
  opts.epochs = 10;
  opts.batch_size = 8;
  opts.on_epoch = [](const TrainMetrics& m, const Parameters<float>&) { return m.epoch < 3; };
  EXPECT_EQ(train_supervised(params, st, data.train, data.test, opts).size(), 3u);
}

TEST(TrainSupervised, TooFewSamplesForABatchIsAConfigError) {
  TinyCorpus data(1, 1, 9);
  auto params = init_network<float>(NetworkConfig{9, 11, 4, 16}, 1);
  AdadeltaState<float> st;
  TrainOptions opts;
  opts.batch_size = 1000;
  EXPECT_THROW(train_supervised(params, st, data.train, data.test, opts), ConfigError);
}

}  // namespace
}  // namespace chgo
