// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <regex>
#include <thread>

#include "cednn/analysis.hpp"
#include "cednn/diagnostics.hpp"
#include "json.hpp"

namespace cednn {
namespace {

// Published parameter counts in millions for L = 1, 2, 3, 6, 9, 18.
constexpr int kLs[] = {1, 2, 3, 6, 9, 18};
constexpr double kResParams[] = {13.33, 11.34, 10.68, 10.02, 9.8, 9.59};
constexpr double kDenseParams[] = {14.22, 12.23, 11.57, 10.91, 10.69, 10.48};
constexpr double kResGflops[] = {1.13, 0.69, 0.54, 0.40, 0.36, 0.33};
constexpr double kDenseGflops[] = {1.32, 0.88, 0.74, 0.60, 0.56, 0.52};

// Weight count of one standard block under the weights-only convention.
std::int64_t block_weights(int c, int L, int M, bool dense) {
  return static_cast<std::int64_t>(c) * M * 9 + static_cast<std::int64_t>(c) * L +
         static_cast<std::int64_t>(2 * c) * (dense ? 2 * c : c);
}

TEST(Complexity, ClosedFormTotalsForExtremeConfigs) {
  EXPECT_EQ(count_params(ModelConfig::standard(Connection::res, 18)).total_params, 9578158);
  EXPECT_EQ(count_params(ModelConfig::standard(Connection::res, 1)).total_params, 13318090);
  EXPECT_EQ(count_params(ModelConfig::standard(Connection::dense, 18)).total_params,
            10462678);
}

TEST(Complexity, IndependentSumOverBlocksAndTop) {
  for (bool dense : {false, true}) {
    for (int L : kLs) {
      std::int64_t want = 0;
      for (int i = 0; i < 6; ++i) {
        const int c = 18 << i;
        want += block_weights(c, L, c / L, dense);
      }
      want += 144 * 1152 + 1024 * 144 * 49 + 1024 * 1024 + 1024 * 12;
      const ModelConfig cfg =
          ModelConfig::standard(dense ? Connection::dense : Connection::res, L);
      EXPECT_EQ(count_params(cfg).total_params, want) << cfg.name();
    }
  }
}

TEST(Complexity, WithinOnePercentOfPublishedParams) {
  for (int i = 0; i < 6; ++i) {
    const double res = count_params(ModelConfig::standard(Connection::res, kLs[i])).total_params / 1e6;
    const double dense =
        count_params(ModelConfig::standard(Connection::dense, kLs[i])).total_params / 1e6;
    EXPECT_NEAR(res, kResParams[i], 0.01 * kResParams[i]) << "L" << kLs[i];
    EXPECT_NEAR(dense, kDenseParams[i], 0.01 * kDenseParams[i]) << "L" << kLs[i];
  }
}

TEST(Complexity, MacsWithinBandAndNonIncreasingInL) {
  for (bool dense : {false, true}) {
    std::int64_t prev = std::numeric_limits<std::int64_t>::max();
    for (int i = 0; i < 6; ++i) {
      const ModelConfig cfg =
          ModelConfig::standard(dense ? Connection::dense : Connection::res, kLs[i]);
      const std::int64_t macs = count_flops(cfg).total_macs;
      const double ref = (dense ? kDenseGflops : kResGflops)[i];
      EXPECT_NEAR(macs / 1e9, ref, 0.15 * ref) << cfg.name();
      EXPECT_LE(macs, prev) << cfg.name();
      prev = macs;
    }
  }
}

TEST(Complexity, PointwiseLayerMacsExample) {
  // 1x1 convolution 18 -> 36 at 224x224.
  const ComplexityReport rep = count_flops(ModelConfig::standard(Connection::res, 6));
  const auto it = std::find_if(rep.layers.begin(), rep.layers.end(),
                               [](const LayerRecord& l) { return l.name == "block1.fusion"; });
  ASSERT_NE(it, rep.layers.end());
  EXPECT_EQ(it->macs, 32514048);
  EXPECT_EQ(rep.flops(), 2 * rep.total_macs);
}

TEST(Complexity, ImplementationConventionAddsBiasNormAndSe) {
  const ModelConfig plain = ModelConfig::standard(Connection::res, 6);
  const ModelConfig se = ModelConfig::standard(Connection::res, 6, 12, 2, SeMode::after_block);
  const auto weights = count_params(plain, CountConvention::weights_only);
  const auto impl = count_params(plain, CountConvention::implementation);
  EXPECT_GT(impl.total_params, weights.total_params);
  EXPECT_EQ(count_params(se, CountConvention::weights_only).total_params, weights.total_params);
  EXPECT_GT(count_params(se, CountConvention::implementation).total_params, impl.total_params);
  EXPECT_EQ(impl.census.at("batch_norm"), 18);
  EXPECT_EQ(weights.census.count("batch_norm"), 0u);
}

TEST(Complexity, ReportsAreStable) {
  const ModelConfig cfg = ModelConfig::standard(Connection::dense, 9);
  const auto a = analyze_complexity(cfg, CountConvention::weights_only);
  const auto b = analyze_complexity(cfg, CountConvention::weights_only);
  EXPECT_EQ(a.to_text(), b.to_text());
  EXPECT_EQ(a.summary_json(), b.summary_json());
  const auto j = nlohmann::json::parse(a.summary_json());
  EXPECT_EQ(j["total_params"].get<std::int64_t>(), a.total_params);
  EXPECT_EQ(j["model"], "dense-L9M2");
}

TEST(FeatureGrid, NormalizesPerChannelAndTilesSquare) {
  Tensor f(Shape{1, 5, 2, 2});
  for (int c = 0; c < 5; ++c) {
    for (int i = 0; i < 4; ++i) f.channel(0, c)[i] = static_cast<float>(c * 10 + i);
  }
  f.channel(0, 4)[0] = f.channel(0, 4)[1] = f.channel(0, 4)[2] = f.channel(0, 4)[3] = 7.f;
  const GrayImage g = feature_map_grid(f);
  EXPECT_EQ(g.width, 6);  // ceil(sqrt(5)) = 3 tiles of 2
  EXPECT_EQ(g.height, 6);
  EXPECT_EQ(g.at(0, 0), 0);
  EXPECT_EQ(g.at(1, 1), 255);
  EXPECT_EQ(g.at(1, 0), 85);       // (1 - 0) / 3 * 255
  EXPECT_EQ(g.at(2, 0), 0);        // channel 1 at tile (1, 0)
  EXPECT_EQ(g.at(2, 2), 128);      // constant channel 4 at tile (1, 1)
  EXPECT_EQ(g.at(4, 4), 0);        // unused tile stays dark
  EXPECT_THROW(feature_map_grid(f, 1), ShapeError);
}

TEST(FeatureExport, RejectsBadBlockIndex) {
  const ModelConfig cfg = reduced_model_config();
  ModelParams<float> mp = build_model<float>(cfg, 0);
  const Tensor x(Shape{1, 18, 28, 28});
  EXPECT_THROW(export_feature_maps(mp, x, {}, 3, {}), std::invalid_argument);
  EXPECT_THROW(export_feature_maps(mp, Tensor(Shape{1, 18, 56, 56}), {}, 1, {}), ShapeError);
}

TEST(Timing, TwelveTrialsWithSampleStd) {
  int calls = 0;
  const TimingReport r = time_inference([&] {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  });
  EXPECT_EQ(calls, 13);  // one warm-up
  ASSERT_EQ(r.samples_ms.size(), 12u);
  double mean = 0;
  for (double v : r.samples_ms) mean += v;
  mean /= 12;
  double sq = 0;
  for (double v : r.samples_ms) sq += (v - mean) * (v - mean);
  EXPECT_NEAR(r.mean_ms, mean, 1e-12);
  EXPECT_NEAR(r.stddev_ms, std::sqrt(sq / 11), 1e-12);
  EXPECT_GE(r.mean_ms, 1.0);
  EXPECT_THROW(time_inference([] {}, 0), std::invalid_argument);
}

TEST(Timing, TableRowFormat) {
  TimingReport t;
  t.samples_ms = std::vector<double>(12, 5.0);
  t.mean_ms = 5.0;
  t.stddev_ms = 0.25;
  const std::string row =
      timing_table("res-L18M1", t, count_params(ModelConfig::standard(Connection::res, 18)));
  EXPECT_TRUE(std::regex_search(
      row, std::regex(R"(\| res-L18M1 \| 5\.00 ± 0\.25 \| 9\.58 \| 0\.29 \|)")))
      << row;
  EXPECT_NE(row.find("trials 12"), std::string::npos);
}

}  // namespace
}  // namespace cednn
