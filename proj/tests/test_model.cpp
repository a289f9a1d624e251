// Copyright 2026 The CEDNN Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "cednn/analysis.hpp"
#include "cednn/diagnostics.hpp"
#include "cednn/model.hpp"
#include "oracles.hpp"

namespace cednn {
namespace {

// Largest |block_forward(x) - assembled_matrix * x| over a random input.
double linear_block_error(Connection conn, int L, std::uint64_t seed) {
  ModelConfig cfg = ModelConfig::standard(conn, L, 12, 0);
  cfg.linear = true;
  ModelParams<double> mp = build_model<double>(cfg, seed);
  BlockParams<double>& block = mp.blocks[0];
  const int size = 4;
  std::mt19937_64 rng(seed + 100);
  const TensorD x = random_tensor<double>(Shape{1, kEntryChannels, size, size}, rng);
  const TensorD y = block_forward(x, block, cfg, static_cast<const TensorD*>(nullptr), Mode::eval);
  const oracle::Matrix m = oracle::block_matrix(block, size);
  const std::vector<double> want = oracle::apply(m, x.storage());
  EXPECT_EQ(y.size(), want.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(y[i] - want[i]));
  return worst;
}

class LinearBlock : public ::testing::TestWithParam<std::tuple<Connection, int>> {};

TEST_P(LinearBlock, EqualsAssembledMatrix) {
  const auto [conn, L] = GetParam();
  EXPECT_LE(linear_block_error(conn, L, 7), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(
    AllGroupCounts, LinearBlock,
    ::testing::Combine(::testing::Values(Connection::res, Connection::dense),
                       ::testing::Values(1, 2, 3, 6, 9, 18)),
    [](const auto& info) {
      return to_string(std::get<0>(info.param)) + "_L" +
             std::to_string(std::get<1>(info.param));
    });

TEST(ModelConfig, StandardLayoutDoublesWidth) {
  const ModelConfig cfg = ModelConfig::standard(Connection::dense, 6);
  ASSERT_EQ(cfg.blocks.size(), 6u);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(cfg.blocks[i].L * cfg.blocks[i].M, 18 << i);
    EXPECT_EQ(cfg.blocks[i].attention, i < 2);
  }
  EXPECT_EQ(cfg.final_spatial(), 7);
  EXPECT_EQ(cfg.final_channels(), 1152);
  EXPECT_EQ(cfg.name(), "dense-L6M3");
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ModelConfig, ValidationNamesTheViolation) {
  ModelConfig cfg = ModelConfig::standard(Connection::res, 6);
  cfg.blocks[2].L = 4;
  try {
    cfg.validate();
    FAIL() << "expected throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("block 3"), std::string::npos);
  }
  ModelConfig bad = ModelConfig::standard(Connection::res, 6);
  bad.input_size = 100;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(parse_connection("sum"), std::invalid_argument);
  EXPECT_EQ(parse_se_mode("before_merge"), SeMode::before_merge);
}

TEST(ModelParams, InventoryCountsMatchImplementationConvention) {
  for (Connection conn : {Connection::res, Connection::dense}) {
    for (int L : {1, 2, 3, 6, 9, 18}) {
      const ModelConfig cfg = ModelConfig::standard(conn, L);
      ModelParams<float> mp = build_model<float>(cfg, 0);
      const ComplexityReport rep = analyze_complexity(cfg, CountConvention::implementation);
      EXPECT_EQ(static_cast<std::int64_t>(mp.trainable_count()), rep.total_params)
          << cfg.name();
    }
  }
  for (SeMode se : {SeMode::after_block, SeMode::before_merge}) {
    const ModelConfig cfg = ModelConfig::standard(Connection::res, 6, 12, 2, se);
    ModelParams<float> mp = build_model<float>(cfg, 0);
    EXPECT_EQ(static_cast<std::int64_t>(mp.trainable_count()),
              analyze_complexity(cfg, CountConvention::implementation).total_params);
  }
}

TEST(ModelParams, BuildIsSeededAndDeterministic) {
  const ModelConfig cfg = reduced_model_config();
  ModelParams<float> a = build_model<float>(cfg, 5), b = build_model<float>(cfg, 5),
                     c = build_model<float>(cfg, 6);
  auto ia = a.inventory(), ib = b.inventory(), ic = c.inventory();
  ASSERT_EQ(ia.size(), ib.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < ia.size(); ++i) {
    EXPECT_EQ(ia[i].name, ib[i].name);
    EXPECT_TRUE(std::equal(ia[i].value.begin(), ia[i].value.end(), ib[i].value.begin()));
    any_diff |= !std::equal(ia[i].value.begin(), ia[i].value.end(), ic[i].value.begin());
  }
  EXPECT_TRUE(any_diff);
}

TEST(Forward, TraceShapesAgreeWithComplexityReport) {
  ModelConfig cfg = ModelConfig::standard(Connection::dense, 3, 5, 0);
  cfg.input_size = 64;
  cfg.reduce_channels = 8;
  cfg.top_channels = 16;
  ModelParams<float> mp = build_model<float>(cfg, 1);
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor<float>(Shape{1, 18, 64, 64}, rng);
  ForwardState<float> st;
  const ForwardOutput<float> out = model_forward(x, {}, mp, Mode::eval, &st);
  EXPECT_EQ(out.logits.shape(), (Shape{1, 5, 1, 1}));
  const ComplexityReport rep = analyze_complexity(cfg, CountConvention::weights_only);
  for (const auto& [name, shape] : st.trace) {
    const LayerRecord* match = nullptr;
    for (const LayerRecord& l : rep.layers) {
      if (l.name == name || l.name.rfind(name + ".", 0) == 0) match = &l;
    }
    ASSERT_NE(match, nullptr) << name;
    EXPECT_EQ(match->output.c, shape.c) << name;
    EXPECT_EQ(match->output.h, shape.h) << name;
    EXPECT_EQ(match->output.w, shape.w) << name;
  }
}

TEST(Forward, ProbabilitiesAreSigmoidOfLogits) {
  const ModelConfig cfg = reduced_model_config(Connection::dense, SeMode::after_block);
  ModelParams<float> mp = build_model<float>(cfg, 2);
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor<float>(Shape{2, 18, 28, 28}, rng);
  AttentionStack stack;
  for (auto& m : stack.maps) m = BinaryMap(28, 28);
  stack.maps[0].at(3, 3) = 255;
  stack.pyramid = build_pyramid(stack.maps);
  const ForwardOutput<float> out = model_forward(x, {&stack, &stack}, mp, Mode::eval);
  for (std::size_t i = 0; i < out.logits.size(); ++i) {
    EXPECT_NEAR(out.probabilities[i], sigmoid(out.logits[i]), 1e-7);
  }
  EXPECT_THROW(model_forward(x, {}, mp, Mode::eval), std::exception);
}

TEST(GradientCheck, ReducedModelPassesInBothPrecisions) {
  const DiagnosticReport rep = model_gradient_check(0);
  ASSERT_FALSE(rep.lines.empty());
  for (const DiagnosticLine& l : rep.lines) {
    EXPECT_TRUE(l.pass) << l.name << " measured " << l.measured;
    EXPECT_EQ(l.tolerance, kStandardTolerance);
  }
}

}  // namespace
}  // namespace cednn
