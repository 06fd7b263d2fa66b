/*
 * Copyright 2026 The ovseg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ovseg/contextual_shift.hpp"

#include <random>
#include <set>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace ovseg {
namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Image img(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : img.pixels) v = u(rng);
  return img;
}

EncoderConfig toy_encoder() {
  EncoderConfig cfg;
  cfg.num_layers = 12;
  cfg.embed_dim = 32;
  cfg.seed = 3;
  return cfg;
}

TEST(CropAndMask, FullMaskResizesWholeImage) {
  const Image img = random_image(56, 56, 1);
  const Mask full(56, 56, 1);
  CSConfig cfg;
  cfg.sub_image_size = 56;
  const SubImage sub = crop_and_mask(img, full, cfg);
  EXPECT_EQ(sub.bbox, (BoundingBox{0, 0, 56, 56}));
  EXPECT_EQ(sub.mask.count(), 56u * 56u);
  EXPECT_EQ(sub.image.pixels, img.pixels);

  cfg.sub_image_size = 28;
  const SubImage small = crop_and_mask(img, full, cfg);
  EXPECT_EQ(small.mask.count(), 28u * 28u);
  // 2x downsample with half-pixel centres averages each 2x2 block.
  const double expected = (img.at(0, 0, 0) + img.at(0, 1, 0) + img.at(1, 0, 0) + img.at(1, 1, 0)) / 4;
  EXPECT_NEAR(small.image.at(0, 0, 0), expected, 1e-12);
}

TEST(CropAndMask, SquareMaskCropsItsBoundingBox) {
  Image img = random_image(100, 100, 2);
  Mask m(100, 100);
  for (int y = 30; y < 40; ++y) {
    for (int x = 55; x < 65; ++x) m.at(y, x) = 1;
  }
  CSConfig cfg;
  cfg.sub_image_size = 10;
  const SubImage sub = crop_and_mask(img, m, cfg);
  EXPECT_EQ(sub.bbox, (BoundingBox{30, 55, 40, 65}));
  // Same size: the crop is copied verbatim, nothing from outside the box.
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(sub.image.at(y, x, c), img.at(30 + y, 55 + x, c));
    }
  }
}

TEST(CropAndMask, MaskedPixelsInsideCropTakeFillValue) {
  const Image img = random_image(40, 40, 3);
  Mask ring(40, 40);
  for (int y = 10; y < 30; ++y) {
    for (int x = 10; x < 30; ++x) {
      if (y < 14 || y >= 26 || x < 14 || x >= 26) ring.at(y, x) = 1;
    }
  }
  CSConfig cfg;
  cfg.sub_image_size = 20;
  cfg.fill_value = 0.25;
  const SubImage sub = crop_and_mask(img, ring, cfg);
  EXPECT_EQ(sub.bbox, (BoundingBox{10, 10, 30, 30}));
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      const bool fg = ring.at(10 + y, 10 + x) != 0;
      EXPECT_EQ(sub.mask.at(y, x), fg ? 1 : 0);
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(sub.image.at(y, x, c), fg ? img.at(10 + y, 10 + x, c) : 0.25);
      }
    }
  }
}

TEST(CropAndMask, NonSquareBoxIsPaddedWithFill) {
  const Image img = random_image(28, 28, 4);
  Mask m(28, 28);
  for (int y = 4; y < 8; ++y) {
    for (int x = 2; x < 26; ++x) m.at(y, x) = 1;
  }
  CSConfig cfg;
  cfg.sub_image_size = 24;
  cfg.fill_value = 0.0;
  const SubImage sub = crop_and_mask(img, m, cfg);
  // 4 x 24 box centred in a 24 x 24 square: rows 10..13 hold the strip.
  for (int y = 0; y < 24; ++y) {
    const bool strip = y >= 10 && y < 14;
    EXPECT_EQ(sub.mask.at(y, 5), strip ? 1 : 0) << y;
  }
}

TEST(CropAndMask, BackgroundPixelsEqualFillExactly) {
  const Image img = random_image(70, 70, 5);
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.3);
  Mask m(70, 70);
  for (auto& b : m.bits) b = coin(rng);
  CSConfig cfg;
  cfg.fill_value = 0.7;
  cfg.sub_image_size = 56;
  const SubImage sub = crop_and_mask(img, m, cfg);
  for (int y = 0; y < 56; ++y) {
    for (int x = 0; x < 56; ++x) {
      if (sub.mask.at(y, x) != 0) continue;
      for (int c = 0; c < 3; ++c) ASSERT_EQ(sub.image.at(y, x, c), 0.7);
    }
  }
}

TEST(CropAndMask, EmptyMaskThrows) {
  EXPECT_THROW(crop_and_mask(random_image(28, 28, 7), Mask(28, 28), CSConfig{}),
               EmptyProposalError);
}

TEST(BackgroundPatches, Extremes) {
  EXPECT_TRUE(background_patches(Mask(56, 56, 1), 14, 0.5).empty());
  const auto all = background_patches(Mask(56, 56, 0), 14, 0.5);
  ASSERT_EQ(all.size(), 16u);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(all[i], i);
}

TEST(BackgroundPatches, HalfCoveredPatchIsForegroundAtThreshold) {
  Mask m(28, 28);
  // Patch (0, 1): left half covered, fraction exactly 0.5.
  for (int y = 0; y < 14; ++y) {
    for (int x = 14; x < 21; ++x) m.at(y, x) = 1;
  }
  EXPECT_EQ(background_patches(m, 14, 0.5), (std::vector<int>{0, 2, 3}));
  // Slightly above the fraction the patch flips to background.
  EXPECT_EQ(background_patches(m, 14, 0.51), (std::vector<int>{0, 1, 2, 3}));
}

TEST(ReplacementPlan, CountsAndDeterminism) {
  std::vector<int> bg(10);
  for (int i = 0; i < 10; ++i) bg[i] = 3 * i;
  EXPECT_TRUE(replacement_plan(bg, 0.0, 1, 9, 0).empty());
  EXPECT_EQ(replacement_plan(bg, 1.0, 1, 9, 0), bg);
  const auto a = replacement_plan(bg, 0.3, 5, 9, 2);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a, replacement_plan(bg, 0.3, 5, 9, 2));
  for (int v : a) EXPECT_TRUE(std::find(bg.begin(), bg.end(), v) != bg.end());
  std::set<int> unique(a.begin(), a.end());
  EXPECT_EQ(unique.size(), a.size());
}

TEST(ReplacementPlan, RoundHalfUpMatchesExactArithmetic) {
  for (std::uint64_t n = 0; n <= 60; ++n) {
    for (std::uint64_t a = 0; a <= 20; ++a) {
      const double alpha = static_cast<double>(a) / 20.0;
      EXPECT_EQ(replacement_count(n, alpha), oracle::exact_round_half_up(a, 20, n))
          << "n=" << n << " alpha=" << alpha;
    }
  }
}

TEST(ReplacementPlan, LayersDrawIndependently) {
  std::vector<int> bg(40);
  for (int i = 0; i < 40; ++i) bg[i] = i;
  const auto l1 = replacement_plan(bg, 0.3, 1, 4, 0);
  const auto l3 = replacement_plan(bg, 0.3, 3, 4, 0);
  const auto p1 = replacement_plan(bg, 0.3, 1, 4, 1);
  EXPECT_NE(l1, l3);
  EXPECT_NE(l1, p1);
}

TEST(ReplacementPlan, ApproximatelyUniform) {
  std::vector<int> bg(8);
  for (int i = 0; i < 8; ++i) bg[i] = i;
  std::vector<int> hits(8, 0);
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    for (int v : replacement_plan(bg, 0.25, 1, 77, t)) ++hits[v];
  }
  // Each index is chosen with probability 2/8.
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(trials), 0.25, 0.03);
}

TEST(CSConfig, DefaultsAndValidation) {
  const CSConfig cfg;
  EXPECT_EQ(cfg.idx, (std::vector<int>{1, 3, 5, 7, 9}));
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.30);
  EXPECT_NO_THROW(cfg.validate(12, 14));
  CSConfig bad = cfg;
  bad.idx.push_back(13);
  EXPECT_THROW(bad.validate(12, 14), ConfigError);
  bad = cfg;
  bad.alpha = 1.5;
  EXPECT_THROW(bad.validate(12, 14), ConfigError);
}

class CSForwardTest : public ::testing::Test {
 protected:
  CSForwardTest() : encoder_(toy_encoder()) {
    image_ = random_image(112, 112, 21);
    mask_ = Mask(112, 112);
    for (int y = 20; y < 60; ++y) {
      for (int x = 30; x < 70; ++x) {
        if ((x - 50) * (x - 50) + (y - 40) * (y - 40) < 380) mask_.at(y, x) = 1;
      }
    }
    sub_ = crop_and_mask(image_, mask_, cfg_);
    clean_ = make_clean_context(encoder_, image_);
  }

  ToyEncoder encoder_;
  Image image_;
  Mask mask_;
  CSConfig cfg_;
  SubImage sub_;
  CleanContext clean_;
};

TEST_F(CSForwardTest, CleanContextLayout) {
  ASSERT_EQ(clean_.cls_per_layer.size(), 12u);
  EXPECT_EQ(clean_.cls_per_layer[0], encoder_.patch_embed(image_).row(0));
  const auto layers = encoder_.forward(image_);
  for (int i = 1; i < 12; ++i) EXPECT_EQ(clean_.cls_per_layer[i], layers[i - 1].cls);
}

TEST_F(CSForwardTest, DegeneratesToVanillaForward) {
  const auto vanilla = encoder_.forward(sub_.image);
  CSConfig none = cfg_;
  none.idx.clear();
  CSConfig zero = cfg_;
  zero.alpha = 0.0;
  for (const CSConfig& c : {none, zero}) {
    const CSResult r = cs_forward(encoder_, sub_, clean_, c, 0);
    for (std::size_t i = 0; i < vanilla.size(); ++i) {
      EXPECT_EQ((r.layers[i].spatial.tokens - vanilla[i].spatial.tokens).cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_EQ(r.embedding, vanilla.back().cls);
  }
}

TEST_F(CSForwardTest, OnlyPlannedPositionsChange) {
  ForwardTrace vanilla;
  encoder_.forward(sub_.image, {}, &vanilla);
  ForwardTrace shifted;
  const CSResult r = cs_forward(encoder_, sub_, clean_, cfg_, 4, &shifted);
  ASSERT_FALSE(r.background.empty());
  const std::set<int> bg(r.background.begin(), r.background.end());
  const std::size_t expected = replacement_count(r.background.size(), cfg_.alpha);
  ASSERT_GT(expected, 0u);

  // Before the first replaced layer both runs agree exactly.
  EXPECT_EQ(shifted.layer_inputs[0].rows(), vanilla.layer_inputs[0].rows());
  for (int layer : cfg_.idx) {
    const auto& plan = r.plans.at(layer);
    EXPECT_EQ(plan.size(), expected);
    const Mat& in = shifted.layer_inputs[layer - 1];
    // Planned tokens hold the clean [CLS] of the previous layer.
    for (int j : plan) {
      EXPECT_TRUE(bg.count(j));
      EXPECT_EQ(in.row(1 + j), clean_.cls_per_layer[layer - 1]);
    }
  }
  // At layer 1 nothing upstream differs, so the diff is exactly the plan.
  const Mat diff = (shifted.layer_inputs[0] - vanilla.layer_inputs[0]).cwiseAbs();
  std::set<int> changed;
  for (Eigen::Index row = 0; row < diff.rows(); ++row) {
    if (diff.row(row).maxCoeff() > 0) changed.insert(static_cast<int>(row) - 1);
  }
  const auto& plan1 = r.plans.at(1);
  EXPECT_EQ(changed, std::set<int>(plan1.begin(), plan1.end()));
  EXPECT_FALSE(changed.count(-1));  // [CLS] untouched
}

TEST_F(CSForwardTest, InterceptedLayersDifferOnlyAtPlan) {
  // Against a run that stops replacing just before layer L, the input of
  // layer L differs exactly at L's plan.
  ForwardTrace shifted;
  const CSResult r = cs_forward(encoder_, sub_, clean_, cfg_, 1, &shifted);
  ForwardTrace upto;
  for (int layer : cfg_.idx) {
    CSConfig prefix = cfg_;
    prefix.idx.clear();
    for (int l : cfg_.idx) {
      if (l < layer) prefix.idx.push_back(l);
    }
    cs_forward(encoder_, sub_, clean_, prefix, 1, &upto);
    const Mat diff = (shifted.layer_inputs[layer - 1] - upto.layer_inputs[layer - 1]).cwiseAbs();
    std::set<int> changed;
    for (Eigen::Index row = 0; row < diff.rows(); ++row) {
      if (diff.row(row).maxCoeff() > 0) changed.insert(static_cast<int>(row) - 1);
    }
    const auto& plan = r.plans.at(layer);
    std::set<int> planned(plan.begin(), plan.end());
    EXPECT_EQ(changed, planned) << "layer " << layer;
  }
}

TEST_F(CSForwardTest, DeterministicPerProposal) {
  const CSResult a = cs_forward(encoder_, sub_, clean_, cfg_, 3);
  const CSResult b = cs_forward(encoder_, sub_, clean_, cfg_, 3);
  EXPECT_EQ(a.embedding, b.embedding);
  const CSResult c = cs_forward(encoder_, sub_, clean_, cfg_, 4);
  EXPECT_NE(a.plans, c.plans);
}

TEST_F(CSForwardTest, RejectsLayerBeyondDepth) {
  CSConfig bad = cfg_;
  bad.idx = {13};
  EXPECT_THROW(cs_forward(encoder_, sub_, clean_, bad, 0), ConfigError);
}

}  // namespace
}  // namespace ovseg
