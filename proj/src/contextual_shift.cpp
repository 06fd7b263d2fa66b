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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ovseg/rng.hpp"

namespace ovseg {

void CSConfig::validate(int num_layers, int patch_size) const {
  for (int l : idx) {
    if (l < 1 || l > num_layers) {
      throw ConfigError("cs: replacement layer " + std::to_string(l) + " outside [1, " +
                        std::to_string(num_layers) + "]");
    }
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("cs: alpha must lie in [0, 1]");
  if (!(bg_threshold > 0.0 && bg_threshold <= 1.0)) {
    throw ConfigError("cs: bg_threshold must lie in (0, 1]");
  }
  if (sub_image_size <= 0 || sub_image_size % patch_size != 0) {
    throw ConfigError("cs: sub_image_size must be a positive multiple of the patch size");
  }
  if (!(fill_value >= 0.0 && fill_value <= 1.0)) {
    throw ConfigError("cs: fill_value must lie in [0, 1]");
  }
}

namespace {

struct Sample {
  int lo;
  int hi;
  double frac;
};

// Half-pixel-centre source coordinate for bilinear resizing.
Sample source_coord(int dst, int dst_size, int src_size) {
  double s = (dst + 0.5) * static_cast<double>(src_size) / dst_size - 0.5;
  s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
  const int lo = static_cast<int>(std::floor(s));
  const int hi = std::min(lo + 1, src_size - 1);
  return {lo, hi, s - lo};
}

}  // namespace

SubImage crop_and_mask(const Image& image, const Mask& mask, const CSConfig& config) {
  validate_image(image);
  if (mask.height != image.height || mask.width != image.width) {
    throw ShapeError("crop_and_mask: mask and image sizes differ");
  }
  BoundingBox box{image.height, image.width, 0, 0};
  bool any = false;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(y, x) == 0) continue;
      any = true;
      box.y0 = std::min(box.y0, y);
      box.x0 = std::min(box.x0, x);
      box.y1 = std::max(box.y1, y + 1);
      box.x1 = std::max(box.x1, x + 1);
    }
  }
  if (!any) throw EmptyProposalError("crop_and_mask: mask has no foreground pixels");

  const int bh = box.y1 - box.y0;
  const int bw = box.x1 - box.x0;
  const int side = std::max(bh, bw);
  const int oy = (side - bh) / 2;
  const int ox = (side - bw) / 2;

  Image square(side, side, config.fill_value);
  std::vector<double> square_mask(static_cast<std::size_t>(side) * side, 0.0);
  for (int y = 0; y < bh; ++y) {
    for (int x = 0; x < bw; ++x) {
      const int sy = box.y0 + y;
      const int sx = box.x0 + x;
      if (mask.at(sy, sx) == 0) continue;
      square_mask[static_cast<std::size_t>(oy + y) * side + ox + x] = 1.0;
      for (int c = 0; c < 3; ++c) square.at(oy + y, ox + x, c) = image.at(sy, sx, c);
    }
  }

  const int size = config.sub_image_size;
  SubImage out;
  out.bbox = box;
  out.image = Image(size, size, config.fill_value);
  out.mask = Mask(size, size);
  for (int y = 0; y < size; ++y) {
    const Sample sy = source_coord(y, size, side);
    for (int x = 0; x < size; ++x) {
      const Sample sx = source_coord(x, size, side);
      const double w00 = (1 - sy.frac) * (1 - sx.frac);
      const double w01 = (1 - sy.frac) * sx.frac;
      const double w10 = sy.frac * (1 - sx.frac);
      const double w11 = sy.frac * sx.frac;
      auto m = [&](int yy, int xx) { return square_mask[static_cast<std::size_t>(yy) * side + xx]; };
      const double mv = w00 * m(sy.lo, sx.lo) + w01 * m(sy.lo, sx.hi) + w10 * m(sy.hi, sx.lo) +
                        w11 * m(sy.hi, sx.hi);
      if (mv < 0.5) continue;
      out.mask.at(y, x) = 1;
      for (int c = 0; c < 3; ++c) {
        const double v = w00 * square.at(sy.lo, sx.lo, c) + w01 * square.at(sy.lo, sx.hi, c) +
                         w10 * square.at(sy.hi, sx.lo, c) + w11 * square.at(sy.hi, sx.hi, c);
        out.image.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::vector<int> background_patches(const Mask& mask, int patch_size, double tau) {
  if (patch_size <= 0 || mask.height % patch_size != 0 || mask.width % patch_size != 0) {
    throw ShapeError("background_patches: mask not divisible by the patch size");
  }
  const int gh = mask.height / patch_size;
  const int gw = mask.width / patch_size;
  const double area = static_cast<double>(patch_size) * patch_size;
  std::vector<int> out;
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      int fg = 0;
      for (int dy = 0; dy < patch_size; ++dy) {
        for (int dx = 0; dx < patch_size; ++dx) {
          fg += mask.at(gy * patch_size + dy, gx * patch_size + dx) != 0;
        }
      }
      if (fg / area < tau) out.push_back(gy * gw + gx);
    }
  }
  return out;
}

std::size_t replacement_count(std::size_t n, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("replacement_count: alpha outside [0, 1]");
  // The epsilon absorbs representation error in alpha so exact halves
  // (e.g. 0.35 * 10) still round up.
  const double k = std::floor(alpha * static_cast<double>(n) + 0.5 + 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(k, 0.0)));
}

std::vector<int> replacement_plan(std::span<const int> background, double alpha, int layer,
                                  std::uint64_t seed, int proposal_id) {
  const std::size_t k = replacement_count(background.size(), alpha);
  if (k == 0) return {};
  std::vector<int> pool(background.begin(), background.end());
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(proposal_id),
                            static_cast<std::uint64_t>(layer)});
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

CleanContext clean_context_from(const ToyEncoder& encoder, const Image& image,
                                std::span<const LayerFeatures> layers) {
  const int num_layers = encoder.config().num_layers;
  if (static_cast<int>(layers.size()) != num_layers) {
    throw ShapeError("clean context: expected one feature set per encoder layer");
  }
  CleanContext ctx;
  ctx.cls_per_layer.reserve(num_layers);
  ctx.cls_per_layer.push_back(encoder.patch_embed(image).row(0));
  for (int i = 0; i + 1 < num_layers; ++i) ctx.cls_per_layer.push_back(layers[i].cls);
  return ctx;
}

CleanContext make_clean_context(const ToyEncoder& encoder, const Image& image) {
  const auto layers = encoder.forward(image);
  return clean_context_from(encoder, image, layers);
}

CSResult cs_forward(const ToyEncoder& encoder, const SubImage& sub, const CleanContext& clean,
                    const CSConfig& config, int proposal_id, ForwardTrace* trace) {
  const EncoderConfig& enc = encoder.config();
  config.validate(enc.num_layers, enc.patch_size);
  if (static_cast<int>(clean.cls_per_layer.size()) != enc.num_layers) {
    throw ContractError("cs_forward: clean context was built for a different encoder depth");
  }
  for (const RowVec& v : clean.cls_per_layer) {
    if (v.size() != enc.embed_dim) {
      throw ContractError("cs_forward: clean context width does not match the encoder");
    }
  }

  CSResult result;
  result.background = background_patches(sub.mask, enc.patch_size, config.bg_threshold);
  bool any_replacement = false;
  for (int layer : config.idx) {
    auto plan = replacement_plan(result.background, config.alpha, layer, config.seed, proposal_id);
    any_replacement = any_replacement || !plan.empty();
    result.plans[layer] = std::move(plan);
  }

  Interceptor interceptor;
  if (any_replacement) {
    interceptor = [&](int layer_index, const Mat& tokens) -> Mat {
      auto it = result.plans.find(layer_index);
      if (it == result.plans.end() || it->second.empty()) return tokens;
      Mat out = tokens;
      const RowVec& cls = clean.cls_per_layer[layer_index - 1];
      for (int j : it->second) out.row(1 + j) = cls;
      return out;
    };
  }
  result.layers = encoder.forward(sub.image, interceptor, trace);
  result.embedding = result.layers.back().cls;
  return result;
}

}  // namespace ovseg
