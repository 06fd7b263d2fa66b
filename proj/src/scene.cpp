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

#include "ovseg/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ovseg/rng.hpp"

namespace ovseg {

namespace {

struct Box {
  int y0, x0, y1, x1;  // half-open

  bool overlaps(const Box& o) const {
    return y0 < o.y1 && o.y0 < y1 && x0 < o.x1 && o.x0 < x1;
  }
};

// Class colours are fixed across scenes so appearance tracks semantics.
std::array<double, 3> class_color(int cls) {
  Rng rng = make_rng(0x5ca1ab1eULL, {static_cast<std::uint64_t>(cls)});
  std::uniform_real_distribution<double> u(0.15, 0.85);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

void SceneConfig::validate(int patch_size) const {
  if (image_count < 0) throw ConfigError("scene: image_count must be >= 0");
  if (canvas <= 0 || canvas % patch_size != 0) {
    throw ConfigError("scene: canvas " + std::to_string(canvas) +
                      " must be a positive multiple of the patch size " +
                      std::to_string(patch_size));
  }
  if (num_classes < 2) throw ConfigError("scene: need at least 2 classes");
  if (num_classes > kIgnoreLabel) throw ConfigError("scene: too many classes");
  if (min_shapes < 0 || max_shapes < min_shapes) {
    throw ConfigError("scene: shape range must satisfy 0 <= min_shapes <= max_shapes");
  }
}

Scene generate_scene(const SceneConfig& config, int index) {
  Rng rng = make_rng(config.seed, {static_cast<std::uint64_t>(index)});
  const int n = config.canvas;
  Scene scene{Image(n, n), LabelMap(n, n, 0)};

  // Background: class-0 colour modulated by a low-frequency wave plus grain.
  const auto bg = class_color(0);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  const double py = phase(rng);
  const double px = phase(rng);
  std::normal_distribution<double> grain(0.0, 0.03);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double wave = 0.08 * std::sin(0.35 * y + py) * std::cos(0.27 * x + px);
      for (int c = 0; c < 3; ++c) {
        scene.image.at(y, x, c) = std::clamp(bg[c] + wave + grain(rng), 0.0, 1.0);
      }
    }
  }

  std::uniform_int_distribution<int> count_dist(config.min_shapes, config.max_shapes);
  std::uniform_int_distribution<int> class_dist(1, config.num_classes - 1);
  const int min_side = std::max(1, n / 8);
  const int max_side = std::max(min_side, n / 3);
  std::uniform_int_distribution<int> side_dist(min_side, max_side);
  std::bernoulli_distribution ellipse_dist(0.5);

  const int shapes = count_dist(rng);
  std::vector<Box> placed;
  for (int s = 0; s < shapes; ++s) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int bh = side_dist(rng);
      const int bw = side_dist(rng);
      std::uniform_int_distribution<int> ydist(0, n - bh);
      std::uniform_int_distribution<int> xdist(0, n - bw);
      const Box box{ydist(rng), xdist(rng), 0, 0};
      const Box full{box.y0, box.x0, box.y0 + bh, box.x0 + bw};
      const bool clash = std::any_of(placed.begin(), placed.end(),
                                     [&](const Box& o) { return full.overlaps(o); });
      if (clash) continue;
      placed.push_back(full);

      const int cls = class_dist(rng);
      const bool ellipse = ellipse_dist(rng);
      const auto color = class_color(cls);
      const double cy = full.y0 + (bh - 1) / 2.0;
      const double cx = full.x0 + (bw - 1) / 2.0;
      const double ry = std::max(bh / 2.0, 0.5);
      const double rx = std::max(bw / 2.0, 0.5);
      for (int y = full.y0; y < full.y1; ++y) {
        for (int x = full.x0; x < full.x1; ++x) {
          if (ellipse) {
            const double dy = (y - cy) / ry;
            const double dx = (x - cx) / rx;
            if (dy * dy + dx * dx > 1.0) continue;
          }
          scene.labels.at(y, x) = static_cast<std::uint16_t>(cls);
          for (int c = 0; c < 3; ++c) {
            scene.image.at(y, x, c) = std::clamp(color[c] + grain(rng), 0.0, 1.0);
          }
        }
      }
      break;
    }
  }
  return scene;
}

}  // namespace ovseg
