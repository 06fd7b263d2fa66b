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

#ifndef OVSEG_SCENE_HPP_
#define OVSEG_SCENE_HPP_

#include <cstdint>

#include "ovseg/types.hpp"

namespace ovseg {

struct SceneConfig {
  int image_count = 8;
  int canvas = 224;  // square side, multiple of the encoder patch size
  int num_classes = 12;
  int min_shapes = 1;
  int max_shapes = 4;
  std::uint64_t seed = 0;

  void validate(int patch_size) const;
};

struct Scene {
  Image image;
  LabelMap labels;
};

// Non-overlapping rectangles and ellipses on a textured background. Class 0
// is the background; each shape carries one class id in [1, K). Pure in
// (config, index).
Scene generate_scene(const SceneConfig& config, int index);

}  // namespace ovseg

#endif  // OVSEG_SCENE_HPP_
