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

#ifndef OVSEG_HARNESS_HPP_
#define OVSEG_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ovseg/metrics.hpp"
#include "ovseg/pipeline.hpp"
#include "ovseg/scene.hpp"
#include "ovseg/sim.hpp"

namespace ovseg {

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  PipelineConfig pipeline;
  SceneConfig scene;
  bool gt_only = false;
  std::vector<std::string> class_names;
  std::map<int, std::vector<int>> association;
  std::uint64_t text_bank_seed = 0;
  double text_bank_noise = 0.3;

  void validate() const;
};

// The 12-class demo taxonomy shipped as the default: class 0 is the scene
// background, the rest pair fine-grained classes with their parents.
std::vector<std::string> demo_class_names();
std::map<int, std::vector<int>> demo_association();

// Missing sections and fields take their defaults; unknown keys are a
// ConfigError. An empty object yields the default configuration.
RunConfig parse_run_config(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

Pipeline make_pipeline(const RunConfig& config);

// Writes images/NNNN.png (8-bit RGB) and gt/NNNN.png (16-bit labels).
void generate_dataset(const RunConfig& config, const std::filesystem::path& out_dir);

struct RunSummary {
  MetricReport report;
  ConfusionCounts counts;
  std::string report_json;
};

// Generates every scene, runs the pipeline and accumulates confusion in
// image-index order. Writes report.json, audit.json, pred/NNNN.png and
// gt/NNNN.png under `out_dir`. `workers` <= 0 uses the config value.
RunSummary run_eval(const RunConfig& config, const std::filesystem::path& out_dir,
                    int workers = 0);

// Metrics over matching file names in two label-map directories.
RunSummary eval_directories(const std::filesystem::path& pred_dir,
                            const std::filesystem::path& gt_dir, const AssociationMatrix& assoc,
                            int num_classes);

std::string kernel_to_csv(const FrequencyKernel& kernel);

}  // namespace ovseg

#endif  // OVSEG_HARNESS_HPP_
