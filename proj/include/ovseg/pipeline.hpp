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

#ifndef OVSEG_PIPELINE_HPP_
#define OVSEG_PIPELINE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ovseg/contextual_shift.hpp"
#include "ovseg/encoder.hpp"
#include "ovseg/metrics.hpp"
#include "ovseg/sim.hpp"
#include "ovseg/types.hpp"

namespace ovseg {

// Unit-norm class embeddings standing in for a text encoder.
struct TextBank {
  std::vector<std::string> class_names;
  Mat vectors;  // K x C
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

// Every class draws a seeded random unit "base" vector. A class with a
// nonempty relation set instead gets normalize(mean of its related classes'
// base vectors + noise), the noise having total norm scale `noise_scale`.
TextBank build_text_bank(const std::vector<std::string>& class_names,
                         const AssociationMatrix& hierarchy, int dim, std::uint64_t seed,
                         double noise_scale = 0.3);

struct EnsembleConfig {
  double lambda = 0.7;
  double temperature = 0.01;

  void validate() const;
};

// softmax(cos(e, bank_k) / temperature).
Vec classify_embedding(const RowVec& embedding, const TextBank& bank, double temperature);

// Geometric blend: p proportional to model^(1 - lambda) * clip^lambda.
Vec ensemble_scores(const Vec& model_probs, const Vec& clip_probs, double lambda);

// Per pixel, argmax_c sum_k mask_k(x) * probs(k, c); ties go to the smaller
// class index. Pixels outside every mask get kIgnoreLabel.
LabelMap assign_labels(const std::vector<Mask>& masks, const Mat& probs);

struct ProposalNoise {
  double mask_flip_rate = 0.0;
  double embed_noise = 0.0;
  // Probability that a proposal is embedded as one of its class's related
  // (parent or synonym) classes instead of its own.
  double parent_swap_rate = 0.0;

  void validate() const;
};

struct ProposalSet {
  std::vector<Mask> masks;
  Mat embeddings;                   // N x C
  std::vector<int> source_class;    // ground-truth class the proposal came from
  std::vector<int> embedded_class;  // class whose text row seeded the embedding

  int size() const { return static_cast<int>(masks.size()); }
};

// Pixels of the region, or next to it, that have a 4-neighbour on the other
// side of the region border.
std::vector<std::size_t> boundary_pixels(const Mask& region);

// One proposal per ground-truth class present, in increasing class order.
// Proposals whose mask becomes empty after flipping are dropped.
ProposalSet synth_proposals(const LabelMap& gt, const TextBank& bank,
                            const AssociationMatrix& hierarchy, const ProposalNoise& noise,
                            std::uint64_t seed);

struct ProposalRecord {
  int id = 0;
  int source_class = 0;
  int embedded_class = 0;
  Vec model_probs;
  Vec clip_probs;
  Vec combined;
  int label = 0;
};

struct PipelineResult {
  LabelMap labels;
  std::vector<ProposalRecord> records;
};

nlohmann::json records_to_json(const std::vector<ProposalRecord>& records);

struct PipelineConfig {
  EncoderConfig encoder;
  SIMConfig sim;
  CSConfig cs;
  EnsembleConfig ensemble;
  ProposalNoise proposals;
};

// Two-stage assembly: proposals -> SIM-calibrated proposal embeddings and
// contextual-shift encoder embeddings -> classification of both ->
// ensemble -> per-pixel labels. Immutable after construction.
class Pipeline {
 public:
  Pipeline(const PipelineConfig& config, TextBank bank, AssociationMatrix hierarchy);

  PipelineResult run(const Image& image, const LabelMap& gt, std::uint64_t seed) const;

  const ToyEncoder& encoder() const { return encoder_; }
  const SemanticIntegrationModule& sim() const { return sim_; }
  const TextBank& bank() const { return bank_; }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  ToyEncoder encoder_;
  SemanticIntegrationModule sim_;
  TextBank bank_;
  AssociationMatrix hierarchy_;
};

}  // namespace ovseg

#endif  // OVSEG_PIPELINE_HPP_
