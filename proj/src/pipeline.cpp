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

#include "ovseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "ovseg/rng.hpp"

namespace ovseg {

namespace {

int argmax_first(const Vec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;  // strict: ties keep the smaller index
  }
  return best;
}

void check_probability_vector(const Vec& p, const char* what) {
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) {
      throw ContractError(std::string("ensemble: ") + what + " has a negative or non-finite entry");
    }
  }
  if (std::abs(p.sum() - 1.0) > 1e-4) {
    throw ContractError(std::string("ensemble: ") + what + " does not sum to 1");
  }
}

}  // namespace

TextBank build_text_bank(const std::vector<std::string>& class_names,
                         const AssociationMatrix& hierarchy, int dim, std::uint64_t seed,
                         double noise_scale) {
  const int k = static_cast<int>(class_names.size());
  if (k < 1) throw ConfigError("text bank: need at least one class");
  if (dim < 1) throw ConfigError("text bank: dimension must be positive");
  if (hierarchy.num_classes() != k) {
    throw ConfigError("text bank: hierarchy covers " + std::to_string(hierarchy.num_classes()) +
                      " classes, expected " + std::to_string(k));
  }
  std::set<std::string> seen;
  for (const auto& name : class_names) {
    if (!seen.insert(name).second) throw ConfigError("text bank: duplicate class name '" + name + "'");
  }

  Mat base(k, dim);
  for (int c = 0; c < k; ++c) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c), 0});
    RowVec v = gaussian_matrix(1, dim, rng).row(0);
    base.row(c) = v / v.norm();
  }
  TextBank bank;
  bank.class_names = class_names;
  bank.seed = seed;
  bank.vectors = base;
  const double component_std = noise_scale / std::sqrt(static_cast<double>(dim));
  for (int c = 0; c < k; ++c) {
    const std::vector<int> related = hierarchy.related_to(c);
    if (related.empty()) continue;
    RowVec mean = RowVec::Zero(dim);
    for (int r : related) mean += base.row(r);
    mean /= static_cast<double>(related.size());
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c), 1});
    RowVec v = mean + gaussian_matrix(1, dim, rng, component_std).row(0);
    bank.vectors.row(c) = v / v.norm();
  }
  return bank;
}

void EnsembleConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ensemble: lambda must lie in [0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("ensemble: temperature must be positive");
  }
}

Vec classify_embedding(const RowVec& embedding, const TextBank& bank, double temperature) {
  if (embedding.size() != bank.dim()) {
    throw ShapeError("classify: embedding width does not match the text bank");
  }
  if (!embedding.allFinite()) throw DegenerateEmbeddingError("classify: non-finite embedding");
  const double norm = embedding.norm();
  if (norm == 0.0) throw DegenerateEmbeddingError("classify: zero embedding");
  if (!(temperature > 0.0)) throw DomainError("classify: temperature must be positive");
  const Vec cos = bank.vectors * (embedding.transpose() / norm);
  const Vec logits = cos / temperature;
  const Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Vec ensemble_scores(const Vec& model_probs, const Vec& clip_probs, double lambda) {
  if (model_probs.size() != clip_probs.size()) {
    throw ShapeError("ensemble: probability vectors differ in length");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("ensemble: lambda outside [0, 1]");
  check_probability_vector(model_probs, "model_probs");
  check_probability_vector(clip_probs, "clip_probs");
  Vec out(model_probs.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = std::pow(model_probs[i], 1.0 - lambda) * std::pow(clip_probs[i], lambda);
  }
  const double total = out.sum();
  if (!(total > 0.0)) throw ContractError("ensemble: inputs have disjoint support");
  return out / total;
}

LabelMap assign_labels(const std::vector<Mask>& masks, const Mat& probs) {
  if (static_cast<Eigen::Index>(masks.size()) != probs.rows()) {
    throw ShapeError("assign_labels: one probability row per mask required");
  }
  if (masks.empty()) return {};
  const int h = masks.front().height;
  const int w = masks.front().width;
  for (const Mask& m : masks) {
    if (m.height != h || m.width != w) throw ShapeError("assign_labels: masks differ in size");
  }
  const int k = static_cast<int>(probs.cols());
  LabelMap out(h, w, kIgnoreLabel);
  Vec score(k);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    score.setZero();
    bool covered = false;
    for (std::size_t n = 0; n < masks.size(); ++n) {
      if (masks[n].bits[i] == 0) continue;
      covered = true;
      score += probs.row(static_cast<Eigen::Index>(n)).transpose();
    }
    if (covered) out.labels[i] = static_cast<std::uint16_t>(argmax_first(score));
  }
  return out;
}

void ProposalNoise::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(mask_flip_rate)) throw ConfigError("proposals: mask_flip_rate must lie in [0, 1]");
  if (!unit(parent_swap_rate)) throw ConfigError("proposals: parent_swap_rate must lie in [0, 1]");
  if (!(embed_noise >= 0.0)) throw ConfigError("proposals: embed_noise must be >= 0");
}

std::vector<std::size_t> boundary_pixels(const Mask& region) {
  std::vector<std::size_t> out;
  const int h = region.height;
  const int w = region.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = region.at(y, x);
      const bool edge = (y > 0 && region.at(y - 1, x) != v) ||
                        (y + 1 < h && region.at(y + 1, x) != v) ||
                        (x > 0 && region.at(y, x - 1) != v) ||
                        (x + 1 < w && region.at(y, x + 1) != v);
      if (edge) out.push_back(static_cast<std::size_t>(y) * w + x);
    }
  }
  return out;
}

ProposalSet synth_proposals(const LabelMap& gt, const TextBank& bank,
                            const AssociationMatrix& hierarchy, const ProposalNoise& noise,
                            std::uint64_t seed) {
  noise.validate();
  std::set<int> present;
  for (std::uint16_t v : gt.labels) {
    if (v == kIgnoreLabel) continue;
    if (v >= bank.num_classes()) {
      throw ValidationError("synth_proposals: label " + std::to_string(v) + " out of range");
    }
    present.insert(v);
  }

  ProposalSet set;
  std::vector<RowVec> rows;
  for (int c : present) {
    const auto cls = static_cast<std::uint64_t>(c);
    Mask region(gt.height, gt.width);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) region.bits[i] = gt.labels[i] == c;

    Mask mask = region;
    Rng flip_rng = make_rng(seed, {cls, 0});
    std::bernoulli_distribution flip(noise.mask_flip_rate);
    for (std::size_t i : boundary_pixels(region)) {
      if (flip(flip_rng)) mask.bits[i] ^= 1;
    }
    if (mask.count() == 0) continue;

    int embedded = c;
    const std::vector<int> related = hierarchy.related_to(c);
    Rng swap_rng = make_rng(seed, {cls, 1});
    if (!related.empty() && std::bernoulli_distribution(noise.parent_swap_rate)(swap_rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, related.size() - 1);
      embedded = related[pick(swap_rng)];
    }

    RowVec e = bank.vectors.row(embedded);
    if (noise.embed_noise > 0.0) {
      Rng noise_rng = make_rng(seed, {cls, 2});
      e += gaussian_matrix(1, bank.dim(), noise_rng, noise.embed_noise).row(0);
    }
    set.masks.push_back(std::move(mask));
    set.source_class.push_back(c);
    set.embedded_class.push_back(embedded);
    rows.push_back(std::move(e));
  }
  set.embeddings.resize(static_cast<Eigen::Index>(rows.size()), bank.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    set.embeddings.row(static_cast<Eigen::Index>(i)) = rows[i];
  }
  return set;
}

nlohmann::json records_to_json(const std::vector<ProposalRecord>& records) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json out = nlohmann::json::array();
  for (const ProposalRecord& r : records) {
    out.push_back({{"id", r.id},
                   {"source_class", r.source_class},
                   {"embedded_class", r.embedded_class},
                   {"model_probs", vec(r.model_probs)},
                   {"clip_probs", vec(r.clip_probs)},
                   {"combined", vec(r.combined)},
                   {"label", r.label}});
  }
  return out;
}

Pipeline::Pipeline(const PipelineConfig& config, TextBank bank, AssociationMatrix hierarchy)
    : config_(config),
      encoder_(config.encoder),
      sim_(config.sim, config.encoder.embed_dim, config.encoder.num_layers),
      bank_(std::move(bank)),
      hierarchy_(std::move(hierarchy)) {
  config_.cs.validate(config_.encoder.num_layers, config_.encoder.patch_size);
  config_.ensemble.validate();
  config_.proposals.validate();
  if (bank_.dim() != config_.encoder.embed_dim) {
    throw ConfigError("pipeline: text bank width differs from the encoder width");
  }
  if (hierarchy_.num_classes() != bank_.num_classes()) {
    throw ConfigError("pipeline: hierarchy and text bank disagree on the class count");
  }
}

PipelineResult Pipeline::run(const Image& image, const LabelMap& gt, std::uint64_t seed) const {
  validate_image(image);
  if (gt.height != image.height || gt.width != image.width) {
    throw ShapeError("pipeline: ground truth and image sizes differ");
  }
  const ProposalSet proposals =
      synth_proposals(gt, bank_, hierarchy_, config_.proposals, derive_seed(seed, {1}));

  PipelineResult result;
  if (proposals.size() == 0) {
    result.labels = LabelMap(gt.height, gt.width, kIgnoreLabel);
    return result;
  }

  const std::vector<LayerFeatures> layers = encoder_.forward(image);
  const CleanContext clean = clean_context_from(encoder_, image, layers);
  const Mat calibrated = sim_.calibrate(proposals.embeddings, layers);

  CSConfig cs = config_.cs;
  cs.seed = derive_seed(config_.cs.seed, {seed});

  const int k = bank_.num_classes();
  Mat combined(proposals.size(), k);
  for (int n = 0; n < proposals.size(); ++n) {
    const SubImage sub = crop_and_mask(image, proposals.masks[n], cs);
    const CSResult shifted = cs_forward(encoder_, sub, clean, cs, n);

    ProposalRecord rec;
    rec.id = n;
    rec.source_class = proposals.source_class[n];
    rec.embedded_class = proposals.embedded_class[n];
    rec.model_probs = classify_embedding(calibrated.row(n), bank_, config_.ensemble.temperature);
    rec.clip_probs = classify_embedding(shifted.embedding, bank_, config_.ensemble.temperature);
    rec.combined = ensemble_scores(rec.model_probs, rec.clip_probs, config_.ensemble.lambda);
    rec.label = argmax_first(rec.combined);
    combined.row(n) = rec.combined.transpose();
    result.records.push_back(std::move(rec));
  }
  result.labels = assign_labels(proposals.masks, combined);
  return result;
}

}  // namespace ovseg
