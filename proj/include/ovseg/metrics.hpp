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

#ifndef OVSEG_METRICS_HPP_
#define OVSEG_METRICS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ovseg/types.hpp"

namespace ovseg {

// relations(q, r) is true iff r is a synonym or parent of q (r in Q_q).
// Irreflexive; not necessarily symmetric. No transitive closure is applied.
class AssociationMatrix {
 public:
  AssociationMatrix() = default;
  explicit AssociationMatrix(int num_classes);

  // Throws ValidationError on self-relations or out-of-range ids.
  static AssociationMatrix from_mapping(const std::map<int, std::vector<int>>& mapping,
                                        int num_classes);

  int num_classes() const { return k_; }
  bool related(int q, int r) const { return rel_[static_cast<std::size_t>(q) * k_ + r] != 0; }
  void set(int q, int r);
  std::vector<int> related_to(int q) const;
  bool empty() const;
  std::map<int, std::vector<int>> to_mapping() const;

 private:
  int k_ = 0;
  std::vector<std::uint8_t> rel_;
};

// JSON object: keys are class-id strings, values arrays of related ids.
AssociationMatrix parse_association(const nlohmann::json& doc, int num_classes);
AssociationMatrix load_association(const std::filesystem::path& path, int num_classes);

// counts(p, g): pixels predicted p whose ground truth is g. Ground-truth
// pixels that no prediction covers (pred = ignore) land in `missed[g]`;
// they count towards G_g only. Pixels with gt = ignore are excluded.
struct ConfusionCounts {
  int num_classes = 0;
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> missed;
  std::uint64_t total_ignored = 0;

  ConfusionCounts() = default;
  explicit ConfusionCounts(int k)
      : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0), missed(k, 0) {}

  std::uint64_t at(int pred, int gt) const {
    return counts[static_cast<std::size_t>(pred) * num_classes + gt];
  }
  std::uint64_t& at(int pred, int gt) {
    return counts[static_cast<std::size_t>(pred) * num_classes + gt];
  }
  std::uint64_t predicted(int q) const;     // P_q
  std::uint64_t ground_truth(int q) const;  // G_q

  ConfusionCounts& merge(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts accumulate_confusion(const LabelMap& pred, const LabelMap& gt, int num_classes);

// Plain IoU; nullopt when class q has neither predictions nor ground truth.
std::optional<double> iou(const ConfusionCounts& counts, int q);

// Pixel buckets entering the semantic-guided IoU of class q.
struct SemanticTerms {
  std::uint64_t pq = 0;    // P_q
  std::uint64_t gq = 0;    // G_q
  std::uint64_t pqgq = 0;  // P_q G_q
  std::uint64_t pQ = 0;    // P_Q: predicted as any class in Q_q
  std::uint64_t pQgq = 0;  // P_Q G_q
  std::uint64_t pQgQ = 0;  // P_Q G_Q
};

SemanticTerms semantic_terms(const ConfusionCounts& counts, const AssociationMatrix& assoc, int q);

// (P_Q G_q + P_Q G_Q) / P_Q, or 0 when nothing was predicted as Q_q.
double balance_factor(const SemanticTerms& t);

// SG-IoU(q) = (P_q G_q + P_Q G_q * beta) / (P_q + G_q - P_q G_q).
std::optional<double> sg_iou(const ConfusionCounts& counts, const AssociationMatrix& assoc, int q);
std::optional<double> sg_iou(const SemanticTerms& terms);

struct ClassScore {
  int id = 0;
  std::string name;
  std::optional<double> iou;
  std::optional<double> sg_iou;
  bool present = false;
};

struct MetricReport {
  std::vector<ClassScore> per_class;
  double miou = 0.0;
  double msg_iou = 0.0;
  std::uint64_t ignored_pixels = 0;
};

// Class means run over present classes: those with any ground truth or
// predicted pixels, or only ground truth when `gt_only` is set.
MetricReport report(const ConfusionCounts& counts, const AssociationMatrix& assoc,
                    const std::vector<std::string>& class_names = {}, bool gt_only = false);

nlohmann::json report_to_json(const MetricReport& r);

}  // namespace ovseg

#endif  // OVSEG_METRICS_HPP_
