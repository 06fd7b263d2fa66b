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

#include "ovseg/metrics.hpp"

#include <charconv>
#include <fstream>

namespace ovseg {

AssociationMatrix::AssociationMatrix(int num_classes)
    : k_(num_classes), rel_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 0) throw ValidationError("association: negative class count");
}

void AssociationMatrix::set(int q, int r) {
  if (q < 0 || q >= k_ || r < 0 || r >= k_) {
    throw ValidationError("association: class id out of range (" + std::to_string(q) + " -> " +
                          std::to_string(r) + ")");
  }
  if (q == r) {
    throw ValidationError("association: class " + std::to_string(q) + " relates to itself");
  }
  rel_[static_cast<std::size_t>(q) * k_ + r] = 1;
}

AssociationMatrix AssociationMatrix::from_mapping(const std::map<int, std::vector<int>>& mapping,
                                                  int num_classes) {
  AssociationMatrix m(num_classes);
  for (const auto& [q, rs] : mapping) {
    for (int r : rs) m.set(q, r);
  }
  return m;
}

std::vector<int> AssociationMatrix::related_to(int q) const {
  std::vector<int> out;
  for (int r = 0; r < k_; ++r) {
    if (related(q, r)) out.push_back(r);
  }
  return out;
}

bool AssociationMatrix::empty() const {
  for (auto v : rel_) {
    if (v != 0) return false;
  }
  return true;
}

std::map<int, std::vector<int>> AssociationMatrix::to_mapping() const {
  std::map<int, std::vector<int>> out;
  for (int q = 0; q < k_; ++q) {
    auto rs = related_to(q);
    if (!rs.empty()) out[q] = std::move(rs);
  }
  return out;
}

AssociationMatrix parse_association(const nlohmann::json& doc, int num_classes) {
  if (!doc.is_object()) throw ValidationError("association: expected a JSON object");
  AssociationMatrix m(num_classes);
  for (const auto& [key, value] : doc.items()) {
    int q = -1;
    const auto* end = key.data() + key.size();
    auto [ptr, ec] = std::from_chars(key.data(), end, q);
    if (ec != std::errc() || ptr != end) {
      throw ValidationError("association: key '" + key + "' is not a class id");
    }
    if (!value.is_array()) {
      throw ValidationError("association: value for '" + key + "' must be an array");
    }
    for (const auto& r : value) {
      if (!r.is_number_integer()) {
        throw ValidationError("association: related ids of '" + key + "' must be integers");
      }
      m.set(q, r.get<int>());
    }
  }
  return m;
}

AssociationMatrix load_association(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw ValidationError("association: cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("association: " + path.string() + ": " + e.what());
  }
  return parse_association(doc, num_classes);
}

std::uint64_t ConfusionCounts::predicted(int q) const {
  std::uint64_t s = 0;
  for (int g = 0; g < num_classes; ++g) s += at(q, g);
  return s;
}

std::uint64_t ConfusionCounts::ground_truth(int q) const {
  std::uint64_t s = missed[q];
  for (int p = 0; p < num_classes; ++p) s += at(p, q);
  return s;
}

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.num_classes != num_classes) throw ShapeError("confusion merge: class count mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  for (std::size_t i = 0; i < missed.size(); ++i) missed[i] += other.missed[i];
  total_ignored += other.total_ignored;
  return *this;
}

ConfusionCounts accumulate_confusion(const LabelMap& pred, const LabelMap& gt, int num_classes) {
  if (pred.height != gt.height || pred.width != gt.width ||
      pred.labels.size() != gt.labels.size()) {
    throw ShapeError("accumulate_confusion: prediction and ground truth shapes differ");
  }
  ConfusionCounts c(num_classes);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const std::uint16_t g = gt.labels[i];
    const std::uint16_t p = pred.labels[i];
    if (g != kIgnoreLabel && g >= num_classes) {
      throw ValidationError("accumulate_confusion: ground-truth label " + std::to_string(g) +
                            " out of range");
    }
    if (p != kIgnoreLabel && p >= num_classes) {
      throw ValidationError("accumulate_confusion: predicted label " + std::to_string(p) +
                            " out of range");
    }
    if (g == kIgnoreLabel) {
      ++c.total_ignored;
    } else if (p == kIgnoreLabel) {
      ++c.missed[g];
    } else {
      ++c.at(p, g);
    }
  }
  return c;
}

std::optional<double> iou(const ConfusionCounts& counts, int q) {
  const std::uint64_t inter = counts.at(q, q);
  const std::uint64_t denom = counts.predicted(q) + counts.ground_truth(q) - inter;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(denom);
}

SemanticTerms semantic_terms(const ConfusionCounts& counts, const AssociationMatrix& assoc, int q) {
  if (assoc.num_classes() != counts.num_classes) {
    throw ShapeError("sg_iou: association and counts disagree on the class count");
  }
  SemanticTerms t;
  t.pq = counts.predicted(q);
  t.gq = counts.ground_truth(q);
  t.pqgq = counts.at(q, q);
  const std::vector<int> parents = assoc.related_to(q);
  for (int r : parents) {
    t.pQ += counts.predicted(r);
    t.pQgq += counts.at(r, q);
    for (int s : parents) t.pQgQ += counts.at(r, s);
  }
  return t;
}

double balance_factor(const SemanticTerms& t) {
  if (t.pQ == 0) return 0.0;
  return static_cast<double>(t.pQgq + t.pQgQ) / static_cast<double>(t.pQ);
}

std::optional<double> sg_iou(const SemanticTerms& t) {
  const std::uint64_t denom = t.pq + t.gq - t.pqgq;
  if (denom == 0) return std::nullopt;
  const double beta = balance_factor(t);
  return (static_cast<double>(t.pqgq) + static_cast<double>(t.pQgq) * beta) /
         static_cast<double>(denom);
}

std::optional<double> sg_iou(const ConfusionCounts& counts, const AssociationMatrix& assoc, int q) {
  return sg_iou(semantic_terms(counts, assoc, q));
}

MetricReport report(const ConfusionCounts& counts, const AssociationMatrix& assoc,
                    const std::vector<std::string>& class_names, bool gt_only) {
  MetricReport r;
  r.ignored_pixels = counts.total_ignored;
  double iou_sum = 0.0;
  double sg_sum = 0.0;
  int n = 0;
  for (int q = 0; q < counts.num_classes; ++q) {
    ClassScore s;
    s.id = q;
    s.name = q < static_cast<int>(class_names.size()) ? class_names[q] : std::to_string(q);
    s.iou = iou(counts, q);
    s.sg_iou = sg_iou(counts, assoc, q);
    s.present = gt_only ? counts.ground_truth(q) > 0 : s.iou.has_value();
    if (s.present) {
      iou_sum += s.iou.value_or(0.0);
      sg_sum += s.sg_iou.value_or(0.0);
      ++n;
    }
    r.per_class.push_back(std::move(s));
  }
  if (n > 0) {
    r.miou = iou_sum / n;
    r.msg_iou = sg_sum / n;
  }
  return r;
}

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassScore& s : r.per_class) {
    nlohmann::json c;
    c["id"] = s.id;
    c["name"] = s.name;
    c["iou"] = s.iou ? nlohmann::json(*s.iou) : nlohmann::json(nullptr);
    c["sg_iou"] = s.sg_iou ? nlohmann::json(*s.sg_iou) : nlohmann::json(nullptr);
    c["present"] = s.present;
    per_class.push_back(std::move(c));
  }
  nlohmann::json j;
  j["per_class"] = std::move(per_class);
  j["miou"] = r.miou;
  j["msg_iou"] = r.msg_iou;
  j["ignored_pixels"] = r.ignored_pixels;
  return j;
}

}  // namespace ovseg
