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

#include "ovseg/harness.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "ovseg/png_io.hpp"
#include "ovseg/rng.hpp"

namespace ovseg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& obj, std::string section) : obj_(obj), section_(std::move(section)) {
    if (!obj_.is_object()) throw ConfigError("config: section '" + section_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    used_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + section_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const json* section(const char* key) {
    used_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!used_.count(key)) {
        throw ConfigError("config: unknown key '" + key + "' in section '" + section_ + "'");
      }
    }
  }

 private:
  const json& obj_;
  std::string section_;
  std::set<std::string> used_;
};

std::string image_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d.png", index);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

std::map<int, std::vector<int>> parse_mapping(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: association must be an object");
  std::map<int, std::vector<int>> out;
  for (const auto& [key, value] : doc.items()) {
    int q = 0;
    try {
      std::size_t used = 0;
      q = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
      out[q] = value.get<std::vector<int>>();
    } catch (const std::exception&) {
      throw ConfigError("config: bad association entry '" + key + "'");
    }
  }
  return out;
}

json mapping_to_json(const std::map<int, std::vector<int>>& mapping) {
  json out = json::object();
  for (const auto& [q, rs] : mapping) out[std::to_string(q)] = rs;
  return out;
}

}  // namespace

std::vector<std::string> demo_class_names() {
  return {"background", "chair", "armchair", "swivel chair", "table", "desk",
          "plant",      "flower", "tree",    "vehicle",      "car",   "truck"};
}

std::map<int, std::vector<int>> demo_association() {
  return {{2, {1}}, {3, {1}}, {5, {4}}, {7, {6}}, {8, {6}}, {10, {9}}, {11, {9}}};
}

void RunConfig::validate() const {
  const EncoderConfig& enc = pipeline.encoder;
  enc.validate();
  pipeline.sim.validate(enc.num_layers);
  if (enc.embed_dim % pipeline.sim.heads != 0) {
    throw ConfigError("sim: heads must divide the encoder embed_dim");
  }
  pipeline.cs.validate(enc.num_layers, enc.patch_size);
  pipeline.ensemble.validate();
  pipeline.proposals.validate();
  scene.validate(enc.patch_size);
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (static_cast<int>(class_names.size()) != scene.num_classes) {
    throw ConfigError("config: " + std::to_string(class_names.size()) + " class names for " +
                      std::to_string(scene.num_classes) + " classes");
  }
  if (!(text_bank_noise >= 0.0)) throw ConfigError("text_bank: noise_scale must be >= 0");
  try {
    AssociationMatrix::from_mapping(association, scene.num_classes);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig cfg;
  Fields top(doc, "<root>");
  top.read("seed", cfg.seed);
  top.read("workers", cfg.workers);

  if (const json* s = top.section("encoder")) {
    Fields f(*s, "encoder");
    EncoderConfig& e = cfg.pipeline.encoder;
    f.read("num_layers", e.num_layers);
    f.read("embed_dim", e.embed_dim);
    f.read("num_heads", e.num_heads);
    f.read("patch_size", e.patch_size);
    f.read("seed", e.seed);
    f.finish();
  }
  if (const json* s = top.section("sim")) {
    Fields f(*s, "sim");
    SIMConfig& m = cfg.pipeline.sim;
    f.read("selected_layers", m.selected_layers);
    f.read("sigmas", m.sigmas);
    f.read("gamma", m.gamma);
    f.read("heads", m.heads);
    f.read("output_gain", m.output_gain);
    f.read("seed", m.seed);
    std::vector<std::vector<double>> w;
    f.read("conv_weights", w);
    if (f.has("conv_weights")) {
      if (w.size() != 2 || w[0].size() != 2 || w[1].size() != 2) {
        throw ConfigError("config: sim.conv_weights must be a 2x2 array");
      }
      m.conv.weight << w[0][0], w[0][1], w[1][0], w[1][1];
    }
    f.finish();
  }
  if (const json* s = top.section("cs")) {
    Fields f(*s, "cs");
    CSConfig& c = cfg.pipeline.cs;
    f.read("idx", c.idx);
    f.read("alpha", c.alpha);
    f.read("bg_threshold", c.bg_threshold);
    f.read("sub_image_size", c.sub_image_size);
    f.read("fill_value", c.fill_value);
    f.read("seed", c.seed);
    f.finish();
    std::set<int> unique(c.idx.begin(), c.idx.end());
    c.idx.assign(unique.begin(), unique.end());
  }
  if (const json* s = top.section("ensemble")) {
    Fields f(*s, "ensemble");
    f.read("lambda", cfg.pipeline.ensemble.lambda);
    f.read("temperature", cfg.pipeline.ensemble.temperature);
    f.finish();
  }
  if (const json* s = top.section("proposals")) {
    Fields f(*s, "proposals");
    f.read("mask_flip_rate", cfg.pipeline.proposals.mask_flip_rate);
    f.read("embed_noise", cfg.pipeline.proposals.embed_noise);
    f.read("parent_swap_rate", cfg.pipeline.proposals.parent_swap_rate);
    f.finish();
  }
  if (const json* s = top.section("scene")) {
    Fields f(*s, "scene");
    f.read("image_count", cfg.scene.image_count);
    f.read("canvas", cfg.scene.canvas);
    f.read("num_classes", cfg.scene.num_classes);
    f.read("min_shapes", cfg.scene.min_shapes);
    f.read("max_shapes", cfg.scene.max_shapes);
    f.read("seed", cfg.scene.seed);
    f.finish();
  }
  if (const json* s = top.section("metrics")) {
    Fields f(*s, "metrics");
    f.read("gt_only", cfg.gt_only);
    f.finish();
  }
  if (const json* s = top.section("text_bank")) {
    Fields f(*s, "text_bank");
    f.read("seed", cfg.text_bank_seed);
    f.read("noise_scale", cfg.text_bank_noise);
    f.finish();
  }

  top.read("classes", cfg.class_names);
  const bool has_classes = top.has("classes");
  if (has_classes && !(doc.contains("scene") && doc["scene"].contains("num_classes"))) {
    cfg.scene.num_classes = static_cast<int>(cfg.class_names.size());
  }
  const bool demo = !has_classes && cfg.scene.num_classes == 12;
  if (!has_classes) {
    if (demo) {
      cfg.class_names = demo_class_names();
    } else {
      for (int i = 0; i < cfg.scene.num_classes; ++i) {
        cfg.class_names.push_back("class_" + std::to_string(i));
      }
    }
  }

  const json* assoc = top.section("association");
  const json* assoc_file = top.section("association_file");
  if (assoc != nullptr && assoc_file != nullptr) {
    throw ConfigError("config: give either association or association_file, not both");
  }
  if (assoc != nullptr) {
    cfg.association = parse_mapping(*assoc);
  } else if (assoc_file != nullptr) {
    if (!assoc_file->is_string()) throw ConfigError("config: association_file must be a string");
    fs::path p = assoc_file->get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    std::ifstream in(p);
    if (!in) throw ConfigError("config: cannot open association file " + p.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config: " + p.string() + ": " + e.what());
    }
    cfg.association = parse_mapping(j);
  } else if (demo) {
    cfg.association = demo_association();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json doc = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("config: " + path.string() + ": " + e.what());
    }
  }
  return parse_run_config(doc, path.parent_path());
}

json run_config_to_json(const RunConfig& cfg) {
  const EncoderConfig& e = cfg.pipeline.encoder;
  const SIMConfig& m = cfg.pipeline.sim;
  const CSConfig& c = cfg.pipeline.cs;
  json j;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["encoder"] = {{"num_layers", e.num_layers},
                  {"embed_dim", e.embed_dim},
                  {"num_heads", e.num_heads},
                  {"patch_size", e.patch_size},
                  {"seed", e.seed}};
  j["sim"] = {{"selected_layers", m.selected_layers},
              {"sigmas", m.sigmas},
              {"gamma", m.gamma},
              {"heads", m.heads},
              {"output_gain", m.output_gain},
              {"seed", m.seed},
              {"conv_weights",
               {{m.conv.weight(0, 0), m.conv.weight(0, 1)},
                {m.conv.weight(1, 0), m.conv.weight(1, 1)}}}};
  j["cs"] = {{"idx", c.idx},
             {"alpha", c.alpha},
             {"bg_threshold", c.bg_threshold},
             {"sub_image_size", c.sub_image_size},
             {"fill_value", c.fill_value},
             {"seed", c.seed}};
  j["ensemble"] = {{"lambda", cfg.pipeline.ensemble.lambda},
                   {"temperature", cfg.pipeline.ensemble.temperature}};
  j["proposals"] = {{"mask_flip_rate", cfg.pipeline.proposals.mask_flip_rate},
                    {"embed_noise", cfg.pipeline.proposals.embed_noise},
                    {"parent_swap_rate", cfg.pipeline.proposals.parent_swap_rate}};
  j["scene"] = {{"image_count", cfg.scene.image_count},
                {"canvas", cfg.scene.canvas},
                {"num_classes", cfg.scene.num_classes},
                {"min_shapes", cfg.scene.min_shapes},
                {"max_shapes", cfg.scene.max_shapes},
                {"seed", cfg.scene.seed}};
  j["metrics"] = {{"gt_only", cfg.gt_only}};
  j["text_bank"] = {{"seed", cfg.text_bank_seed}, {"noise_scale", cfg.text_bank_noise}};
  j["classes"] = cfg.class_names;
  j["association"] = mapping_to_json(cfg.association);
  return j;
}

Pipeline make_pipeline(const RunConfig& config) {
  config.validate();
  AssociationMatrix assoc = AssociationMatrix::from_mapping(config.association,
                                                            config.scene.num_classes);
  TextBank bank = build_text_bank(config.class_names, assoc, config.pipeline.encoder.embed_dim,
                                  config.text_bank_seed, config.text_bank_noise);
  return Pipeline(config.pipeline, std::move(bank), std::move(assoc));
}

void generate_dataset(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "gt");
  for (int i = 0; i < config.scene.image_count; ++i) {
    const Scene scene = generate_scene(config.scene, i);
    write_png_rgb8(out_dir / "images" / image_name(i), scene.image);
    write_png_gray16(out_dir / "gt" / image_name(i), scene.labels);
  }
}

RunSummary run_eval(const RunConfig& config, const fs::path& out_dir, int workers) {
  const Pipeline pipeline = make_pipeline(config);
  const int n = config.scene.image_count;
  const int threads = std::max(1, std::min(workers > 0 ? workers : config.workers, std::max(n, 1)));
  fs::create_directories(out_dir / "pred");
  fs::create_directories(out_dir / "gt");

  struct ImageResult {
    ConfusionCounts counts;
    json proposals;
  };
  std::vector<std::optional<ImageResult>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        const Scene scene = generate_scene(config.scene, i);
        const PipelineResult r =
            pipeline.run(scene.image, scene.labels, derive_seed(config.seed, {static_cast<std::uint64_t>(i)}));
        write_png_gray16(out_dir / "pred" / image_name(i), r.labels);
        write_png_gray16(out_dir / "gt" / image_name(i), scene.labels);
        results[i] = ImageResult{accumulate_confusion(r.labels, scene.labels, config.scene.num_classes),
                                 records_to_json(r.records)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunSummary summary;
  summary.counts = ConfusionCounts(config.scene.num_classes);
  json audit_images = json::array();
  for (int i = 0; i < n; ++i) {
    summary.counts.merge(results[i]->counts);
    audit_images.push_back({{"index", i}, {"proposals", std::move(results[i]->proposals)}});
  }
  const AssociationMatrix assoc =
      AssociationMatrix::from_mapping(config.association, config.scene.num_classes);
  summary.report = report(summary.counts, assoc, config.class_names, config.gt_only);
  summary.report_json = report_to_json(summary.report).dump(2) + "\n";

  json audit = {{"config", run_config_to_json(config)}, {"images", std::move(audit_images)}};
  write_text(out_dir / "audit.json", audit.dump(2) + "\n");
  write_text(out_dir / "report.json", summary.report_json);
  return summary;
}

RunSummary eval_directories(const fs::path& pred_dir, const fs::path& gt_dir,
                            const AssociationMatrix& assoc, int num_classes) {
  if (assoc.num_classes() != num_classes) {
    throw ConfigError("eval: association class count differs from --classes");
  }
  if (!fs::is_directory(gt_dir)) throw IoError("eval: not a directory: " + gt_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  RunSummary summary;
  summary.counts = ConfusionCounts(num_classes);
  for (const fs::path& gt_path : files) {
    const fs::path pred_path = pred_dir / gt_path.filename();
    if (!fs::exists(pred_path)) throw IoError("eval: missing prediction " + pred_path.string());
    summary.counts.merge(
        accumulate_confusion(read_png_labels(pred_path), read_png_labels(gt_path), num_classes));
  }
  summary.report = report(summary.counts, assoc);
  summary.report_json = report_to_json(summary.report).dump(2) + "\n";
  return summary;
}

std::string kernel_to_csv(const FrequencyKernel& kernel) {
  std::string out;
  char buf[32];
  for (int u = 0; u < kernel.h; ++u) {
    for (int v = 0; v < kernel.w; ++v) {
      std::snprintf(buf, sizeof(buf), "%.17g", kernel.at(u, v));
      if (v > 0) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace ovseg
