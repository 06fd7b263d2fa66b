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

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "ovseg/contextual_shift.hpp"
#include "ovseg/encoder.hpp"
#include "ovseg/harness.hpp"
#include "ovseg/metrics.hpp"
#include "ovseg/pipeline.hpp"
#include "ovseg/scene.hpp"
#include "ovseg/sim.hpp"

namespace py = pybind11;
using namespace ovseg;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U16Array = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Image to_image(const F64Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must have shape (H, W, 3)");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(img.pixels.data(), a.data(), img.pixels.size() * sizeof(double));
  return img;
}

F64Array from_image(const Image& img) {
  F64Array a({img.height, img.width, 3});
  std::memcpy(a.mutable_data(), img.pixels.data(), img.pixels.size() * sizeof(double));
  return a;
}

Mask to_mask(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("mask must be 2-D");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  const std::uint8_t* p = a.data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = p[i] ? 1 : 0;
  return m;
}

U8Array from_mask(const Mask& m) {
  U8Array a({m.height, m.width});
  std::memcpy(a.mutable_data(), m.bits.data(), m.bits.size());
  return a;
}

LabelMap to_labels(const U16Array& a) {
  if (a.ndim() != 2) throw ShapeError("label map must be 2-D");
  LabelMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(m.labels.data(), a.data(), m.labels.size() * sizeof(std::uint16_t));
  return m;
}

U16Array from_labels(const LabelMap& m) {
  U16Array a({m.height, m.width});
  std::memcpy(a.mutable_data(), m.labels.data(), m.labels.size() * sizeof(std::uint16_t));
  return a;
}

TokenGrid to_grid(const Mat& tokens, int h, int w) {
  if (tokens.rows() != static_cast<Eigen::Index>(h) * w) {
    throw ShapeError("tokens must have h * w rows");
  }
  return TokenGrid{h, w, tokens};
}

SpectralConv to_conv(const std::optional<Eigen::Matrix2d>& weights, bool bypass) {
  SpectralConv c;
  if (weights) c.weight = *weights;
  c.bypass = bypass;
  return c;
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_python(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

AssociationMatrix to_assoc(const std::map<int, std::vector<int>>& mapping, int k) {
  return AssociationMatrix::from_mapping(mapping, k);
}

}  // namespace

PYBIND11_MODULE(_ovseg, m) {
  m.doc() = "Open-vocabulary segmentation toolkit: toy encoder, calibration, and SG-IoU metrics.";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<EmptyProposalError>(m, "EmptyProposalError", PyExc_ValueError);
  py::register_exception<DegenerateEmbeddingError>(m, "DegenerateEmbeddingError",
                                                   PyExc_ValueError);

  m.attr("IGNORE_LABEL") = kIgnoreLabel;

  // Frequency filtering.
  m.def(
      "frequency_kernel",
      [](int h, int w, double sigma) {
        const FrequencyKernel k = make_frequency_kernel(h, w, sigma);
        F64Array a({h, w});
        std::memcpy(a.mutable_data(), k.coeffs.data(), k.coeffs.size() * sizeof(double));
        return a;
      },
      py::arg("h"), py::arg("w"), py::arg("sigma"));
  m.def(
      "low_frequency_enhance",
      [](const Mat& tokens, int h, int w, double sigma,
         std::optional<Eigen::Matrix2d> conv_weights, bool bypass) {
        return low_frequency_enhance(to_grid(tokens, h, w), make_frequency_kernel(h, w, sigma),
                                     to_conv(conv_weights, bypass))
            .tokens;
      },
      py::arg("tokens"), py::arg("h"), py::arg("w"), py::arg("sigma"),
      py::arg("conv_weights") = py::none(), py::arg("bypass") = false,
      "Enhance an (h*w, C) token grid; returns an array of the same shape.");

  // Encoder.
  py::class_<ToyEncoder>(m, "ToyEncoder")
      .def(py::init([](int num_layers, int embed_dim, int num_heads, int patch_size,
                       std::uint64_t seed) {
             return ToyEncoder(EncoderConfig{num_layers, embed_dim, num_heads, patch_size, seed});
           }),
           py::arg("num_layers") = 12, py::arg("embed_dim") = 64, py::arg("num_heads") = 4,
           py::arg("patch_size") = 14, py::arg("seed") = 0)
      .def_property_readonly("num_layers", [](const ToyEncoder& e) { return e.config().num_layers; })
      .def_property_readonly("embed_dim", [](const ToyEncoder& e) { return e.config().embed_dim; })
      .def_property_readonly("patch_size", [](const ToyEncoder& e) { return e.config().patch_size; })
      .def(
          "forward",
          [](const ToyEncoder& e, const F64Array& image) {
            py::list out;
            for (const LayerFeatures& f : e.forward(to_image(image))) {
              py::dict d;
              d["layer"] = f.layer_index;
              d["grid"] = py::make_tuple(f.spatial.h, f.spatial.w);
              d["spatial"] = f.spatial.tokens;
              d["cls"] = Vec(f.cls.transpose());
              out.append(d);
            }
            return out;
          },
          py::arg("image"),
          "Per-layer features: list of dicts with 'layer', 'grid', 'spatial' (HW x C), 'cls'.")
      .def(
          "attention_weights",
          [](const ToyEncoder& e, const F64Array& image) {
            ForwardTrace trace;
            e.forward(to_image(image), {}, &trace);
            std::vector<std::vector<Mat>> out;
            for (const auto& b : trace.blocks) out.push_back(b.attention.weights);
            return out;
          },
          py::arg("image"), "Attention weights indexed [layer][head].");

  // Semantic integration.
  m.def(
      "calibrate",
      [](const ToyEncoder& e, const Mat& proposals, const F64Array& image,
         std::vector<int> selected_layers, std::vector<double> sigmas, double gamma, int heads,
         double output_gain, std::uint64_t seed) {
        SIMConfig cfg;
        cfg.selected_layers = std::move(selected_layers);
        cfg.sigmas = std::move(sigmas);
        cfg.gamma = gamma;
        cfg.heads = heads;
        cfg.output_gain = output_gain;
        cfg.seed = seed;
        const SemanticIntegrationModule sim(cfg, e.config().embed_dim, e.config().num_layers);
        const auto layers = e.forward(to_image(image));
        return sim.calibrate(proposals, layers);
      },
      py::arg("encoder"), py::arg("proposals"), py::arg("image"),
      py::arg("selected_layers") = std::vector<int>{6, 9, 12},
      py::arg("sigmas") = std::vector<double>{9.0, 7.0, 3.0}, py::arg("gamma") = 0.1,
      py::arg("heads") = 4, py::arg("output_gain") = 0.0, py::arg("seed") = 0);

  // Contextual shift.
  m.def(
      "crop_and_mask",
      [](const F64Array& image, const U8Array& mask, int size, double fill) {
        CSConfig cfg;
        cfg.sub_image_size = size;
        cfg.fill_value = fill;
        const SubImage s = crop_and_mask(to_image(image), to_mask(mask), cfg);
        return py::make_tuple(from_image(s.image), from_mask(s.mask),
                              py::make_tuple(s.bbox.y0, s.bbox.x0, s.bbox.y1, s.bbox.x1));
      },
      py::arg("image"), py::arg("mask"), py::arg("size") = 56, py::arg("fill_value") = 0.0,
      "Returns (sub_image, sub_mask, (y0, x0, y1, x1)).");
  m.def(
      "background_patches",
      [](const U8Array& mask, int patch_size, double tau) {
        return background_patches(to_mask(mask), patch_size, tau);
      },
      py::arg("mask"), py::arg("patch_size"), py::arg("tau") = 0.5);
  m.def("replacement_count", &replacement_count, py::arg("n"), py::arg("alpha"));
  m.def(
      "replacement_plan",
      [](const std::vector<int>& bg, double alpha, int layer, std::uint64_t seed, int proposal) {
        return replacement_plan(bg, alpha, layer, seed, proposal);
      },
      py::arg("background"), py::arg("alpha"), py::arg("layer"), py::arg("seed"),
      py::arg("proposal_id"));
  m.def(
      "cs_embedding",
      [](const ToyEncoder& e, const F64Array& image, const U8Array& mask,
         std::vector<int> idx, double alpha, std::uint64_t seed, int proposal_id) {
        CSConfig cfg;
        cfg.idx = std::move(idx);
        cfg.alpha = alpha;
        cfg.seed = seed;
        const Image img = to_image(image);
        const SubImage sub = crop_and_mask(img, to_mask(mask), cfg);
        const CSResult r = cs_forward(e, sub, make_clean_context(e, img), cfg, proposal_id);
        return py::make_tuple(Vec(r.embedding.transpose()), r.plans);
      },
      py::arg("encoder"), py::arg("image"), py::arg("mask"),
      py::arg("idx") = std::vector<int>{1, 3, 5, 7, 9}, py::arg("alpha") = 0.3,
      py::arg("seed") = 0, py::arg("proposal_id") = 0,
      "Final [CLS] of a shifted sub-image forward and the per-layer replacement plans.");

  // Classification.
  m.def(
      "text_bank",
      [](const std::vector<std::string>& names, const std::map<int, std::vector<int>>& hierarchy,
         int dim, std::uint64_t seed, double noise_scale) {
        return build_text_bank(names, to_assoc(hierarchy, static_cast<int>(names.size())), dim,
                               seed, noise_scale)
            .vectors;
      },
      py::arg("names"), py::arg("hierarchy") = std::map<int, std::vector<int>>{},
      py::arg("dim") = 64, py::arg("seed") = 0, py::arg("noise_scale") = 0.3);
  m.def(
      "classify_embedding",
      [](const Vec& embedding, const Mat& text, double temperature) {
        TextBank bank;
        bank.vectors = text;
        return classify_embedding(embedding.transpose(), bank, temperature);
      },
      py::arg("embedding"), py::arg("text_vectors"), py::arg("temperature") = 0.01);
  m.def("ensemble_scores", &ensemble_scores, py::arg("model_probs"), py::arg("clip_probs"),
        py::arg("lambda_") = 0.7);
  m.def(
      "assign_labels",
      [](const std::vector<U8Array>& masks, const Mat& probs) {
        std::vector<Mask> ms;
        for (const auto& a : masks) ms.push_back(to_mask(a));
        return from_labels(assign_labels(ms, probs));
      },
      py::arg("masks"), py::arg("probs"));

  // Metrics.
  m.def(
      "confusion_matrix",
      [](const U16Array& pred, const U16Array& gt, int k) {
        const ConfusionCounts c = accumulate_confusion(to_labels(pred), to_labels(gt), k);
        py::array_t<std::uint64_t> a({k, k});
        std::memcpy(a.mutable_data(), c.counts.data(), c.counts.size() * sizeof(std::uint64_t));
        return a;
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
      "Counts indexed [pred, gt] over pixels where both labels are valid.");
  m.def(
      "evaluate",
      [](const U16Array& pred, const U16Array& gt, int k,
         const std::map<int, std::vector<int>>& association,
         const std::vector<std::string>& names, bool gt_only) {
        const ConfusionCounts c = accumulate_confusion(to_labels(pred), to_labels(gt), k);
        return to_python(report_to_json(report(c, to_assoc(association, k), names, gt_only)));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
      py::arg("association") = std::map<int, std::vector<int>>{},
      py::arg("names") = std::vector<std::string>{}, py::arg("gt_only") = false,
      "Report dict with per_class, miou, msg_iou and ignored_pixels.");
  m.def(
      "balance_factor",
      [](const U16Array& pred, const U16Array& gt, int k,
         const std::map<int, std::vector<int>>& association, int q) {
        const ConfusionCounts c = accumulate_confusion(to_labels(pred), to_labels(gt), k);
        return balance_factor(semantic_terms(c, to_assoc(association, k), q));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"), py::arg("association"),
      py::arg("q"));

  // Harness.
  m.def("default_config", [] { return to_python(run_config_to_json(parse_run_config(nlohmann::json::object()))); });
  m.def(
      "generate_scene",
      [](const py::object& config, int index) {
        const RunConfig cfg = parse_run_config(from_python(config));
        const Scene s = generate_scene(cfg.scene, index);
        return py::make_tuple(from_image(s.image), from_labels(s.labels));
      },
      py::arg("config") = py::none(), py::arg("index") = 0);
  m.def(
      "run",
      [](const py::object& config, const std::filesystem::path& out, int workers) {
        const RunConfig cfg = parse_run_config(from_python(config));
        RunSummary s;
        {
          py::gil_scoped_release release;
          s = run_eval(cfg, out, workers);
        }
        return to_python(nlohmann::json::parse(s.report_json));
      },
      py::arg("config") = py::none(), py::arg("out_dir"), py::arg("workers") = 1,
      "Generate scenes, run the pipeline, write predictions and report.json; returns the report.");
  m.def(
      "kernel_csv",
      [](int h, int w, double sigma) { return kernel_to_csv(make_frequency_kernel(h, w, sigma)); },
      py::arg("h"), py::arg("w"), py::arg("sigma"));
}
