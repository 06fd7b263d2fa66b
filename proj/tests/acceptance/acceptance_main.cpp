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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ovseg/contextual_shift.hpp"
#include "ovseg/encoder.hpp"
#include "ovseg/harness.hpp"
#include "ovseg/metrics.hpp"
#include "ovseg/pipeline.hpp"
#include "ovseg/rng.hpp"
#include "ovseg/sim.hpp"

namespace fs = std::filesystem;
using namespace ovseg;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool ok = true;
  std::string detail;
  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

TokenGrid random_grid(int h, int w, int c, Rng& rng) {
  TokenGrid g;
  g.h = h;
  g.w = w;
  g.tokens = gaussian_matrix(h * w, c, rng, 1.0);
  return g;
}

Image random_image(int h, int w, Rng& rng) {
  Image img(h, w, 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : img.pixels) v = u(rng);
  return img;
}

bool rows_stochastic(const Mat& a, double tol, double* worst) {
  bool ok = true;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double err = std::abs(a.row(r).sum() - 1.0);
    *worst = std::max(*worst, err);
    if (err > tol || a.row(r).minCoeff() < 0.0) ok = false;
  }
  return ok;
}

Outcome kernel_shape() {
  Outcome o;
  const auto t0 = Clock::now();
  for (double sigma : {3.0, 7.0, 9.0}) {
    for (int h = 4; h <= 17; ++h) {
      for (int w = 4; w <= 17; ++w) {
        const FrequencyKernel k = make_frequency_kernel(h, w, sigma);
        const auto [cu, cv] = k.center();
        if (k.at(cu, cv) != 0.0) o.fail("centre not zero");
        for (int u = 0; u < h; ++u) {
          for (int v = 0; v < w; ++v) {
            const double g = k.at(u, v);
            if (!(g >= 0.0 && g <= 1.0)) o.fail("coefficient outside [0,1]");
            const long d2 = static_cast<long>(u - cu) * (u - cu) + static_cast<long>(v - cv) * (v - cv);
            // Every cell with a strictly smaller squared radius must not exceed this one.
            for (int a = 0; a < h; ++a) {
              for (int b = 0; b < w; ++b) {
                const long e2 = static_cast<long>(a - cu) * (a - cu) + static_cast<long>(b - cv) * (b - cv);
                if (e2 < d2 && k.at(a, b) > g) o.fail("not radially nondecreasing");
                if (e2 == d2 && k.at(a, b) != g) o.fail("not radial");
              }
            }
          }
        }
      }
    }
  }
  // The quadratic sweep above is a check only; time the construction alone.
  const auto t1 = Clock::now();
  for (double sigma : {3.0, 7.0, 9.0}) {
    for (int h = 4; h <= 17; ++h) {
      for (int w = 4; w <= 17; ++w) make_frequency_kernel(h, w, sigma);
    }
  }
  const double build = seconds_since(t1);
  if (build >= 1.0) o.fail("construction took " + std::to_string(build) + " s");
  o.detail = o.ok ? "588 kernels, build " + std::to_string(build) + " s, total " +
                        std::to_string(seconds_since(t0)) + " s"
                  : o.detail;
  return o;
}

Outcome residual_identity() {
  Outcome o;
  Rng rng = make_rng(2, {0});
  double worst = 0.0;
  std::uniform_int_distribution<int> dim(2, 16);
  std::uniform_real_distribution<double> sig(0.5, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const TokenGrid x = random_grid(dim(rng), dim(rng), 8, rng);
    const FrequencyKernel k = make_frequency_kernel(x.h, x.w, sig(rng));
    const TokenGrid y = low_frequency_enhance(x, k, SpectralConv::zeros());
    worst = std::max(worst, (y.tokens - x.tokens).cwiseAbs().maxCoeff());
  }
  std::ostringstream s;
  s << "50 inputs, max abs diff " << worst;
  if (worst >= 1e-6) o.fail(s.str());
  o.detail = s.str();
  return o;
}

Outcome fourier_correctness() {
  Outcome o;
  Rng rng = make_rng(3, {0});
  double worst_double = 0.0;
  double worst_oracle = 0.0;
  std::uniform_int_distribution<int> dim(1, 16);
  std::uniform_real_distribution<double> sig(0.5, 10.0);
  std::normal_distribution<double> wd(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const TokenGrid x = random_grid(dim(rng), dim(rng), 3, rng);
    FrequencyKernel ones = make_frequency_kernel(x.h, x.w, 1.0);
    std::fill(ones.coeffs.begin(), ones.coeffs.end(), 1.0);
    const TokenGrid twice = low_frequency_enhance(x, ones, SpectralConv::identity_bypass());
    worst_double = std::max(worst_double, (twice.tokens - 2.0 * x.tokens).cwiseAbs().maxCoeff());

    const FrequencyKernel k = make_frequency_kernel(x.h, x.w, sig(rng));
    SpectralConv conv;
    conv.weight << wd(rng), wd(rng), wd(rng), wd(rng);
    for (const SpectralConv& c : {conv, SpectralConv::identity_bypass()}) {
      const TokenGrid fast = low_frequency_enhance(x, k, c);
      const TokenGrid slow = oracle::naive_enhance(x, k.coeffs, c);
      worst_oracle = std::max(worst_oracle, (fast.tokens - slow.tokens).cwiseAbs().maxCoeff());
    }
  }
  if (worst_double >= 1e-5) o.fail("bypass doubling error " + std::to_string(worst_double));
  if (worst_oracle >= 1e-5) o.fail("oracle mismatch " + std::to_string(worst_oracle));
  std::ostringstream s;
  s << "doubling err " << worst_double << ", DFT oracle err " << worst_oracle;
  o.detail = o.ok ? s.str() : o.detail;
  return o;
}

Outcome attention_normalization() {
  Outcome o;
  double worst = 0.0;
  std::size_t rows = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng = make_rng(4, {static_cast<std::uint64_t>(trial)});
    EncoderConfig ec;
    ec.num_layers = 12;
    ec.embed_dim = 32;
    ec.num_heads = 4;
    ec.seed = static_cast<std::uint64_t>(trial);
    const ToyEncoder enc(ec);
    std::uniform_int_distribution<int> g(1, 5);
    const Image img = random_image(14 * g(rng), 14 * g(rng), rng);
    ForwardTrace trace;
    const auto layers = enc.forward(img, {}, &trace);
    for (const auto& b : trace.blocks) {
      for (const Mat& a : b.attention.weights) {
        rows += static_cast<std::size_t>(a.rows());
        if (!rows_stochastic(a, 1e-6, &worst)) o.fail("encoder attention row");
      }
    }
    SIMConfig sc;
    sc.seed = static_cast<std::uint64_t>(trial);
    sc.gamma = 0.1;
    sc.output_gain = 1.0;
    const SemanticIntegrationModule sim(sc, ec.embed_dim, ec.num_layers);
    const Mat proposals = gaussian_matrix(1 + trial % 7, ec.embed_dim, rng, 1.0);
    SemanticIntegrationModule::Trace st;
    sim.calibrate(proposals, layers, &st);
    for (const Mat& a : st.cross.weights) {
      rows += static_cast<std::size_t>(a.rows());
      if (!rows_stochastic(a, 1e-6, &worst)) o.fail("SIM cross-attention row");
    }
    for (const Mat& a : st.fusion.attention.weights) {
      rows += static_cast<std::size_t>(a.rows());
      if (!rows_stochastic(a, 1e-6, &worst)) o.fail("fused layer attention row");
    }
  }
  std::ostringstream s;
  s << rows << " rows over 20 forwards, max |sum-1| " << worst;
  o.detail = o.ok ? s.str() : o.detail;
  return o;
}

std::set<int> changed_rows(const Mat& a, const Mat& b) {
  std::set<int> out;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if ((a.row(r) - b.row(r)).cwiseAbs().maxCoeff() > 0) out.insert(static_cast<int>(r) - 1);
  }
  return out;
}

Outcome contextual_shift_checks() {
  Outcome o;
  EncoderConfig ec;
  ec.embed_dim = 32;
  ec.seed = 5;
  const ToyEncoder enc(ec);
  Rng rng = make_rng(5, {0});
  const Image image = random_image(112, 98, rng);
  Mask mask(112, 98);
  for (int y = 10; y < 70; ++y) {
    for (int x = 20; x < 60; ++x) {
      if ((y - 40) * (y - 40) + (x - 40) * (x - 40) < 400) mask.at(y, x) = 1;
    }
  }
  CSConfig cfg;
  cfg.seed = 9;
  const SubImage sub = crop_and_mask(image, mask, cfg);
  const CleanContext clean = make_clean_context(enc, image);

  // Degeneracy.
  const auto vanilla = enc.forward(sub.image);
  CSConfig none = cfg;
  none.idx.clear();
  CSConfig zero = cfg;
  zero.alpha = 0.0;
  double worst = 0.0;
  for (const CSConfig& c : {none, zero}) {
    const CSResult r = cs_forward(enc, sub, clean, c, 0);
    for (std::size_t i = 0; i < vanilla.size(); ++i) {
      worst = std::max(worst, (r.layers[i].spatial.tokens - vanilla[i].spatial.tokens).cwiseAbs().maxCoeff());
      worst = std::max(worst, (r.layers[i].cls - vanilla[i].cls).cwiseAbs().maxCoeff());
    }
  }
  if (worst != 0.0) o.fail("degenerate run differs by " + std::to_string(worst));

  // Replacement counts against exact rational rounding.
  std::uniform_int_distribution<std::uint64_t> nd(0, 400);
  std::uniform_int_distribution<std::uint64_t> ad(0, 1000);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t n = nd(rng);
    const std::uint64_t a = ad(rng);
    std::vector<int> bg(n);
    for (std::uint64_t i = 0; i < n; ++i) bg[i] = static_cast<int>(3 * i);
    const double alpha = static_cast<double>(a) / 1000.0;
    const auto plan = replacement_plan(bg, alpha, 1 + trial % 12, 77, trial);
    if (plan.size() != oracle::exact_round_half_up(a, 1000, n)) ++mismatches;
    std::set<int> uniq(plan.begin(), plan.end());
    if (uniq.size() != plan.size()) ++mismatches;
  }
  if (mismatches) o.fail(std::to_string(mismatches) + " count mismatches");

  // Paired runs: against a run that stops replacing just before layer L, the
  // input of layer L differs exactly at L's plan.
  ForwardTrace shifted;
  const CSResult r = cs_forward(enc, sub, clean, cfg, 2, &shifted);
  const std::set<int> bg(r.background.begin(), r.background.end());
  for (int layer : cfg.idx) {
    CSConfig prefix = cfg;
    prefix.idx.clear();
    for (int l : cfg.idx) {
      if (l < layer) prefix.idx.push_back(l);
    }
    ForwardTrace upto;
    cs_forward(enc, sub, clean, prefix, 2, &upto);
    const auto& plan = r.plans.at(layer);
    const std::set<int> planned(plan.begin(), plan.end());
    if (planned.empty()) o.fail("empty plan at layer " + std::to_string(layer));
    if (changed_rows(shifted.layer_inputs[layer - 1], upto.layer_inputs[layer - 1]) != planned) {
      o.fail("diff differs from plan at layer " + std::to_string(layer));
    }
    for (int j : planned) {
      if (!bg.count(j)) o.fail("replaced a foreground token");
    }
  }
  std::ostringstream s;
  s << "degenerate diff " << worst << ", 1000 count trials, " << cfg.idx.size()
    << " layers diffed, |bg|=" << r.background.size();
  o.detail = o.ok ? s.str() : o.detail;
  return o;
}

struct Instance {
  int k = 0;
  LabelMap pred;
  LabelMap gt;
  AssociationMatrix assoc;
};

std::vector<Instance> random_instances(int count) {
  std::vector<Instance> out;
  Rng rng = make_rng(6, {0});
  for (int t = 0; t < count; ++t) {
    std::uniform_int_distribution<int> kd(1, 6);
    std::uniform_int_distribution<int> sd(1, 8);
    Instance in;
    in.k = kd(rng);
    const int h = sd(rng);
    const int w = sd(rng);
    in.pred = LabelMap(h, w);
    in.gt = LabelMap(h, w);
    std::uniform_int_distribution<int> lab(0, in.k);  // k stands for ignore
    auto draw = [&] {
      const int v = lab(rng);
      return static_cast<std::uint16_t>(v == in.k ? kIgnoreLabel : v);
    };
    for (auto& v : in.pred.labels) v = draw();
    for (auto& v : in.gt.labels) v = draw();
    in.assoc = AssociationMatrix(in.k);
    std::bernoulli_distribution edge(0.35);
    for (int q = 0; q < in.k; ++q) {
      for (int r = 0; r < in.k; ++r) {
        if (q != r && edge(rng)) in.assoc.set(q, r);
      }
    }
    out.push_back(std::move(in));
  }
  return out;
}

Outcome sg_iou_oracle(const std::vector<Instance>& instances) {
  Outcome o;
  double worst = 0.0;
  for (const Instance& in : instances) {
    const ConfusionCounts c = accumulate_confusion(in.pred, in.gt, in.k);
    const MetricReport rep = report(c, in.assoc);
    double iou_sum = 0.0;
    double sg_sum = 0.0;
    int present = 0;
    for (int q = 0; q < in.k; ++q) {
      const auto rel = in.assoc.related_to(q);
      const oracle::PixelBuckets b =
          oracle::count_buckets(in.pred.labels, in.gt.labels, q, std::set<int>(rel.begin(), rel.end()));
      const auto want_iou = oracle::bucket_iou(b);
      const auto want_sg = oracle::bucket_sg_iou(b);
      const auto got_sg = sg_iou(c, in.assoc, q);
      if (want_sg.has_value() != got_sg.has_value()) {
        o.fail("definedness mismatch");
        continue;
      }
      if (want_sg) worst = std::max(worst, std::abs(*want_sg - *got_sg));
      const ClassScore& s = rep.per_class[static_cast<std::size_t>(q)];
      if (s.present != want_iou.has_value()) o.fail("present flag mismatch");
      if (want_iou) {
        worst = std::max(worst, std::abs(*want_iou - *s.iou));
        worst = std::max(worst, std::abs(*want_sg - *s.sg_iou));
        iou_sum += *want_iou;
        sg_sum += *want_sg;
        ++present;
      }
    }
    if (present > 0) {
      worst = std::max(worst, std::abs(iou_sum / present - rep.miou));
      worst = std::max(worst, std::abs(sg_sum / present - rep.msg_iou));
    }
  }
  if (worst > 1e-12) o.fail("max deviation " + std::to_string(worst));
  std::ostringstream s;
  s << instances.size() << " instances, max deviation " << worst;
  o.detail = o.ok ? s.str() : o.detail;
  return o;
}

Outcome sg_iou_bounds(const std::vector<Instance>& instances) {
  Outcome o;
  int edges = 0;
  double worst_empty = 0.0;
  for (const Instance& in : instances) {
    const ConfusionCounts c = accumulate_confusion(in.pred, in.gt, in.k);
    for (int q = 0; q < in.k; ++q) {
      edges += static_cast<int>(in.assoc.related_to(q).size());
      const double beta = balance_factor(semantic_terms(c, in.assoc, q));
      if (!(beta >= 0.0 && beta <= 1.0)) o.fail("beta outside [0,1]");
      const auto a = iou(c, q);
      const auto b = sg_iou(c, in.assoc, q);
      if (a && *b < *a) o.fail("SG-IoU below IoU");
    }
    const MetricReport plain = report(c, AssociationMatrix(in.k));
    worst_empty = std::max(worst_empty, std::abs(plain.msg_iou - plain.miou));
  }
  if (worst_empty > 1e-12) o.fail("empty association gap " + std::to_string(worst_empty));
  std::ostringstream s;
  s << instances.size() << " instances, " << edges << " relation edges, empty-assoc gap "
    << worst_empty;
  o.detail = o.ok ? s.str() : o.detail;
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ovseg_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome end_to_end() {
  Outcome o;
  RunConfig cfg = parse_run_config(nlohmann::json::object());
  cfg.scene.image_count = 4;
  cfg.pipeline.sim.gamma = 0.0;
  cfg.pipeline.sim.conv = SpectralConv::zeros();
  cfg.pipeline.ensemble.lambda = 0.0;
  cfg.pipeline.proposals = ProposalNoise{};
  const RunSummary lossless = run_eval(cfg, scratch("lossless"), 1);
  if (lossless.report.miou != 1.0) o.fail("lossless mIoU " + std::to_string(lossless.report.miou));

  RunConfig corrupt = parse_run_config(nlohmann::json::object());
  corrupt.scene.image_count = 4;
  corrupt.pipeline.proposals.parent_swap_rate = 1.0;
  const RunSummary c = run_eval(corrupt, scratch("corrupt"), 1);
  const double gap = c.report.msg_iou - c.report.miou;
  if (!(gap > 0.0)) o.fail("parent corruption gap " + std::to_string(gap));
  std::ostringstream s;
  s << "lossless mIoU " << lossless.report.miou << "; corrupted mIoU " << c.report.miou
    << " mSG-IoU " << c.report.msg_iou;
  o.detail = o.ok ? s.str() : o.detail;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
#ifndef OVSEG_CLI_PATH
  o.fail("CLI not built");
#else
  const fs::path dir = scratch("determinism");
  std::ofstream(dir / "config.json")
      << R"({"seed": 17, "scene": {"image_count": 6},
             "proposals": {"mask_flip_rate": 0.05, "embed_noise": 0.05, "parent_swap_rate": 0.3}})";
  std::vector<std::string> reports;
  const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 4}, {"d", 4}};
  for (const auto& [name, workers] : runs) {
    const std::string cmd = std::string(OVSEG_CLI_PATH) + " run --config " +
                            (dir / "config.json").string() + " --out " + (dir / name).string() +
                            " --workers " + std::to_string(workers) + " >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      o.fail("run exited nonzero");
      return o;
    }
    reports.push_back(slurp(dir / name / "report.json"));
  }
  for (const auto& r : reports) {
    if (r.empty() || r != reports.front()) o.fail("report bytes differ");
  }
  o.detail = o.ok ? "4 CLI runs (workers 1,1,4,4), " + std::to_string(reports.front().size()) +
                        " identical bytes"
                  : o.detail;
#endif
  return o;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  int failures = 0;
  auto emit = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    if (!o.ok) ++failures;
    std::printf("%s criterion %d (%s): %s\n", o.ok ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  emit(1, "frequency kernel", kernel_shape);
  emit(2, "residual identity", residual_identity);
  emit(3, "Fourier correctness", fourier_correctness);
  emit(4, "attention normalization", attention_normalization);
  emit(5, "contextual shift", contextual_shift_checks);
  const auto instances = random_instances(200);
  emit(6, "SG-IoU oracle", [&] { return sg_iou_oracle(instances); });
  emit(7, "SG-IoU dominance and balance", [&] { return sg_iou_bounds(instances); });
  emit(8, "end-to-end paths", end_to_end);
  emit(9, "determinism", determinism);
  emit(10, "runtime budget", [&] {
    Outcome o;
    const double s = seconds_since(t0);
    if (s >= 300.0) o.fail("acceptance took " + std::to_string(s) + " s");
    o.detail = o.ok ? "acceptance ran in " + std::to_string(s) + " s" : o.detail;
    return o;
  });
  return failures == 0 ? 0 : 1;
}
