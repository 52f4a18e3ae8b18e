/*
 * Copyright 2026 The LCRReg Authors.
 *
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

#include "lcrreg/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

#include "lcrreg/error.hpp"
#include "lcrreg/pcbm.hpp"
#include "lcrreg/random.hpp"

namespace lcrreg {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string test_split_name(const std::string& s) {
  if (std::find(kReportSplits.begin(), kReportSplits.end(), s) == kReportSplits.end()) {
    throw ConfigError("unknown report split '" + s + "'");
  }
  return "test_" + s;
}

const SplitReport& EvalReport::at(const std::string& split) const {
  for (const auto& s : splits) {
    if (s.split == split) return s;
  }
  throw ContractError("report has no split '" + split + "'");
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json::object();
  for (const auto& s : r.splits) {
    nlohmann::json recalls = nlohmann::json::array();
    for (double v : s.recalls) recalls.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    j[s.split] = {{"ba", s.ba}, {"recalls", recalls}, {"n", s.n}};
  }
}

SplitReport split_report(const std::string& split, const std::vector<int>& predictions, const SplitData& data,
                         std::size_t classes) {
  std::vector<int> labels;
  for (const auto& r : data.records) labels.push_back(r.label);
  const auto ba = balanced_accuracy_report(predictions, labels, classes);
  return {split, ba.value, ba.recalls, labels.size()};
}

EvalReport evaluate(Network& net, const Dataset& data, const std::vector<std::string>& splits) {
  EvalReport r;
  const auto classes = static_cast<std::size_t>(data.task.classes);
  for (const auto& s : splits) {
    const auto& split = data.split(test_split_name(s));
    r.splits.push_back(split_report(s, predict(net, split.images), split, classes));
  }
  return r;
}

Tensor input_gradient_saliency(Network& net, const Image& image, int cls) {
  auto& g = net.graph();
  const std::size_t classes = net.spec().num_classes;
  if (cls < 0 || static_cast<std::size_t>(cls) >= classes) throw ContractError("class out of range");
  ad::NodeId onehot = g.find("saliency.onehot");
  ad::NodeId selected = g.find("saliency.selected");
  if (selected == Network::kNone) {
    onehot = g.constant(Tensor(Shape{1, classes}), "saliency.onehot");
    selected = g.sum(g.mul(net.logits(), onehot));
    g.set_name(selected, "saliency.selected");
  }
  Tensor oh(Shape{1, classes});
  oh[static_cast<std::size_t>(cls)] = 1.0;
  g.set_constant(onehot, oh);
  g.set_requires_grad(net.images(), true);
  const Image* ptr = &image;
  g.forward({{"images", images_to_tensor(std::span<const Image* const>(&ptr, 1))}}, std::vector<ad::NodeId>{selected});
  g.backward(selected);
  const Tensor grad = g.grad(net.images());
  g.set_requires_grad(net.images(), false);
  const std::size_t h = image.height(), w = image.width();
  Tensor out(Shape{h, w});
  if (grad.size() != 3 * h * w) return out;  // nothing flowed
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < h * w; ++p) out[p] = std::max(out[p], std::abs(grad[c * h * w + p]));
  }
  return out;
}

Rgb viridis(double t) {
  static constexpr std::array<std::array<int, 3>, 17> kStops{{{68, 1, 84},    {72, 24, 106},  {71, 45, 123},
                                                              {66, 64, 134},  {59, 82, 139},  {51, 99, 141},
                                                              {44, 114, 142}, {38, 130, 142}, {33, 145, 140},
                                                              {31, 160, 136}, {40, 174, 128}, {63, 188, 115},
                                                              {94, 201, 98},  {132, 212, 75}, {173, 220, 48},
                                                              {216, 226, 25}, {253, 231, 37}}};
  t = std::clamp(std::isnan(t) ? 0.0 : t, 0.0, 1.0) * 16.0;
  const auto i = std::min<std::size_t>(15, static_cast<std::size_t>(t));
  const double f = t - static_cast<double>(i);
  auto mix = [&](int k) {
    return static_cast<std::uint8_t>(std::lround(kStops[i][k] + f * (kStops[i + 1][k] - kStops[i][k])));
  };
  return {mix(0), mix(1), mix(2)};
}

Image saliency_overlay(const Image& image, const Tensor& sal) {
  if (sal.rank() != 2 || sal.dim(0) != image.height() || sal.dim(1) != image.width()) {
    throw ShapeError("saliency extents differ from the image");
  }
  const auto [lo, hi] = std::minmax_element(sal.values().begin(), sal.values().end());
  const double range = *hi - *lo;
  Image out(image.width(), image.height());
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      const double v = range > 0 ? (sal[y * image.width() + x] - *lo) / range : 0.0;
      const Rgb c = viridis(v), p = image.at(x, y);
      auto blend = [](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>((static_cast<int>(a) + static_cast<int>(b) + 1) / 2);
      };
      out.set(x, y, {blend(c.r, p.r), blend(c.g, p.g), blend(c.b, p.b)});
    }
  }
  return out;
}

double marker_saliency_fraction(const Tensor& sal, const SampleRecord& record) {
  const std::size_t h = sal.dim(0), w = sal.dim(1);
  double inside = 0.0, total = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = sal[y * w + x];
      total += v;
      for (const auto& e : record.elements) {
        if (e.texture == Texture::kStripes && element_covers(e, static_cast<int>(x), static_cast<int>(y))) {
          inside += v;
          break;
        }
      }
    }
  }
  return total > 0 ? inside / total : 0.0;
}

void SuiteConfig::validate() const {
  if (seeds.empty()) throw ConfigError("suite needs at least one seed");
  if (p_sc.empty()) throw ConfigError("suite needs at least one p_sc value");
  for (double p : p_sc) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("p_sc must lie in [0, 1]");
  }
  if (methods.empty()) throw ConfigError("suite needs at least one method");
  for (const auto& m : methods) {
    if (m != "pcbm-h") parse_method(m);
  }
  test_split_name(primary_split);
  if (workers == 0) throw ConfigError("workers must be positive");
}

void to_json(nlohmann::json& j, const SuiteConfig& c) {
  j = {{"task", to_string(c.task)},
       {"marker", to_string(c.marker)},
       {"p_sc", c.p_sc},
       {"seeds", c.seeds},
       {"counts", {{"train", c.counts.train}, {"val", c.counts.val}, {"test", c.counts.test}}},
       {"bank", {{"count", c.bank.count}, {"n", c.bank.n}, {"texture", to_string(c.bank.texture)}}},
       {"methods", c.methods},
       {"train", c.train},
       {"primary_split", c.primary_split},
       {"workers", c.workers}};
}

void from_json(const nlohmann::json& j, SuiteConfig& c) {
  SuiteConfig d;
  c.task = parse_task(j.value("task", to_string(d.task)));
  c.marker = parse_marker(j.value("marker", to_string(d.marker)));
  c.p_sc = j.value("p_sc", d.p_sc);
  if (j.contains("seeds")) {
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    c.seeds.clear();
    const auto n = j.value("seed_count", d.seeds.size());
    const auto first = j.value("first_seed", std::uint64_t{0});
    for (std::size_t i = 0; i < n; ++i) c.seeds.push_back(first + i);
  }
  if (j.contains("counts")) {
    const auto& k = j.at("counts");
    c.counts.train = k.value("train", d.counts.train);
    c.counts.val = k.value("val", d.counts.val);
    c.counts.test = k.value("test", d.counts.test);
  }
  if (j.contains("bank")) {
    const auto& b = j.at("bank");
    c.bank.count = b.value("count", d.bank.count);
    c.bank.n = b.value("n", d.bank.n);
    c.bank.texture = parse_texture_policy(b.value("texture", to_string(d.bank.texture)));
  }
  c.methods = j.value("methods", d.methods);
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  c.primary_split = j.value("primary_split", d.primary_split);
  c.workers = j.value("workers", d.workers);
}

bool SuiteResult::all_ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.ok; });
}

std::vector<double> SuiteResult::scores(const std::string& method, double p_sc, const std::string& split) const {
  std::vector<double> out;
  for (const auto& r : runs) {
    if (r.method == method && r.p_sc == p_sc) out.push_back(r.ok ? r.report.at(split).ba : kNaN);
  }
  return out;
}

Dataset suite_dataset(const SuiteConfig& suite, double p_sc, std::uint64_t seed) {
  SpuriousSpec sp;
  sp.marker = suite.marker;
  sp.p_sc = p_sc;
  sp.mode = SpuriousMode::kTrainCorrelated;
  return generate_dataset(TaskSpec::make(suite.task), sp, suite.counts, derive_seed(seed, {hash_name("data")}));
}

std::vector<ConceptBank> suite_banks(const SuiteConfig& suite, std::uint64_t seed) {
  const TaskSpec task = TaskSpec::make(suite.task);
  const auto names = resolve_concepts(suite.train, task);
  const std::uint64_t s = derive_seed(seed, {hash_name("bank")});
  std::vector<ConceptBank> banks;
  for (const auto& name : names) {
    const ShapeKind shape = parse_shape(name);
    if (needs_scores(suite.train.lcr)) {
      banks.push_back(make_elements_continuous_bank(shape, suite.bank.count, suite.bank.n, s, suite.bank.texture));
    } else {
      banks.push_back(make_elements_bank(shape, suite.bank.count, suite.bank.n, s, suite.bank.texture));
    }
  }
  return banks;
}

namespace {

struct Cell {
  double p_sc;
  std::uint64_t seed;
};

std::vector<RunRecord> run_cell(const SuiteConfig& suite, const Cell& cell) {
  std::vector<RunRecord> out;
  Dataset data;
  std::vector<ConceptBank> banks;
  std::optional<std::string> setup_error;
  try {
    data = suite_dataset(suite, cell.p_sc, cell.seed);
    const bool need_banks = std::any_of(suite.methods.begin(), suite.methods.end(),
                                        [](const std::string& m) { return m == "lcrreg" || m == "pcbm-h"; });
    if (need_banks) banks = suite_banks(suite, cell.seed);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  std::optional<Network> vanilla;
  for (const auto& m : suite.methods) {
    RunRecord rec;
    rec.method = m;
    rec.p_sc = cell.p_sc;
    rec.seed = cell.seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (setup_error) throw std::runtime_error(*setup_error);
      TrainConfig cfg = suite.train;
      cfg.seed = cell.seed;
      cfg.model.num_classes = static_cast<std::size_t>(data.task.classes);
      cfg.checkpoint.clear();
      cfg.eval_val_every = 0;
      if (m == "pcbm-h") {
        if (!vanilla) {
          cfg.method = Method::kVanilla;
          vanilla.emplace(run_training(cfg, data, {}).net);
        }
        const auto& train = data.split("train");
        std::vector<int> labels;
        for (const auto& r : train.records) labels.push_back(r.label);
        PcbmOptions popts;
        popts.cav = cfg.lcr_options;
        const auto head = fit_pcbm_h(*vanilla, banks, train.images, labels, static_cast<std::size_t>(data.task.classes), popts);
        for (const auto& s : kReportSplits) {
          const auto& split = data.split(test_split_name(s));
          rec.report.splits.push_back(split_report(s, pcbm_predict(head, final_features(*vanilla, split.images)), split,
                                                   static_cast<std::size_t>(data.task.classes)));
        }
      } else {
        cfg.method = parse_method(m);
        auto result = run_training(cfg, data, banks);
        rec.report = evaluate(result.net, data);
        if (cfg.method == Method::kVanilla) vanilla.emplace(std::move(result.net));
      }
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

SuiteResult run_experiment_suite(const SuiteConfig& suite) {
  suite.validate();
  std::vector<Cell> cells;
  for (double p : suite.p_sc) {
    for (auto s : suite.seeds) cells.push_back({p, s});
  }
  std::vector<std::vector<RunRecord>> results(cells.size());
  const std::size_t workers = std::min(suite.workers, cells.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(suite, cells[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        omp_set_num_threads(1);
        for (std::size_t i = next++; i < cells.size(); i = next++) results[i] = run_cell(suite, cells[i]);
      });
    }
    for (auto& t : pool) t.join();
  }
  SuiteResult out;
  for (auto& r : results) {
    for (auto& rec : r) out.runs.push_back(std::move(rec));
  }
  return out;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string p_label(double p) {
  std::ostringstream os;
  os << p;
  return os.str();
}

}  // namespace

void write_summary_csv(const SuiteConfig& suite, const SuiteResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string& split = suite.primary_split;
  out << "method,p_sc,seed,split,ba,t,t_p,wilcoxon_p\n";
  for (double p : suite.p_sc) {
    for (const auto& m : suite.methods) {
      for (const auto& r : result.runs) {
        if (r.method != m || r.p_sc != p) continue;
        out << m << ',' << p_label(p) << ',' << r.seed << ',' << split << ',' << num(r.ok ? r.report.at(split).ba : kNaN)
            << ",,,\n";
      }
    }
    for (const auto& m : suite.methods) {
      std::vector<double> ok;
      for (double v : result.scores(m, p, split)) {
        if (!std::isnan(v)) ok.push_back(v);
      }
      out << m << ',' << p_label(p) << ",mean," << split << ',' << num(ok.empty() ? kNaN : mean(ok)) << ",,,\n";
      out << m << ',' << p_label(p) << ",std," << split << ',' << num(ok.size() < 2 ? kNaN : stddev(ok)) << ",,,\n";
    }
    const bool has_vanilla = std::find(suite.methods.begin(), suite.methods.end(), "vanilla") != suite.methods.end();
    if (!has_vanilla) continue;
    const auto base = result.scores("vanilla", p, split);
    for (const auto& m : suite.methods) {
      if (m == "vanilla") continue;
      const auto other = result.scores(m, p, split);
      std::vector<double> a, b;
      for (std::size_t i = 0; i < other.size() && i < base.size(); ++i) {
        if (!std::isnan(other[i]) && !std::isnan(base[i])) {
          a.push_back(other[i]);
          b.push_back(base[i]);
        }
      }
      out << m << ',' << p_label(p) << ",test," << split << ',';
      if (a.size() >= 5) {
        const auto t = paired_tests(a, b);
        out << num(t.mean_difference) << ',' << num(t.t) << ',' << num(t.t_p) << ',' << num(t.wilcoxon_p) << '\n';
      } else {
        out << "nan,nan,nan,nan\n";
      }
    }
  }
}

void write_runs_csv(const SuiteResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,p_sc,seed,split,ba,n,status\n";
  for (const auto& r : result.runs) {
    if (!r.ok) {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << r.method << ',' << p_label(r.p_sc) << ',' << r.seed << ",,nan,0,failed: " << msg << '\n';
      continue;
    }
    for (const auto& s : r.report.splits) {
      out << r.method << ',' << p_label(r.p_sc) << ',' << r.seed << ',' << s.split << ',' << num(s.ba) << ',' << s.n
          << ",ok\n";
    }
  }
}

}  // namespace lcrreg
