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

// Command-line front end. Every subcommand reads one JSON config.

#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "lcrreg/concept_bank.hpp"
#include "lcrreg/elements.hpp"
#include "lcrreg/error.hpp"
#include "lcrreg/eval.hpp"
#include "lcrreg/pcbm.hpp"
#include "lcrreg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lcrreg;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kRuntime = 2, kPartial = 3 };

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> threads;
};

json read_config(const Globals& g) {
  if (g.config.empty()) return json::object();
  std::ifstream in(g.config);
  if (!in) throw ConfigError("cannot open config " + g.config);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(g.config + ": " + e.what());
  }
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out);
  return g.out;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

// {"task", "marker", "p_sc", "mode", "counts": {...}, "canvas"}
int gen_elements(const Globals& g) {
  const json c = read_config(g);
  const TaskSpec task = TaskSpec::make(parse_task(c.value("task", "binary-1concept")));
  SpuriousSpec sp;
  sp.marker = parse_marker(c.value("marker", "diagonal-stripes"));
  sp.p_sc = c.value("p_sc", 1.0);
  sp.mode = parse_spurious_mode(c.value("mode", "train-correlated"));
  SplitCounts counts;
  if (c.contains("counts")) {
    counts.train = c["counts"].value("train", counts.train);
    counts.val = c["counts"].value("val", counts.val);
    counts.test = c["counts"].value("test", counts.test);
  }
  const auto seed = g.seed.value_or(c.value("seed", std::uint64_t{0}));
  const Dataset d = generate_dataset(task, sp, counts, seed, c.value("canvas", kCanvasSide));
  write_dataset(d, out_dir(g));
  std::cout << "wrote " << to_string(task.kind) << " dataset to " << g.out << '\n';
  return kOk;
}

// {"concepts": ["square"], "count", "n", "texture", "continuous", "n_max"}
int gen_concepts(const Globals& g) {
  const json c = read_config(g);
  std::vector<std::string> names = c.value("concepts", std::vector<std::string>{});
  if (names.empty() && c.contains("task")) {
    for (auto s : TaskSpec::make(parse_task(c["task"].get<std::string>())).targets) names.push_back(to_string(s));
  }
  if (names.empty()) throw ConfigError("gen-concepts needs \"concepts\" or \"task\"");
  const auto seed = g.seed.value_or(c.value("seed", std::uint64_t{0}));
  const auto count = c.value("count", std::size_t{128});
  const auto texture = parse_texture_policy(c.value("texture", "mixed"));
  const bool continuous = c.value("continuous", false);
  const auto root = out_dir(g);
  for (const auto& name : names) {
    const ShapeKind shape = parse_shape(name);
    const ConceptBank bank = continuous
                                 ? make_elements_continuous_bank(shape, count, c.value("n_max", 5), seed, texture)
                                 : make_elements_bank(shape, count, c.value("n", 5), seed, texture);
    write_bank(bank, root);
    std::cout << "wrote concept bank " << name << " (" << bank.size() << " samples)\n";
  }
  return kOk;
}

int train(const Globals& g) {
  TrainConfig cfg = read_config(g).get<TrainConfig>();
  if (g.seed) cfg.seed = *g.seed;
  const auto dir = out_dir(g);
  if (cfg.checkpoint.empty()) cfg.checkpoint = dir / "model.ckpt";
  const auto result = run_training(cfg);
  write_history_csv(result.history, dir / "history.csv");
  write_json(dir / "config.json", cfg);
  if (!result.lcrs.empty()) {
    for (const auto& tap : result.lcrs) save_lcrs(tap.lcrs, dir / ("lcrs_" + tap.layer));
  }
  const auto& last = result.history.epochs.back();
  std::cout << "trained " << cfg.epochs << " epochs in " << result.history.seconds << " s; val BA " << last.val_ba
            << '\n';
  return kOk;
}

// {"checkpoint", "dataset", "splits", "pcbm"}
int eval(const Globals& g) {
  const json c = read_config(g);
  if (!c.contains("checkpoint") || !c.contains("dataset")) throw ConfigError("eval needs checkpoint and dataset");
  Network net = load_checkpoint(c["checkpoint"].get<std::string>());
  const Dataset data = load_dataset(c["dataset"].get<std::string>());
  const auto splits = c.value("splits", kReportSplits);
  EvalReport report;
  if (c.contains("pcbm")) {
    const PcbmHead head = load_pcbm(c["pcbm"].get<std::string>());
    for (const auto& s : splits) {
      const auto& split = data.split(test_split_name(s));
      report.splits.push_back(split_report(s, pcbm_predict(head, final_features(net, split.images)), split,
                                           static_cast<std::size_t>(data.task.classes)));
    }
  } else {
    report = evaluate(net, data, splits);
  }
  const json j = report;
  write_json(out_dir(g) / "report.json", j);
  for (const auto& s : report.splits) std::cout << s.split << " BA " << s.ba << " (n=" << s.n << ")\n";
  return kOk;
}

// {"checkpoint", "dataset", "split", "indices", "class"}
int saliency(const Globals& g) {
  const json c = read_config(g);
  if (!c.contains("checkpoint") || !c.contains("dataset")) throw ConfigError("saliency needs checkpoint and dataset");
  Network net = load_checkpoint(c["checkpoint"].get<std::string>());
  const Dataset data = load_dataset(c["dataset"].get<std::string>());
  const auto& split = data.split(c.value("split", "test_reversed"));
  auto indices = c.value("indices", std::vector<std::size_t>{});
  if (indices.empty()) {
    for (std::size_t i = 0; i < std::min<std::size_t>(8, split.images.size()); ++i) indices.push_back(i);
  }
  const auto dir = out_dir(g);
  std::ofstream csv(dir / "saliency.csv");
  csv << "index,label,class,marker_fraction\n";
  for (auto i : indices) {
    if (i >= split.images.size()) throw ConfigError("saliency index " + std::to_string(i) + " out of range");
    const int cls = c.value("class", split.records[i].label);
    const Tensor s = input_gradient_saliency(net, split.images[i], cls);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.png", i);
    write_png(saliency_overlay(split.images[i], s), dir / name);
    csv << i << ',' << split.records[i].label << ',' << cls << ',' << marker_saliency_fraction(s, split.records[i])
        << '\n';
  }
  std::cout << "wrote " << indices.size() << " heatmaps to " << g.out << '\n';
  return kOk;
}

int suite(const Globals& g) {
  SuiteConfig cfg = read_config(g).get<SuiteConfig>();
  if (g.seed) {
    for (auto& s : cfg.seeds) s += *g.seed;
  }
  if (g.threads) cfg.workers = static_cast<std::size_t>(*g.threads);
  const auto dir = out_dir(g);
  write_json(dir / "suite.json", cfg);
  const auto result = run_experiment_suite(cfg);
  write_summary_csv(cfg, result, dir / "summary.csv");
  write_runs_csv(result, dir / "runs.csv");
  for (const auto& r : result.runs) {
    if (!r.ok) std::cerr << "run failed: " << r.method << " seed " << r.seed << ": " << r.error << '\n';
  }
  std::cout << "wrote " << (dir / "summary.csv").string() << '\n';
  return result.all_ok() ? kOk : kPartial;
}

// {"base": TrainConfig, "grid": {"/json/pointer": [values]}}
int gridsearch(const Globals& g) {
  const json c = read_config(g);
  if (!c.contains("base") || !c.contains("grid")) throw ConfigError("gridsearch needs base and grid");
  TrainConfig base = c["base"].get<TrainConfig>();
  if (g.seed) base.seed = *g.seed;
  const Dataset data = load_dataset(base.dataset_dir);
  std::vector<ConceptBank> banks;
  if (base.method == Method::kLcrReg) banks = load_banks(base.concepts_dir, resolve_concepts(base, data.task));
  const auto result = grid_search(base, c["grid"], data, banks);
  const auto dir = out_dir(g);
  std::ofstream csv(dir / "grid.csv");
  csv << "point,overrides,val_ba\n";
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    std::string o = result.points[i].overrides.dump();
    for (auto& ch : o) {
      if (ch == ',') ch = ';';
    }
    csv << i << ',' << o << ',' << result.points[i].val_ba << '\n';
  }
  write_json(dir / "best.json", result.best_config);
  std::cout << "best point " << result.best << " val BA " << result.points[result.best].val_ba << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-regularised CNN training on synthetic Elements data"};
  Globals g;
  app.add_option("--config", g.config, "JSON config for the subcommand");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.require_subcommand(1);
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Globals&);
  };
  const Command commands[] = {
      {"gen-elements", "Generate an Elements dataset", gen_elements},
      {"gen-concepts", "Generate concept banks", gen_concepts},
      {"train", "Train one model", train},
      {"eval", "Evaluate a checkpoint on the test splits", eval},
      {"saliency", "Write input-gradient heatmaps", saliency},
      {"suite", "Run a multi-seed experiment suite", suite},
      {"gridsearch", "Exhaustive hyperparameter sweep", gridsearch},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    // Global flags are also accepted after the subcommand name.
    sub->add_option("--config", g.config);
    sub->add_option("--seed", g.seed);
    sub->add_option("--out", g.out);
    sub->add_option("--threads", g.threads)->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  if (g.threads) omp_set_num_threads(*g.threads);
  for (const auto& c : commands) {
    if (!app.got_subcommand(c.name)) continue;
    try {
      return c.run(g);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kConfig;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kConfig;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kRuntime;
    }
  }
  return kConfig;
}
