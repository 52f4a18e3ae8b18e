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

#include "lcrreg/elements.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>

#include "lcrreg/error.hpp"

namespace lcrreg {
namespace {

constexpr double kStripeShade = 0.35;
constexpr int kCornerClearance = 8;

Rgb shade(Rgb c, double f) {
  auto s = [f](std::uint8_t v) { return static_cast<std::uint8_t>(static_cast<double>(v) * f); };
  return {s(c.r), s(c.g), s(c.b)};
}

struct Box {
  int x0, y0, x1, y1;  // inclusive
};

Box box_of(const ElementAttr& e) { return {e.cx - e.size, e.cy - e.size, e.cx + e.size, e.cy + e.size}; }

bool separated(const Box& a, const Box& b) {
  // At least kMinSeparation empty pixels between the boxes along one axis.
  const int gap = kMinSeparation + 1;
  return a.x1 + gap <= b.x0 || b.x1 + gap <= a.x0 || a.y1 + gap <= b.y0 || b.y1 + gap <= a.y0;
}

bool inside(const Box& b, int canvas) { return b.x0 >= 0 && b.y0 >= 0 && b.x1 < canvas && b.y1 < canvas; }

bool touches_corner(const Box& b, int canvas) {
  const int lo = kCornerClearance, hi = canvas - kCornerClearance;
  const bool left = b.x0 < lo, right = b.x1 >= hi, top = b.y0 < lo, bottom = b.y1 >= hi;
  return (left || right) && (top || bottom);
}

bool has_shape(const std::vector<ElementAttr>& es, ShapeKind s) {
  return std::any_of(es.begin(), es.end(), [s](const ElementAttr& e) { return e.shape == s; });
}

int count_shape(const std::vector<ElementAttr>& es, ShapeKind s) {
  return static_cast<int>(std::count_if(es.begin(), es.end(), [s](const ElementAttr& e) { return e.shape == s; }));
}

ShapeKind pick(Rng& rng, std::initializer_list<ShapeKind> from) {
  return from.begin()[uniform_int(rng, 0, static_cast<std::int64_t>(from.size()) - 1)];
}

// Shape multiset for a scene of the requested label, before placement.
std::vector<ShapeKind> draw_shapes(const TaskSpec& task, int label, Rng& rng) {
  using S = ShapeKind;
  std::vector<S> out;
  switch (task.kind) {
    case TaskKind::kBinary1Concept: {
      const auto n = uniform_int(rng, 1, kMaxElements);
      if (label == 1) {
        const auto squares = uniform_int(rng, 1, n);
        out.assign(static_cast<std::size_t>(squares), S::kSquare);
        for (auto i = squares; i < n; ++i) out.push_back(pick(rng, {S::kTriangle, S::kCircle}));
      } else {
        for (std::int64_t i = 0; i < n; ++i) out.push_back(pick(rng, {S::kTriangle, S::kCircle}));
      }
      break;
    }
    case TaskKind::kBinaryMultiConcept: {
      if (label == 1) {
        const auto n = uniform_int(rng, 2, kMaxElements);
        out = {S::kSquare, S::kTriangle};
        for (auto i = 2; i < n; ++i) out.push_back(pick(rng, {S::kSquare, S::kTriangle, S::kCircle}));
      } else {
        const auto n = uniform_int(rng, 1, kMaxElements);
        // Either squares without triangles or triangles without squares.
        const S other = uniform_int(rng, 0, 1) == 0 ? S::kSquare : S::kTriangle;
        for (std::int64_t i = 0; i < n; ++i) out.push_back(pick(rng, {other, S::kCircle}));
      }
      break;
    }
    case TaskKind::kMulticlass1Concept: {
      const int squares = label;
      const auto n = uniform_int(rng, std::max(1, squares), kMaxElements);
      out.assign(static_cast<std::size_t>(squares), S::kSquare);
      for (auto i = squares; i < n; ++i) out.push_back(pick(rng, {S::kTriangle, S::kCircle}));
      break;
    }
    case TaskKind::kMulticlassMultiConcept: {
      if (label == 0) break;
      const S s = label == 1 ? S::kSquare : label == 2 ? S::kTriangle : S::kCircle;
      out.assign(static_cast<std::size_t>(uniform_int(rng, 1, kMaxElements)), s);
      break;
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kCircle: return "circle";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& s) {
  if (s == "square") return ShapeKind::kSquare;
  if (s == "triangle") return ShapeKind::kTriangle;
  if (s == "circle") return ShapeKind::kCircle;
  throw ConfigError("unknown shape '" + s + "'");
}

void to_json(nlohmann::json& j, const ElementAttr& e) {
  j = {{"shape", to_string(e.shape)},
       {"colour", e.colour},
       {"texture", e.texture == Texture::kSolid ? "solid" : "diagonal-stripes"},
       {"cx", e.cx},
       {"cy", e.cy},
       {"size", e.size}};
}

void from_json(const nlohmann::json& j, ElementAttr& e) {
  e.shape = parse_shape(j.at("shape").get<std::string>());
  e.colour = j.at("colour").get<int>();
  const auto t = j.at("texture").get<std::string>();
  if (t == "solid") {
    e.texture = Texture::kSolid;
  } else if (t == "diagonal-stripes") {
    e.texture = Texture::kStripes;
  } else {
    throw FormatError("unknown texture '" + t + "'");
  }
  e.cx = j.at("cx").get<int>();
  e.cy = j.at("cy").get<int>();
  e.size = j.at("size").get<int>();
}

bool element_covers(const ElementAttr& e, int x, int y) {
  const int dx = x - e.cx, dy = y - e.cy, s = e.size;
  if (std::abs(dx) > s || std::abs(dy) > s) return false;
  switch (e.shape) {
    case ShapeKind::kSquare: return true;
    case ShapeKind::kCircle: return dx * dx + dy * dy <= s * s;
    case ShapeKind::kTriangle: return 2 * std::abs(dx) <= dy + s;  // apex up
  }
  return false;
}

void check_layout(const std::vector<ElementAttr>& elements, std::size_t canvas) {
  const int side = static_cast<int>(canvas);
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto& e = elements[i];
    if (e.colour < 0 || e.colour >= static_cast<int>(kPalette.size())) {
      throw GenerationError("element " + std::to_string(i) + " has no palette entry " + std::to_string(e.colour));
    }
    if (e.size < 1) throw GenerationError("element " + std::to_string(i) + " has size < 1");
    if (!inside(box_of(e), side)) throw GenerationError("element " + std::to_string(i) + " leaves the canvas");
    for (std::size_t k = 0; k < i; ++k) {
      if (!separated(box_of(elements[k]), box_of(e))) {
        throw GenerationError("elements " + std::to_string(k) + " and " + std::to_string(i) + " overlap");
      }
    }
  }
}

Image render_scene(const std::vector<ElementAttr>& elements, std::size_t canvas, std::optional<int> corner_patch) {
  check_layout(elements, canvas);
  Image img(canvas, canvas, kBackground);
  for (const auto& e : elements) {
    const Rgb on = kPalette[static_cast<std::size_t>(e.colour)];
    const Rgb off = shade(on, kStripeShade);
    for (int y = e.cy - e.size; y <= e.cy + e.size; ++y) {
      for (int x = e.cx - e.size; x <= e.cx + e.size; ++x) {
        if (!element_covers(e, x, y)) continue;
        const bool lit = e.texture == Texture::kSolid || (x + y) % kStripePeriod < kStripePeriod / 2;
        img.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), lit ? on : off);
      }
    }
  }
  if (corner_patch) {
    const int c = *corner_patch;
    if (c < 0 || c > 3) throw GenerationError("corner index " + std::to_string(c) + " out of range");
    const std::size_t x0 = (c & 1) ? canvas - kCornerPatch : 0;
    const std::size_t y0 = (c & 2) ? canvas - kCornerPatch : 0;
    for (std::size_t y = y0; y < y0 + kCornerPatch; ++y) {
      for (std::size_t x = x0; x < x0 + kCornerPatch; ++x) img.set(x, y, kPatchColour);
    }
  }
  return img;
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kBinary1Concept: return "binary-1concept";
    case TaskKind::kBinaryMultiConcept: return "binary-multiconcept";
    case TaskKind::kMulticlass1Concept: return "multiclass-1concept";
    case TaskKind::kMulticlassMultiConcept: return "multiclass-multiconcept";
  }
  return "?";
}

TaskKind parse_task(const std::string& s) {
  for (auto k : {TaskKind::kBinary1Concept, TaskKind::kBinaryMultiConcept, TaskKind::kMulticlass1Concept,
                 TaskKind::kMulticlassMultiConcept}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown task '" + s + "'");
}

TaskSpec TaskSpec::make(TaskKind kind) {
  using S = ShapeKind;
  TaskSpec t;
  t.kind = kind;
  switch (kind) {
    case TaskKind::kBinary1Concept:
      t.targets = {S::kSquare};
      t.classes = 2;
      t.marker_classes = {1};
      t.marker_shapes = {S::kSquare};
      break;
    case TaskKind::kBinaryMultiConcept:
      t.targets = {S::kSquare, S::kTriangle};
      t.classes = 2;
      t.marker_classes = {1};
      t.marker_shapes = {S::kSquare, S::kTriangle};
      break;
    case TaskKind::kMulticlass1Concept:
      t.targets = {S::kSquare};
      t.classes = 5;
      t.marker_classes = {1, 2, 3, 4};
      t.marker_shapes = {S::kSquare};
      break;
    case TaskKind::kMulticlassMultiConcept:
      t.targets = {S::kSquare, S::kTriangle, S::kCircle};
      t.classes = 4;
      t.marker_classes = {1};
      t.marker_shapes = {S::kSquare};
      break;
  }
  return t;
}

void TaskSpec::validate() const {
  const std::size_t expected = kind == TaskKind::kMulticlass1Concept       ? 5
                               : kind == TaskKind::kMulticlassMultiConcept ? 4
                                                                           : 2;
  if (classes != expected) {
    throw ConfigError(to_string(kind) + " needs " + std::to_string(expected) + " classes, got " +
                      std::to_string(classes));
  }
  if (targets.empty()) throw ConfigError("task has no target shapes");
  for (int c : marker_classes) {
    if (c < 0 || c >= static_cast<int>(classes)) throw ConfigError("marker class " + std::to_string(c) + " out of range");
  }
}

int TaskSpec::label_of(const std::vector<ElementAttr>& es) const {
  using S = ShapeKind;
  switch (kind) {
    case TaskKind::kBinary1Concept:
      return has_shape(es, S::kSquare) ? 1 : 0;
    case TaskKind::kBinaryMultiConcept:
      return has_shape(es, S::kSquare) && has_shape(es, S::kTriangle) ? 1 : 0;
    case TaskKind::kMulticlass1Concept: {
      const int n = count_shape(es, S::kSquare);
      return n <= 4 ? n : -1;
    }
    case TaskKind::kMulticlassMultiConcept: {
      const bool sq = has_shape(es, S::kSquare), tr = has_shape(es, S::kTriangle), ci = has_shape(es, S::kCircle);
      const int present = int(sq) + int(tr) + int(ci);
      if (present == 0) return 0;
      if (present > 1) return -1;
      return sq ? 1 : tr ? 2 : 3;
    }
  }
  return -1;
}

std::vector<int> TaskSpec::concept_presence(const std::vector<ElementAttr>& es) const {
  std::vector<int> out;
  for (auto s : targets) out.push_back(has_shape(es, s) ? 1 : 0);
  return out;
}

bool TaskSpec::is_marker_class(int label) const {
  return std::find(marker_classes.begin(), marker_classes.end(), label) != marker_classes.end();
}

std::string to_string(SpuriousMode m) {
  switch (m) {
    case SpuriousMode::kTrainCorrelated: return "train-correlated";
    case SpuriousMode::kDecorrelated: return "decorrelated";
    case SpuriousMode::kReversed: return "reversed";
    case SpuriousMode::kNone: return "none";
  }
  return "?";
}

SpuriousMode parse_spurious_mode(const std::string& s) {
  for (auto m : {SpuriousMode::kTrainCorrelated, SpuriousMode::kDecorrelated, SpuriousMode::kReversed,
                 SpuriousMode::kNone}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown spurious mode '" + s + "'");
}

void SpuriousSpec::validate() const {
  if (!(p_sc >= 0.0 && p_sc <= 1.0)) throw ConfigError("p_sc must lie in [0, 1]");
}

Scene sample_scene(const TaskSpec& task, int label, std::size_t canvas, bool avoid_corners, Rng& rng,
                   const std::string& scene_name) {
  const auto shapes = draw_shapes(task, label, rng);
  const int side = static_cast<int>(canvas);
  Scene scene;
  int attempts = 0;
  for (auto shape : shapes) {
    bool placed = false;
    while (!placed) {
      if (++attempts > kPlacementAttempts) {
        throw GenerationError("could not place " + std::to_string(shapes.size()) + " elements in scene " + scene_name +
                              " after " + std::to_string(kPlacementAttempts) + " attempts");
      }
      ElementAttr e;
      e.shape = shape;
      e.size = static_cast<int>(uniform_int(rng, kMinHalfExtent, kMaxHalfExtent));
      if (2 * e.size + 1 > side) continue;
      e.cx = static_cast<int>(uniform_int(rng, e.size, side - 1 - e.size));
      e.cy = static_cast<int>(uniform_int(rng, e.size, side - 1 - e.size));
      e.colour = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(kPalette.size()) - 1));
      const Box b = box_of(e);
      if (avoid_corners && touches_corner(b, side)) continue;
      placed = std::all_of(scene.elements.begin(), scene.elements.end(),
                           [&](const ElementAttr& o) { return separated(box_of(o), b); });
      if (placed) scene.elements.push_back(e);
    }
  }
  return scene;
}

bool apply_spurious_rule(Scene& scene, int label, const TaskSpec& task, const SpuriousSpec& spurious, Rng& rng) {
  // The coin is always tossed so the stream does not depend on p_sc.
  const bool fire = uniform01(rng) < spurious.p_sc;
  if (spurious.mode == SpuriousMode::kNone || !fire) return false;
  const bool marker_class = task.is_marker_class(label);
  if (spurious.marker == MarkerKind::kCornerPatch) {
    const int classes = static_cast<int>(task.classes);
    switch (spurious.mode) {
      case SpuriousMode::kTrainCorrelated: scene.corner = label % 4; break;
      case SpuriousMode::kReversed: scene.corner = ((label + 1) % classes) % 4; break;
      case SpuriousMode::kDecorrelated: scene.corner = static_cast<int>(uniform_int(rng, 0, 3)); break;
      case SpuriousMode::kNone: break;
    }
    return true;
  }
  for (auto& e : scene.elements) {
    bool striped = false;
    switch (spurious.mode) {
      case SpuriousMode::kTrainCorrelated:
        striped = marker_class &&
                  std::find(task.marker_shapes.begin(), task.marker_shapes.end(), e.shape) != task.marker_shapes.end();
        break;
      case SpuriousMode::kReversed: striped = !marker_class; break;
      case SpuriousMode::kDecorrelated: striped = uniform_int(rng, 0, 1) == 1; break;
      case SpuriousMode::kNone: break;
    }
    e.texture = striped ? Texture::kStripes : Texture::kSolid;
  }
  return true;
}

const SplitData& Dataset::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ConfigError("dataset has no split '" + name + "'");
}

bool Dataset::has_split(const std::string& name) const {
  return std::any_of(splits.begin(), splits.end(), [&](const SplitData& s) { return s.name == name; });
}

namespace {

SpuriousSpec split_spurious(const std::string& name, const SpuriousSpec& train) {
  if (name == "train" || name == "val") return train;
  SpuriousSpec s = train;
  s.p_sc = 1.0;
  if (name == "test_base") s.mode = SpuriousMode::kNone;
  if (name == "test_spurious") s.mode = SpuriousMode::kTrainCorrelated;
  if (name == "test_reversed") s.mode = SpuriousMode::kReversed;
  if (name == "test_decorrelated") s.mode = SpuriousMode::kDecorrelated;
  return s;
}

std::string file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05llu.png", static_cast<unsigned long long>(index));
  return buf;
}

bool has_marker(const Scene& scene) {
  return scene.corner.has_value() ||
         std::any_of(scene.elements.begin(), scene.elements.end(),
                     [](const ElementAttr& e) { return e.texture == Texture::kStripes; });
}

SplitData generate_split(const std::string& name, std::size_t count, const TaskSpec& task, const SpuriousSpec& train,
                         std::uint64_t seed, std::size_t canvas) {
  SplitData out;
  out.name = name;
  out.spurious = split_spurious(name, train);
  out.images.resize(count);
  out.records.resize(count);
  const bool avoid_corners = train.marker == MarkerKind::kCornerPatch;
  std::exception_ptr error;
  const auto n = static_cast<std::int64_t>(count);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto index = static_cast<std::uint64_t>(i);
      const int label = static_cast<int>(index % task.classes);
      Rng rng = make_rng(seed, {hash_name(name), index});
      const std::string scene_name = name + "/" + std::to_string(index);
      Scene scene = sample_scene(task, label, canvas, avoid_corners, rng, scene_name);
      const bool fired = apply_spurious_rule(scene, label, task, out.spurious, rng);
      auto& rec = out.records[static_cast<std::size_t>(i)];
      rec.file = name + "/" + file_name(index);
      rec.split = name;
      rec.index = index;
      rec.label = label;
      rec.rule_applied = fired;
      rec.marker = has_marker(scene);
      rec.corner = scene.corner;
      rec.elements = scene.elements;
      rec.concepts = task.concept_presence(scene.elements);
      out.images[static_cast<std::size_t>(i)] = render_scene(scene.elements, canvas, scene.corner);
    } catch (...) {
#pragma omp critical(lcrreg_generate_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace

Dataset generate_dataset(const TaskSpec& task, const SpuriousSpec& spurious, const SplitCounts& counts,
                         std::uint64_t seed, std::size_t canvas) {
  task.validate();
  spurious.validate();
  if (counts.train == 0 || counts.val == 0 || counts.test == 0) throw ConfigError("split counts must be positive");
  if (canvas < 2 * kMaxHalfExtent + 1 + 2 * kCornerClearance) {
    throw ConfigError("canvas " + std::to_string(canvas) + " too small for the element sizes");
  }
  Dataset ds;
  ds.task = task;
  ds.spurious = spurious;
  ds.seed = seed;
  ds.canvas = canvas;
  for (const auto& name : kSplitNames) {
    const std::size_t n = name == "train" ? counts.train : name == "val" ? counts.val : counts.test;
    ds.splits.push_back(generate_split(name, n, task, spurious, seed, canvas));
  }
  return ds;
}

std::string to_string(MarkerKind m) { return m == MarkerKind::kStripes ? "diagonal-stripes" : "corner-patch"; }

MarkerKind parse_marker(const std::string& s) {
  if (s == "diagonal-stripes" || s == "stripes") return MarkerKind::kStripes;
  if (s == "corner-patch") return MarkerKind::kCornerPatch;
  throw ConfigError("unknown marker '" + s + "'");
}

namespace {

nlohmann::json spurious_json(const SpuriousSpec& s) {
  return {{"marker", to_string(s.marker)},
          {"p_sc", s.p_sc},
          {"mode", to_string(s.mode)}};
}

SpuriousSpec spurious_from_json(const nlohmann::json& j) {
  SpuriousSpec s;
  try {
    s.marker = parse_marker(j.at("marker").get<std::string>());
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  s.p_sc = j.at("p_sc").get<double>();
  s.mode = parse_spurious_mode(j.at("mode").get<std::string>());
  return s;
}

nlohmann::json task_json(const TaskSpec& t) {
  nlohmann::json targets = nlohmann::json::array(), shapes = nlohmann::json::array();
  for (auto s : t.targets) targets.push_back(to_string(s));
  for (auto s : t.marker_shapes) shapes.push_back(to_string(s));
  return {{"kind", to_string(t.kind)},
          {"targets", targets},
          {"classes", t.classes},
          {"marker_classes", t.marker_classes},
          {"marker_shapes", shapes}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec t;
  t.kind = parse_task(j.at("kind").get<std::string>());
  for (const auto& s : j.at("targets")) t.targets.push_back(parse_shape(s.get<std::string>()));
  t.classes = j.at("classes").get<std::size_t>();
  t.marker_classes = j.at("marker_classes").get<std::vector<int>>();
  for (const auto& s : j.at("marker_shapes")) t.marker_shapes.push_back(parse_shape(s.get<std::string>()));
  t.validate();
  return t;
}

}  // namespace

nlohmann::json manifest_json(const Dataset& ds) {
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& s : ds.splits) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : s.records) {
      nlohmann::json j = {{"file", r.file},       {"index", r.index},
                          {"label", r.label},     {"marker", r.marker},
                          {"rule_applied", r.rule_applied}, {"elements", r.elements},
                          {"concepts", r.concepts}};
      j["corner"] = r.corner ? nlohmann::json(*r.corner) : nlohmann::json(nullptr);
      recs.push_back(std::move(j));
    }
    splits[s.name] = {{"spurious", spurious_json(s.spurious)}, {"records", std::move(recs)}};
  }
  return {{"format", "lcrreg-elements"},
          {"version", 1},
          {"task", task_json(ds.task)},
          {"spurious", spurious_json(ds.spurious)},
          {"seed", ds.seed},
          {"canvas", ds.canvas},
          {"split_order", kSplitNames},
          {"splits", std::move(splits)}};
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  for (const auto& s : ds.splits) {
    fs::create_directories(dir / s.name);
    for (std::size_t i = 0; i < s.images.size(); ++i) write_png(s.images[i], dir / s.records[i].file);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << manifest_json(ds).dump(1) << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("no manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  Dataset ds;
  try {
    ds.task = task_from_json(j.at("task"));
    ds.spurious = spurious_from_json(j.at("spurious"));
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.canvas = j.at("canvas").get<std::size_t>();
    for (const auto& name : j.at("split_order")) {
      const auto& js = j.at("splits").at(name.get<std::string>());
      SplitData s;
      s.name = name.get<std::string>();
      s.spurious = spurious_from_json(js.at("spurious"));
      for (const auto& jr : js.at("records")) {
        SampleRecord r;
        r.file = jr.at("file").get<std::string>();
        r.split = s.name;
        r.index = jr.at("index").get<std::uint64_t>();
        r.label = jr.at("label").get<int>();
        r.marker = jr.at("marker").get<bool>();
        r.rule_applied = jr.at("rule_applied").get<bool>();
        if (!jr.at("corner").is_null()) r.corner = jr.at("corner").get<int>();
        r.elements = jr.at("elements").get<std::vector<ElementAttr>>();
        r.concepts = jr.at("concepts").get<std::vector<int>>();
        if (ds.task.label_of(r.elements) != r.label) {
          throw FormatError(r.file + ": stored label " + std::to_string(r.label) +
                            " disagrees with its elements");
        }
        s.images.push_back(read_png(dir / r.file));
        s.records.push_back(std::move(r));
      }
      ds.splits.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  return ds;
}

}  // namespace lcrreg
