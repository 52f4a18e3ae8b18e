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

#ifndef LCRREG_ELEMENTS_HPP_
#define LCRREG_ELEMENTS_HPP_

// Procedural scenes of simple shapes ("elements") with controllable
// attributes, task labelings and injectable spurious markers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lcrreg/image.hpp"
#include "lcrreg/random.hpp"

namespace lcrreg {

enum class ShapeKind { kSquare, kTriangle, kCircle };
enum class Texture { kSolid, kStripes };

std::string to_string(ShapeKind s);
ShapeKind parse_shape(const std::string& s);

inline constexpr std::size_t kCanvasSide = 64;
inline constexpr int kMinHalfExtent = 3;   // 7 px wide
inline constexpr int kMaxHalfExtent = 7;   // 15 px wide
inline constexpr int kMaxElements = 6;
inline constexpr int kMinSeparation = 2;   // empty pixels between bounding boxes
inline constexpr int kStripePeriod = 6;
inline constexpr int kCornerPatch = 6;
inline constexpr int kPlacementAttempts = 1000;

inline constexpr Rgb kBackground{16, 16, 16};
inline constexpr Rgb kPatchColour{255, 255, 255};
inline constexpr std::array<Rgb, 8> kPalette{{{230, 25, 75},
                                               {60, 180, 75},
                                               {255, 225, 25},
                                               {0, 130, 200},
                                               {245, 130, 48},
                                               {145, 30, 180},
                                               {70, 240, 240},
                                               {240, 50, 230}}};

struct ElementAttr {
  ShapeKind shape = ShapeKind::kSquare;
  int colour = 0;  // index into kPalette
  Texture texture = Texture::kSolid;
  int cx = 0;
  int cy = 0;
  int size = kMinHalfExtent;  // half extent of the bounding box

  friend bool operator==(const ElementAttr&, const ElementAttr&) = default;
};

void to_json(nlohmann::json& j, const ElementAttr& e);
void from_json(const nlohmann::json& j, ElementAttr& e);

// Whether canvas pixel (x, y) is covered by the element.
bool element_covers(const ElementAttr& e, int x, int y);

// Throws GenerationError if an element leaves the canvas or two elements are
// closer than kMinSeparation.
void check_layout(const std::vector<ElementAttr>& elements, std::size_t canvas);

// Corner index: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
Image render_scene(const std::vector<ElementAttr>& elements, std::size_t canvas,
                   std::optional<int> corner_patch = std::nullopt);

enum class TaskKind { kBinary1Concept, kBinaryMultiConcept, kMulticlass1Concept, kMulticlassMultiConcept };

std::string to_string(TaskKind k);
TaskKind parse_task(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::kBinary1Concept;
  std::vector<ShapeKind> targets;       // concepts the task is about
  std::size_t classes = 2;
  std::vector<int> marker_classes;      // classes the marker follows in training
  std::vector<ShapeKind> marker_shapes; // shapes that carry stripes

  static TaskSpec make(TaskKind kind);
  void validate() const;

  // Label implied by a scene's elements; -1 if the scene fits no class.
  int label_of(const std::vector<ElementAttr>& elements) const;
  // Presence of each target shape.
  std::vector<int> concept_presence(const std::vector<ElementAttr>& elements) const;
  bool is_marker_class(int label) const;
};

enum class MarkerKind { kStripes, kCornerPatch };
std::string to_string(MarkerKind m);
MarkerKind parse_marker(const std::string& s);
enum class SpuriousMode { kTrainCorrelated, kDecorrelated, kReversed, kNone };

std::string to_string(SpuriousMode m);
SpuriousMode parse_spurious_mode(const std::string& s);

struct SpuriousSpec {
  MarkerKind marker = MarkerKind::kStripes;
  double p_sc = 1.0;
  SpuriousMode mode = SpuriousMode::kTrainCorrelated;

  void validate() const;
};

struct Scene {
  std::vector<ElementAttr> elements;
  std::optional<int> corner;
};

// Samples a scene whose label under `task` is `label`. All elements are solid;
// textures and the corner patch are the business of apply_spurious_rule.
Scene sample_scene(const TaskSpec& task, int label, std::size_t canvas, bool avoid_corners,
                   Rng& rng, const std::string& scene_name);

// With probability p_sc rewrites the marker attribute according to the mode:
//   train-correlated  marker shapes striped in marker classes only
//   reversed          every element striped in the other classes only
//   decorrelated      each element striped with probability 1/2
//   none              untouched
// For the corner-patch marker the patch position follows the label instead.
// Returns whether the rule fired.
bool apply_spurious_rule(Scene& scene, int label, const TaskSpec& task,
                         const SpuriousSpec& spurious, Rng& rng);

struct SampleRecord {
  std::string file;
  std::string split;
  std::uint64_t index = 0;
  int label = 0;
  bool marker = false;  // stripes or corner patch present
  bool rule_applied = false;
  std::optional<int> corner;
  std::vector<ElementAttr> elements;
  std::vector<int> concepts;
};

struct SplitData {
  std::string name;
  SpuriousSpec spurious;
  std::vector<Image> images;
  std::vector<SampleRecord> records;
};

struct SplitCounts {
  std::size_t train = 300;
  std::size_t val = 1000;
  std::size_t test = 1000;
};

struct Dataset {
  TaskSpec task;
  SpuriousSpec spurious;
  std::uint64_t seed = 0;
  std::size_t canvas = kCanvasSide;
  std::vector<SplitData> splits;

  const SplitData& split(const std::string& name) const;
  bool has_split(const std::string& name) const;
};

// Split names in generation order.
inline const std::array<std::string, 6> kSplitNames{
    "train", "val", "test_base", "test_spurious", "test_reversed", "test_decorrelated"};

// train and val follow `spurious`; the test splits use p_sc = 1 in modes
// none / train-correlated / reversed / decorrelated respectively. Every split
// is class-balanced (label = index mod classes) and every image draws from its
// own (seed, split, index) stream.
Dataset generate_dataset(const TaskSpec& task, const SpuriousSpec& spurious,
                         const SplitCounts& counts, std::uint64_t seed,
                         std::size_t canvas = kCanvasSide);

// dataset/{split}/NNNNN.png plus dataset/manifest.json.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);
nlohmann::json manifest_json(const Dataset& dataset);

}  // namespace lcrreg

#endif  // LCRREG_ELEMENTS_HPP_
