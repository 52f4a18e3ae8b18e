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

#ifndef LCRREG_CONCEPT_BANK_HPP_
#define LCRREG_CONCEPT_BANK_HPP_

// Concept banks built by compositional editing: concept patches cut out of
// annotated source images are pasted onto concept-free backgrounds, and the
// matching negative receives patches of another background at the same spots.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lcrreg/elements.hpp"
#include "lcrreg/image.hpp"
#include "lcrreg/random.hpp"

namespace lcrreg {

struct ConceptSource {
  std::string id;
  Image image;
  Mask mask;

  // Throws ConfigError unless the mask is non-empty, matches the image and
  // covers less than half of it.
  void validate() const;
};

struct HealthyImage {
  std::string id;
  Image image;
};

struct Rect {
  std::size_t x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Paste {
  std::string source_id;
  std::string healthy_id;  // donor of the negative patch
  Rect from;               // mask bounding box on the source
  Rect to;                 // destination on the background
  std::size_t concept_pixels = 0;
};

struct PairProvenance {
  std::string background_id;
  std::vector<Paste> pastes;
};

struct ConceptPair {
  Image positive;
  Image negative;
  PairProvenance provenance;
};

inline constexpr int kPasteAttempts = 1000;

// N iterative pastes onto healthy[background]. Destination rectangles are
// uniform over the canvas and never overlap one another.
ConceptPair synthesize_pair(std::size_t background, const std::vector<HealthyImage>& healthy,
                            const std::vector<ConceptSource>& sources, int n, Rng& rng);

// Pixels covered by pasted concept patches divided by all pixels.
double continuous_score(const Image& positive, const PairProvenance& provenance);

struct ConceptBank {
  std::string concept_name;
  int n = 5;
  std::vector<Image> positives;
  std::vector<Image> negatives;              // empty for continuous banks
  std::optional<std::vector<double>> scores;  // continuous banks only
  std::vector<PairProvenance> provenance;

  bool continuous() const { return scores.has_value(); }
  std::size_t size() const { return positives.size(); }
  // Every source id referenced by any pair.
  std::vector<std::string> source_ids() const;
};

// Pair i is built on healthy[i] with its own (seed, concept, i) stream.
ConceptBank build_bank(const std::string& concept_name, const std::vector<HealthyImage>& healthy,
                       const std::vector<ConceptSource>& sources, std::size_t count, int n,
                       std::uint64_t seed);

// Positives only; sample i uses a paste count drawn from [1, n_max].
ConceptBank build_continuous_bank(const std::string& concept_name, const std::vector<HealthyImage>& healthy,
                                  const std::vector<ConceptSource>& sources, std::size_t count, int n_max,
                                  std::uint64_t seed);

// Raw material for Elements concepts.
enum class TexturePolicy { kSolid, kStripes, kMixed };
TexturePolicy parse_texture_policy(const std::string& s);
std::string to_string(TexturePolicy p);

// Scenes with 0-2 elements, none of them of shape `absent`; ids bg-<first+i>.
std::vector<HealthyImage> make_backgrounds(ShapeKind absent, std::size_t count, std::uint64_t seed,
                                           TexturePolicy texture, std::size_t first = 0,
                                           std::size_t canvas = kCanvasSide);

// One element of shape `concept_shape` per image, masked by its own pixels;
// ids src-<first+i>. Streams depend on the id, so ranges that do not overlap
// give disjoint material.
std::vector<ConceptSource> make_sources(ShapeKind concept_shape, std::size_t count, std::uint64_t seed,
                                        TexturePolicy texture, std::size_t first = 0,
                                        std::size_t canvas = kCanvasSide);

// Bank for an Elements shape: `count` backgrounds without the shape and a
// pool of kElementsSourcePool single-element sources.
inline constexpr std::size_t kElementsSourcePool = 64;
ConceptBank make_elements_bank(ShapeKind concept_shape, std::size_t count, int n, std::uint64_t seed,
                               TexturePolicy texture, std::size_t canvas = kCanvasSide);
ConceptBank make_elements_continuous_bank(ShapeKind concept_shape, std::size_t count, int n_max,
                                          std::uint64_t seed, TexturePolicy texture,
                                          std::size_t canvas = kCanvasSide);

// <root>/<concept>/{positive,negative}/NNNNN.png, scores.csv, provenance.json.
void write_bank(const ConceptBank& bank, const std::filesystem::path& root);
ConceptBank load_bank(const std::filesystem::path& concept_dir);

}  // namespace lcrreg

#endif  // LCRREG_CONCEPT_BANK_HPP_
