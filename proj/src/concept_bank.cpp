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

#include "lcrreg/concept_bank.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>

#include "lcrreg/error.hpp"

namespace lcrreg {
namespace {

Rect mask_bounds(const Mask& m) {
  std::size_t x0 = m.width, y0 = m.height, x1 = 0, y1 = 0;
  for (std::size_t y = 0; y < m.height; ++y) {
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

bool overlaps(const Rect& a, const Rect& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

std::string png_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.png", i);
  return buf;
}

Texture draw_texture(TexturePolicy p, Rng& rng) {
  // The coin is always tossed so streams agree across policies.
  const bool coin = uniform_int(rng, 0, 1) == 1;
  switch (p) {
    case TexturePolicy::kSolid: return Texture::kSolid;
    case TexturePolicy::kStripes: return Texture::kStripes;
    case TexturePolicy::kMixed: return coin ? Texture::kStripes : Texture::kSolid;
  }
  return Texture::kSolid;
}

ElementAttr random_element(ShapeKind shape, TexturePolicy texture, std::size_t canvas, Rng& rng) {
  ElementAttr e;
  e.shape = shape;
  e.size = static_cast<int>(uniform_int(rng, kMinHalfExtent, kMaxHalfExtent));
  const int side = static_cast<int>(canvas);
  e.cx = static_cast<int>(uniform_int(rng, e.size, side - 1 - e.size));
  e.cy = static_cast<int>(uniform_int(rng, e.size, side - 1 - e.size));
  e.colour = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(kPalette.size()) - 1));
  e.texture = draw_texture(texture, rng);
  return e;
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(lcrreg_bank_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

void check_materials(const std::vector<HealthyImage>& healthy, const std::vector<ConceptSource>& sources,
                     std::size_t count) {
  std::vector<std::string> missing;
  if (healthy.size() < count) {
    missing.push_back(std::to_string(count - healthy.size()) + " background(s) (have " +
                      std::to_string(healthy.size()) + ", need " + std::to_string(count) + ")");
  }
  if (healthy.size() < 2) missing.push_back("a second background to donate negative patches");
  if (sources.empty()) missing.push_back("at least one concept source");
  if (!missing.empty()) {
    std::string msg = "insufficient concept-bank materials: missing";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? "; " : " ") + missing[i];
    throw ConfigError(msg);
  }
  for (const auto& s : sources) s.validate();
}

}  // namespace

void ConceptSource::validate() const {
  if (mask.width != image.width() || mask.height != image.height()) {
    throw ConfigError("source " + id + ": mask extents differ from the image");
  }
  const std::size_t c = mask.count();
  if (c == 0) throw ConfigError("source " + id + ": empty mask");
  if (2 * c >= mask.width * mask.height) throw ConfigError("source " + id + ": mask covers half the image or more");
}

ConceptPair synthesize_pair(std::size_t background, const std::vector<HealthyImage>& healthy,
                            const std::vector<ConceptSource>& sources, int n, Rng& rng) {
  if (n < 1) throw ContractError("synthesize_pair needs at least one paste");
  if (healthy.size() < 2) throw ConfigError("healthy pool needs a background other than h_b");
  if (sources.empty()) throw ConfigError("no concept sources");
  if (background >= healthy.size()) throw ContractError("background index out of range");
  const Image& hb = healthy[background].image;
  ConceptPair pair{hb, hb, {healthy[background].id, {}}};
  const std::size_t w = hb.width(), h = hb.height();

  // Distinct sources per sample while they last.
  std::vector<std::size_t> order(sources.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Rect> used;
  int attempts = 0;
  for (int i = 0; i < n; ++i) {
    const ConceptSource& p = sources[order[static_cast<std::size_t>(i) % order.size()]];
    if (p.image.width() != w || p.image.height() != h) {
      throw ConfigError("source " + p.id + " and background " + healthy[background].id + " differ in size");
    }
    const Rect from = mask_bounds(p.mask);
    auto donor = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(healthy.size()) - 2));
    if (donor >= background) ++donor;
    const HealthyImage& hs = healthy[donor];

    Rect to{0, 0, from.w, from.h};
    for (;;) {
      if (++attempts > kPasteAttempts) {
        throw GenerationError("no free paste position for source " + p.id + " on background " +
                              healthy[background].id + " after " + std::to_string(kPasteAttempts) + " attempts");
      }
      to.x = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w - from.w)));
      to.y = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h - from.h)));
      if (std::none_of(used.begin(), used.end(), [&](const Rect& r) { return overlaps(r, to); })) break;
    }
    used.push_back(to);

    std::size_t pixels = 0;
    for (std::size_t y = 0; y < from.h; ++y) {
      for (std::size_t x = 0; x < from.w; ++x) {
        const std::size_t sx = from.x + x, sy = from.y + y;
        if (!p.mask.at(sx, sy)) continue;
        pair.positive.set(to.x + x, to.y + y, p.image.at(sx, sy));
        pair.negative.set(to.x + x, to.y + y, hs.image.at(sx, sy));
        ++pixels;
      }
    }
    pair.provenance.pastes.push_back({p.id, hs.id, from, to, pixels});
  }
  return pair;
}

double continuous_score(const Image& positive, const PairProvenance& provenance) {
  std::size_t pixels = 0;
  for (const auto& p : provenance.pastes) pixels += p.concept_pixels;
  return static_cast<double>(pixels) / static_cast<double>(positive.width() * positive.height());
}

std::vector<std::string> ConceptBank::source_ids() const {
  std::set<std::string> ids;
  for (const auto& p : provenance)
    for (const auto& paste : p.pastes) ids.insert(paste.source_id);
  return {ids.begin(), ids.end()};
}

ConceptBank build_bank(const std::string& concept_name, const std::vector<HealthyImage>& healthy,
                       const std::vector<ConceptSource>& sources, std::size_t count, int n, std::uint64_t seed) {
  if (count < 2) throw ConfigError("a concept bank needs at least two pairs");
  if (n < 1) throw ConfigError("pastes per sample must be at least 1");
  check_materials(healthy, sources, count);
  ConceptBank bank;
  bank.concept_name = concept_name;
  bank.n = n;
  bank.positives.resize(count);
  bank.negatives.resize(count);
  bank.provenance.resize(count);
  parallel_for(count, [&](std::size_t i) {
    Rng rng = make_rng(seed, {hash_name(concept_name), i});
    ConceptPair pair = synthesize_pair(i, healthy, sources, n, rng);
    bank.positives[i] = std::move(pair.positive);
    bank.negatives[i] = std::move(pair.negative);
    bank.provenance[i] = std::move(pair.provenance);
  });
  return bank;
}

ConceptBank build_continuous_bank(const std::string& concept_name, const std::vector<HealthyImage>& healthy,
                                  const std::vector<ConceptSource>& sources, std::size_t count, int n_max,
                                  std::uint64_t seed) {
  if (count < 2) throw ConfigError("a concept bank needs at least two samples");
  if (n_max < 1) throw ConfigError("pastes per sample must be at least 1");
  check_materials(healthy, sources, count);
  ConceptBank bank;
  bank.concept_name = concept_name;
  bank.n = n_max;
  bank.positives.resize(count);
  bank.provenance.resize(count);
  std::vector<double> scores(count);
  parallel_for(count, [&](std::size_t i) {
    Rng rng = make_rng(seed, {hash_name(concept_name), hash_name("continuous"), i});
    const int n = static_cast<int>(uniform_int(rng, 1, n_max));
    ConceptPair pair = synthesize_pair(i, healthy, sources, n, rng);
    scores[i] = continuous_score(pair.positive, pair.provenance);
    bank.positives[i] = std::move(pair.positive);
    bank.provenance[i] = std::move(pair.provenance);
  });
  bank.scores = std::move(scores);
  return bank;
}

TexturePolicy parse_texture_policy(const std::string& s) {
  if (s == "solid") return TexturePolicy::kSolid;
  if (s == "stripes") return TexturePolicy::kStripes;
  if (s == "mixed") return TexturePolicy::kMixed;
  throw ConfigError("unknown texture policy '" + s + "'");
}

std::string to_string(TexturePolicy p) {
  switch (p) {
    case TexturePolicy::kSolid: return "solid";
    case TexturePolicy::kStripes: return "stripes";
    case TexturePolicy::kMixed: return "mixed";
  }
  return "?";
}

std::vector<HealthyImage> make_backgrounds(ShapeKind absent, std::size_t count, std::uint64_t seed,
                                           TexturePolicy texture, std::size_t first, std::size_t canvas) {
  std::vector<ShapeKind> allowed;
  for (auto s : {ShapeKind::kSquare, ShapeKind::kTriangle, ShapeKind::kCircle}) {
    if (s != absent) allowed.push_back(s);
  }
  std::vector<HealthyImage> out(count);
  parallel_for(count, [&](std::size_t i) {
    const std::size_t id = first + i;
    Rng rng = make_rng(seed, {hash_name("background"), id});
    const auto k = uniform_int(rng, 0, 2);
    std::vector<ElementAttr> es;
    int attempts = 0;
    while (static_cast<std::int64_t>(es.size()) < k) {
      if (++attempts > kPlacementAttempts) throw GenerationError("could not place background bg-" + std::to_string(id));
      const auto shape = allowed[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(allowed.size()) - 1))];
      es.push_back(random_element(shape, texture, canvas, rng));
      try {
        check_layout(es, canvas);
      } catch (const GenerationError&) {
        es.pop_back();
      }
    }
    out[i] = {"bg-" + std::to_string(id), render_scene(es, canvas)};
  });
  return out;
}

std::vector<ConceptSource> make_sources(ShapeKind concept_shape, std::size_t count, std::uint64_t seed,
                                        TexturePolicy texture, std::size_t first, std::size_t canvas) {
  std::vector<ConceptSource> out(count);
  parallel_for(count, [&](std::size_t i) {
    const std::size_t id = first + i;
    Rng rng = make_rng(seed, {hash_name("source"), hash_name(to_string(concept_shape)), id});
    const ElementAttr e = random_element(concept_shape, texture, canvas, rng);
    ConceptSource s;
    s.id = "src-" + std::to_string(id);
    s.image = render_scene({e}, canvas);
    s.mask = {canvas, canvas, std::vector<std::uint8_t>(canvas * canvas, 0)};
    for (std::size_t y = 0; y < canvas; ++y) {
      for (std::size_t x = 0; x < canvas; ++x) {
        s.mask.bits[y * canvas + x] = element_covers(e, static_cast<int>(x), static_cast<int>(y)) ? 1 : 0;
      }
    }
    out[i] = std::move(s);
  });
  return out;
}

ConceptBank make_elements_bank(ShapeKind shape, std::size_t count, int n, std::uint64_t seed, TexturePolicy texture,
                               std::size_t canvas) {
  const auto bgs = make_backgrounds(shape, count, seed, texture, 0, canvas);
  const auto srcs = make_sources(shape, kElementsSourcePool, seed, texture, 0, canvas);
  return build_bank(to_string(shape), bgs, srcs, count, n, seed);
}

ConceptBank make_elements_continuous_bank(ShapeKind shape, std::size_t count, int n_max, std::uint64_t seed,
                                          TexturePolicy texture, std::size_t canvas) {
  const auto bgs = make_backgrounds(shape, count, seed, texture, 0, canvas);
  const auto srcs = make_sources(shape, kElementsSourcePool, seed, texture, 0, canvas);
  return build_continuous_bank(to_string(shape), bgs, srcs, count, n_max, seed);
}

namespace {

nlohmann::json rect_json(const Rect& r) { return {r.x, r.y, r.w, r.h}; }

Rect rect_from_json(const nlohmann::json& j) {
  return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<std::size_t>(),
          j.at(3).get<std::size_t>()};
}

}  // namespace

void write_bank(const ConceptBank& bank, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path dir = root / bank.concept_name;
  fs::create_directories(dir / "positive");
  if (!bank.continuous()) fs::create_directories(dir / "negative");
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    write_png(bank.positives[i], dir / "positive" / png_name(i));
    if (!bank.continuous()) write_png(bank.negatives[i], dir / "negative" / png_name(i));
    nlohmann::json pastes = nlohmann::json::array();
    for (const auto& p : bank.provenance[i].pastes) {
      pastes.push_back({{"source", p.source_id},
                        {"healthy", p.healthy_id},
                        {"from", rect_json(p.from)},
                        {"to", rect_json(p.to)},
                        {"concept_pixels", p.concept_pixels}});
    }
    pairs.push_back({{"file", png_name(i)}, {"background", bank.provenance[i].background_id}, {"pastes", pastes}});
  }
  const nlohmann::json prov = {{"concept", bank.concept_name},
                               {"n", bank.n},
                               {"continuous", bank.continuous()},
                               {"samples", pairs}};
  std::ofstream(dir / "provenance.json") << prov.dump(1) << '\n';
  if (bank.continuous()) {
    std::ofstream csv(dir / "scores.csv");
    csv << "file,score\n";
    char buf[64];
    for (std::size_t i = 0; i < bank.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", (*bank.scores)[i]);
      csv << png_name(i) << ',' << buf << '\n';
    }
  }
}

ConceptBank load_bank(const std::filesystem::path& dir) {
  std::ifstream in(dir / "provenance.json");
  if (!in) throw FormatError("no provenance.json in " + dir.string());
  ConceptBank bank;
  try {
    nlohmann::json j;
    in >> j;
    bank.concept_name = j.at("concept").get<std::string>();
    bank.n = j.at("n").get<int>();
    const bool continuous = j.at("continuous").get<bool>();
    for (const auto& s : j.at("samples")) {
      const auto file = s.at("file").get<std::string>();
      PairProvenance p;
      p.background_id = s.at("background").get<std::string>();
      for (const auto& jp : s.at("pastes")) {
        p.pastes.push_back({jp.at("source").get<std::string>(), jp.at("healthy").get<std::string>(),
                            rect_from_json(jp.at("from")), rect_from_json(jp.at("to")),
                            jp.at("concept_pixels").get<std::size_t>()});
      }
      bank.positives.push_back(read_png(dir / "positive" / file));
      if (!continuous) bank.negatives.push_back(read_png(dir / "negative" / file));
      bank.provenance.push_back(std::move(p));
    }
    if (continuous) {
      std::ifstream csv(dir / "scores.csv");
      if (!csv) throw FormatError("continuous bank without scores.csv in " + dir.string());
      std::string line;
      std::getline(csv, line);
      std::vector<double> scores;
      while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("malformed scores.csv line '" + line + "'");
        scores.push_back(std::stod(line.substr(comma + 1)));
      }
      if (scores.size() != bank.positives.size()) throw FormatError("scores.csv and provenance.json disagree");
      bank.scores = std::move(scores);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("provenance.json: ") + e.what());
  }
  return bank;
}

}  // namespace lcrreg
