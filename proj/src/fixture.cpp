#include "biaug/fixture.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <string>
#include <vector>

#include "biaug/core.hpp"
#include "biaug/eval.hpp"
#include "biaug/hash.hpp"
#include "biaug/image.hpp"
#include "biaug/manifest.hpp"

namespace biaug {

namespace {

namespace fs = std::filesystem;

struct Scene {
  const char* word;
  Rgb background;
  const char* implied;  // object the mock LLM infers from the scene word, or null
};

constexpr std::array kScenes{
    Scene{"park", {70, 140, 60}, "tree"},      Scene{"kitchen", {200, 190, 170}, "plate"},
    Scene{"street", {110, 110, 115}, nullptr}, Scene{"harbor", {60, 90, 150}, nullptr},
    Scene{"garden", {90, 160, 80}, nullptr},
};

constexpr std::array kObjects{"dog", "cat", "boat", "car", "ball", "chair", "bird", "house", "table"};
constexpr std::array kVerbs{"next to", "near", "behind", "beside"};
constexpr std::array kColors{"red", "blue", "green", "yellow", "black", "white"};

Rgb object_color(std::string_view name) {
  const auto h = fnv1a64(name);
  return {static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
          static_cast<std::uint8_t>(h >> 16)};
}

std::string article(std::string_view word) {
  return std::string_view("aeiou").find(word.front()) != std::string_view::npos ? "an" : "a";
}

struct Placed {
  std::string name;
  BoundingBox box;
};

}  // namespace

fs::path make_mock_fixture(const fs::path& dir, const FixtureOptions& options) {
  if (options.count == 0) throw std::invalid_argument("fixture count must be positive");
  if (options.image_size < 16) throw std::invalid_argument("fixture images must be >= 16 px");
  std::mt19937_64 rng(options.seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  const auto size = options.image_size;
  const auto span = [&](std::int32_t lo, std::int32_t hi) {
    return lo + static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };

  fs::create_directories(dir / "images");
  std::vector<CaptionImagePair> sources;
  std::vector<ChoiceTask> tasks;
  ordered_json scenes_out = ordered_json::array();
  std::string retrieval;

  for (std::size_t i = 0; i < options.count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%03zu", i);
    const auto& scene = kScenes[pick(kScenes.size())];
    const std::string obj1 = kObjects[pick(kObjects.size())];
    std::string obj2 = kObjects[pick(kObjects.size())];
    const bool two = pick(3) != 0 && obj2 != obj1;

    std::string caption;
    if (pick(4) == 0) {
      const std::string color = kColors[pick(kColors.size())];
      caption = article(color) + " " + color + " " + obj1;
    } else {
      caption = article(obj1) + " " + obj1;
    }
    if (two) caption += std::string(" ") + kVerbs[pick(kVerbs.size())] + " " + article(obj2) + " " + obj2;
    caption += std::string(" in the ") + scene.word;

    // A large first object leaves a strip at the bottom for the others and
    // passes the confidence rule; a second object nested inside the first
    // triggers the area rule.
    std::vector<Placed> placed;
    const auto strip = size / 6;
    auto in_strip = [&](const std::string& name) {
      const auto w = span(size / 6, size / 3), h = span(3, strip);
      placed.push_back({name, BoundingBox(span(0, size - w), size - h, w, h)});
    };
    const auto layout = pick(10);
    const bool large = layout < 5;
    if (large) {
      placed.push_back({obj1, BoundingBox(0, 0, size, size - strip)});
    } else {
      const auto w = span(size / 4, size / 2), h = span(size / 4, size / 2);
      placed.push_back({obj1, BoundingBox(span(0, size - w), span(0, size - strip - h), w, h)});
    }
    if (two) {
      const auto outer = placed.front().box;
      if (layout == 9 || (large && pick(4) == 0)) {
        const auto w = std::max(2, outer.w() / 3), h = std::max(2, outer.h() / 3);
        placed.push_back({obj2, BoundingBox(outer.x() + 1, outer.y() + 1, w, h)});
      } else if (large) {
        in_strip(obj2);
      } else {
        const auto w = span(size / 5, size / 3), h = span(size / 5, size / 3);
        placed.push_back({obj2, BoundingBox(span(0, size - w), span(0, size - strip - h), w, h)});
      }
    }
    if (scene.implied) in_strip(scene.implied);

    Image image(size, size, scene.background);
    for (const auto& p : placed) image.fill(p.box, object_color(p.name));
    const std::string image_ref = std::string("images/") + id + ".ppm";
    write_ppm(image, dir / image_ref);

    sources.push_back({id, caption, image_ref});
    ordered_json objects = ordered_json::array();
    for (const auto& p : placed) objects.push_back({{"name", p.name}, {"box", p.box.as_array()}});
    scenes_out.push_back({{"image_ref", image_ref}, {"objects", objects}});
    retrieval += ordered_json{{"image_ref", image_ref}, {"captions", {caption}}}.dump() + "\n";

    const auto mode = i % 2 == 0 ? OrderMode::unigram_shuffle : OrderMode::trigram_shuffle;
    tasks.push_back({image_ref, {caption, make_order_negative(caption, mode, options.seed + i)}, 0,
                     i % 2 == 0 ? "order_unigram" : "order_trigram"});
  }

  write_manifest(sources, dir / "source.jsonl");
  std::string scenes_text;
  for (const auto& s : scenes_out) scenes_text += s.dump() + "\n";
  write_file_atomic(dir / "scenes.jsonl", scenes_text);
  write_file_atomic(dir / "retrieval.jsonl", retrieval);
  write_choice_tasks(tasks, dir / "aro_tasks.jsonl");

  ordered_json config{
      {"source", "source.jsonl"},
      {"images", "."},
      {"out", "out"},
      {"seed", options.seed},
      {"workers", 1},
      {"mock",
       {{"lexicon", {"dog", "cat", "boat", "car", "ball", "chair", "bird", "tree", "house", "table",
                     "plate", "salmon"}},
        {"scene_implied", {{"park", {"tree"}}, {"kitchen", {"plate"}}}},
        {"attribute_words", {{"color", {"red", "blue", "green", "yellow", "black", "white"}}}},
        {"object_attribute_words",
         {{"boat", {{"material", {"wooden", "metal", "plastic"}}}},
          {"car", {{"material", {"metal", "plastic"}}}},
          {"chair", {{"material", {"wooden", "metal", "plastic"}}}},
          {"table", {{"material", {"wooden", "metal"}}, {"shape", {"round", "square"}}}},
          {"ball", {{"shape", {"round", "oval"}}, {"material", {"leather", "plastic"}}}},
          {"salmon", {{"other", {"sliced", "whole"}}}},
          {"dog", {{"other", {"wet", "dry"}}}}}},
        {"scenes", "scenes.jsonl"}}},
      {"eval", {{"aro_tasks", "aro_tasks.jsonl"}, {"retrieval_split", "retrieval.jsonl"}}},
  };
  const auto config_path = dir / "config.json";
  write_file_atomic(config_path, config.dump(2) + "\n");
  return config_path;
}

}  // namespace biaug
