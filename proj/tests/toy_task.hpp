#pragma once

// Seeded separable toy task for the training-direction check. A scene is an
// object (its own image region) over a two-band background; each scene is
// used by exactly one pair, rendered with two object colours whose captions
// differ only in the colour word. Pair members differ only in colour, while
// any two examples from different pairs already differ in scene.

#include <algorithm>
#include <array>
#include <random>
#include <string>
#include <vector>

#include "biaug/image.hpp"
#include "biaug/toy_encoder.hpp"
#include "biaug/train.hpp"

namespace toy {

inline constexpr std::int32_t kImageSize = 32;
inline constexpr std::array<const char*, 9> kObjects{"dog",   "cat",  "boat", "car", "ball",
                                                     "chair", "bird", "cup",  "kite"};
inline constexpr std::array<const char*, 4> kGrounds{"grass", "sand", "snow", "water"};
inline constexpr std::array<biaug::Rgb, 4> kGroundRgb{
    biaug::Rgb{60, 150, 60}, biaug::Rgb{210, 190, 140}, biaug::Rgb{235, 235, 240},
    biaug::Rgb{40, 80, 170}};
inline constexpr std::array<const char*, 4> kSkies{"noon", "dusk", "night", "fog"};
inline constexpr std::array<biaug::Rgb, 4> kSkyRgb{
    biaug::Rgb{135, 190, 235}, biaug::Rgb{230, 150, 170}, biaug::Rgb{20, 20, 70},
    biaug::Rgb{128, 128, 128}};
inline constexpr std::array<const char*, 2> kColors{"red", "blue"};
inline constexpr std::array<biaug::Rgb, 2> kColorRgb{biaug::Rgb{200, 80, 80}, biaug::Rgb{80, 80, 200}};

struct Example {
  std::string caption;
  biaug::Image image;
  std::size_t counterpart = biaug::kNoCounterpart;
};

struct Task {
  std::vector<Example> train;
  std::vector<Example> held_out;  // examples 2i and 2i+1 form a pair
};

// Raw examples follow a reporting bias: the object's colour is fixed by the
// ground (red on grass and sand, blue on snow and water). Each pair shows
// one scene in both colours and so contradicts the bias.
inline Task make_task(std::size_t raw, std::size_t train_pairs, std::uint64_t seed) {
  struct Scene {
    std::size_t object, ground, sky;
  };
  std::vector<Scene> scenes;
  for (std::size_t o = 0; o < kObjects.size(); ++o) {
    for (std::size_t g = 0; g < kGrounds.size(); ++g) {
      for (std::size_t s = 0; s < kSkies.size(); ++s) scenes.push_back({o, g, s});
    }
  }
  if (train_pairs >= scenes.size()) throw std::invalid_argument("not enough toy scenes");
  std::mt19937_64 rng(seed);
  for (std::size_t i = scenes.size() - 1; i > 0; --i) {
    std::swap(scenes[i], scenes[static_cast<std::size_t>(rng() % (i + 1))]);
  }

  const std::int32_t cell = kImageSize / 4;
  auto render = [&](const Scene& sc, std::size_t c) {
    biaug::Image img(kImageSize, kImageSize, kGroundRgb[sc.ground]);
    img.fill(biaug::BoundingBox(0, 0, kImageSize, kImageSize / 2), kSkyRgb[sc.sky]);
    const auto cx = static_cast<std::int32_t>(sc.object % 3) * cell;
    const auto cy = static_cast<std::int32_t>(sc.object / 3) * cell;
    img.fill(biaug::BoundingBox(cx, cy, 2 * cell, 2 * cell), kColorRgb[c]);
    return Example{std::string(kColors[c]) + " " + kObjects[sc.object] + " " +
                       kGrounds[sc.ground] + " " + kSkies[sc.sky],
                   std::move(img)};
  };

  Task task;
  for (std::size_t i = 0; i < raw; ++i) {
    const auto& sc = scenes[static_cast<std::size_t>(rng() % scenes.size())];
    task.train.push_back(render(sc, sc.ground < 2 ? 0 : 1));
  }
  for (std::size_t p = 0; p < scenes.size(); ++p) {
    auto& out = p < train_pairs ? task.train : task.held_out;
    const auto first = out.size();
    out.push_back(render(scenes[p], 0));
    out.push_back(render(scenes[p], 1));
    out[first].counterpart = first + 1;
    out[first + 1].counterpart = first;
  }
  return task;
}

inline biaug::TrainingData features(const std::vector<Example>& examples,
                                    const biaug::ToyEncoder& encoder) {
  biaug::TrainingData d;
  const auto n = static_cast<Eigen::Index>(examples.size());
  d.text_features.resize(n, encoder.text_features(examples[0].caption).size());
  d.image_features.resize(n, encoder.image_features(examples[0].image).size());
  for (Eigen::Index i = 0; i < n; ++i) {
    d.text_features.row(i) = encoder.text_features(examples[i].caption).transpose();
    d.image_features.row(i) = encoder.image_features(examples[i].image).transpose();
    d.example_ids.push_back(std::to_string(i));
    d.counterparts.push_back(examples[i].counterpart);
  }
  return d;
}

// Fraction of (image, own caption, counterpart caption) decisions won
// strictly by the own caption.
inline double hard_negative_accuracy(const biaug::TrainingData& d,
                                     const biaug::ToyEncoder& encoder) {
  auto rows = [](Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
    return m;
  };
  const auto t = rows(d.text_features * encoder.text_weights().transpose());
  const auto v = rows(d.image_features * encoder.image_weights().transpose());
  std::size_t correct = 0, decisions = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    const auto cp = d.counterparts[static_cast<std::size_t>(i)];
    if (cp == biaug::kNoCounterpart) continue;
    const auto j = static_cast<Eigen::Index>(cp);
    ++decisions;
    if (v.row(i).dot(t.row(i)) > v.row(i).dot(t.row(j))) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(decisions);
}

}  // namespace toy
