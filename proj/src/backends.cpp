#include "biaug/backends.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "biaug/error.hpp"
#include "biaug/hash.hpp"

namespace biaug {

void validate(const TextGenRequest& req) {
  if (trim(req.prompt).empty()) throw std::invalid_argument("prompt must be non-empty");
  if (!(req.temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
}

void validate(const DetectionRequest& req) {
  if (req.image_ref.empty()) throw std::invalid_argument("image_ref must be non-empty");
  if (req.candidate_names.empty()) {
    throw std::invalid_argument("candidate list must be non-empty");
  }
}

void validate(const EmbeddingRequest& req) {
  if (req.payload.empty()) throw std::invalid_argument("embedding payload must be non-empty");
}

namespace {

struct PromptFields {
  std::optional<std::string> caption, object, description;
};

std::optional<std::string> field_value(const std::string& line, std::string_view label) {
  auto t = trim(line);
  if (t.rfind(label, 0) != 0) return std::nullopt;
  return trim(std::string_view(t).substr(label.size()));
}

PromptFields parse_prompt(const std::string& prompt) {
  std::vector<std::string> lines;
  std::istringstream in(prompt);
  for (std::string line; std::getline(in, line);) lines.push_back(line);

  PromptFields f;
  std::size_t start = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (auto v = field_value(lines[i], kCaptionLabel)) {
      f.caption = v;
      start = i;
      break;
    }
  }
  for (std::size_t i = start + 1; i < lines.size(); ++i) {
    if (auto v = field_value(lines[i], kObjectLabel)) f.object = v;
    if (auto v = field_value(lines[i], kDescriptionLabel)) f.description = v;
  }
  return f;
}

std::string with_article(const std::string& word, const std::string& noun) {
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word.front())));
  const bool vowel = c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  return std::string(vowel ? "an " : "a ") + word + " " + noun;
}

bool contains_any(const std::string& text, const std::vector<std::string>& needles) {
  return std::any_of(needles.begin(), needles.end(), [&](const std::string& n) {
    return !n.empty() && text.find(n) != std::string::npos;
  });
}

}  // namespace

MockTextGenerator::MockTextGenerator(MockLlmConfig config) : config_(std::move(config)) {
  auto add = [&](const std::vector<std::string>& words) {
    for (const auto& w : words) {
      for (const auto& t : split_words(w)) attribute_vocabulary_.insert(normalize_token(t));
    }
  };
  for (const auto& [cat, words] : config_.attribute_words) add(words);
  for (const auto& [obj, cats] : config_.object_attribute_words) {
    for (const auto& [cat, words] : cats) add(words);
  }
}

std::string MockTextGenerator::generate_text(const TextGenRequest& req) {
  validate(req);
  if (contains_any(req.prompt, config_.fail_on)) {
    throw BackendUnavailable("mock generator configured to fail for this prompt");
  }
  const auto fields = parse_prompt(req.prompt);
  if (!fields.caption) throw EmptyResponse("mock generator found no caption in prompt");
  if (fields.object && fields.description) {
    return rewrite(*fields.caption, *fields.object, *fields.description);
  }
  if (fields.object) {
    auto out = decouple(*fields.caption, *fields.object, req.seed);
    if (out.empty()) return "none";
    return out;
  }
  auto out = extract(*fields.caption);
  if (out.empty()) return "none";
  return out;
}

std::string MockTextGenerator::extract(const std::string& caption) const {
  const auto words = split_words(caption);
  struct Hit {
    std::size_t pos, len;
    const std::string* noun;
  };
  std::vector<Hit> hits;
  for (const auto& noun : config_.lexicon) {
    const auto phrase = split_words(noun);
    if (auto pos = find_phrase(words, phrase)) hits.push_back({*pos, phrase.size(), &noun});
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.len > b.len;
  });

  std::vector<std::string> out;
  std::size_t covered_until = 0;
  for (const auto& h : hits) {
    if (h.pos < covered_until) continue;  // inside a longer match, e.g. "ball" in "tennis ball"
    out.push_back(*h.noun);
    covered_until = h.pos + h.len;
  }
  const auto present = out;
  auto add_implied = [&](const std::string& key) {
    auto it = config_.scene_implied.find(key);
    if (it == config_.scene_implied.end()) return;
    for (const auto& implied : it->second) {
      if (std::find(out.begin(), out.end(), implied) == out.end()) out.push_back(implied);
    }
  };
  for (const auto& noun : present) add_implied(noun);
  add_implied("*");

  std::string text;
  for (const auto& n : out) {
    if (!text.empty()) text += ", ";
    text += n;
  }
  return text;
}

std::string MockTextGenerator::decouple(const std::string& caption, const std::string& object,
                                        std::int64_t seed) const {
  const auto caption_words = split_words(caption);
  const auto override_it = config_.object_attribute_words.find(object);

  std::string out;
  for (auto cat : kAllCategories) {
    const std::vector<std::string>* words = nullptr;
    if (override_it != config_.object_attribute_words.end()) {
      if (auto it = override_it->second.find(cat); it != override_it->second.end()) {
        words = &it->second;
      }
    }
    if (!words) {
      if (auto it = config_.attribute_words.find(cat); it != config_.attribute_words.end()) {
        words = &it->second;
      }
    }
    if (!words) continue;

    // Words already in the caption would not change it.
    std::vector<std::string> usable;
    for (const auto& w : *words) {
      if (!find_phrase(caption_words, split_words(w)) &&
          std::find(usable.begin(), usable.end(), w) == usable.end()) {
        usable.push_back(w);
      }
    }
    if (usable.size() < 2) continue;
    const auto n = static_cast<std::int64_t>(usable.size());
    const auto start = static_cast<std::size_t>(((seed % n) + n) % n);
    const auto& pos = usable[start];
    const auto& neg = usable[(start + 1) % usable.size()];
    out += std::string(to_string(cat)) + ": " + with_article(pos, object) + " | " +
           with_article(neg, object) + "\n";
  }
  return out;
}

std::string MockTextGenerator::rewrite(const std::string& caption, const std::string& object_name,
                                       const std::string& description) const {
  auto words = split_words(caption);
  const auto phrase = strip_article(split_words(description));
  if (find_phrase(words, phrase)) return caption;

  const auto object_words = split_words(object_name);
  const auto pos = find_phrase(words, object_words);
  if (!pos) return caption + " with " + description;

  std::set<std::string> absorbable = attribute_vocabulary_;
  for (const auto& w : phrase) absorbable.insert(normalize_token(w));
  for (const auto& w : object_words) absorbable.erase(normalize_token(w));

  std::size_t begin = *pos;
  while (begin > 0 && absorbable.count(normalize_token(words[begin - 1])) != 0) --begin;
  const std::size_t end = *pos + object_words.size();

  // Keep punctuation trailing the replaced object mention, e.g. "table.".
  const auto& last = words[end - 1];
  std::string trailing;
  for (auto i = last.size(); i-- > 0 && std::ispunct(static_cast<unsigned char>(last[i]));) {
    trailing.insert(trailing.begin(), last[i]);
  }

  std::vector<std::string> replacement = phrase;
  if (!replacement.empty()) replacement.back() += trailing;
  words.erase(words.begin() + static_cast<std::ptrdiff_t>(begin),
              words.begin() + static_cast<std::ptrdiff_t>(end));
  words.insert(words.begin() + static_cast<std::ptrdiff_t>(begin), replacement.begin(),
               replacement.end());
  return join_words(words);
}

MockDetector::MockDetector(std::map<std::string, std::vector<SceneObject>> scenes,
                           ImageResolver resolver)
    : scenes_(std::move(scenes)), resolver_(std::move(resolver)) {}

std::vector<Detection> MockDetector::detect(const DetectionRequest& req) {
  validate(req);
  const auto image = resolver_.load(req.image_ref);
  std::vector<Detection> out;
  auto it = scenes_.find(req.image_ref);
  if (it == scenes_.end()) return out;
  const double image_area = static_cast<double>(image.width) * image.height;
  for (const auto& candidate : req.candidate_names) {
    const auto wanted = to_lower(trim(candidate));
    for (const auto& obj : it->second) {
      if (to_lower(obj.name) != wanted) continue;
      const auto x0 = std::max(obj.box.x(), 0);
      const auto y0 = std::max(obj.box.y(), 0);
      const auto x1 = std::min(obj.box.right(), image.width);
      const auto y1 = std::min(obj.box.bottom(), image.height);
      if (x1 <= x0 || y1 <= y0) continue;
      BoundingBox box(x0, y0, x1 - x0, y1 - y0);
      const double conf = 0.5 + 0.5 * static_cast<double>(box.area()) / image_area;
      out.push_back({candidate, box, conf});
      break;
    }
  }
  return out;
}

Rgb prompt_color(std::string_view prompt) noexcept {
  const auto h = fnv1a64(prompt) & 0xFFFFFFULL;
  return {static_cast<std::uint8_t>((h >> 16) & 0xFF), static_cast<std::uint8_t>((h >> 8) & 0xFF),
          static_cast<std::uint8_t>(h & 0xFF)};
}

MockInpainter::MockInpainter(ImageResolver resolver, std::filesystem::path output_root,
                             std::vector<std::string> fail_on)
    : resolver_(std::move(resolver)),
      output_root_(std::move(output_root)),
      fail_on_(std::move(fail_on)) {}

std::string MockInpainter::inpaint(const InpaintRequest& req) {
  if (contains_any(req.prompt, fail_on_)) {
    throw BackendUnavailable("mock inpainter configured to fail for this prompt");
  }
  auto image = resolver_.load(req.image_ref);
  if (!req.mask.within(image.width, image.height)) {
    throw MaskOutOfBounds("mask exceeds image bounds for " + req.image_ref);
  }
  image.fill(req.mask, prompt_color(req.prompt));
  const auto m = req.mask.as_array();
  const auto mask_text = std::to_string(m[0]) + "," + std::to_string(m[1]) + "," +
                         std::to_string(m[2]) + "," + std::to_string(m[3]);
  const auto ref = "synth/" + hex64(hash_fields(req.image_ref, mask_text, req.prompt)) + ".ppm";
  write_ppm(image, output_root_ / ref);
  return ref;
}

}  // namespace biaug
