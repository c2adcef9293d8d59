#include "biaug/core.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

#include "biaug/error.hpp"
#include "biaug/hash.hpp"

namespace biaug {

BoundingBox::BoundingBox(std::int32_t x, std::int32_t y, std::int32_t w, std::int32_t h)
    : x_(x), y_(y), w_(w), h_(h) {
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument("bounding box must have positive width and height");
  }
}

std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept {
  const std::int64_t w =
      std::int64_t{std::min(a.right(), b.right())} - std::max(a.x(), b.x());
  const std::int64_t h =
      std::int64_t{std::min(a.bottom(), b.bottom())} - std::max(a.y(), b.y());
  return (w > 0 && h > 0) ? w * h : 0;
}

std::string_view to_string(AttributeCategory c) noexcept {
  switch (c) {
    case AttributeCategory::color: return "color";
    case AttributeCategory::shape: return "shape";
    case AttributeCategory::material: return "material";
    case AttributeCategory::other: return "other";
  }
  return "other";
}

std::optional<AttributeCategory> parse_category(std::string_view s) noexcept {
  for (auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::string_view to_string(Side s) noexcept {
  return s == Side::positive ? "positive" : "negative";
}

std::string_view to_string(Provenance p) noexcept {
  return p == Provenance::synthesized ? "synthesized" : "source";
}

std::optional<Side> parse_side(std::string_view s) noexcept {
  if (s == "positive") return Side::positive;
  if (s == "negative") return Side::negative;
  return std::nullopt;
}

std::optional<Provenance> parse_provenance(std::string_view s) noexcept {
  if (s == "synthesized") return Provenance::synthesized;
  if (s == "source") return Provenance::source;
  return std::nullopt;
}

std::string make_pair_id(std::string_view source_id, std::string_view object_name,
                         AttributeCategory category) {
  return hex64(hash_fields(source_id, object_name, to_string(category)));
}

std::string make_example_id(std::string_view pair_id, Side side) {
  std::string id(pair_id);
  id += '/';
  id += to_string(side);
  return id;
}

std::string make_source_example_id(std::string_view source_id) {
  return "source/" + std::string(source_id);
}

AugmentedExample as_source_example(const CaptionImagePair& pair) {
  AugmentedExample ex;
  ex.example_id = make_source_example_id(pair.id);
  ex.source_id = pair.id;
  ex.caption = pair.caption;
  ex.image_ref = pair.image_ref;
  ex.provenance = Provenance::source;
  return ex;
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string normalize_token(std::string_view word) {
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (!word.empty() && is_punct(word.front())) word.remove_prefix(1);
  while (!word.empty() && is_punct(word.back())) word.remove_suffix(1);
  return to_lower(word);
}

std::optional<std::size_t> find_phrase(const std::vector<std::string>& words,
                                       const std::vector<std::string>& phrase,
                                       std::size_t from) {
  if (phrase.empty() || words.size() < phrase.size()) return std::nullopt;
  for (std::size_t i = from; i + phrase.size() <= words.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < phrase.size() && match; ++k) {
      match = normalize_token(words[i + k]) == normalize_token(phrase[k]);
    }
    if (match) return i;
  }
  return std::nullopt;
}

std::vector<std::string> strip_article(std::vector<std::string> words) {
  if (!words.empty()) {
    const auto first = normalize_token(words.front());
    if (first == "a" || first == "an" || first == "the") words.erase(words.begin());
  }
  return words;
}

namespace {

std::string head_noun(std::string_view name) {
  auto words = split_words(name);
  return words.empty() ? std::string() : to_lower(words.back());
}

}  // namespace

std::optional<std::string> check_invariants(const CaptionImagePair& r) {
  if (r.id.empty()) return "id must be non-empty";
  if (trim(r.caption).empty()) return "caption must be non-empty";
  if (r.image_ref.empty()) return "image_ref must be non-empty";
  return std::nullopt;
}

std::optional<std::string> check_invariants(const DetectedObject& r) {
  if (r.source_id.empty()) return "source_id must be non-empty";
  if (trim(r.name).empty()) return "name must be non-empty";
  if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) return "confidence must lie in [0,1]";
  return std::nullopt;
}

std::optional<std::string> check_invariants(const AttributeSpec& r) {
  if (r.source_id.empty()) return "source_id must be non-empty";
  if (trim(r.object_name).empty()) return "object_name must be non-empty";
  const auto pos = to_lower(trim(r.positive_desc));
  const auto neg = to_lower(trim(r.negative_desc));
  if (pos.empty() || neg.empty()) return "descriptions must be non-empty";
  if (pos == neg) return "positive_desc must differ from negative_desc";
  const auto head = head_noun(r.object_name);
  if (pos.find(head) == std::string::npos || neg.find(head) == std::string::npos) {
    return "descriptions must mention the object '" + head + "'";
  }
  return std::nullopt;
}

std::optional<std::string> check_invariants(const AugmentedExample& r) {
  if (r.example_id.empty()) return "example_id must be non-empty";
  if (r.source_id.empty()) return "source_id must be non-empty";
  if (trim(r.caption).empty()) return "caption must be non-empty";
  if (r.image_ref.empty()) return "image_ref must be non-empty";
  if (r.provenance == Provenance::synthesized) {
    if (r.pair_id.empty()) return "synthesized example requires a pair_id";
    if (r.object_name.empty()) return "synthesized example requires an object_name";
    if (!r.category) return "synthesized example requires a category";
    if (!r.side) return "synthesized example requires a side";
  } else if (!r.pair_id.empty()) {
    return "source example must not carry a pair_id";
  }
  return std::nullopt;
}

std::optional<std::string> check_invariants(const HardNegativePair& r) {
  if (r.pair_id.empty()) return "pair_id must be non-empty";
  if (r.positive_example_id.empty() || r.negative_example_id.empty()) {
    return "both example ids must be non-empty";
  }
  if (r.positive_example_id == r.negative_example_id) return "example ids must differ";
  return std::nullopt;
}

std::vector<HardNegativePair> build_pairs(const std::vector<AugmentedExample>& examples) {
  std::map<std::string, std::vector<const AugmentedExample*>> groups;
  for (const auto& ex : examples) {
    if (ex.provenance != Provenance::synthesized || ex.pair_id.empty()) continue;
    groups[ex.pair_id].push_back(&ex);
  }

  std::vector<HardNegativePair> pairs;
  for (const auto& [pair_id, members] : groups) {
    if (members.size() > 2) {
      throw PairingConflict("pair_id " + pair_id + " groups " +
                            std::to_string(members.size()) + " examples");
    }
    if (members.size() < 2) continue;
    const auto& a = *members[0];
    const auto& b = *members[1];
    if (a.source_id != b.source_id || a.object_name != b.object_name ||
        a.category != b.category) {
      throw PairingConflict("pair_id " + pair_id +
                            " links examples of different (source, object, category)");
    }
    if (!a.side || !b.side || *a.side == *b.side) {
      throw PairingConflict("pair_id " + pair_id + " needs one positive and one negative");
    }
    const auto& pos = *a.side == Side::positive ? a : b;
    const auto& neg = *a.side == Side::positive ? b : a;
    pairs.push_back({pair_id, pos.example_id, neg.example_id});
  }
  return pairs;
}

}  // namespace biaug
