#pragma once

// Domain model shared by every stage: source pairs, grounded objects,
// attribute specs, augmented examples and their hard-negative pairing.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace biaug {

struct CaptionImagePair {
  std::string id;
  std::string caption;
  std::string image_ref;

  bool operator==(const CaptionImagePair&) const = default;
};

/// Axis-aligned pixel rectangle. Construction enforces w > 0 and h > 0.
class BoundingBox {
 public:
  BoundingBox(std::int32_t x, std::int32_t y, std::int32_t w, std::int32_t h);

  std::int32_t x() const noexcept { return x_; }
  std::int32_t y() const noexcept { return y_; }
  std::int32_t w() const noexcept { return w_; }
  std::int32_t h() const noexcept { return h_; }
  std::int32_t right() const noexcept { return x_ + w_; }
  std::int32_t bottom() const noexcept { return y_ + h_; }
  std::int64_t area() const noexcept {
    return static_cast<std::int64_t>(w_) * static_cast<std::int64_t>(h_);
  }
  bool within(std::int32_t image_width, std::int32_t image_height) const noexcept {
    return x_ >= 0 && y_ >= 0 && right() <= image_width && bottom() <= image_height;
  }
  std::array<std::int32_t, 4> as_array() const noexcept { return {x_, y_, w_, h_}; }

  bool operator==(const BoundingBox&) const = default;

 private:
  std::int32_t x_, y_, w_, h_;
};

std::int64_t intersection_area(const BoundingBox& a, const BoundingBox& b) noexcept;

struct DetectedObject {
  std::string source_id;
  std::string name;
  BoundingBox box;
  double confidence = 0.0;

  bool operator==(const DetectedObject&) const = default;
};

enum class AttributeCategory { color, shape, material, other };

inline constexpr std::array<AttributeCategory, 4> kAllCategories = {
    AttributeCategory::color, AttributeCategory::shape, AttributeCategory::material,
    AttributeCategory::other};

std::string_view to_string(AttributeCategory c) noexcept;
std::optional<AttributeCategory> parse_category(std::string_view s) noexcept;

struct AttributeSpec {
  std::string source_id;
  std::string object_name;
  AttributeCategory category = AttributeCategory::color;
  std::string positive_desc;
  std::string negative_desc;

  bool operator==(const AttributeSpec&) const = default;
};

enum class Side { positive, negative };
enum class Provenance { synthesized, source };

std::string_view to_string(Side s) noexcept;
std::string_view to_string(Provenance p) noexcept;
std::optional<Side> parse_side(std::string_view s) noexcept;
std::optional<Provenance> parse_provenance(std::string_view s) noexcept;
inline Side opposite(Side s) noexcept {
  return s == Side::positive ? Side::negative : Side::positive;
}

/// One training record. Source-provenance records carry no object, category,
/// side or pair linkage.
struct AugmentedExample {
  std::string example_id;
  std::string source_id;
  std::string object_name;
  std::optional<AttributeCategory> category;
  std::optional<Side> side;
  std::string caption;
  std::string image_ref;
  std::string pair_id;
  Provenance provenance = Provenance::synthesized;

  bool operator==(const AugmentedExample&) const = default;
};

struct HardNegativePair {
  std::string pair_id;
  std::string positive_example_id;
  std::string negative_example_id;

  bool operator==(const HardNegativePair&) const = default;
};

// Identifier discipline.
std::string make_pair_id(std::string_view source_id, std::string_view object_name,
                         AttributeCategory category);
std::string make_example_id(std::string_view pair_id, Side side);
std::string make_source_example_id(std::string_view source_id);

/// Wraps a source pair as a provenance=source training record.
AugmentedExample as_source_example(const CaptionImagePair& pair);

// Invariant checks. Each returns the first violated invariant, or nullopt.
std::optional<std::string> check_invariants(const CaptionImagePair& r);
std::optional<std::string> check_invariants(const DetectedObject& r);
std::optional<std::string> check_invariants(const AttributeSpec& r);
std::optional<std::string> check_invariants(const AugmentedExample& r);
std::optional<std::string> check_invariants(const HardNegativePair& r);

/// Groups synthesized examples by pair_id and emits one pair per complete
/// group, sorted by pair_id. Orphans are skipped without error.
/// Throws PairingConflict when a pair_id groups more than two examples or
/// two examples that cannot be counterparts.
std::vector<HardNegativePair> build_pairs(const std::vector<AugmentedExample>& examples);

// Text helpers shared by the augmentation and evaluation stages.
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_words(std::string_view s);
std::string join_words(const std::vector<std::string>& words);
/// Lowercases and strips leading/trailing punctuation, for word matching.
std::string normalize_token(std::string_view word);
/// Index of the first whole-word occurrence of phrase in words (normalized
/// comparison), searching from `from`.
std::optional<std::size_t> find_phrase(const std::vector<std::string>& words,
                                       const std::vector<std::string>& phrase,
                                       std::size_t from = 0);
/// Drops a leading "a", "an" or "the".
std::vector<std::string> strip_article(std::vector<std::string> words);

}  // namespace biaug
