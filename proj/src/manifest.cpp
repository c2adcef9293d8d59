#include "biaug/manifest.hpp"

#include <stdexcept>

namespace biaug {

void require_exact_fields(const json& j, std::initializer_list<std::string_view> fields) {
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  for (auto f : fields) {
    if (!j.contains(f)) throw std::invalid_argument("missing field '" + std::string(f) + "'");
  }
  if (j.size() != fields.size()) {
    for (const auto& [k, v] : j.items()) {
      if (std::find(fields.begin(), fields.end(), k) == fields.end()) {
        throw std::invalid_argument("unknown field '" + k + "'");
      }
    }
  }
}

namespace {

std::string get_string(const json& j, const char* field) {
  const auto& v = j.at(field);
  if (!v.is_string()) throw std::invalid_argument(std::string(field) + " must be a string");
  return v.get<std::string>();
}

}  // namespace

// source.jsonl

std::string ManifestTraits<CaptionImagePair>::key(const CaptionImagePair& r) { return r.id; }

ordered_json ManifestTraits<CaptionImagePair>::to_json(const CaptionImagePair& r) {
  return {{"id", r.id}, {"caption", r.caption}, {"image_ref", r.image_ref}};
}

CaptionImagePair ManifestTraits<CaptionImagePair>::from_json(const json& j) {
  require_exact_fields(j, {"id", "caption", "image_ref"});
  return {get_string(j, "id"), get_string(j, "caption"), get_string(j, "image_ref")};
}

// objects.jsonl

std::string ManifestTraits<DetectedObject>::key(const DetectedObject& r) {
  return r.source_id + '\x1f' + r.name;
}

ordered_json ManifestTraits<DetectedObject>::to_json(const DetectedObject& r) {
  return {{"source_id", r.source_id},
          {"name", r.name},
          {"box", r.box.as_array()},
          {"confidence", r.confidence}};
}

DetectedObject ManifestTraits<DetectedObject>::from_json(const json& j) {
  require_exact_fields(j, {"source_id", "name", "box", "confidence"});
  const auto& b = j.at("box");
  if (!b.is_array() || b.size() != 4) throw std::invalid_argument("box must be [x, y, w, h]");
  for (const auto& v : b) {
    if (!v.is_number_integer()) throw std::invalid_argument("box entries must be integers");
  }
  if (!j.at("confidence").is_number()) throw std::invalid_argument("confidence must be a number");
  return {get_string(j, "source_id"), get_string(j, "name"),
          BoundingBox(b[0].get<std::int32_t>(), b[1].get<std::int32_t>(),
                      b[2].get<std::int32_t>(), b[3].get<std::int32_t>()),
          j.at("confidence").get<double>()};
}

// attributes.jsonl

std::string ManifestTraits<AttributeSpec>::key(const AttributeSpec& r) {
  return r.source_id + '\x1f' + r.object_name + '\x1f' + std::string(to_string(r.category));
}

ordered_json ManifestTraits<AttributeSpec>::to_json(const AttributeSpec& r) {
  return {{"source_id", r.source_id},
          {"object_name", r.object_name},
          {"category", to_string(r.category)},
          {"positive_desc", r.positive_desc},
          {"negative_desc", r.negative_desc}};
}

AttributeSpec ManifestTraits<AttributeSpec>::from_json(const json& j) {
  require_exact_fields(j,
                       {"source_id", "object_name", "category", "positive_desc", "negative_desc"});
  auto cat = parse_category(get_string(j, "category"));
  if (!cat) throw std::invalid_argument("unknown category");
  return {get_string(j, "source_id"), get_string(j, "object_name"), *cat,
          get_string(j, "positive_desc"), get_string(j, "negative_desc")};
}

// augmented.jsonl

std::string ManifestTraits<AugmentedExample>::key(const AugmentedExample& r) {
  return r.example_id;
}

ordered_json ManifestTraits<AugmentedExample>::to_json(const AugmentedExample& r) {
  ordered_json j;
  j["example_id"] = r.example_id;
  j["source_id"] = r.source_id;
  j["object_name"] = r.object_name;
  j["category"] = r.category ? ordered_json(to_string(*r.category)) : ordered_json(nullptr);
  j["side"] = r.side ? ordered_json(to_string(*r.side)) : ordered_json(nullptr);
  j["caption"] = r.caption;
  j["image_ref"] = r.image_ref;
  j["pair_id"] = r.pair_id;
  j["provenance"] = to_string(r.provenance);
  return j;
}

AugmentedExample ManifestTraits<AugmentedExample>::from_json(const json& j) {
  require_exact_fields(j, {"example_id", "source_id", "object_name", "category", "side",
                           "caption", "image_ref", "pair_id", "provenance"});
  AugmentedExample r;
  r.example_id = get_string(j, "example_id");
  r.source_id = get_string(j, "source_id");
  r.object_name = get_string(j, "object_name");
  if (!j.at("category").is_null()) {
    r.category = parse_category(get_string(j, "category"));
    if (!r.category) throw std::invalid_argument("unknown category");
  }
  if (!j.at("side").is_null()) {
    r.side = parse_side(get_string(j, "side"));
    if (!r.side) throw std::invalid_argument("unknown side");
  }
  r.caption = get_string(j, "caption");
  r.image_ref = get_string(j, "image_ref");
  r.pair_id = get_string(j, "pair_id");
  auto prov = parse_provenance(get_string(j, "provenance"));
  if (!prov) throw std::invalid_argument("unknown provenance");
  r.provenance = *prov;
  return r;
}

// pairs.jsonl

std::string ManifestTraits<HardNegativePair>::key(const HardNegativePair& r) { return r.pair_id; }

ordered_json ManifestTraits<HardNegativePair>::to_json(const HardNegativePair& r) {
  return {{"pair_id", r.pair_id},
          {"positive_example_id", r.positive_example_id},
          {"negative_example_id", r.negative_example_id}};
}

HardNegativePair ManifestTraits<HardNegativePair>::from_json(const json& j) {
  require_exact_fields(j, {"pair_id", "positive_example_id", "negative_example_id"});
  return {get_string(j, "pair_id"), get_string(j, "positive_example_id"),
          get_string(j, "negative_example_id")};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<ManifestKind> parse_manifest_kind(std::string_view s) noexcept {
  if (s == "source") return ManifestKind::source;
  if (s == "objects") return ManifestKind::objects;
  if (s == "attributes") return ManifestKind::attributes;
  if (s == "augmented") return ManifestKind::augmented;
  if (s == "pairs") return ManifestKind::pairs;
  return std::nullopt;
}

std::size_t validate_manifest_file(const std::filesystem::path& path, ManifestKind kind) {
  switch (kind) {
    case ManifestKind::source: return read_manifest<CaptionImagePair>(path).size();
    case ManifestKind::objects: return read_manifest<DetectedObject>(path).size();
    case ManifestKind::attributes: return read_manifest<AttributeSpec>(path).size();
    case ManifestKind::augmented: return read_manifest<AugmentedExample>(path).size();
    case ManifestKind::pairs: return read_manifest<HardNegativePair>(path).size();
  }
  return 0;
}

}  // namespace biaug
