#pragma once

// Line-delimited JSON manifests. One record per line, UTF-8, field names
// fixed per schema. Writers sort by record key so output is byte-stable.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "biaug/core.hpp"
#include "biaug/error.hpp"
#include "json.hpp"

namespace biaug {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

template <class T>
struct ManifestTraits;

#define BIAUG_DECLARE_MANIFEST(Type, Kind)                         \
  template <>                                                      \
  struct ManifestTraits<Type> {                                    \
    static constexpr std::string_view kind = Kind;                 \
    static std::string key(const Type& r);                         \
    static ordered_json to_json(const Type& r);                    \
    static Type from_json(const json& j);                          \
    static std::optional<std::string> check(const Type& r) {       \
      return check_invariants(r);                                  \
    }                                                              \
  };

BIAUG_DECLARE_MANIFEST(CaptionImagePair, "source")
BIAUG_DECLARE_MANIFEST(DetectedObject, "objects")
BIAUG_DECLARE_MANIFEST(AttributeSpec, "attributes")
BIAUG_DECLARE_MANIFEST(AugmentedExample, "augmented")
BIAUG_DECLARE_MANIFEST(HardNegativePair, "pairs")

/// Strict field access used by every from_json: the object must carry exactly
/// the named fields.
void require_exact_fields(const json& j, std::initializer_list<std::string_view> fields);

template <class T>
std::vector<T> parse_manifest(std::istream& in) {
  using Traits = ManifestTraits<T>;
  std::vector<T> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    T record = [&] {
      try {
        return Traits::from_json(json::parse(line));
      } catch (const json::exception& e) {
        throw MalformedRecord(line_no, e.what());
      } catch (const std::invalid_argument& e) {
        throw MalformedRecord(line_no, e.what());
      }
    }();
    if (auto bad = Traits::check(record)) throw MalformedRecord(line_no, *bad);
    auto key = Traits::key(record);
    if (!seen.insert(key).second) throw DuplicateId(key);
    records.push_back(std::move(record));
  }
  return records;
}

/// Reads a manifest in file order. Throws MissingInput, MalformedRecord or
/// DuplicateId.
template <class T>
std::vector<T> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  return parse_manifest<T>(in);
}

template <class T>
std::string serialize_manifest(std::vector<T> records) {
  using Traits = ManifestTraits<T>;
  for (const auto& r : records) {
    if (auto bad = Traits::check(r)) throw InvariantViolation(Traits::key(r), *bad);
  }
  std::stable_sort(records.begin(), records.end(), [](const T& a, const T& b) {
    return Traits::key(a) < Traits::key(b);
  });
  std::string out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && Traits::key(records[i - 1]) == Traits::key(records[i])) {
      throw DuplicateId(Traits::key(records[i]));
    }
    out += Traits::to_json(records[i]).dump();
    out += '\n';
  }
  return out;
}

/// Writes a file atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Validates, sorts by key and writes. Returns the number of records written.
template <class T>
std::size_t write_manifest(std::vector<T> records, const std::filesystem::path& path) {
  const auto n = records.size();
  write_file_atomic(path, serialize_manifest(std::move(records)));
  return n;
}

enum class ManifestKind { source, objects, attributes, augmented, pairs };

std::optional<ManifestKind> parse_manifest_kind(std::string_view s) noexcept;

/// Schema check of a manifest file; returns the record count or throws.
std::size_t validate_manifest_file(const std::filesystem::path& path, ManifestKind kind);

}  // namespace biaug
