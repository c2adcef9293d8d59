#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "biaug/core.hpp"
#include "json.hpp"

namespace biaug {

struct FilterConfig {
  double area_overlap_threshold = 0.7;  // (0, 1]
  double confidence_threshold = 0.9;    // [0, 1]
  bool confidence_filter_enabled = true;

  /// Throws ConfigInvalid.
  void validate() const;
};

/// Removes X when some other object Y of the same image satisfies
/// area(X ∩ Y) / area(Y) > threshold. Every object is judged against the
/// original set, so the result does not depend on input order and two
/// objects that cover each other are both removed. Input order is preserved.
std::vector<DetectedObject> area_overlap_filter(const std::vector<DetectedObject>& objects,
                                                double threshold);

/// area_overlap_filter applied to each source_id group separately.
std::vector<DetectedObject> area_overlap_filter_by_source(
    const std::vector<DetectedObject>& objects, double threshold);

/// Keeps objects with confidence strictly greater than the threshold.
std::vector<DetectedObject> confidence_filter(const std::vector<DetectedObject>& objects,
                                              double threshold);

/// Example-level confidence filter: keeps synthesized examples whose object
/// (looked up by source_id and name) passes confidence_filter. Source
/// examples pass through. Throws InconsistentManifests for an example whose
/// object is unknown.
std::vector<AugmentedExample> confidence_filter_examples(
    const std::vector<AugmentedExample>& examples, const std::vector<DetectedObject>& objects,
    double threshold);

/// Training manifest: augmented examples, plus the sources as
/// provenance=source records when include_raw. Sorted by example_id.
std::vector<AugmentedExample> assemble_dataset(const std::vector<AugmentedExample>& augmented,
                                               const std::vector<CaptionImagePair>& sources,
                                               bool include_raw);

struct DatasetStats {
  std::uint64_t n_source = 0;
  std::uint64_t n_objects = 0;
  std::uint64_t n_augmented = 0;
  std::uint64_t n_augmented_filtered = 0;
  std::uint64_t n_pairs = 0;
  std::uint64_t n_pairs_filtered = 0;

  bool operator==(const DatasetStats&) const = default;

  std::optional<std::string> check_invariants() const;
  nlohmann::ordered_json to_json() const;
  static DatasetStats from_json(const nlohmann::json& j);
};

struct StatsInputs {
  std::vector<CaptionImagePair> sources;
  std::vector<DetectedObject> objects;
  std::vector<AugmentedExample> augmented;
  std::vector<AugmentedExample> augmented_filtered;
  std::vector<HardNegativePair> pairs;
  std::vector<HardNegativePair> pairs_filtered;
};

/// Counts per manifest, after checking that the manifests agree with each
/// other. Throws InconsistentManifests.
DatasetStats compute_stats(const StatsInputs& inputs);

/// Sums a counts-only ledger: one JSON object per line carrying the six
/// DatasetStats fields and an optional "shard" label. Each line must satisfy
/// the DatasetStats invariants.
DatasetStats compute_stats_from_ledger(const std::filesystem::path& path);

void write_stats(const DatasetStats& stats, const std::filesystem::path& path);

}  // namespace biaug
