#include "biaug/filter_stats.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "biaug/error.hpp"
#include "biaug/manifest.hpp"

namespace biaug {

void FilterConfig::validate() const {
  if (!(area_overlap_threshold > 0.0 && area_overlap_threshold <= 1.0)) {
    throw ConfigInvalid("area_overlap_threshold", "must lie in (0, 1]");
  }
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) {
    throw ConfigInvalid("confidence_threshold", "must lie in [0, 1]");
  }
}

namespace {

bool covers(std::int64_t intersection, const BoundingBox& covered, double threshold) {
  return static_cast<double>(intersection) / static_cast<double>(covered.area()) > threshold;
}

}  // namespace

std::vector<DetectedObject> area_overlap_filter(const std::vector<DetectedObject>& objects,
                                                double threshold) {
  const auto n = objects.size();
  std::vector<std::size_t> by_x(n);
  std::iota(by_x.begin(), by_x.end(), std::size_t{0});
  std::sort(by_x.begin(), by_x.end(), [&](std::size_t a, std::size_t b) {
    return objects[a].box.x() < objects[b].box.x();
  });

  // Sweep along x: only boxes whose x-extents overlap can intersect.
  std::vector<bool> removed(n, false);
  for (std::size_t a = 0; a < n; ++a) {
    const auto& bi = objects[by_x[a]].box;
    for (std::size_t b = a + 1; b < n && objects[by_x[b]].box.x() < bi.right(); ++b) {
      const auto& bj = objects[by_x[b]].box;
      const auto inter = intersection_area(bi, bj);
      if (inter == 0) continue;
      if (covers(inter, bj, threshold)) removed[by_x[a]] = true;
      if (covers(inter, bi, threshold)) removed[by_x[b]] = true;
    }
  }

  std::vector<DetectedObject> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!removed[i]) kept.push_back(objects[i]);
  }
  return kept;
}

std::vector<DetectedObject> area_overlap_filter_by_source(
    const std::vector<DetectedObject>& objects, double threshold) {
  std::map<std::string, std::vector<DetectedObject>> groups;
  for (const auto& o : objects) groups[o.source_id].push_back(o);
  std::set<std::pair<std::string, std::string>> keep;
  for (const auto& [source, group] : groups) {
    for (const auto& o : area_overlap_filter(group, threshold)) keep.emplace(o.source_id, o.name);
  }
  std::vector<DetectedObject> out;
  for (const auto& o : objects) {
    if (keep.count({o.source_id, o.name})) out.push_back(o);
  }
  return out;
}

std::vector<DetectedObject> confidence_filter(const std::vector<DetectedObject>& objects,
                                              double threshold) {
  std::vector<DetectedObject> out;
  std::copy_if(objects.begin(), objects.end(), std::back_inserter(out),
               [&](const DetectedObject& o) { return o.confidence > threshold; });
  return out;
}

std::vector<AugmentedExample> confidence_filter_examples(
    const std::vector<AugmentedExample>& examples, const std::vector<DetectedObject>& objects,
    double threshold) {
  std::map<std::pair<std::string, std::string>, double> confidence;
  for (const auto& o : objects) confidence[{o.source_id, o.name}] = o.confidence;
  std::vector<AugmentedExample> out;
  for (const auto& ex : examples) {
    if (ex.provenance == Provenance::source) {
      out.push_back(ex);
      continue;
    }
    auto it = confidence.find({ex.source_id, ex.object_name});
    if (it == confidence.end()) {
      throw InconsistentManifests("example " + ex.example_id + " refers to unknown object " +
                                  ex.source_id + "/" + ex.object_name);
    }
    if (it->second > threshold) out.push_back(ex);
  }
  return out;
}

std::vector<AugmentedExample> assemble_dataset(const std::vector<AugmentedExample>& augmented,
                                               const std::vector<CaptionImagePair>& sources,
                                               bool include_raw) {
  std::vector<AugmentedExample> out = augmented;
  if (include_raw) {
    for (const auto& s : sources) out.push_back(as_source_example(s));
  }
  std::sort(out.begin(), out.end(), [](const AugmentedExample& a, const AugmentedExample& b) {
    return a.example_id < b.example_id;
  });
  return out;
}

// ---------------------------------------------------------------------------

std::optional<std::string> DatasetStats::check_invariants() const {
  if (n_augmented_filtered > n_augmented) return "n_augmented_filtered exceeds n_augmented";
  if (n_pairs_filtered > n_pairs) return "n_pairs_filtered exceeds n_pairs";
  if (n_pairs > n_augmented / 2) return "n_pairs exceeds half of n_augmented";
  if (n_pairs_filtered > n_augmented_filtered / 2) {
    return "n_pairs_filtered exceeds half of n_augmented_filtered";
  }
  return std::nullopt;
}

nlohmann::ordered_json DatasetStats::to_json() const {
  return {{"n_source", n_source},
          {"n_objects", n_objects},
          {"n_augmented", n_augmented},
          {"n_augmented_filtered", n_augmented_filtered},
          {"n_pairs", n_pairs},
          {"n_pairs_filtered", n_pairs_filtered}};
}

DatasetStats DatasetStats::from_json(const nlohmann::json& j) {
  auto count = [&](const char* f) {
    const auto& v = j.at(f);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw std::invalid_argument(std::string(f) + " must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  };
  return {count("n_source"),  count("n_objects"), count("n_augmented"),
          count("n_augmented_filtered"), count("n_pairs"), count("n_pairs_filtered")};
}

namespace {

void check_pairs(const std::vector<HardNegativePair>& pairs,
                 const std::vector<AugmentedExample>& examples, const char* which) {
  std::map<std::string, const AugmentedExample*> by_id;
  for (const auto& ex : examples) by_id[ex.example_id] = &ex;
  auto lookup = [&](const std::string& pair_id, const std::string& id, Side side) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw InconsistentManifests(std::string(which) + " pair " + pair_id +
                                  " references missing example " + id);
    }
    const auto& ex = *it->second;
    if (ex.pair_id != pair_id || ex.side != side) {
      throw InconsistentManifests(std::string(which) + " pair " + pair_id +
                                  " disagrees with example " + id);
    }
  };
  for (const auto& p : pairs) {
    lookup(p.pair_id, p.positive_example_id, Side::positive);
    lookup(p.pair_id, p.negative_example_id, Side::negative);
  }
}

std::uint64_t count_synthesized(const std::vector<AugmentedExample>& examples) {
  return static_cast<std::uint64_t>(
      std::count_if(examples.begin(), examples.end(), [](const AugmentedExample& e) {
        return e.provenance == Provenance::synthesized;
      }));
}

}  // namespace

DatasetStats compute_stats(const StatsInputs& in) {
  std::set<std::string> source_ids;
  for (const auto& s : in.sources) source_ids.insert(s.id);
  for (const auto& o : in.objects) {
    if (!source_ids.count(o.source_id)) {
      throw InconsistentManifests("object " + o.name + " refers to missing source " + o.source_id);
    }
  }
  std::set<std::pair<std::string, std::string>> object_keys;
  for (const auto& o : in.objects) object_keys.emplace(o.source_id, o.name);
  for (const auto& ex : in.augmented) {
    if (ex.provenance == Provenance::synthesized &&
        !object_keys.count({ex.source_id, ex.object_name})) {
      throw InconsistentManifests("example " + ex.example_id + " refers to missing object");
    }
  }
  std::set<std::string> augmented_ids;
  for (const auto& ex : in.augmented) augmented_ids.insert(ex.example_id);
  for (const auto& ex : in.augmented_filtered) {
    if (ex.provenance == Provenance::synthesized && !augmented_ids.count(ex.example_id)) {
      throw InconsistentManifests("filtered example " + ex.example_id +
                                  " is not in the unfiltered manifest");
    }
  }
  check_pairs(in.pairs, in.augmented, "unfiltered");
  check_pairs(in.pairs_filtered, in.augmented_filtered, "filtered");

  DatasetStats stats{in.sources.size(),
                     in.objects.size(),
                     count_synthesized(in.augmented),
                     count_synthesized(in.augmented_filtered),
                     in.pairs.size(),
                     in.pairs_filtered.size()};
  if (auto bad = stats.check_invariants()) throw InconsistentManifests(*bad);
  return stats;
}

DatasetStats compute_stats_from_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  DatasetStats total;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    DatasetStats row;
    try {
      auto j = nlohmann::json::parse(line);
      row = DatasetStats::from_json(j);
    } catch (const std::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
    if (auto bad = row.check_invariants()) {
      throw InconsistentManifests("ledger line " + std::to_string(line_no) + ": " + *bad);
    }
    total.n_source += row.n_source;
    total.n_objects += row.n_objects;
    total.n_augmented += row.n_augmented;
    total.n_augmented_filtered += row.n_augmented_filtered;
    total.n_pairs += row.n_pairs;
    total.n_pairs_filtered += row.n_pairs_filtered;
  }
  return total;
}

void write_stats(const DatasetStats& stats, const std::filesystem::path& path) {
  write_file_atomic(path, stats.to_json().dump(2) + "\n");
}

}  // namespace biaug
