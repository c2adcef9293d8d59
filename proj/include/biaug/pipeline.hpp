#pragma once

// Stage commands, their configuration, and the run-all chain. Every stage
// reads manifests from the output directory, writes its own manifests plus
// a run report, and can resume from its journal.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "biaug/augment.hpp"
#include "biaug/backends.hpp"
#include "biaug/filter_stats.hpp"
#include "biaug/manifest.hpp"
#include "biaug/toy_encoder.hpp"
#include "biaug/train.hpp"

namespace biaug {

namespace fs = std::filesystem;

/// Output of the extraction stage: candidate object names per source.
struct ObjectCandidates {
  std::string source_id;
  std::vector<std::string> candidates;

  bool operator==(const ObjectCandidates&) const = default;
};

std::optional<std::string> check_invariants(const ObjectCandidates& r);

template <>
struct ManifestTraits<ObjectCandidates> {
  static constexpr std::string_view kind = "candidates";
  static std::string key(const ObjectCandidates& r) { return r.source_id; }
  static ordered_json to_json(const ObjectCandidates& r);
  static ObjectCandidates from_json(const json& j);
  static std::optional<std::string> check(const ObjectCandidates& r) { return check_invariants(r); }
};

/// File names inside the output directory.
namespace files {
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kObjects = "objects.jsonl";
inline constexpr const char* kAttributes = "attributes.jsonl";
inline constexpr const char* kAugmented = "augmented.jsonl";
inline constexpr const char* kAugmentedFiltered = "augmented_filtered.jsonl";
inline constexpr const char* kTraining = "training.jsonl";
inline constexpr const char* kPairs = "pairs.jsonl";
inline constexpr const char* kPairsFiltered = "pairs_filtered.jsonl";
inline constexpr const char* kStats = "stats.json";
inline constexpr const char* kCheckpoint = "checkpoint.json";
inline constexpr const char* kLossTrace = "loss_trace.csv";
inline constexpr const char* kAroResults = "aro_results.json";
inline constexpr const char* kRetrievalResults = "retrieval_results.json";
}  // namespace files

struct BackendEndpoints {
  std::string llm_url;
  std::string detector_url;
  std::string inpaint_url;
  std::string embed_url;
  std::string bearer_token;
  int attempts = 3;
  int initial_backoff_ms = 1000;
  int max_in_flight = 8;
  std::size_t embed_dim = 512;
};

struct PipelineConfig {
  fs::path source_manifest;
  fs::path image_dir;
  fs::path output_dir = "biaug_out";

  // Empty paths select the built-in templates.
  fs::path extraction_template;
  fs::path decoupling_template;
  fs::path decoupling_examples;
  fs::path caption_template;

  FilterConfig filter;
  TrainConfig train = TrainConfig::toy_defaults();
  BackendEndpoints endpoints;

  // Mock backends, used for every role without an endpoint.
  MockLlmConfig mock_llm;
  fs::path mock_scenes;
  std::vector<std::string> mock_inpaint_fail_on;
  ToyEncoderConfig encoder;

  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool include_raw = true;
  bool resume = false;
  double skip_budget = 0.01;  // fraction of a stage's inputs allowed to fail

  std::vector<std::size_t> ks{1, 5, 10};
  fs::path aro_tasks;
  fs::path retrieval_split;
  fs::path ledger;
  fs::path checkpoint;  // empty: <out>/checkpoint.json

  /// Relative paths resolve against base_dir. Throws ConfigInvalid.
  static PipelineConfig from_json(const json& j, const fs::path& base_dir);
  static PipelineConfig load(const fs::path& path);
  /// BIAUG_LLM_URL, BIAUG_DETECTOR_URL, BIAUG_INPAINT_URL, BIAUG_EMBED_URL,
  /// BIAUG_BEARER_TOKEN, BIAUG_WORKERS, BIAUG_SEED.
  void apply_environment();
  void validate() const;
};

struct RunReport {
  std::string stage;
  std::size_t input_count = 0;
  std::size_t output_count = 0;
  std::size_t skipped_count = 0;
  std::size_t resumed_count = 0;  // inputs taken from the journal
  std::size_t records_written = 0;
  std::size_t error_ledger_size = 0;
  double duration_ms = 0.0;
  bool ok = true;  // false when failures exceed the skip budget
  ordered_json details = ordered_json::object();

  ordered_json to_json() const;
};

struct BackendSet {
  std::unique_ptr<TextGenerator> generator;
  std::unique_ptr<Detector> detector;
  std::unique_ptr<Inpainter> inpainter;
};

BackendSet make_backends(const PipelineConfig& config);
PromptSet load_prompts(const PipelineConfig& config);
ImageResolver make_resolver(const PipelineConfig& config);
std::map<std::string, std::vector<SceneObject>> read_scenes(const fs::path& path);

/// Per-record generation seed derived from the run seed.
std::int64_t derive_seed(std::uint64_t base, std::string_view a, std::string_view b = {});

RunReport cmd_extract(const PipelineConfig& config);
RunReport cmd_ground(const PipelineConfig& config);
RunReport cmd_decouple(const PipelineConfig& config);
RunReport cmd_synthesize(const PipelineConfig& config);
RunReport cmd_filter(const PipelineConfig& config);
RunReport cmd_pairs(const PipelineConfig& config);
RunReport cmd_stats(const PipelineConfig& config);
RunReport cmd_train(const PipelineConfig& config);
RunReport cmd_eval_aro(const PipelineConfig& config);
RunReport cmd_eval_retrieval(const PipelineConfig& config);
/// Chains every stage, stopping at the first one over its skip budget.
std::vector<RunReport> cmd_run_all(const PipelineConfig& config);

/// Command-line entry point shared by the executable and the Python module.
int run_cli(const std::vector<std::string>& args);

}  // namespace biaug
