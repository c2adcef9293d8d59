#include <doctest.h>

#include <iostream>
#include <sstream>

#include "biaug/fixture.hpp"
#include "biaug/manifest.hpp"
#include "biaug/pipeline.hpp"
#include "test_util.hpp"

using namespace biaug;

namespace {

struct Fixture {
  fs::path dir;
  fs::path config_path;
};

Fixture make_fixture(const std::string& tag) {
  const auto dir = testing::temp_dir(tag);
  return {dir, make_mock_fixture(dir, {})};
}

json load_json(const fs::path& p) { return json::parse(testing::slurp(p)); }

void save_json(const json& j, const fs::path& p) { testing::spit(p, j.dump(2)); }

// Runs the CLI with stdout captured.
int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  int code = 0;
  try {
    code = run_cli(args);
  } catch (...) {
    std::cout.rdbuf(old);
    throw;
  }
  std::cout.rdbuf(old);
  if (out) *out = captured.str();
  return code;
}

}  // namespace

TEST_CASE("run_all on the mock fixture writes schema-valid, consistent outputs") {
  const auto fx = make_fixture("run_all");
  const auto config = PipelineConfig::load(fx.config_path);
  const auto reports = cmd_run_all(config);
  REQUIRE(reports.size() == 10);
  for (const auto& r : reports) {
    INFO(r.stage);
    CHECK(r.ok);
    CHECK(r.input_count == r.output_count + r.skipped_count);
  }
  const auto out = config.output_dir;
  CHECK(validate_manifest_file(out / files::kObjects, ManifestKind::objects) > 0);
  CHECK(validate_manifest_file(out / files::kAttributes, ManifestKind::attributes) > 0);
  const auto n_aug = validate_manifest_file(out / files::kAugmented, ManifestKind::augmented);
  CHECK(validate_manifest_file(out / files::kAugmentedFiltered, ManifestKind::augmented) <= n_aug);
  CHECK(validate_manifest_file(out / files::kTraining, ManifestKind::augmented) > 0);
  const auto n_pairs = validate_manifest_file(out / files::kPairs, ManifestKind::pairs);
  CHECK(n_pairs > 0);

  StatsInputs in;
  in.sources = read_manifest<CaptionImagePair>(config.source_manifest);
  in.objects = read_manifest<DetectedObject>(out / files::kObjects);
  in.augmented = read_manifest<AugmentedExample>(out / files::kAugmented);
  in.augmented_filtered = read_manifest<AugmentedExample>(out / files::kAugmentedFiltered);
  in.pairs = read_manifest<HardNegativePair>(out / files::kPairs);
  in.pairs_filtered = read_manifest<HardNegativePair>(out / files::kPairsFiltered);
  const auto stats = DatasetStats::from_json(load_json(out / files::kStats));
  CHECK(stats == compute_stats(in));
  CHECK(stats.n_source == 40);
  CHECK(stats.n_pairs == build_pairs(in.augmented).size());

  for (const auto* f : {files::kCheckpoint, files::kLossTrace, files::kAroResults,
                        files::kRetrievalResults}) {
    CHECK(fs::exists(out / f));
  }
  const auto report = load_json(out / "reports" / "train.json");
  CHECK(report.at("stage") == "train");
}

TEST_CASE("resumed stages reuse the journal and reproduce the outputs") {
  const auto fx = make_fixture("resume");
  auto config = PipelineConfig::load(fx.config_path);
  cmd_extract(config);
  cmd_ground(config);
  const auto objects = testing::slurp(config.output_dir / files::kObjects);
  config.resume = true;
  const auto again = cmd_ground(config);
  CHECK(again.resumed_count == again.input_count);
  CHECK(testing::slurp(config.output_dir / files::kObjects) == objects);

  // A torn final journal line is ignored and that input is recomputed.
  const auto journal = config.output_dir / "journal" / "ground.jsonl";
  auto text = testing::slurp(journal);
  text.resize(text.size() - 10);
  testing::spit(journal, text);
  const auto torn = cmd_ground(config);
  CHECK(torn.resumed_count + 1 == torn.input_count);
  CHECK(testing::slurp(config.output_dir / files::kObjects) == objects);
}

TEST_CASE("backend failures go to the error ledger within the skip budget") {
  const auto fx = make_fixture("errors");
  auto j = load_json(fx.config_path);
  j["mock"]["llm_fail_on"] = {"garden"};
  j["skip_budget"] = 1.0;
  save_json(j, fx.config_path);
  auto config = PipelineConfig::load(fx.config_path);
  const auto r = cmd_extract(config);
  CHECK(r.ok);
  CHECK(r.skipped_count > 0);
  CHECK(r.error_ledger_size == r.skipped_count);
  const auto ledger = testing::slurp(config.output_dir / "errors" / "extract.jsonl");
  CHECK(ledger.find("BackendUnavailable") != std::string::npos);

  config.skip_budget = 0.0;
  const auto strict = cmd_run_all(config);
  REQUIRE(strict.size() == 1);
  CHECK_FALSE(strict[0].ok);
}

TEST_CASE("inpainting failure on one side keeps the other") {
  const auto fx = make_fixture("inpaint_fail");
  auto j = load_json(fx.config_path);
  j["mock"]["inpaint_fail_on"] = {"wooden"};
  j["skip_budget"] = 1.0;
  save_json(j, fx.config_path);
  const auto config = PipelineConfig::load(fx.config_path);
  for (const auto& r : cmd_run_all(config)) CHECK(r.ok);
  const auto aug = read_manifest<AugmentedExample>(config.output_dir / files::kAugmented);
  const auto pairs = build_pairs(aug);
  CHECK(pairs.size() * 2 < aug.size());
  const auto stats = DatasetStats::from_json(load_json(config.output_dir / files::kStats));
  CHECK(stats.n_pairs == pairs.size());
}

TEST_CASE("config validation and precedence") {
  const auto fx = make_fixture("config");
  CHECK_THROWS_AS(PipelineConfig::load(fx.dir / "absent.json"), MissingInput);
  auto j = load_json(fx.config_path);
  j["filter"]["area_overlap_threshold"] = 1.5;
  CHECK_THROWS_AS(PipelineConfig::from_json(j, fx.dir).validate(), ConfigInvalid);
  j = load_json(fx.config_path);
  j["unexpected"] = 1;
  CHECK_THROWS_AS(PipelineConfig::from_json(j, fx.dir), ConfigInvalid);
  j = load_json(fx.config_path);
  j["train"]["learning_rte"] = 0.1;
  CHECK_THROWS_AS(PipelineConfig::from_json(j, fx.dir), ConfigInvalid);

  const auto config = PipelineConfig::load(fx.config_path);
  CHECK(config.seed == 7);
  CHECK(config.train.toy_mode);
  CHECK(config.source_manifest == fx.dir / "source.jsonl");
  CHECK(derive_seed(7, "a", "b") == derive_seed(7, "a", "b"));
  CHECK(derive_seed(7, "a", "b") != derive_seed(8, "a", "b"));
  CHECK(derive_seed(7, "a", "b") >= 0);
}

TEST_CASE("CLI flags reach the stages") {
  const auto fx = make_fixture("cli");
  const auto cfg = fx.config_path.string();
  REQUIRE(cli({"--config", cfg, "run-all"}) == 0);
  std::string out;
  CHECK(cli({"--config", cfg, "--no-hard-negatives", "--epochs", "1", "--lr", "0.05", "train"},
            &out) == 0);
  const auto report = json::parse(out);
  CHECK(report["details"]["train_config"]["use_hard_negatives"] == false);
  CHECK(report["details"]["train_config"]["epochs"] == 1);
  CHECK(report["details"]["train_config"]["learning_rate"] == 0.05);

  CHECK(cli({"--config", cfg, "--ks", "1,2", "eval-retrieval"}, &out) == 0);
  const auto results = load_json(fx.dir / "out" / files::kRetrievalResults);
  CHECK(results.size() == 4);
  CHECK(results.contains("text@2"));

  CHECK(cli({"--config", cfg, "--no-raw", "--no-confidence-filter", "filter"}, &out) == 0);
  const auto training = read_manifest<AugmentedExample>(fx.dir / "out" / files::kTraining);
  for (const auto& ex : training) CHECK(ex.provenance == Provenance::synthesized);
  CHECK(testing::slurp(fx.dir / "out" / files::kAugmentedFiltered) ==
        testing::slurp(fx.dir / "out" / files::kAugmented));
}

TEST_CASE("CLI stats over a counts ledger and exit codes") {
  const auto dir = testing::temp_dir("cli_stats");
  testing::spit(dir / "ledger.jsonl",
                "{\"n_source\":2,\"n_objects\":3,\"n_augmented\":8,"
                "\"n_augmented_filtered\":6,\"n_pairs\":4,\"n_pairs_filtered\":3}\n");
  std::string out;
  CHECK(cli({"--out", (dir / "out").string(), "--ledger", (dir / "ledger.jsonl").string(),
             "stats"},
            &out) == 0);
  CHECK(DatasetStats::from_json(load_json(dir / "out" / files::kStats)) ==
        DatasetStats{2, 3, 8, 6, 4, 3});

  CHECK(cli({"--config", (dir / "absent.json").string(), "extract"}) == 2);
  CHECK(cli({"validate", "--kind", "pairs", (dir / "ledger.jsonl").string()}) == 3);
  CHECK(cli({"no-such-command"}) != 0);
}
