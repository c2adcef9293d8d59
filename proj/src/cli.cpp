#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "biaug/error.hpp"
#include "biaug/fixture.hpp"
#include "biaug/http_backends.hpp"
#include "biaug/pipeline.hpp"

namespace biaug {

namespace {

struct Flags {
  std::string config;
  std::string source;
  std::string images;
  std::string out;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  bool resume = false;
  bool no_hard_negatives = false;
  bool no_confidence_filter = false;
  bool no_raw = false;
  double area_threshold = 0.0;
  double confidence_threshold = 0.0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  double temperature = 0.0;
  std::vector<std::size_t> ks;
  std::string tasks;
  std::string split;
  std::string ledger;
  std::string checkpoint;
  double skip_budget = 0.0;
};

struct Options {
  CLI::Option* workers;
  CLI::Option* seed;
  CLI::Option* area_threshold;
  CLI::Option* confidence_threshold;
  CLI::Option* epochs;
  CLI::Option* batch_size;
  CLI::Option* lr;
  CLI::Option* temperature;
  CLI::Option* ks;
  CLI::Option* skip_budget;
};

// File values first, then environment, then flags.
PipelineConfig build_config(const Flags& f, const Options& o) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : PipelineConfig::load(f.config);
  c.apply_environment();
  if (!f.source.empty()) c.source_manifest = f.source;
  if (!f.images.empty()) c.image_dir = f.images;
  if (!f.out.empty()) c.output_dir = f.out;
  if (o.workers->count()) c.workers = f.workers;
  if (o.seed->count()) c.seed = f.seed;
  c.train.seed = c.seed;
  c.resume = c.resume || f.resume;
  if (f.no_hard_negatives) c.train.use_hard_negatives = false;
  if (f.no_confidence_filter) c.filter.confidence_filter_enabled = false;
  if (f.no_raw) c.include_raw = false;
  if (o.area_threshold->count()) c.filter.area_overlap_threshold = f.area_threshold;
  if (o.confidence_threshold->count()) c.filter.confidence_threshold = f.confidence_threshold;
  if (o.epochs->count()) c.train.epochs = f.epochs;
  if (o.batch_size->count()) c.train.batch_size = f.batch_size;
  if (o.lr->count()) c.train.learning_rate = f.lr;
  if (o.temperature->count()) c.train.temperature = f.temperature;
  if (o.ks->count()) c.ks = f.ks;
  if (o.skip_budget->count()) c.skip_budget = f.skip_budget;
  if (!f.tasks.empty()) c.aro_tasks = f.tasks;
  if (!f.split.empty()) c.retrieval_split = f.split;
  if (!f.ledger.empty()) c.ledger = f.ledger;
  if (!f.checkpoint.empty()) c.checkpoint = f.checkpoint;
  c.validate();
  return c;
}

int report_exit(const std::vector<RunReport>& reports) {
  bool ok = true;
  for (const auto& r : reports) {
    std::cout << r.to_json().dump() << '\n';
    if (!r.ok) {
      std::cerr << "biaug: stage " << r.stage << " exceeded its skip budget ("
                << r.error_ledger_size << " failures)\n";
      ok = false;
    }
  }
  return ok ? 0 : 1;
}

int serve_mock(const PipelineConfig& config, const std::string& host, int port) {
  auto backends = make_backends(config);
  ToyEncoder encoder(config.encoder, make_resolver(config));
  BackendServer server({backends.generator.get(), backends.detector.get(),
                        backends.inpainter.get(), &encoder, {config.output_dir}});
  if (port == 0) {
    port = server.bind_any_port(host);
  } else if (!server.bind(host, port)) {
    std::cerr << "biaug: cannot bind " << host << ':' << port << '\n';
    return 2;
  }
  std::cout << "http://" << host << ':' << port << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Hard-negative caption-image augmentation pipeline", "biaug"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags f;
  Options o{};
  app.add_option("--config", f.config, "JSON config file");
  app.add_option("--source", f.source, "source caption-image manifest");
  app.add_option("--images", f.images, "directory image refs resolve against");
  app.add_option("--out", f.out, "output directory");
  o.workers = app.add_option("--workers", f.workers, "worker threads per stage");
  o.seed = app.add_option("--seed", f.seed, "run seed");
  app.add_flag("--resume", f.resume, "reuse journalled results of an earlier run");
  app.add_flag("--no-hard-negatives", f.no_hard_negatives, "keep pair members in separate batches");
  app.add_flag("--no-confidence-filter", f.no_confidence_filter, "skip the confidence rule");
  app.add_flag("--no-raw", f.no_raw, "train on synthesized examples only");
  o.area_threshold = app.add_option("--area-threshold", f.area_threshold);
  o.confidence_threshold = app.add_option("--confidence-threshold", f.confidence_threshold);
  o.epochs = app.add_option("--epochs", f.epochs);
  o.batch_size = app.add_option("--batch-size", f.batch_size);
  o.lr = app.add_option("--lr", f.lr, "learning rate");
  o.temperature = app.add_option("--temperature", f.temperature, "contrastive temperature");
  o.ks = app.add_option("--ks", f.ks, "recall cut-offs, comma separated")->delimiter(',');
  o.skip_budget = app.add_option("--skip-budget", f.skip_budget, "tolerated failure fraction");
  app.add_option("--tasks", f.tasks, "choice-task file for eval-aro");
  app.add_option("--split", f.split, "retrieval split for eval-retrieval");
  app.add_option("--ledger", f.ledger, "counts ledger for stats");
  app.add_option("--checkpoint", f.checkpoint, "encoder checkpoint path");

  using Stage = RunReport (*)(const PipelineConfig&);
  const std::vector<std::pair<const char*, Stage>> stages{
      {"extract", cmd_extract},   {"ground", cmd_ground},       {"decouple", cmd_decouple},
      {"synthesize", cmd_synthesize}, {"filter", cmd_filter},   {"pairs", cmd_pairs},
      {"stats", cmd_stats},       {"train", cmd_train},         {"eval-aro", cmd_eval_aro},
      {"eval-retrieval", cmd_eval_retrieval},
  };
  std::vector<CLI::App*> stage_cmds;
  for (const auto& [name, fn] : stages) stage_cmds.push_back(app.add_subcommand(name));
  auto* run_all = app.add_subcommand("run-all", "every stage in order");

  FixtureOptions fixture;
  auto* make_fixture = app.add_subcommand("make-fixture", "write the mock fixture to --out");
  make_fixture->add_option("--count", fixture.count, "number of source examples");

  std::string host = "127.0.0.1";
  int port = 0;
  auto* serve = app.add_subcommand("serve-mock", "serve the mock backends over HTTP");
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port");

  std::string kind_name;
  std::string manifest_path;
  auto* validate = app.add_subcommand("validate", "check a manifest file");
  validate->add_option("--kind", kind_name, "source|objects|attributes|augmented|pairs")
      ->required();
  validate->add_option("file", manifest_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*make_fixture) {
      if (f.out.empty()) throw ConfigInvalid("out", "make-fixture needs --out");
      if (o.seed->count()) fixture.seed = f.seed;
      std::cout << make_mock_fixture(f.out, fixture).string() << '\n';
      return 0;
    }
    if (*validate) {
      const auto kind = parse_manifest_kind(kind_name);
      if (!kind) throw ConfigInvalid("kind", "unknown manifest kind '" + kind_name + "'");
      std::cout << validate_manifest_file(manifest_path, *kind) << " records\n";
      return 0;
    }
    const auto config = build_config(f, o);
    if (*serve) return serve_mock(config, host, port);
    if (*run_all) return report_exit(cmd_run_all(config));
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (*stage_cmds[i]) return report_exit({stages[i].second(config)});
    }
  } catch (const MissingInput& e) {
    std::cerr << "biaug: " << e.what() << '\n';
    return 2;
  } catch (const ConfigInvalid& e) {
    std::cerr << "biaug: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "biaug: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace biaug
