#include "biaug/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <typeinfo>

#include "biaug/error.hpp"
#include "biaug/eval.hpp"
#include "biaug/hash.hpp"
#include "biaug/http_backends.hpp"
#include "biaug/parallel.hpp"

namespace biaug {

std::optional<std::string> check_invariants(const ObjectCandidates& r) {
  if (r.source_id.empty()) return "source_id must be non-empty";
  for (const auto& c : r.candidates) {
    if (trim(c).empty()) return "candidate names must be non-empty";
  }
  return std::nullopt;
}

ordered_json ManifestTraits<ObjectCandidates>::to_json(const ObjectCandidates& r) {
  return {{"source_id", r.source_id}, {"candidates", r.candidates}};
}

ObjectCandidates ManifestTraits<ObjectCandidates>::from_json(const json& j) {
  require_exact_fields(j, {"source_id", "candidates"});
  return {j.at("source_id").get<std::string>(),
          j.at("candidates").get<std::vector<std::string>>()};
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

fs::path resolve_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  fs::path p(j.at(key).get<std::string>());
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigInvalid(key, e.what());
    }
  }
}

void expect_keys(const json& j, const std::string& where,
                 std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigInvalid(where, "must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ConfigInvalid(where.empty() ? k : where + "." + k, "unknown key");
    }
  }
}

std::map<AttributeCategory, std::vector<std::string>> category_words(const json& j,
                                                                     const std::string& where) {
  std::map<AttributeCategory, std::vector<std::string>> out;
  for (const auto& [k, v] : j.items()) {
    auto cat = parse_category(k);
    if (!cat) throw ConfigInvalid(where, "unknown attribute category '" + k + "'");
    out[*cat] = v.get<std::vector<std::string>>();
  }
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
  PipelineConfig c;
  if (!j.is_object()) throw ConfigInvalid("<root>", "config must be a JSON object");
  expect_keys(j, "", {"source", "images", "out", "workers", "seed", "include_raw", "skip_budget",
                      "templates", "filter", "train", "encoder", "backends", "mock", "eval",
                      "ledger", "checkpoint"});
  c.source_manifest = resolve_path(j, "source", base);
  c.image_dir = resolve_path(j, "images", base);
  if (auto out = resolve_path(j, "out", base); !out.empty()) c.output_dir = out;
  read_if(j, "workers", c.workers);
  read_if(j, "seed", c.seed);
  read_if(j, "include_raw", c.include_raw);
  read_if(j, "skip_budget", c.skip_budget);

  if (j.contains("templates")) {
    const auto& t = j.at("templates");
    expect_keys(t, "templates", {"object_extraction", "attribute_decoupling",
                                 "attribute_decoupling_examples", "caption_augmentation"});
    c.extraction_template = resolve_path(t, "object_extraction", base);
    c.decoupling_template = resolve_path(t, "attribute_decoupling", base);
    c.decoupling_examples = resolve_path(t, "attribute_decoupling_examples", base);
    c.caption_template = resolve_path(t, "caption_augmentation", base);
  }
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    expect_keys(f, "filter",
                {"area_overlap_threshold", "confidence_threshold", "confidence_filter_enabled"});
    read_if(f, "area_overlap_threshold", c.filter.area_overlap_threshold);
    read_if(f, "confidence_threshold", c.filter.confidence_threshold);
    read_if(f, "confidence_filter_enabled", c.filter.confidence_filter_enabled);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    expect_keys(t, "train", {"toy_mode", "learning_rate", "batch_size", "epochs", "temperature",
                             "use_hard_negatives"});
    bool toy = true;
    read_if(t, "toy_mode", toy);
    c.train = toy ? TrainConfig::toy_defaults() : TrainConfig{};
    read_if(t, "learning_rate", c.train.learning_rate);
    read_if(t, "batch_size", c.train.batch_size);
    read_if(t, "epochs", c.train.epochs);
    read_if(t, "temperature", c.train.temperature);
    read_if(t, "use_hard_negatives", c.train.use_hard_negatives);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    expect_keys(e, "encoder", {"dim", "text_buckets", "grid", "seed"});
    read_if(e, "dim", c.encoder.dim);
    read_if(e, "text_buckets", c.encoder.text_buckets);
    read_if(e, "grid", c.encoder.grid);
    read_if(e, "seed", c.encoder.seed);
  }
  if (j.contains("backends")) {
    const auto& b = j.at("backends");
    expect_keys(b, "backends", {"llm_url", "detector_url", "inpaint_url", "embed_url",
                                "bearer_token", "attempts", "initial_backoff_ms", "max_in_flight",
                                "embed_dim"});
    read_if(b, "llm_url", c.endpoints.llm_url);
    read_if(b, "detector_url", c.endpoints.detector_url);
    read_if(b, "inpaint_url", c.endpoints.inpaint_url);
    read_if(b, "embed_url", c.endpoints.embed_url);
    read_if(b, "bearer_token", c.endpoints.bearer_token);
    read_if(b, "attempts", c.endpoints.attempts);
    read_if(b, "initial_backoff_ms", c.endpoints.initial_backoff_ms);
    read_if(b, "max_in_flight", c.endpoints.max_in_flight);
    read_if(b, "embed_dim", c.endpoints.embed_dim);
  }
  if (j.contains("mock")) {
    const auto& m = j.at("mock");
    expect_keys(m, "mock", {"lexicon", "scene_implied", "llm_fail_on", "inpaint_fail_on",
                            "attribute_words", "object_attribute_words", "scenes"});
    try {
      read_if(m, "lexicon", c.mock_llm.lexicon);
      read_if(m, "scene_implied", c.mock_llm.scene_implied);
      read_if(m, "llm_fail_on", c.mock_llm.fail_on);
      read_if(m, "inpaint_fail_on", c.mock_inpaint_fail_on);
      if (m.contains("attribute_words")) {
        c.mock_llm.attribute_words = category_words(m.at("attribute_words"), "mock.attribute_words");
      }
      if (m.contains("object_attribute_words")) {
        for (const auto& [obj, words] : m.at("object_attribute_words").items()) {
          c.mock_llm.object_attribute_words[obj] =
              category_words(words, "mock.object_attribute_words");
        }
      }
    } catch (const json::exception& e) {
      throw ConfigInvalid("mock", e.what());
    }
    c.mock_scenes = resolve_path(m, "scenes", base);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    expect_keys(e, "eval", {"aro_tasks", "retrieval_split", "ks"});
    c.aro_tasks = resolve_path(e, "aro_tasks", base);
    c.retrieval_split = resolve_path(e, "retrieval_split", base);
    read_if(e, "ks", c.ks);
  }
  c.ledger = resolve_path(j, "ledger", base);
  c.checkpoint = resolve_path(j, "checkpoint", base);
  c.train.seed = c.seed;
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigInvalid(path.string(), e.what());
  }
  return from_json(j, path.parent_path());
}

void PipelineConfig::apply_environment() {
  auto env = [](const char* name, std::string& out) {
    if (const char* v = std::getenv(name); v && *v) out = v;
  };
  env("BIAUG_LLM_URL", endpoints.llm_url);
  env("BIAUG_DETECTOR_URL", endpoints.detector_url);
  env("BIAUG_INPAINT_URL", endpoints.inpaint_url);
  env("BIAUG_EMBED_URL", endpoints.embed_url);
  env("BIAUG_BEARER_TOKEN", endpoints.bearer_token);
  std::string value;
  try {
    env("BIAUG_WORKERS", value);
    if (!value.empty()) workers = std::stoul(value);
    value.clear();
    env("BIAUG_SEED", value);
    if (!value.empty()) {
      seed = std::stoull(value);
      train.seed = seed;
    }
  } catch (const std::exception&) {
    throw ConfigInvalid("environment", "BIAUG_WORKERS and BIAUG_SEED must be integers");
  }
}

void PipelineConfig::validate() const {
  if (workers < 1) throw ConfigInvalid("workers", "must be >= 1");
  if (!(skip_budget >= 0.0 && skip_budget <= 1.0)) {
    throw ConfigInvalid("skip_budget", "must lie in [0, 1]");
  }
  if (output_dir.empty()) throw ConfigInvalid("out", "an output directory is required");
  for (auto k : ks) {
    if (k < 1) throw ConfigInvalid("ks", "every k must be >= 1");
  }
  filter.validate();
  train.validate();
}

ordered_json RunReport::to_json() const {
  return {{"stage", stage},
          {"input_count", input_count},
          {"output_count", output_count},
          {"skipped_count", skipped_count},
          {"resumed_count", resumed_count},
          {"records_written", records_written},
          {"error_ledger_size", error_ledger_size},
          {"duration_ms", duration_ms},
          {"ok", ok},
          {"details", details}};
}

// ---------------------------------------------------------------------------
// Backends

namespace {

HttpClientConfig client_config(const BackendEndpoints& e, const std::string& url) {
  HttpClientConfig c;
  c.url = url;
  c.bearer_token = e.bearer_token;
  c.attempts = e.attempts;
  c.initial_backoff = std::chrono::milliseconds(e.initial_backoff_ms);
  c.max_in_flight = e.max_in_flight;
  return c;
}

}  // namespace

ImageResolver make_resolver(const PipelineConfig& config) {
  std::vector<fs::path> roots{config.output_dir};
  if (!config.image_dir.empty()) roots.push_back(config.image_dir);
  return ImageResolver(std::move(roots));
}

std::map<std::string, std::vector<SceneObject>> read_scenes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  std::map<std::string, std::vector<SceneObject>> scenes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      require_exact_fields(j, {"image_ref", "objects"});
      auto& objs = scenes[j.at("image_ref").get<std::string>()];
      for (const auto& o : j.at("objects")) {
        const auto b = o.at("box").get<std::array<std::int32_t, 4>>();
        objs.push_back({o.at("name").get<std::string>(), BoundingBox(b[0], b[1], b[2], b[3])});
      }
    } catch (const std::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  return scenes;
}

BackendSet make_backends(const PipelineConfig& config) {
  const auto& e = config.endpoints;
  BackendSet set;
  if (!e.llm_url.empty()) {
    set.generator = std::make_unique<HttpTextGenerator>(client_config(e, e.llm_url));
  } else {
    set.generator = std::make_unique<MockTextGenerator>(config.mock_llm);
  }
  if (!e.detector_url.empty()) {
    set.detector = std::make_unique<HttpDetector>(client_config(e, e.detector_url));
  } else {
    auto scenes = config.mock_scenes.empty() ? std::map<std::string, std::vector<SceneObject>>{}
                                             : read_scenes(config.mock_scenes);
    set.detector = std::make_unique<MockDetector>(std::move(scenes), make_resolver(config));
  }
  if (!e.inpaint_url.empty()) {
    set.inpainter = std::make_unique<HttpInpainter>(client_config(e, e.inpaint_url), config.output_dir);
  } else {
    set.inpainter = std::make_unique<MockInpainter>(make_resolver(config), config.output_dir,
                                                    config.mock_inpaint_fail_on);
  }
  return set;
}

PromptSet load_prompts(const PipelineConfig& config) {
  PromptSet p;
  if (!config.extraction_template.empty()) {
    p.extraction = PromptTemplate::load(TemplateKind::object_extraction, config.extraction_template);
  }
  if (!config.decoupling_template.empty()) {
    p.decoupling = PromptTemplate::load(TemplateKind::attribute_decoupling,
                                        config.decoupling_template, config.decoupling_examples);
  }
  if (!config.caption_template.empty()) {
    p.caption = PromptTemplate::load(TemplateKind::caption_augmentation, config.caption_template);
  }
  return p;
}

std::int64_t derive_seed(std::uint64_t base, std::string_view a, std::string_view b) {
  return static_cast<std::int64_t>(hash_fields(std::to_string(base), a, b) & 0x7fffffffULL);
}

// ---------------------------------------------------------------------------
// Stage runner

namespace {

using Clock = std::chrono::steady_clock;

struct ErrorEntry {
  std::string id;
  std::string kind;
  std::string message;
  std::string response;
};

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const BackendUnavailable*>(&e)) return "BackendUnavailable";
  if (dynamic_cast<const EmptyResponse*>(&e)) return "EmptyResponse";
  if (dynamic_cast<const UnparseableResponse*>(&e)) return "UnparseableResponse";
  if (dynamic_cast<const ImageUnreadable*>(&e)) return "ImageUnreadable";
  if (dynamic_cast<const MaskOutOfBounds*>(&e)) return "MaskOutOfBounds";
  if (dynamic_cast<const InvariantViolation*>(&e)) return "InvariantViolation";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "PreconditionViolation";
  return "Error";
}

ErrorEntry make_error(const std::string& id, const std::exception& e) {
  ErrorEntry err{id, error_kind(e), e.what(), {}};
  if (auto* u = dynamic_cast<const UnparseableResponse*>(&e)) err.response = u->response();
  return err;
}

template <class T>
struct ItemOutcome {
  std::vector<T> records;
  std::vector<ErrorEntry> errors;
  std::size_t dropped = 0;
};

template <class T>
struct StageResult {
  std::vector<T> records;
  RunReport report;
  std::size_t dropped = 0;
};

void require_file(const fs::path& p) {
  if (p.empty() || !fs::exists(p)) throw MissingInput(p.empty() ? "<unset path>" : p.string());
}

void write_report(const PipelineConfig& config, const RunReport& report) {
  write_file_atomic(config.output_dir / "reports" / (report.stage + ".json"),
                    report.to_json().dump(2) + "\n");
}

void write_errors(const PipelineConfig& config, const std::string& stage,
                  std::vector<ErrorEntry> errors) {
  std::stable_sort(errors.begin(), errors.end(),
                   [](const ErrorEntry& a, const ErrorEntry& b) { return a.id < b.id; });
  std::string out;
  for (const auto& e : errors) {
    ordered_json j{{"stage", stage}, {"id", e.id}, {"kind", e.kind}, {"message", e.message}};
    if (!e.response.empty()) j["response"] = e.response;
    out += j.dump() + "\n";
  }
  write_file_atomic(config.output_dir / "errors" / (stage + ".jsonl"), out);
}

bool within_budget(const PipelineConfig& config, std::size_t errors, std::size_t inputs) {
  const auto allowed =
      static_cast<std::size_t>(std::floor(config.skip_budget * static_cast<double>(inputs)));
  return errors <= allowed;
}

// Per-input processing with a journal of completed ids. Inputs whose
// processing reported no error are journalled; a resumed run takes their
// records from the journal instead of recomputing them.
template <class T, class In, class IdFn, class Fn>
StageResult<T> run_stage(const PipelineConfig& config, const std::string& stage,
                         const std::vector<In>& inputs, IdFn id_of, Fn process) {
  using Traits = ManifestTraits<T>;
  const auto start = Clock::now();
  const auto journal_path = config.output_dir / "journal" / (stage + ".jsonl");
  fs::create_directories(journal_path.parent_path());

  std::map<std::string, std::vector<T>> done;
  if (config.resume && fs::exists(journal_path)) {
    std::ifstream in(journal_path);
    for (std::string line; std::getline(in, line);) {
      try {
        const auto j = json::parse(line);
        std::vector<T> recs;
        for (const auto& r : j.at("records")) recs.push_back(Traits::from_json(r));
        done[j.at("id").get<std::string>()] = std::move(recs);
      } catch (const std::exception&) {
        // A torn final line from an interrupted run; that input is redone.
      }
    }
  }
  std::ofstream journal(journal_path, config.resume ? std::ios::app : std::ios::trunc);

  std::vector<std::optional<ItemOutcome<T>>> outcomes(inputs.size());
  std::vector<std::size_t> pending;
  std::size_t resumed = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto it = done.find(id_of(inputs[i]));
    if (it != done.end()) {
      outcomes[i] = ItemOutcome<T>{it->second, {}, 0};
      ++resumed;
    } else {
      pending.push_back(i);
    }
  }

  std::mutex journal_mutex;
  parallel_for(pending.size(), config.workers, [&](std::size_t p) {
    const auto i = pending[p];
    const auto id = id_of(inputs[i]);
    ItemOutcome<T> outcome;
    try {
      outcome = process(inputs[i]);
    } catch (const MissingInput&) {
      throw;
    } catch (const ConfigInvalid&) {
      throw;
    } catch (const std::exception& e) {
      outcome.records.clear();
      outcome.errors = {make_error(id, e)};
    }
    std::lock_guard lock(journal_mutex);
    if (outcome.errors.empty()) {
      ordered_json line{{"id", id}, {"records", ordered_json::array()}};
      for (const auto& r : outcome.records) line["records"].push_back(Traits::to_json(r));
      journal << line.dump() << '\n' << std::flush;
    }
    outcomes[i] = std::move(outcome);
  });

  StageResult<T> result;
  std::vector<ErrorEntry> errors;
  std::size_t skipped = 0;
  for (auto& o : outcomes) {
    if (o->records.empty() && !o->errors.empty()) ++skipped;
    result.dropped += o->dropped;
    std::move(o->records.begin(), o->records.end(), std::back_inserter(result.records));
    std::move(o->errors.begin(), o->errors.end(), std::back_inserter(errors));
  }

  auto& r = result.report;
  r.stage = stage;
  r.input_count = inputs.size();
  r.skipped_count = skipped;
  r.output_count = inputs.size() - skipped;
  r.resumed_count = resumed;
  r.error_ledger_size = errors.size();
  r.ok = within_budget(config, errors.size(), inputs.size());
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_errors(config, stage, std::move(errors));
  return result;
}

template <class T>
RunReport finish(const PipelineConfig& config, StageResult<T>& result, const char* file) {
  result.report.records_written =
      write_manifest(std::move(result.records), config.output_dir / file);
  write_report(config, result.report);
  return result.report;
}

template <class K, class V>
std::map<K, V> index_by(const std::vector<V>& v, K (*key)(const V&)) {
  std::map<K, V> out;
  for (const auto& x : v) out.emplace(key(x), x);
  return out;
}

std::string source_key(const CaptionImagePair& p) { return p.id; }

std::vector<CaptionImagePair> read_sources(const PipelineConfig& config) {
  require_file(config.source_manifest);
  return read_manifest<CaptionImagePair>(config.source_manifest);
}

const CaptionImagePair& find_source(const std::map<std::string, CaptionImagePair>& sources,
                                    const std::string& id) {
  auto it = sources.find(id);
  if (it == sources.end()) throw InconsistentManifests("unknown source id " + id);
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

RunReport cmd_extract(const PipelineConfig& config) {
  config.validate();
  const auto sources = read_sources(config);
  auto backends = make_backends(config);
  const auto prompts = load_prompts(config);
  auto result = run_stage<ObjectCandidates>(
      config, "extract", sources, [](const CaptionImagePair& s) { return s.id; },
      [&](const CaptionImagePair& s) {
        const GenerationOptions opts{0.0, derive_seed(config.seed, s.id)};
        ItemOutcome<ObjectCandidates> out;
        out.records.push_back(
            {s.id, extract_objects(s.caption, prompts.extraction, *backends.generator, opts)});
        return out;
      });
  std::size_t n = 0;
  for (const auto& r : result.records) n += r.candidates.size();
  result.report.details["candidate_objects"] = n;
  return finish(config, result, files::kCandidates);
}

RunReport cmd_ground(const PipelineConfig& config) {
  config.validate();
  const auto sources = index_by(read_sources(config), source_key);
  require_file(config.output_dir / files::kCandidates);
  auto candidates = read_manifest<ObjectCandidates>(config.output_dir / files::kCandidates);
  std::erase_if(candidates, [](const ObjectCandidates& c) { return c.candidates.empty(); });
  auto backends = make_backends(config);

  std::atomic<std::size_t> detected{0};
  auto result = run_stage<DetectedObject>(
      config, "ground", candidates, [](const ObjectCandidates& c) { return c.source_id; },
      [&](const ObjectCandidates& c) {
        const auto& pair = find_source(sources, c.source_id);
        ItemOutcome<DetectedObject> out;
        auto objects = ground_objects(pair, c.candidates, *backends.detector);
        detected += objects.size();
        out.records = area_overlap_filter(objects, config.filter.area_overlap_threshold);
        out.dropped = objects.size() - out.records.size();
        return out;
      });
  result.report.details["removed_by_area_rule"] = result.dropped;
  return finish(config, result, files::kObjects);
}

RunReport cmd_decouple(const PipelineConfig& config) {
  config.validate();
  const auto sources = index_by(read_sources(config), source_key);
  require_file(config.output_dir / files::kObjects);
  const auto objects = read_manifest<DetectedObject>(config.output_dir / files::kObjects);
  auto backends = make_backends(config);
  const auto prompts = load_prompts(config);
  auto result = run_stage<AttributeSpec>(
      config, "decouple", objects,
      [](const DetectedObject& o) { return ManifestTraits<DetectedObject>::key(o); },
      [&](const DetectedObject& o) {
        const auto& pair = find_source(sources, o.source_id);
        const GenerationOptions opts{0.0, derive_seed(config.seed, o.source_id, o.name)};
        ItemOutcome<AttributeSpec> out;
        out.records = decouple_attributes(o.source_id, pair.caption, o.name, prompts.decoupling,
                                          *backends.generator, opts)
                          .specs;
        return out;
      });
  return finish(config, result, files::kAttributes);
}

RunReport cmd_synthesize(const PipelineConfig& config) {
  config.validate();
  const auto sources = index_by(read_sources(config), source_key);
  require_file(config.output_dir / files::kObjects);
  require_file(config.output_dir / files::kAttributes);
  std::map<std::string, DetectedObject> objects;
  for (auto& o : read_manifest<DetectedObject>(config.output_dir / files::kObjects)) {
    objects.emplace(ManifestTraits<DetectedObject>::key(o), o);
  }
  const auto specs = read_manifest<AttributeSpec>(config.output_dir / files::kAttributes);
  auto backends = make_backends(config);
  const auto prompts = load_prompts(config);

  auto result = run_stage<AugmentedExample>(
      config, "synthesize", specs,
      [](const AttributeSpec& s) { return ManifestTraits<AttributeSpec>::key(s); },
      [&](const AttributeSpec& spec) {
        const auto& pair = find_source(sources, spec.source_id);
        auto it = objects.find(spec.source_id + '\x1f' + spec.object_name);
        if (it == objects.end()) {
          throw InconsistentManifests("attribute spec for unknown object " + spec.object_name);
        }
        ItemOutcome<AugmentedExample> out;
        for (auto side : {Side::positive, Side::negative}) {
          const GenerationOptions opts{
              0.0, derive_seed(config.seed, make_pair_id(spec.source_id, spec.object_name,
                                                         spec.category),
                               to_string(side))};
          try {
            out.records.push_back(synthesize_example(pair, it->second, spec, side,
                                                     *backends.inpainter, *backends.generator,
                                                     prompts.caption, opts));
          } catch (const std::exception& e) {
            // The surviving side stays as an unpaired example.
            out.errors.push_back(make_error(
                make_example_id(make_pair_id(spec.source_id, spec.object_name, spec.category),
                                side),
                e));
          }
        }
        return out;
      });
  return finish(config, result, files::kAugmented);
}

RunReport cmd_filter(const PipelineConfig& config) {
  config.validate();
  const auto start = Clock::now();
  const auto sources = read_sources(config);
  require_file(config.output_dir / files::kAugmented);
  require_file(config.output_dir / files::kObjects);
  const auto augmented = read_manifest<AugmentedExample>(config.output_dir / files::kAugmented);
  const auto objects = read_manifest<DetectedObject>(config.output_dir / files::kObjects);

  const auto filtered =
      config.filter.confidence_filter_enabled
          ? confidence_filter_examples(augmented, objects, config.filter.confidence_threshold)
          : augmented;
  const auto training = assemble_dataset(filtered, sources, config.include_raw);

  RunReport r;
  r.stage = "filter";
  r.input_count = augmented.size();
  r.output_count = filtered.size();
  r.skipped_count = augmented.size() - filtered.size();
  r.records_written = write_manifest(filtered, config.output_dir / files::kAugmentedFiltered);
  r.details["training_records"] = write_manifest(training, config.output_dir / files::kTraining);
  r.details["confidence_filter_enabled"] = config.filter.confidence_filter_enabled;
  r.details["include_raw"] = config.include_raw;
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_report(config, r);
  return r;
}

RunReport cmd_pairs(const PipelineConfig& config) {
  config.validate();
  const auto start = Clock::now();
  require_file(config.output_dir / files::kAugmented);
  const auto augmented = read_manifest<AugmentedExample>(config.output_dir / files::kAugmented);
  RunReport r;
  r.stage = "pairs";
  r.input_count = augmented.size();
  r.output_count = augmented.size();
  r.records_written = write_manifest(build_pairs(augmented), config.output_dir / files::kPairs);
  const auto filtered_path = config.output_dir / files::kAugmentedFiltered;
  if (fs::exists(filtered_path)) {
    r.details["filtered_pairs"] = write_manifest(
        build_pairs(read_manifest<AugmentedExample>(filtered_path)),
        config.output_dir / files::kPairsFiltered);
  }
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_report(config, r);
  return r;
}

RunReport cmd_stats(const PipelineConfig& config) {
  config.validate();
  const auto start = Clock::now();
  RunReport r;
  r.stage = "stats";
  DatasetStats stats;
  if (!config.ledger.empty()) {
    require_file(config.ledger);
    stats = compute_stats_from_ledger(config.ledger);
    r.input_count = 1;
    r.details["ledger"] = config.ledger.string();
  } else {
    const auto dir = config.output_dir;
    auto read_or_empty = [&](auto tag, const char* file) {
      using T = typename decltype(tag)::type;
      return fs::exists(dir / file) ? read_manifest<T>(dir / file) : std::vector<T>{};
    };
    StatsInputs in;
    in.sources = read_sources(config);
    in.objects = read_or_empty(std::type_identity<DetectedObject>{}, files::kObjects);
    in.augmented = read_or_empty(std::type_identity<AugmentedExample>{}, files::kAugmented);
    in.augmented_filtered =
        read_or_empty(std::type_identity<AugmentedExample>{}, files::kAugmentedFiltered);
    in.pairs = read_or_empty(std::type_identity<HardNegativePair>{}, files::kPairs);
    in.pairs_filtered = read_or_empty(std::type_identity<HardNegativePair>{}, files::kPairsFiltered);
    stats = compute_stats(in);
    r.input_count = 6;
  }
  write_stats(stats, config.output_dir / files::kStats);
  r.output_count = r.input_count;
  r.records_written = 1;
  r.details["stats"] = stats.to_json();
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_report(config, r);
  return r;
}

namespace {

fs::path checkpoint_path(const PipelineConfig& config) {
  return config.checkpoint.empty() ? config.output_dir / files::kCheckpoint : config.checkpoint;
}

std::unique_ptr<Encoder> make_eval_encoder(const PipelineConfig& config,
                                           const fs::path& data_file) {
  const auto& e = config.endpoints;
  if (!e.embed_url.empty()) {
    return std::make_unique<HttpEncoder>(client_config(e, e.embed_url), e.embed_dim);
  }
  std::vector<fs::path> roots{data_file.parent_path(), config.output_dir};
  if (!config.image_dir.empty()) roots.push_back(config.image_dir);
  ImageResolver resolver(std::move(roots));
  const auto ckpt = checkpoint_path(config);
  if (fs::exists(ckpt)) return std::make_unique<ToyEncoder>(load_checkpoint(ckpt, resolver));
  return std::make_unique<ToyEncoder>(config.encoder, resolver);
}

}  // namespace

RunReport cmd_train(const PipelineConfig& config) {
  config.validate();
  if (!config.endpoints.embed_url.empty()) {
    throw ConfigInvalid("backends.embed_url",
                        "remote encoders cannot be fine-tuned through the embedding protocol");
  }
  const auto start = Clock::now();
  require_file(config.output_dir / files::kTraining);
  const auto manifest = read_manifest<AugmentedExample>(config.output_dir / files::kTraining);
  const auto pairs_path = config.output_dir / files::kPairsFiltered;
  const auto pairs = fs::exists(pairs_path) ? read_manifest<HardNegativePair>(pairs_path)
                                            : std::vector<HardNegativePair>{};
  ToyEncoder encoder(config.encoder, make_resolver(config));
  auto train_config = config.train;
  train_config.seed = config.seed;
  const auto result = train(manifest, pairs, encoder, make_resolver(config), train_config);
  write_loss_trace(result.trace, config.output_dir / files::kLossTrace);
  write_checkpoint(encoder, train_config, checkpoint_path(config));

  RunReport r;
  r.stage = "train";
  r.input_count = manifest.size();
  r.output_count = manifest.size();
  r.records_written = result.trace.size();
  r.details["train_config"] = train_config.to_json();
  r.details["steps"] = result.trace.size();
  r.details["items_not_batched"] = result.dropped_items;
  if (!result.trace.empty()) {
    r.details["initial_loss"] = result.trace.front().loss;
    r.details["final_loss"] = result.trace.back().loss;
  }
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_report(config, r);
  return r;
}

RunReport cmd_eval_aro(const PipelineConfig& config) {
  config.validate();
  const auto start = Clock::now();
  require_file(config.aro_tasks);
  const auto tasks = read_choice_tasks(config.aro_tasks);
  auto encoder = make_eval_encoder(config, config.aro_tasks);
  const auto scores = score_choice_tasks(tasks, *encoder);
  write_file_atomic(config.output_dir / files::kAroResults, scores.to_json().dump(2) + "\n");
  RunReport r;
  r.stage = "eval-aro";
  r.input_count = tasks.size();
  r.output_count = tasks.size();
  r.records_written = 1;
  r.details["results"] = scores.to_json();
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_report(config, r);
  return r;
}

RunReport cmd_eval_retrieval(const PipelineConfig& config) {
  config.validate();
  const auto start = Clock::now();
  require_file(config.retrieval_split);
  const auto split = RetrievalSplit::load(config.retrieval_split);
  auto encoder = make_eval_encoder(config, config.retrieval_split);
  const auto results = evaluate_retrieval(split, *encoder, config.ks);
  write_file_atomic(config.output_dir / files::kRetrievalResults, results.dump(2) + "\n");
  RunReport r;
  r.stage = "eval-retrieval";
  r.input_count = split.captions.size();
  r.output_count = split.captions.size();
  r.records_written = 1;
  r.details["results"] = results;
  r.duration_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  write_report(config, r);
  return r;
}

std::vector<RunReport> cmd_run_all(const PipelineConfig& config) {
  using Stage = RunReport (*)(const PipelineConfig&);
  std::vector<Stage> stages{cmd_extract, cmd_ground, cmd_decouple, cmd_synthesize,
                            cmd_filter,  cmd_pairs,  cmd_stats,    cmd_train};
  if (!config.aro_tasks.empty()) stages.push_back(cmd_eval_aro);
  if (!config.retrieval_split.empty()) stages.push_back(cmd_eval_retrieval);

  // The ledger path selects counts-only stats, which run-all never wants.
  auto cfg = config;
  cfg.ledger.clear();
  std::vector<RunReport> reports;
  for (auto stage : stages) {
    reports.push_back(stage(cfg));
    if (!reports.back().ok) break;
  }
  return reports;
}

}  // namespace biaug
