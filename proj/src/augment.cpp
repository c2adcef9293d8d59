#include "biaug/augment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "biaug/error.hpp"
#include "builtin_templates.hpp"

namespace biaug {

std::string_view to_string(TemplateKind k) noexcept {
  switch (k) {
    case TemplateKind::object_extraction: return "object_extraction";
    case TemplateKind::attribute_decoupling: return "attribute_decoupling";
    case TemplateKind::caption_augmentation: return "caption_augmentation";
  }
  return "unknown";
}

namespace {

std::size_t count_placeholders(const std::string& body) {
  std::size_t n = 0;
  for (auto pos = body.find("{}"); pos != std::string::npos; pos = body.find("{}", pos + 2)) ++n;
  return n;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

PromptTemplate::PromptTemplate(TemplateKind kind, std::string body, std::string few_shot_examples)
    : kind_(kind), body_(std::move(body)), few_shot_(std::move(few_shot_examples)) {
  const auto n = count_placeholders(body_);
  if (n != arity(kind_)) {
    throw ConfigInvalid(std::string(to_string(kind_)) + " template",
                        "expected " + std::to_string(arity(kind_)) + " placeholders, found " +
                            std::to_string(n));
  }
}

std::size_t PromptTemplate::arity(TemplateKind kind) noexcept {
  switch (kind) {
    case TemplateKind::object_extraction: return 1;
    case TemplateKind::attribute_decoupling: return 2;
    case TemplateKind::caption_augmentation: return 3;
  }
  return 0;
}

PromptTemplate PromptTemplate::builtin(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::object_extraction:
      return {kind, std::string(builtin::kObjectExtraction)};
    case TemplateKind::attribute_decoupling:
      return {kind, std::string(builtin::kAttributeDecoupling),
              std::string(builtin::kAttributeDecouplingExamples)};
    case TemplateKind::caption_augmentation:
      return {kind, std::string(builtin::kCaptionAugmentation)};
  }
  throw std::invalid_argument("unknown template kind");
}

PromptTemplate PromptTemplate::load(TemplateKind kind, const std::filesystem::path& body_path,
                                    const std::filesystem::path& examples_path) {
  return {kind, read_text(body_path), examples_path.empty() ? std::string() : read_text(examples_path)};
}

std::string PromptTemplate::render(const std::vector<std::string>& args) const {
  if (args.size() != arity(kind_)) {
    throw std::invalid_argument("template " + std::string(to_string(kind_)) + " takes " +
                                std::to_string(arity(kind_)) + " arguments");
  }
  std::string out;
  if (!few_shot_.empty()) {
    out = few_shot_;
    if (out.back() != '\n') out += '\n';
    out += '\n';
  }
  std::size_t prev = 0, arg = 0;
  for (auto pos = body_.find("{}"); pos != std::string::npos; pos = body_.find("{}", prev)) {
    out.append(body_, prev, pos - prev);
    out += args[arg++];
    prev = pos + 2;
  }
  out.append(body_, prev, std::string::npos);
  return out;
}

// ---------------------------------------------------------------------------
// Parsers

namespace {

std::vector<std::string> nonblank_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    auto t = trim(line);
    if (!t.empty()) lines.push_back(std::move(t));
  }
  return lines;
}

std::string strip_quotes(std::string s) {
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                           (s.front() == '\'' && s.back() == '\''))) {
    s = trim(std::string_view(s).substr(1, s.size() - 2));
  }
  return s;
}

// "- dog", "1. dog", "2) dog" -> "dog"
std::string strip_list_marker(std::string s) {
  std::size_t i = 0;
  if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
    i = 1;
  } else {
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
      ++i;
    } else {
      i = 0;
    }
  }
  return trim(std::string_view(s).substr(i));
}

bool is_none(const std::string& s) {
  const auto t = to_lower(strip_quotes(trim(s)));
  return t == "none" || t == "none." || t == "-";
}

constexpr std::size_t kMaxNounPhraseWords = 6;

}  // namespace

std::vector<std::string> parse_object_list(const std::string& response) {
  const auto lines = nonblank_lines(response);
  if (lines.empty()) throw UnparseableResponse("empty response", response);
  if (lines.size() == 1 && is_none(lines[0])) return {};

  std::vector<std::string> out;
  for (const auto& line : lines) {
    std::string item;
    std::istringstream in(line);
    while (std::getline(in, item, ',')) {
      auto name = to_lower(strip_quotes(strip_list_marker(trim(item))));
      while (!name.empty() && (name.back() == '.' || name.back() == ';')) name.pop_back();
      name = trim(name);
      if (name.empty()) continue;
      if (split_words(name).size() > kMaxNounPhraseWords) {
        throw UnparseableResponse("'" + name + "' is not a short noun phrase", response);
      }
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
    }
  }
  if (out.empty()) throw UnparseableResponse("no object names found", response);
  return out;
}

DecoupleResult parse_decouple_response(const std::string& response, const std::string& source_id,
                                       const std::string& object_name) {
  const auto lines = nonblank_lines(response);
  if (lines.empty()) throw UnparseableResponse("empty response", response);
  if (lines.size() == 1 && is_none(lines[0])) return {};

  std::set<AttributeCategory> seen;
  DecoupleResult result;
  for (const auto& raw : lines) {
    const auto line = strip_list_marker(raw);
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw UnparseableResponse("line without 'category:' prefix: " + line, response);
    }
    const auto key = to_lower(trim(std::string_view(line).substr(0, colon)));
    const auto category = parse_category(key);
    if (!category) throw UnparseableResponse("unknown category '" + key + "'", response);
    if (!seen.insert(*category).second) {
      throw UnparseableResponse("category '" + key + "' repeated", response);
    }
    const auto rest = trim(std::string_view(line).substr(colon + 1));
    if (is_none(rest)) continue;
    const auto bar = rest.find('|');
    if (bar == std::string::npos || rest.find('|', bar + 1) != std::string::npos) {
      throw UnparseableResponse("expected 'description | counter-description' for " + key,
                                response);
    }
    AttributeSpec spec{source_id, object_name, *category,
                       strip_quotes(trim(std::string_view(rest).substr(0, bar))),
                       strip_quotes(trim(std::string_view(rest).substr(bar + 1)))};
    if (auto bad = check_invariants(spec)) {
      throw UnparseableResponse(key + ": " + *bad, response);
    }
    result.specs.push_back(std::move(spec));
  }
  std::sort(result.specs.begin(), result.specs.end(),
            [](const AttributeSpec& a, const AttributeSpec& b) { return a.category < b.category; });
  return result;
}

// ---------------------------------------------------------------------------
// Operations

std::vector<std::string> extract_objects(const std::string& caption, const PromptTemplate& tmpl,
                                         TextGenerator& gen, const GenerationOptions& opts) {
  if (tmpl.kind() != TemplateKind::object_extraction) {
    throw std::invalid_argument("extract_objects needs an object_extraction template");
  }
  return generate_and_parse(gen, tmpl.render({caption}), opts, parse_object_list);
}

std::vector<DetectedObject> ground_objects(const CaptionImagePair& pair,
                                           const std::vector<std::string>& candidates,
                                           Detector& detector) {
  if (candidates.empty()) throw std::invalid_argument("ground_objects needs candidates");
  const auto detections = detector.detect({pair.image_ref, candidates});
  std::vector<DetectedObject> out;
  for (const auto& name : candidates) {
    const Detection* best = nullptr;
    for (const auto& d : detections) {
      if (d.name == name && (!best || d.confidence > best->confidence)) best = &d;
    }
    if (best) out.push_back({pair.id, name, best->box, best->confidence});
  }
  return out;
}

DecoupleResult decouple_attributes(const std::string& source_id, const std::string& caption,
                                   const std::string& object_name, const PromptTemplate& tmpl,
                                   TextGenerator& gen, const GenerationOptions& opts) {
  if (tmpl.kind() != TemplateKind::attribute_decoupling) {
    throw std::invalid_argument("decouple_attributes needs an attribute_decoupling template");
  }
  return generate_and_parse(gen, tmpl.render({caption, object_name}), opts,
                            [&](const std::string& r) {
                              return parse_decouple_response(r, source_id, object_name);
                            });
}

std::vector<std::string> attribute_tokens(const std::string& description,
                                          const std::string& object_name) {
  std::set<std::string> object_words;
  for (const auto& w : split_words(object_name)) object_words.insert(normalize_token(w));
  std::vector<std::string> out;
  for (const auto& w : strip_article(split_words(description))) {
    auto t = normalize_token(w);
    if (!t.empty() && object_words.count(t) == 0) out.push_back(std::move(t));
  }
  return out;
}

std::string augment_caption(const std::string& caption, const std::string& object_name,
                            const std::string& description, const PromptTemplate& tmpl,
                            TextGenerator& gen, const GenerationOptions& opts) {
  if (tmpl.kind() != TemplateKind::caption_augmentation) {
    throw std::invalid_argument("augment_caption needs a caption_augmentation template");
  }
  const auto head = split_words(object_name);
  if (head.empty() ||
      to_lower(description).find(normalize_token(head.back())) == std::string::npos) {
    throw std::invalid_argument("description must reference the object '" + object_name + "'");
  }
  const auto attributes = attribute_tokens(description, object_name);
  if (attributes.empty()) {
    throw std::invalid_argument("description '" + description + "' carries no attribute");
  }
  const bool already_described =
      find_phrase(split_words(caption), strip_article(split_words(description))).has_value();

  auto parse = [&](const std::string& response) {
    const auto lines = nonblank_lines(response);
    if (lines.empty()) throw UnparseableResponse("empty response", response);
    auto out = strip_quotes(lines.front());
    const auto words = split_words(out);
    for (const auto& a : attributes) {
      if (!find_phrase(words, {a})) {
        throw UnparseableResponse("rewritten caption lacks attribute '" + a + "'", response);
      }
    }
    if (out == caption && !already_described) {
      throw UnparseableResponse("caption was not changed", response);
    }
    return out;
  };
  return generate_and_parse(gen, tmpl.render({caption, object_name, description}), opts, parse);
}

AugmentedExample synthesize_example(const CaptionImagePair& pair, const DetectedObject& object,
                                    const AttributeSpec& spec, Side side, Inpainter& inpainter,
                                    TextGenerator& gen, const PromptTemplate& caption_template,
                                    const GenerationOptions& opts) {
  if (object.source_id != pair.id || spec.source_id != pair.id ||
      spec.object_name != object.name) {
    throw std::invalid_argument("pair, object and spec must describe the same source object");
  }
  const auto& description = side == Side::positive ? spec.positive_desc : spec.negative_desc;

  AugmentedExample ex;
  ex.pair_id = make_pair_id(pair.id, object.name, spec.category);
  ex.example_id = make_example_id(ex.pair_id, side);
  ex.source_id = pair.id;
  ex.object_name = object.name;
  ex.category = spec.category;
  ex.side = side;
  ex.provenance = Provenance::synthesized;
  ex.caption = augment_caption(pair.caption, object.name, description, caption_template, gen, opts);
  if (ex.caption == pair.caption) {
    throw InvariantViolation(ex.example_id, "augmented caption equals the source caption");
  }
  ex.image_ref = inpainter.inpaint({pair.image_ref, object.box, description});
  return ex;
}

namespace {

bool contiguous_in(const std::vector<std::string>& needle, const std::vector<std::string>& hay) {
  if (needle.empty()) return true;
  return find_phrase(hay, needle).has_value();
}

}  // namespace

bool captions_differ_only_in_descriptions(const std::string& caption_a,
                                          const std::string& caption_b,
                                          const std::string& description_a,
                                          const std::string& description_b) {
  const auto a = split_words(caption_a);
  const auto b = split_words(caption_b);
  if (a == b) return false;
  std::size_t prefix = 0;
  while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
  std::size_t suffix = 0;
  while (suffix < a.size() - prefix && suffix < b.size() - prefix &&
         a[a.size() - 1 - suffix] == b[b.size() - 1 - suffix]) {
    ++suffix;
  }
  const std::vector<std::string> mid_a(a.begin() + static_cast<std::ptrdiff_t>(prefix),
                                       a.end() - static_cast<std::ptrdiff_t>(suffix));
  const std::vector<std::string> mid_b(b.begin() + static_cast<std::ptrdiff_t>(prefix),
                                       b.end() - static_cast<std::ptrdiff_t>(suffix));
  return contiguous_in(mid_a, split_words(description_a)) &&
         contiguous_in(mid_b, split_words(description_b));
}

}  // namespace biaug
