#pragma once

// The three augmentation phases: propose and ground objects, decouple
// object-attribute associations into description / counter-description
// pairs, then rewrite captions and inpaint matching images.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biaug/backends.hpp"
#include "biaug/core.hpp"
#include "biaug/error.hpp"

namespace biaug {

enum class TemplateKind { object_extraction, attribute_decoupling, caption_augmentation };

std::string_view to_string(TemplateKind k) noexcept;

/// Prompt text with "{}" placeholders filled in order.
/// object_extraction: caption. attribute_decoupling: caption, object.
/// caption_augmentation: caption, object, description.
class PromptTemplate {
 public:
  PromptTemplate(TemplateKind kind, std::string body, std::string few_shot_examples = {});

  static std::size_t arity(TemplateKind kind) noexcept;
  static PromptTemplate builtin(TemplateKind kind);
  static PromptTemplate load(TemplateKind kind, const std::filesystem::path& body_path,
                             const std::filesystem::path& examples_path = {});

  TemplateKind kind() const noexcept { return kind_; }
  const std::string& body() const noexcept { return body_; }
  const std::string& few_shot_examples() const noexcept { return few_shot_; }

  std::string render(const std::vector<std::string>& args) const;

 private:
  TemplateKind kind_;
  std::string body_;
  std::string few_shot_;
};

struct PromptSet {
  PromptTemplate extraction = PromptTemplate::builtin(TemplateKind::object_extraction);
  PromptTemplate decoupling = PromptTemplate::builtin(TemplateKind::attribute_decoupling);
  PromptTemplate caption = PromptTemplate::builtin(TemplateKind::caption_augmentation);
};

struct GenerationOptions {
  double temperature = 0.0;
  std::int64_t seed = 0;
};

struct DecoupleResult {
  std::vector<AttributeSpec> specs;  // at most one per category, category order
};

// Strict response parsers. Each throws UnparseableResponse.
std::vector<std::string> parse_object_list(const std::string& response);
DecoupleResult parse_decouple_response(const std::string& response, const std::string& source_id,
                                       const std::string& object_name);

/// Sends the prompt; on an unparseable or empty answer re-prompts once with
/// the parse error appended, then gives up with UnparseableResponse.
template <class Parser>
auto generate_and_parse(TextGenerator& gen, const std::string& prompt,
                        const GenerationOptions& opts, Parser&& parse)
    -> decltype(parse(std::string{}));

std::vector<std::string> extract_objects(const std::string& caption, const PromptTemplate& tmpl,
                                         TextGenerator& gen, const GenerationOptions& opts = {});

/// Detections restricted to the candidates, deduplicated by name (highest
/// confidence wins) and ordered as the candidates.
std::vector<DetectedObject> ground_objects(const CaptionImagePair& pair,
                                           const std::vector<std::string>& candidates,
                                           Detector& detector);

DecoupleResult decouple_attributes(const std::string& source_id, const std::string& caption,
                                   const std::string& object_name, const PromptTemplate& tmpl,
                                   TextGenerator& gen, const GenerationOptions& opts = {});

/// Attribute words of a description: its tokens minus a leading article and
/// the object's own words.
std::vector<std::string> attribute_tokens(const std::string& description,
                                          const std::string& object_name);

/// Rewrites the caption so the object is described by `description`. An
/// already-augmented caption comes back unchanged.
std::string augment_caption(const std::string& caption, const std::string& object_name,
                            const std::string& description, const PromptTemplate& tmpl,
                            TextGenerator& gen, const GenerationOptions& opts = {});

/// Builds one side of a hard-negative pair: rewritten caption plus an image
/// whose object box is inpainted from that side's description.
AugmentedExample synthesize_example(const CaptionImagePair& pair, const DetectedObject& object,
                                    const AttributeSpec& spec, Side side, Inpainter& inpainter,
                                    TextGenerator& gen, const PromptTemplate& caption_template,
                                    const GenerationOptions& opts = {});

/// True when the two captions differ only inside the spans where their
/// descriptions were inserted: after removing the common word prefix and
/// suffix, each remainder is a contiguous run of its description's words.
bool captions_differ_only_in_descriptions(const std::string& caption_a,
                                          const std::string& caption_b,
                                          const std::string& description_a,
                                          const std::string& description_b);

// ---------------------------------------------------------------------------

template <class Parser>
auto generate_and_parse(TextGenerator& gen, const std::string& prompt,
                        const GenerationOptions& opts, Parser&& parse)
    -> decltype(parse(std::string{})) {
  auto ask = [&](const std::string& p) -> std::string {
    try {
      return gen.generate_text({p, opts.temperature, opts.seed});
    } catch (const EmptyResponse&) {
      return {};
    }
  };
  std::string response = ask(prompt);
  try {
    return parse(response);
  } catch (const UnparseableResponse& first) {
    const auto repair = prompt +
                        "\n\nYour previous answer could not be used (" + first.what() +
                        "). Answer again using only the requested format.\n";
    return parse(ask(repair));
  }
}

}  // namespace biaug
