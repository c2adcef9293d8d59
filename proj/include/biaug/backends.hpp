#pragma once

// Interfaces for the four external model roles (text generator, grounding
// detector, inpainter, embedding encoder) plus deterministic mocks.
// HTTP clients live in http_backends.hpp; the toy encoder in toy_encoder.hpp.

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biaug/core.hpp"
#include "biaug/image.hpp"

namespace biaug {

struct TextGenRequest {
  std::string prompt;
  double temperature = 0.0;
  std::int64_t seed = 0;
};

struct DetectionRequest {
  std::string image_ref;
  std::vector<std::string> candidate_names;
};

struct InpaintRequest {
  std::string image_ref;
  BoundingBox mask;
  std::string prompt;
};

enum class Modality { text, image };

struct EmbeddingRequest {
  Modality modality = Modality::text;
  std::string payload;  // caption text, or an image_ref
};

/// Detector output before it is attached to a source record.
struct Detection {
  std::string name;
  BoundingBox box;
  double confidence = 0.0;

  bool operator==(const Detection&) const = default;
};

// Request validation; throws std::invalid_argument on a precondition violation.
void validate(const TextGenRequest& req);
void validate(const DetectionRequest& req);
void validate(const EmbeddingRequest& req);

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate_text(const TextGenRequest& req) = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const DetectionRequest& req) = 0;
};

class Inpainter {
 public:
  virtual ~Inpainter() = default;
  /// Returns the image_ref of a newly written image.
  virtual std::string inpaint(const InpaintRequest& req) = 0;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  /// Unit-norm embedding.
  virtual Eigen::VectorXd embed(const EmbeddingRequest& req) = 0;
  virtual std::size_t dimension() const = 0;
};

// ---------------------------------------------------------------------------
// Mocks

/// Labels the mock text generator looks for in a rendered prompt. Templates
/// end with these labelled lines; few-shot blocks may repeat them earlier.
inline constexpr std::string_view kCaptionLabel = "Caption:";
inline constexpr std::string_view kObjectLabel = "Object:";
inline constexpr std::string_view kDescriptionLabel = "Description:";

struct MockLlmConfig {
  /// Nouns the extractor recognises in captions (whole-word, case-insensitive).
  std::vector<std::string> lexicon;
  /// Objects implied by a noun that is present, e.g. salmon -> plate. The key
  /// "*" applies to every caption.
  std::map<std::string, std::vector<std::string>> scene_implied;
  /// Attribute words per category. Categories with fewer than two distinct
  /// words are declined.
  std::map<AttributeCategory, std::vector<std::string>> attribute_words;
  /// Per-object overrides of attribute_words.
  std::map<std::string, std::map<AttributeCategory, std::vector<std::string>>> object_attribute_words;
  /// Prompts containing any of these substrings fail with BackendUnavailable.
  std::vector<std::string> fail_on;
};

/// Pure function of (prompt, seed). Understands three prompt kinds, keyed by
/// the labels after the last Caption line: extraction (caption only),
/// decoupling (caption + object) and caption rewriting (caption + object +
/// description).
class MockTextGenerator final : public TextGenerator {
 public:
  explicit MockTextGenerator(MockLlmConfig config);
  std::string generate_text(const TextGenRequest& req) override;

  std::string extract(const std::string& caption) const;
  std::string decouple(const std::string& caption, const std::string& object_name,
                       std::int64_t seed) const;
  std::string rewrite(const std::string& caption, const std::string& object_name,
                      const std::string& description) const;

 private:
  MockLlmConfig config_;
  std::set<std::string> attribute_vocabulary_;
};

struct SceneObject {
  std::string name;
  BoundingBox box;
};

/// Knows the objects of each image from a scene table. Confidence is
/// 0.5 + 0.5 * (box area / image area).
class MockDetector final : public Detector {
 public:
  MockDetector(std::map<std::string, std::vector<SceneObject>> scenes, ImageResolver resolver);
  std::vector<Detection> detect(const DetectionRequest& req) override;

 private:
  std::map<std::string, std::vector<SceneObject>> scenes_;
  ImageResolver resolver_;
};

/// Colour the mock inpainter paints for a prompt: low 24 bits of its hash.
Rgb prompt_color(std::string_view prompt) noexcept;

/// Fills the mask with prompt_color(prompt) and writes the result under
/// <output_root>/synth/. Pixels outside the mask are copied unchanged.
class MockInpainter final : public Inpainter {
 public:
  MockInpainter(ImageResolver resolver, std::filesystem::path output_root,
                std::vector<std::string> fail_on = {});
  std::string inpaint(const InpaintRequest& req) override;

 private:
  ImageResolver resolver_;
  std::filesystem::path output_root_;
  std::vector<std::string> fail_on_;
};

}  // namespace biaug
