#pragma once

// Compositionality scoring over caption-choice tasks, the two families of
// hard-negative caption generators used by such benchmarks, and
// cross-modal retrieval recall@K.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biaug/backends.hpp"
#include "json.hpp"

namespace biaug {

struct ChoiceTask {
  std::string image_ref;
  std::vector<std::string> captions;
  std::size_t correct_index = 0;
  std::string group;
};

std::vector<ChoiceTask> read_choice_tasks(const std::filesystem::path& path);
void write_choice_tasks(const std::vector<ChoiceTask>& tasks, const std::filesystem::path& path);

struct ChoiceScores {
  std::map<std::string, double> per_group;
  double macro = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// similarities[t][c] is the image-caption similarity of caption c in task
/// t. A task is correct iff its correct caption is strictly the most similar;
/// ties count as wrong. Macro accuracy is the unweighted mean over groups.
ChoiceScores score_choice_similarities(const std::vector<ChoiceTask>& tasks,
                                       const std::vector<std::vector<double>>& similarities);

ChoiceScores score_choice_tasks(const std::vector<ChoiceTask>& tasks, Encoder& encoder);

/// "the A1 O1 and the A2 O2" -> "the A2 O1 and the A1 O2". A trailing period
/// is kept. Throws UnparseableCaption when the caption does not follow that
/// shape or A1 == A2.
std::string make_attribute_swap_negative(const std::string& caption);

enum class OrderMode { unigram_shuffle, trigram_shuffle, adj_noun_swap };

std::optional<OrderMode> parse_order_mode(std::string_view s) noexcept;

/// Closed-class word lists for adj_noun_swap.
struct PosLexicon {
  std::set<std::string> adjectives;
  std::set<std::string> nouns;

  static PosLexicon builtin();
};

/// Seed-deterministic reordering that never returns the input. unigram and
/// trigram modes permute words / 3-word blocks; adj_noun_swap permutes the
/// adjectives among themselves and the nouns among themselves. Throws
/// TooShort when no distinct reordering exists.
std::string make_order_negative(const std::string& caption, OrderMode mode, std::uint64_t seed,
                                const PosLexicon& lexicon = PosLexicon::builtin());

enum class RetrievalDirection { image_retrieval, text_retrieval };

/// caption_to_images[c] lists the gold images of caption c.
struct GoldMapping {
  std::vector<std::vector<std::size_t>> caption_to_images;
  std::size_t n_images = 0;

  std::vector<std::vector<std::size_t>> image_to_captions() const;
};

/// similarity is captions x images. image_retrieval queries with captions,
/// text_retrieval with images. A query hits when any gold item ranks in the
/// top k (ties broken towards the lower index).
double recall_at_k(const Eigen::MatrixXd& similarity, const GoldMapping& gold, std::size_t k,
                   RetrievalDirection direction);

struct RetrievalSplit {
  std::vector<std::string> images;
  std::vector<std::string> captions;
  GoldMapping gold;

  /// One line per image: {"image_ref", "captions": [...]}.
  static RetrievalSplit load(const std::filesystem::path& path);
  void validate() const;
};

/// Keys "image@k" and "text@k" for each k, in ks order.
nlohmann::ordered_json evaluate_retrieval(const RetrievalSplit& split, Encoder& encoder,
                                          const std::vector<std::size_t>& ks = {1, 5, 10});

nlohmann::ordered_json recall_table(const Eigen::MatrixXd& similarity, const GoldMapping& gold,
                                    const std::vector<std::size_t>& ks);

}  // namespace biaug
