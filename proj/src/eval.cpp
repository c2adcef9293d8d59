#include "biaug/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "biaug/error.hpp"
#include "biaug/manifest.hpp"

namespace biaug {

std::vector<ChoiceTask> read_choice_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  std::vector<ChoiceTask> tasks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      require_exact_fields(j, {"image_ref", "captions", "correct_index", "group"});
      ChoiceTask t{j.at("image_ref").get<std::string>(),
                   j.at("captions").get<std::vector<std::string>>(),
                   j.at("correct_index").get<std::size_t>(), j.at("group").get<std::string>()};
      if (t.captions.size() < 2) throw std::invalid_argument("a task needs at least 2 captions");
      if (t.correct_index >= t.captions.size()) {
        throw std::invalid_argument("correct_index out of range");
      }
      tasks.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  return tasks;
}

void write_choice_tasks(const std::vector<ChoiceTask>& tasks, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : tasks) {
    ordered_json j;
    j["image_ref"] = t.image_ref;
    j["captions"] = t.captions;
    j["correct_index"] = t.correct_index;
    j["group"] = t.group;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

nlohmann::ordered_json ChoiceScores::to_json() const {
  ordered_json groups = ordered_json::object();
  for (const auto& [g, acc] : per_group) groups[g] = acc;
  return {{"per_group", groups}, {"macro", macro}};
}

ChoiceScores score_choice_similarities(const std::vector<ChoiceTask>& tasks,
                                       const std::vector<std::vector<double>>& similarities) {
  if (tasks.size() != similarities.size()) {
    throw std::invalid_argument("one similarity row per task is required");
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    const auto& sims = similarities[t];
    if (sims.size() != task.captions.size()) {
      throw std::invalid_argument("similarity row length must match the caption count");
    }
    const double best = sims[task.correct_index];
    bool correct = true;
    for (std::size_t c = 0; c < sims.size() && correct; ++c) {
      if (c != task.correct_index && !(best > sims[c])) correct = false;
    }
    auto& [ok, total] = tally[task.group];
    ok += correct ? 1 : 0;
    ++total;
  }
  ChoiceScores scores;
  for (const auto& [group, counts] : tally) {
    scores.per_group[group] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  if (!scores.per_group.empty()) {
    double sum = 0.0;
    for (const auto& [g, acc] : scores.per_group) sum += acc;
    scores.macro = sum / static_cast<double>(scores.per_group.size());
  }
  return scores;
}

ChoiceScores score_choice_tasks(const std::vector<ChoiceTask>& tasks, Encoder& encoder) {
  std::map<std::string, Eigen::VectorXd> text_cache, image_cache;
  auto embed = [&](std::map<std::string, Eigen::VectorXd>& cache, Modality m,
                   const std::string& payload) -> const Eigen::VectorXd& {
    auto it = cache.find(payload);
    if (it == cache.end()) it = cache.emplace(payload, encoder.embed({m, payload})).first;
    return it->second;
  };
  std::vector<std::vector<double>> sims;
  for (const auto& task : tasks) {
    const auto& img = embed(image_cache, Modality::image, task.image_ref);
    std::vector<double> row;
    for (const auto& c : task.captions) row.push_back(img.dot(embed(text_cache, Modality::text, c)));
    sims.push_back(std::move(row));
  }
  return score_choice_similarities(tasks, sims);
}

// ---------------------------------------------------------------------------

std::string make_attribute_swap_negative(const std::string& caption) {
  auto words = split_words(caption);
  if (words.size() != 7) {
    throw UnparseableCaption("expected 'the A1 O1 and the A2 O2': " + caption);
  }
  std::string period;
  if (words.back().size() > 1 && words.back().back() == '.') {
    period = ".";
    words.back().pop_back();
  }
  if (to_lower(words[0]) != "the" || to_lower(words[3]) != "and" || to_lower(words[4]) != "the") {
    throw UnparseableCaption("expected 'the A1 O1 and the A2 O2': " + caption);
  }
  if (to_lower(words[1]) == to_lower(words[5])) {
    throw UnparseableCaption("both objects carry the attribute '" + words[1] + "'");
  }
  std::swap(words[1], words[5]);
  return join_words(words) + period;
}

std::optional<OrderMode> parse_order_mode(std::string_view s) noexcept {
  if (s == "unigram_shuffle") return OrderMode::unigram_shuffle;
  if (s == "trigram_shuffle") return OrderMode::trigram_shuffle;
  if (s == "adj_noun_swap") return OrderMode::adj_noun_swap;
  return std::nullopt;
}

PosLexicon PosLexicon::builtin() {
  return {
      {"red", "blue", "green", "yellow", "black", "white", "brown", "orange", "pink", "purple",
       "gray", "grey", "golden", "silver", "wooden", "metal", "plastic", "glass", "stone",
       "paved", "round", "square", "big", "small", "large", "little", "tall", "short", "old",
       "young", "new", "sliced", "whole", "wet", "dry", "striped", "dark", "bright"},
      {"dog", "cat", "boat", "car", "ball", "table", "plate", "salmon", "house", "road", "tree",
       "bird", "chair", "man", "woman", "person", "child", "street", "lake", "park", "kitchen",
       "beach", "field", "grass", "snow", "sky", "water", "mouth", "bus", "train", "horse",
       "bench", "building", "shirt", "hat", "window", "door", "flower", "cake", "fish", "bike",
       "umbrella", "flag", "sign", "wall", "floor"}};
}

namespace {

template <class T>
void shuffle_values(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  }
}

template <class T>
bool all_equal(const std::vector<T>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

// Permutes `values` so the result differs from the input; rotation is the
// fallback when random draws keep landing on the identity.
template <class T>
void permute_distinct(std::vector<T>& values, std::mt19937_64& rng) {
  const auto original = values;
  for (int attempt = 0; attempt < 16; ++attempt) {
    shuffle_values(values, rng);
    if (values != original) return;
  }
  values = original;
  std::rotate(values.begin(), values.begin() + 1, values.end());
}

}  // namespace

std::string make_order_negative(const std::string& caption, OrderMode mode, std::uint64_t seed,
                                const PosLexicon& lexicon) {
  auto words = split_words(caption);
  std::mt19937_64 rng(seed);
  switch (mode) {
    case OrderMode::unigram_shuffle: {
      if (words.size() < 2 || all_equal(words)) {
        throw TooShort("unigram shuffle needs two distinct words");
      }
      permute_distinct(words, rng);
      return join_words(words);
    }
    case OrderMode::trigram_shuffle: {
      std::vector<std::vector<std::string>> blocks;
      for (std::size_t i = 0; i < words.size(); i += 3) {
        blocks.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(i),
                            words.begin() + static_cast<std::ptrdiff_t>(std::min(i + 3, words.size())));
      }
      if (blocks.size() < 2 || all_equal(blocks)) {
        throw TooShort("trigram shuffle needs two distinct 3-word blocks");
      }
      permute_distinct(blocks, rng);
      std::vector<std::string> out;
      for (const auto& b : blocks) out.insert(out.end(), b.begin(), b.end());
      return join_words(out);
    }
    case OrderMode::adj_noun_swap: {
      std::vector<std::size_t> adj_pos, noun_pos;
      for (std::size_t i = 0; i < words.size(); ++i) {
        const auto t = normalize_token(words[i]);
        if (lexicon.adjectives.count(t)) adj_pos.push_back(i);
        else if (lexicon.nouns.count(t)) noun_pos.push_back(i);
      }
      auto gather = [&](const std::vector<std::size_t>& pos) {
        std::vector<std::string> v;
        for (auto p : pos) v.push_back(words[p]);
        return v;
      };
      auto adjs = gather(adj_pos);
      auto nouns = gather(noun_pos);
      const bool adj_ok = adjs.size() >= 2 && !all_equal(adjs);
      const bool noun_ok = nouns.size() >= 2 && !all_equal(nouns);
      if (!adj_ok && !noun_ok) {
        throw TooShort("adjective/noun swap needs two distinct adjectives or nouns");
      }
      if (adj_ok) permute_distinct(adjs, rng);
      if (noun_ok) permute_distinct(nouns, rng);
      for (std::size_t i = 0; i < adj_pos.size(); ++i) words[adj_pos[i]] = adjs[i];
      for (std::size_t i = 0; i < noun_pos.size(); ++i) words[noun_pos[i]] = nouns[i];
      return join_words(words);
    }
  }
  throw std::invalid_argument("unknown order mode");
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> GoldMapping::image_to_captions() const {
  std::vector<std::vector<std::size_t>> out(n_images);
  for (std::size_t c = 0; c < caption_to_images.size(); ++c) {
    for (auto i : caption_to_images[c]) {
      if (i >= n_images) throw std::invalid_argument("gold mapping references a missing image");
      out[i].push_back(c);
    }
  }
  return out;
}

namespace {

// Position of item j in a descending sort with ties broken by lower index.
template <class Row>
std::size_t rank_of(const Row& scores, Eigen::Index j) {
  std::size_t rank = 0;
  const double s = scores[j];
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (scores[i] > s || (scores[i] == s && i < j)) ++rank;
  }
  return rank;
}

}  // namespace

double recall_at_k(const Eigen::MatrixXd& similarity, const GoldMapping& gold, std::size_t k,
                   RetrievalDirection direction) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!similarity.allFinite()) throw std::invalid_argument("similarity matrix must be finite");
  if (static_cast<std::size_t>(similarity.rows()) != gold.caption_to_images.size() ||
      static_cast<std::size_t>(similarity.cols()) != gold.n_images) {
    throw std::invalid_argument("similarity shape must be captions x images");
  }
  const bool by_caption = direction == RetrievalDirection::image_retrieval;
  const auto golds = by_caption ? gold.caption_to_images : gold.image_to_captions();
  if (golds.empty()) return 0.0;

  std::size_t hits = 0;
  for (std::size_t q = 0; q < golds.size(); ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    for (auto g : golds[q]) {
      const auto gi = static_cast<Eigen::Index>(g);
      const auto rank = by_caption ? rank_of(similarity.row(qi), gi)
                                   : rank_of(similarity.col(qi), gi);
      if (rank < k) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(golds.size());
}

RetrievalSplit RetrievalSplit::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  RetrievalSplit split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      require_exact_fields(j, {"image_ref", "captions"});
      const auto image_index = split.images.size();
      split.images.push_back(j.at("image_ref").get<std::string>());
      const auto caps = j.at("captions").get<std::vector<std::string>>();
      if (caps.empty()) throw std::invalid_argument("an image needs at least one caption");
      for (const auto& c : caps) {
        split.captions.push_back(c);
        split.gold.caption_to_images.push_back({image_index});
      }
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  split.gold.n_images = split.images.size();
  split.validate();
  return split;
}

void RetrievalSplit::validate() const {
  if (gold.caption_to_images.size() != captions.size() || gold.n_images != images.size()) {
    throw std::invalid_argument("gold mapping does not match the split");
  }
  for (const auto& g : gold.caption_to_images) {
    if (g.empty()) throw std::invalid_argument("every caption needs a gold image");
  }
  for (const auto& g : gold.image_to_captions()) {
    if (g.empty()) throw std::invalid_argument("every image needs a gold caption");
  }
}

nlohmann::ordered_json recall_table(const Eigen::MatrixXd& similarity, const GoldMapping& gold,
                                    const std::vector<std::size_t>& ks) {
  ordered_json out;
  for (auto k : ks) {
    out["image@" + std::to_string(k)] =
        recall_at_k(similarity, gold, k, RetrievalDirection::image_retrieval);
  }
  for (auto k : ks) {
    out["text@" + std::to_string(k)] =
        recall_at_k(similarity, gold, k, RetrievalDirection::text_retrieval);
  }
  return out;
}

nlohmann::ordered_json evaluate_retrieval(const RetrievalSplit& split, Encoder& encoder,
                                          const std::vector<std::size_t>& ks) {
  split.validate();
  const auto d = static_cast<Eigen::Index>(encoder.dimension());
  Eigen::MatrixXd text(static_cast<Eigen::Index>(split.captions.size()), d);
  Eigen::MatrixXd image(static_cast<Eigen::Index>(split.images.size()), d);
  for (std::size_t c = 0; c < split.captions.size(); ++c) {
    text.row(static_cast<Eigen::Index>(c)) = encoder.embed({Modality::text, split.captions[c]});
  }
  for (std::size_t i = 0; i < split.images.size(); ++i) {
    image.row(static_cast<Eigen::Index>(i)) = encoder.embed({Modality::image, split.images[i]});
  }
  return recall_table(text * image.transpose(), split.gold, ks);
}

}  // namespace biaug
