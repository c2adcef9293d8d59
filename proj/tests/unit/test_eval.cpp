#include <doctest.h>

#include <map>
#include <random>

#include "biaug/error.hpp"
#include "biaug/eval.hpp"
#include "biaug/toy_encoder.hpp"
#include "biaug/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace biaug;

namespace {

ChoiceTask task(const std::string& group, std::size_t n = 2) {
  ChoiceTask t;
  t.image_ref = "img";
  t.group = group;
  for (std::size_t i = 0; i < n; ++i) t.captions.push_back("c" + std::to_string(i));
  return t;
}

std::vector<std::string> sorted_words(const std::string& s) {
  auto w = split_words(s);
  std::sort(w.begin(), w.end());
  return w;
}

GoldMapping identity_gold(std::size_t n) {
  GoldMapping g;
  g.n_images = n;
  for (std::size_t i = 0; i < n; ++i) g.caption_to_images.push_back({i});
  return g;
}

}  // namespace

TEST_CASE("macro accuracy averages groups without weighting") {
  const std::vector<ChoiceTask> tasks = {task("A", 3), task("A", 3), task("A", 3), task("B"),
                                         task("B")};
  const std::vector<std::vector<double>> sims = {
      {0.9, 0.1, 0.2}, {0.8, 0.7, 0.1}, {0.1, 0.5, 0.2}, {0.6, 0.4}, {0.3, 0.4}};
  const auto s = score_choice_similarities(tasks, sims);
  CHECK(s.per_group.at("A") == doctest::Approx(2.0 / 3.0));
  CHECK(s.per_group.at("B") == doctest::Approx(0.5));
  CHECK(s.macro == doctest::Approx(7.0 / 12.0));
}

TEST_CASE("choice ties count as wrong and scoring is invariant to monotone maps") {
  CHECK(score_choice_similarities({task("A")}, {{0.5, 0.5}}).macro == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ChoiceTask> tasks;
  std::vector<std::vector<double>> sims, mapped;
  for (int i = 0; i < 100; ++i) {
    tasks.push_back(task(i % 3 == 0 ? "x" : "y", 4));
    tasks.back().correct_index = static_cast<std::size_t>(i % 4);
    std::vector<double> row(4);
    for (auto& v : row) v = u(rng);
    sims.push_back(row);
    for (auto& v : row) v = std::exp(3.0 * v) + 1.0;
    mapped.push_back(row);
  }
  const auto a = score_choice_similarities(tasks, sims);
  const auto b = score_choice_similarities(tasks, mapped);
  CHECK(a.macro == b.macro);
  CHECK(a.per_group == b.per_group);
  CHECK_THROWS_AS(score_choice_similarities(tasks, {}), std::invalid_argument);
}

TEST_CASE("attribute swap") {
  CHECK(make_attribute_swap_negative("the paved road and the white house") ==
        "the white road and the paved house");
  CHECK(make_attribute_swap_negative("the white road and the paved house") ==
        "the paved road and the white house");
  CHECK(make_attribute_swap_negative("The red car and the blue bus.") ==
        "The blue car and the red bus.");
  CHECK_THROWS_AS(make_attribute_swap_negative("the red car and the red bus"),
                  UnparseableCaption);
  CHECK_THROWS_AS(make_attribute_swap_negative("a red car and a blue bus"), UnparseableCaption);
  CHECK_THROWS_AS(make_attribute_swap_negative("the red car"), UnparseableCaption);
}

TEST_CASE("order negatives") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto u = make_order_negative("a b c", OrderMode::unigram_shuffle, seed);
    CHECK(u != "a b c");
    CHECK(sorted_words(u) == sorted_words("a b c"));
    CHECK(make_order_negative("a b c d e f", OrderMode::trigram_shuffle, seed) == "d e f a b c");
  }
  CHECK(make_order_negative("a b c", OrderMode::unigram_shuffle, 7) ==
        make_order_negative("a b c", OrderMode::unigram_shuffle, 7));
  CHECK_THROWS_AS(make_order_negative("word", OrderMode::unigram_shuffle, 0), TooShort);
  CHECK_THROWS_AS(make_order_negative("a b c", OrderMode::trigram_shuffle, 0), TooShort);
  CHECK_THROWS_AS(make_order_negative("x x", OrderMode::unigram_shuffle, 0), TooShort);

  const auto swapped =
      make_order_negative("the white dog near the red house", OrderMode::adj_noun_swap, 1);
  CHECK(swapped == "the red house near the white dog");
  CHECK_THROWS_AS(make_order_negative("the dog runs", OrderMode::adj_noun_swap, 0), TooShort);
  CHECK(parse_order_mode("trigram_shuffle") == OrderMode::trigram_shuffle);
}

TEST_CASE("order negative property: multiset preserved, never identity") {
  std::mt19937_64 rng(12);
  const std::vector<std::string> vocab = {"a", "dog", "red", "on", "the", "grass", "runs"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> words(2 + rng() % 10);
    for (auto& w : words) w = vocab[rng() % vocab.size()];
    const auto caption = join_words(words);
    for (auto mode : {OrderMode::unigram_shuffle, OrderMode::trigram_shuffle}) {
      try {
        const auto out = make_order_negative(caption, mode, trial);
        REQUIRE(out != caption);
        REQUIRE(sorted_words(out) == sorted_words(caption));
      } catch (const TooShort&) {
      }
    }
  }
}

TEST_CASE("recall examples") {
  Eigen::MatrixXd s(2, 2);
  s << 0.9, 0.1, 0.8, 0.2;
  CHECK(recall_at_k(s, identity_gold(2), 1, RetrievalDirection::image_retrieval) == 0.5);
  CHECK(recall_at_k(s, identity_gold(2), 2, RetrievalDirection::image_retrieval) == 1.0);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(5, 5);
  for (auto dir : {RetrievalDirection::image_retrieval, RetrievalDirection::text_retrieval}) {
    CHECK(recall_at_k(eye, identity_gold(5), 1, dir) == 1.0);
    CHECK(recall_at_k(Eigen::MatrixXd::Zero(5, 5), identity_gold(5), 5, dir) == 1.0);
    CHECK(recall_at_k(Eigen::MatrixXd::Zero(5, 5), identity_gold(5), 99, dir) == 1.0);
  }
  // Ties favour the lower index: caption 1 ranks image 0 first.
  CHECK(recall_at_k(Eigen::MatrixXd::Zero(2, 2), identity_gold(2), 1,
                    RetrievalDirection::image_retrieval) == 0.5);
}

TEST_CASE("recall agrees with a sorting oracle and is monotone in k") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> coarse(0, 9);  // coarse values force ties
  for (int trial = 0; trial < 100; ++trial) {
    const auto n_caps = 1 + rng() % 12, n_imgs = 1 + rng() % 12;
    Eigen::MatrixXd s(n_caps, n_imgs);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = coarse(rng) / 10.0;
    GoldMapping g;
    g.n_images = n_imgs;
    for (std::size_t c = 0; c < n_caps; ++c) g.caption_to_images.push_back({rng() % n_imgs});
    for (auto dir : {RetrievalDirection::image_retrieval, RetrievalDirection::text_retrieval}) {
      double previous = 0.0;
      for (std::size_t k = 1; k <= 13; ++k) {
        const double r = recall_at_k(s, g, k, dir);
        REQUIRE(r == oracle::recall_at_k(s, g, k, dir));
        REQUIRE(r >= previous);
        previous = r;
      }
    }
  }
}

TEST_CASE("recall table keys follow the k list") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
  const auto t = recall_table(eye, identity_gold(3), {1});
  CHECK(t.dump() == R"({"image@1":1.0,"text@1":1.0})");
}

TEST_CASE("trained toy encoder retrieves a separable split perfectly") {
  const auto dir = testing::temp_dir("retrieval");
  const std::vector<Rgb> colors = {{250, 0, 0}, {0, 250, 0}, {0, 0, 250}, {250, 250, 0},
                                   {0, 250, 250}};
  const std::vector<std::string> names = {"red", "green", "blue", "yellow", "cyan"};
  std::string split_file;
  std::vector<AugmentedExample> manifest;
  for (std::size_t i = 0; i < colors.size(); ++i) {
    write_ppm(Image(8, 8, colors[i]), dir / (names[i] + ".ppm"));
    split_file += R"({"image_ref":")" + names[i] + R"(.ppm","captions":["a )" + names[i] +
                  R"( square"]})" + "\n";
    manifest.push_back(as_source_example({names[i], "a " + names[i] + " square", names[i] + ".ppm"}));
  }
  testing::spit(dir / "split.jsonl", split_file);
  const auto split = RetrievalSplit::load(dir / "split.jsonl");
  CHECK_NOTHROW(split.validate());

  ToyEncoderConfig ec;
  ec.dim = 16;
  ec.seed = 2;
  ToyEncoder enc(ec, ImageResolver({dir}));
  auto config = TrainConfig::toy_defaults();
  config.batch_size = 5;
  config.epochs = 200;
  train(manifest, {}, enc, ImageResolver({dir}), config);
  const auto r = evaluate_retrieval(split, enc);
  for (const auto* key : {"image@1", "image@5", "image@10", "text@1", "text@5", "text@10"}) {
    CHECK(r.at(key).get<double>() == 1.0);
  }
}

TEST_CASE("choice task file round trip") {
  const auto dir = testing::temp_dir("choice");
  auto t = task("order_unigram", 3);
  t.correct_index = 0;
  write_choice_tasks({t}, dir / "tasks.jsonl");
  const auto back = read_choice_tasks(dir / "tasks.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0].captions == t.captions);
  CHECK(back[0].group == "order_unigram");
  testing::spit(dir / "bad.jsonl", R"({"image_ref":"i","captions":["only"],"correct_index":0,"group":"g"})");
  CHECK_THROWS(read_choice_tasks(dir / "bad.jsonl"));
}
