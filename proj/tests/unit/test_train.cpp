#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "biaug/error.hpp"
#include "biaug/toy_encoder.hpp"
#include "biaug/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "toy_task.hpp"

using namespace biaug;
using testing::synthetic;

namespace {

Batch to_batch(const Eigen::MatrixXd& t, const Eigen::MatrixXd& v) {
  Batch b;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    b.items.push_back({t.row(i).transpose(), v.row(i).transpose(), std::to_string(i), ""});
  }
  return b;
}

std::vector<std::size_t> counterparts_for(std::size_t pairs, std::size_t fillers) {
  std::vector<std::size_t> c;
  for (std::size_t p = 0; p < pairs; ++p) {
    c.push_back(2 * p + 1);
    c.push_back(2 * p);
  }
  c.resize(2 * pairs + fillers, kNoCounterpart);
  return c;
}

std::size_t batch_of(const std::vector<std::vector<std::size_t>>& batches, std::size_t item) {
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (std::find(batches[b].begin(), batches[b].end(), item) != batches[b].end()) return b;
  }
  return kNoCounterpart;
}

}  // namespace

TEST_CASE("loss of identical items is ln N") {
  for (Eigen::Index n : {2, 4, 8}) {
    Eigen::MatrixXd same = Eigen::MatrixXd::Zero(n, 3);
    same.col(0).setOnes();
    for (double tau : {1.0, 0.07, 3.0}) {
      CHECK(contrastive_loss(to_batch(same, same), tau) ==
            doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss of an orthonormal batch at unit temperature") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  CHECK(contrastive_loss(to_batch(eye, eye), 1.0) ==
        doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  CHECK(contrastive_loss(to_batch(eye, eye), 1.0) == doctest::Approx(0.3133).epsilon(1e-4));
}

TEST_CASE("loss matches a direct oracle and is permutation invariant") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(rng() % 7);
    const auto d = 1 + static_cast<Eigen::Index>(rng() % 8);
    const auto t = oracle::random_unit_rows(n, d, rng);
    const auto v = oracle::random_unit_rows(n, d, rng);
    const double loss = contrastive_loss_with_grad(t, v, 0.3).loss;
    REQUIRE(loss == doctest::Approx(oracle::contrastive_loss(t, v, 0.3)).epsilon(1e-12));
    REQUIRE(loss >= 0.0);

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + n, rng);
    REQUIRE(contrastive_loss_with_grad(perm * t, perm * v, 0.3).loss ==
            doctest::Approx(loss).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 2 + static_cast<Eigen::Index>(rng() % 7);
    const auto d = 1 + static_cast<Eigen::Index>(rng() % 8);
    const auto t = oracle::random_unit_rows(n, d, rng);
    const auto v = oracle::random_unit_rows(n, d, rng);
    const auto g = contrastive_loss_with_grad(t, v, 0.5);
    for (int which = 0; which < 2; ++which) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          Eigen::MatrixXd tp = t, tm = t, vp = v, vm = v;
          (which == 0 ? tp : vp)(i, j) += h;
          (which == 0 ? tm : vm)(i, j) -= h;
          const double fd = (oracle::contrastive_loss(tp, vp, 0.5) - oracle::contrastive_loss(tm, vm, 0.5)) / (2 * h);
          const double an = (which == 0 ? g.d_text : g.d_image)(i, j);
          REQUIRE(std::abs(an - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
}

TEST_CASE("batch validation") {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 2);
  CHECK_THROWS_AS(contrastive_loss(to_batch(one, one), 0.07), DegenerateBatch);
  Eigen::MatrixXd unnormed = Eigen::MatrixXd::Identity(2, 2) * 2.0;
  CHECK_THROWS_AS(contrastive_loss(to_batch(unnormed, unnormed), 0.07), std::invalid_argument);
}

TEST_CASE("hard negatives raise the initial loss of a batch") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  int higher = 0;
  for (int trial = 0; trial < 100; ++trial) {
    // Matched rows agree up to noise; item 1 then becomes item 0's counterpart.
    auto noisy = [&](const Eigen::RowVectorXd& r, double scale) {
      Eigen::RowVectorXd out = r;
      for (Eigen::Index k = 0; k < out.size(); ++k) out[k] += scale * g(rng);
      return Eigen::RowVectorXd(out.normalized());
    };
    const auto t = oracle::random_unit_rows(8, 6, rng);
    Eigen::MatrixXd v(8, 6);
    for (Eigen::Index i = 0; i < 8; ++i) v.row(i) = noisy(t.row(i), 0.3);
    Eigen::MatrixXd paired_t = t, paired_v = v;
    paired_t.row(1) = noisy(t.row(0), 0.15);
    paired_v.row(1) = noisy(paired_t.row(1), 0.3);
    higher += contrastive_loss(to_batch(paired_t, paired_v), 0.07) >
              contrastive_loss(to_batch(t, v), 0.07);
  }
  // One-sided sign test: 75 of 100 has p < 1e-6 under a fair coin.
  CHECK(higher >= 75);
}

TEST_CASE("batch planning: hard negatives share a batch") {
  const auto plan = plan_batches(counterparts_for(2, 0), 4, true, 1);
  REQUIRE(plan.size() == 1);
  CHECK(plan[0].size() == 4);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pairs = rng() % 20, fillers = rng() % 10, bs = 2 + rng() % 8;
    const auto c = counterparts_for(pairs, fillers);
    const auto batches = plan_batches(c, bs, true, trial);
    std::set<std::size_t> seen;
    for (const auto& b : batches) {
      REQUIRE(b.size() >= 2);
      REQUIRE(b.size() <= bs + 1);  // bs plus a merged trailing item
      for (auto i : b) REQUIRE(seen.insert(i).second);
    }
    for (std::size_t p = 0; p < pairs; ++p) {
      REQUIRE(batch_of(batches, 2 * p) == batch_of(batches, 2 * p + 1));
    }
  }
}

TEST_CASE("batch planning: without hard negatives counterparts are apart") {
  const auto plan = plan_batches(counterparts_for(1, 2), 2, false, 3);
  REQUIRE(plan.size() == 2);
  CHECK(batch_of(plan, 0) != batch_of(plan, 1));

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pairs = rng() % 20, fillers = rng() % 10, bs = 2 + rng() % 8;
    const auto batches = plan_batches(counterparts_for(pairs, fillers), bs, false, trial);
    for (std::size_t p = 0; p < pairs; ++p) {
      const auto a = batch_of(batches, 2 * p), b = batch_of(batches, 2 * p + 1);
      REQUIRE((a == kNoCounterpart || b == kNoCounterpart || a != b));
    }
  }
}

TEST_CASE("batch planning is seed-deterministic and validates input") {
  const auto c = counterparts_for(10, 7);
  CHECK(plan_batches(c, 4, true, 5) == plan_batches(c, 4, true, 5));
  CHECK(plan_batches(c, 4, false, 5) == plan_batches(c, 4, false, 5));
  CHECK(plan_batches(c, 4, true, 5) != plan_batches(c, 4, true, 6));
  CHECK_THROWS_AS(plan_batches(c, 1, true, 0), std::invalid_argument);
  CHECK_THROWS_AS(plan_batches({1, 0, 0}, 2, true, 0), std::invalid_argument);
}

TEST_CASE("build_batches over a manifest ignores dangling pairs") {
  std::vector<AugmentedExample> manifest;
  for (const auto* s : {"s1", "s2"}) {
    for (auto side : {Side::positive, Side::negative}) {
      manifest.push_back(synthetic(s, "boat", AttributeCategory::color, side));
    }
  }
  auto pairs = build_pairs(manifest);
  pairs.push_back({"gone", "gone/positive", "gone/negative"});
  auto config = TrainConfig::toy_defaults();
  config.batch_size = 4;
  const auto batches = build_batches(manifest, pairs, config, 0);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].size() == 4);
}

TEST_CASE("baseline epoch scaling") {
  const double s = 38100;
  CHECK(scale_baseline_epochs(3 * s, s, 5) == 15);
  CHECK(scale_baseline_epochs(s, s, 5) == 5);
  CHECK(scale_baseline_epochs(2.6 * s, s, 5) == 15);
  CHECK_THROWS_AS(scale_baseline_epochs(0, s, 5), std::invalid_argument);
}

TEST_CASE("train config validation") {
  auto c = TrainConfig::toy_defaults();
  CHECK(c.toy_mode);
  CHECK_NOTHROW(c.validate());
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  c = TrainConfig{};
  c.temperature = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  CHECK(TrainConfig{}.learning_rate == 1e-8);
  CHECK(TrainConfig{}.batch_size == 1024);
  CHECK(TrainConfig{}.epochs == 5);
}

TEST_CASE("toy training lowers the loss and is deterministic") {
  const auto task = toy::make_task(0, 100, 1000);
  ToyEncoderConfig ec;
  ec.seed = 3;
  auto run = [&] {
    ToyEncoder enc(ec, {});
    auto config = TrainConfig::toy_defaults();
    config.batch_size = 8;
    config.epochs = 2;  // 25 batches per epoch
    config.seed = 3;
    return train_on_features(toy::features(task.train, enc), enc, config);
  };
  const auto result = run();
  REQUIRE(result.trace.size() == 50);
  CHECK(result.trace.back().loss < result.trace.front().loss);
  for (const auto& r : result.trace) CHECK(std::isfinite(r.loss));
  CHECK(run().trace == result.trace);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto task = toy::make_task(0, 20, 1);
  ToyEncoder enc({}, {});
  const auto before = enc.parameters_to_json();
  auto config = TrainConfig::toy_defaults();
  config.learning_rate = 0.0;
  config.epochs = 3;
  config.batch_size = task.train.size();  // one batch holding every item
  const auto data = toy::features(task.train, enc);
  const auto result = train_on_features(data, enc, config);
  CHECK(enc.parameters_to_json() == before);
  REQUIRE(result.trace.size() == 3);
  for (const auto& r : result.trace) CHECK(r.loss == doctest::Approx(result.trace[0].loss).epsilon(1e-12));
}

TEST_CASE("non-finite loss aborts with the batch index") {
  const auto task = toy::make_task(0, 4, 2);
  ToyEncoder enc({}, {});
  auto data = toy::features(task.train, enc);
  data.text_features(0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto config = TrainConfig::toy_defaults();
  config.batch_size = 8;
  CHECK_THROWS_AS(train_on_features(data, enc, config), NonFiniteLoss);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testing::temp_dir("ckpt");
  ToyEncoderConfig ec;
  ec.dim = 12;
  ec.seed = 44;
  ToyEncoder enc(ec, {});
  enc.text_weights()(0, 0) = 1.25;
  write_checkpoint(enc, TrainConfig::toy_defaults(), dir / "ckpt.json");
  const auto back = load_checkpoint(dir / "ckpt.json", {});
  CHECK(back.dimension() == 12);
  CHECK(back.text_weights() == enc.text_weights());
  CHECK(back.image_weights() == enc.image_weights());

  write_loss_trace({{0, 0, 1.5}, {1, 0, 1.25}}, dir / "trace.csv");
  CHECK(testing::slurp(dir / "trace.csv").rfind("step,epoch,loss\n0,0,1.5", 0) == 0);
}
