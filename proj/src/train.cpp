#include "biaug/train.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "biaug/error.hpp"
#include "biaug/hash.hpp"
#include "biaug/manifest.hpp"

namespace biaug {

TrainConfig TrainConfig::toy_defaults() {
  TrainConfig c;
  c.learning_rate = 0.3;
  c.batch_size = 4;
  c.epochs = 5;
  c.toy_mode = true;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigInvalid("learning_rate", "must be finite and >= 0");
  }
  if (batch_size < 2) throw ConfigInvalid("batch_size", "must be >= 2");
  if (!(temperature > 0.0)) throw ConfigInvalid("temperature", "must be > 0");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},   {"batch_size", batch_size},
          {"epochs", epochs},                 {"temperature", temperature},
          {"seed", seed},                     {"use_hard_negatives", use_hard_negatives},
          {"toy_mode", toy_mode}};
}

// ---------------------------------------------------------------------------

namespace {

// Row-wise softmax and log-sum-exp, shifted by the row max.
Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& s, Eigen::VectorXd& lse) {
  Eigen::MatrixXd p(s.rows(), s.cols());
  lse.resize(s.rows());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (s.row(i).array() - m).exp();
    const double z = e.sum();
    lse[i] = m + std::log(z);
    p.row(i) = e / z;
  }
  return p;
}

}  // namespace

LossAndGrad contrastive_loss_with_grad(const Eigen::MatrixXd& text, const Eigen::MatrixXd& image,
                                       double temperature) {
  if (text.rows() != image.rows() || text.cols() != image.cols()) {
    throw std::invalid_argument("text and image matrices must have the same shape");
  }
  const auto n = text.rows();
  if (n < 2) throw DegenerateBatch("contrastive loss needs at least 2 items");

  const Eigen::MatrixXd s = text * image.transpose() / temperature;
  Eigen::VectorXd lse_rows, lse_cols;
  const Eigen::MatrixXd p_rows = row_softmax(s, lse_rows);
  const Eigen::MatrixXd p_cols = row_softmax(s.transpose(), lse_cols).transpose();

  const double diag = s.diagonal().sum();
  const double loss_t2i = (lse_rows.sum() - diag) / static_cast<double>(n);
  const double loss_i2t = (lse_cols.sum() - diag) / static_cast<double>(n);

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd d_s = ((p_rows - eye) + (p_cols - eye)) / (2.0 * static_cast<double>(n));

  LossAndGrad out;
  out.loss = 0.5 * (loss_t2i + loss_i2t);
  out.d_text = d_s * image / temperature;
  out.d_image = d_s.transpose() * text / temperature;
  return out;
}

double contrastive_loss(const Batch& batch, double temperature) {
  if (batch.items.size() < 2) throw DegenerateBatch("batch has fewer than 2 items");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const auto dim = batch.items.front().text.size();
  Eigen::MatrixXd t(static_cast<Eigen::Index>(batch.items.size()), dim);
  Eigen::MatrixXd v(t.rows(), dim);
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const auto& item = batch.items[i];
    if (item.text.size() != dim || item.image.size() != dim) {
      throw std::invalid_argument("batch embeddings must share one dimension");
    }
    if (std::abs(item.text.norm() - 1.0) > 1e-6 || std::abs(item.image.norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("batch embeddings must be unit-norm");
    }
    t.row(static_cast<Eigen::Index>(i)) = item.text.transpose();
    v.row(static_cast<Eigen::Index>(i)) = item.image.transpose();
  }
  return contrastive_loss_with_grad(t, v, temperature).loss;
}

// ---------------------------------------------------------------------------

namespace {

// Fisher-Yates over raw mt19937_64 output so the order is the same on every
// standard library.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

void merge_trailing_single(std::vector<std::vector<std::size_t>>& batches,
                           const std::vector<std::size_t>& counterparts, bool together) {
  if (batches.empty() || batches.back().size() != 1) return;
  const auto item = batches.back().front();
  batches.pop_back();
  for (auto it = batches.rbegin(); it != batches.rend(); ++it) {
    const bool has_counterpart =
        std::find(it->begin(), it->end(), counterparts[item]) != it->end();
    if (together || !has_counterpart) {
      it->push_back(item);
      return;
    }
  }
}

std::vector<std::vector<std::size_t>> plan_together(const std::vector<std::size_t>& counterparts,
                                                    std::size_t batch_size, std::uint64_t seed) {
  // Units are pairs (both members) or singles.
  std::vector<std::vector<std::size_t>> units;
  for (std::size_t i = 0; i < counterparts.size(); ++i) {
    const auto c = counterparts[i];
    if (c == kNoCounterpart) {
      units.push_back({i});
    } else if (i < c) {
      units.push_back({i, c});
    }
  }
  seeded_shuffle(units, seed);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::vector<bool> used(units.size(), false);
  for (std::size_t k = 0; k < units.size(); ++k) {
    if (used[k]) continue;
    if (cur.size() + units[k].size() > batch_size) {
      // A pair that does not fit: top up with the next single, then close.
      for (std::size_t f = k + 1; f < units.size() && cur.size() < batch_size; ++f) {
        if (!used[f] && units[f].size() == 1) {
          cur.push_back(units[f][0]);
          used[f] = true;
        }
      }
      batches.push_back(std::move(cur));
      cur.clear();
    }
    cur.insert(cur.end(), units[k].begin(), units[k].end());
    used[k] = true;
    if (cur.size() == batch_size) {
      batches.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  merge_trailing_single(batches, counterparts, true);
  return batches;
}

std::vector<std::vector<std::size_t>> plan_apart(const std::vector<std::size_t>& counterparts,
                                                 std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::size_t> pending(counterparts.size());
  std::iota(pending.begin(), pending.end(), std::size_t{0});
  seeded_shuffle(pending, seed);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<bool> in_batch(counterparts.size(), false);
  while (!pending.empty()) {
    std::vector<std::size_t> cur, deferred;
    std::size_t k = 0;
    for (; k < pending.size() && cur.size() < batch_size; ++k) {
      const auto i = pending[k];
      const auto c = counterparts[i];
      if (c != kNoCounterpart && in_batch[c]) {
        deferred.push_back(i);
      } else {
        cur.push_back(i);
        in_batch[i] = true;
      }
    }
    for (auto i : cur) in_batch[i] = false;
    // Deferred items lead the next batch; their counterparts are now closed.
    deferred.insert(deferred.end(), pending.begin() + static_cast<std::ptrdiff_t>(k),
                    pending.end());
    pending = std::move(deferred);
    batches.push_back(std::move(cur));
  }
  merge_trailing_single(batches, counterparts, false);
  return batches;
}

}  // namespace

std::vector<std::vector<std::size_t>> plan_batches(const std::vector<std::size_t>& counterparts,
                                                   std::size_t batch_size,
                                                   bool use_hard_negatives, std::uint64_t seed) {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  for (std::size_t i = 0; i < counterparts.size(); ++i) {
    const auto c = counterparts[i];
    if (c != kNoCounterpart && (c >= counterparts.size() || c == i || counterparts[c] != i)) {
      throw std::invalid_argument("counterpart table must be a symmetric matching");
    }
  }
  auto batches = use_hard_negatives ? plan_together(counterparts, batch_size, seed)
                                    : plan_apart(counterparts, batch_size, seed);
  std::erase_if(batches, [](const auto& b) { return b.size() < 2; });
  return batches;
}

namespace {

std::vector<std::size_t> counterpart_table(const std::vector<AugmentedExample>& manifest,
                                           const std::vector<HardNegativePair>& pairs) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest.size(); ++i) index[manifest[i].example_id] = i;
  std::vector<std::size_t> counterparts(manifest.size(), kNoCounterpart);
  for (const auto& p : pairs) {
    auto a = index.find(p.positive_example_id);
    auto b = index.find(p.negative_example_id);
    if (a == index.end() || b == index.end()) continue;
    counterparts[a->second] = b->second;
    counterparts[b->second] = a->second;
  }
  return counterparts;
}

}  // namespace

std::vector<std::vector<std::size_t>> build_batches(const std::vector<AugmentedExample>& manifest,
                                                    const std::vector<HardNegativePair>& pairs,
                                                    const TrainConfig& config, std::uint64_t seed) {
  return plan_batches(counterpart_table(manifest, pairs), config.batch_size,
                      config.use_hard_negatives, seed);
}

std::size_t scale_baseline_epochs(double augmented_size, double source_size, std::size_t epochs) {
  if (!(augmented_size > 0.0) || !(source_size > 0.0)) {
    throw std::invalid_argument("dataset sizes must be positive");
  }
  return static_cast<std::size_t>(std::llround(augmented_size / source_size)) * epochs;
}

// ---------------------------------------------------------------------------

TrainingData prepare_training_data(const std::vector<AugmentedExample>& manifest,
                                   const std::vector<HardNegativePair>& pairs,
                                   const ToyEncoder& encoder, const ImageResolver& images) {
  TrainingData data;
  const auto n = static_cast<Eigen::Index>(manifest.size());
  data.text_features.resize(n, encoder.text_weights().cols());
  data.image_features.resize(n, encoder.image_weights().cols());
  std::map<std::string, Eigen::VectorXd> image_cache;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = manifest[static_cast<std::size_t>(i)];
    data.text_features.row(i) = encoder.text_features(ex.caption).transpose();
    auto it = image_cache.find(ex.image_ref);
    if (it == image_cache.end()) {
      it = image_cache.emplace(ex.image_ref, encoder.image_features(images.load(ex.image_ref))).first;
    }
    data.image_features.row(i) = it->second.transpose();
    data.example_ids.push_back(ex.example_id);
  }
  data.counterparts = counterpart_table(manifest, pairs);
  return data;
}

namespace {

// Rows scaled to unit norm; `norms` receives the original norms.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& z, Eigen::VectorXd& norms) {
  norms = z.rowwise().norm();
  Eigen::MatrixXd out = z;
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) /= norms[i];
  return out;
}

// Backprop through u = z / |z| row-wise.
Eigen::MatrixXd normalize_rows_backward(const Eigen::MatrixXd& u, const Eigen::VectorXd& norms,
                                        const Eigen::MatrixXd& d_u) {
  Eigen::MatrixXd d_z(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double dot = u.row(i).dot(d_u.row(i));
    d_z.row(i) = (d_u.row(i) - dot * u.row(i)) / norms[i];
  }
  return d_z;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

}  // namespace

TrainResult train_on_features(const TrainingData& data, ToyEncoder& encoder,
                              const TrainConfig& config) {
  config.validate();
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto seed = hash_fields(std::to_string(config.seed), std::to_string(epoch));
    const auto batches =
        plan_batches(data.counterparts, config.batch_size, config.use_hard_negatives, seed);
    std::size_t placed = 0;
    for (const auto& b : batches) placed += b.size();
    result.dropped_items += data.counterparts.size() - placed;

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto x_text = gather_rows(data.text_features, batches[bi]);
      const auto x_image = gather_rows(data.image_features, batches[bi]);
      Eigen::VectorXd text_norms, image_norms;
      const auto t = normalize_rows(x_text * encoder.text_weights().transpose(), text_norms);
      const auto v = normalize_rows(x_image * encoder.image_weights().transpose(), image_norms);
      if (!t.allFinite() || !v.allFinite()) {
        throw NonFiniteLoss(step, "embedding is zero or non-finite");
      }
      const auto lg = contrastive_loss_with_grad(t, v, config.temperature);
      if (!std::isfinite(lg.loss)) throw NonFiniteLoss(step, "loss " + std::to_string(lg.loss));
      result.trace.push_back({step, epoch, lg.loss});

      if (config.learning_rate > 0.0) {
        const auto dz_text = normalize_rows_backward(t, text_norms, lg.d_text);
        const auto dz_image = normalize_rows_backward(v, image_norms, lg.d_image);
        encoder.text_weights() -= config.learning_rate * (dz_text.transpose() * x_text);
        encoder.image_weights() -= config.learning_rate * (dz_image.transpose() * x_image);
      }
      ++step;
    }
  }
  return result;
}

TrainResult train(const std::vector<AugmentedExample>& manifest,
                  const std::vector<HardNegativePair>& pairs, ToyEncoder& encoder,
                  const ImageResolver& images, const TrainConfig& config) {
  config.validate();
  return train_on_features(prepare_training_data(manifest, pairs, encoder, images), encoder,
                           config);
}

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << "step,epoch,loss\n";
  for (const auto& r : trace) out << r.step << ',' << r.epoch << ',' << r.loss << '\n';
  write_file_atomic(path, out.str());
}

void write_checkpoint(const ToyEncoder& encoder, const TrainConfig& config,
                      const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["format"] = "biaug-toy-encoder/1";
  j["seed"] = config.seed;
  j["train_config"] = config.to_json();
  j["parameters"] = encoder.parameters_to_json();
  write_file_atomic(path, j.dump() + "\n");
}

ToyEncoder load_checkpoint(const std::filesystem::path& path, ImageResolver resolver) {
  std::ifstream in(path);
  if (!in) throw MissingInput(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("unreadable checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "biaug-toy-encoder/1") {
    throw Error("unsupported checkpoint format in " + path.string());
  }
  const auto& p = j.at("parameters");
  ToyEncoderConfig cfg;
  cfg.dim = p.at("dim").get<std::size_t>();
  cfg.text_buckets = p.at("text_buckets").get<std::size_t>();
  cfg.grid = p.at("grid").get<std::int32_t>();
  cfg.seed = p.at("init_seed").get<std::uint64_t>();
  ToyEncoder encoder(cfg, std::move(resolver));
  encoder.load_parameters(p);
  return encoder;
}

}  // namespace biaug
