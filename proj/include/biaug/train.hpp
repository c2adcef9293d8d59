#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biaug/core.hpp"
#include "biaug/image.hpp"
#include "biaug/toy_encoder.hpp"
#include "json.hpp"

namespace biaug {

struct TrainConfig {
  double learning_rate = 1e-8;
  std::size_t batch_size = 1024;
  std::size_t epochs = 5;
  double temperature = 0.07;
  std::uint64_t seed = 0;
  bool use_hard_negatives = true;
  bool toy_mode = false;

  /// Defaults for the toy encoder: same loss and batching, a learning rate
  /// and batch size that move a randomly initialised linear encoder.
  static TrainConfig toy_defaults();

  void validate() const;  // throws ConfigInvalid
  nlohmann::ordered_json to_json() const;
};

struct BatchItem {
  Eigen::VectorXd text;
  Eigen::VectorXd image;
  std::string example_id;
  std::string pair_id;
};

struct Batch {
  std::vector<BatchItem> items;
};

struct LossAndGrad {
  double loss = 0.0;
  Eigen::MatrixXd d_text;   // same shape as the text matrix
  Eigen::MatrixXd d_image;  // same shape as the image matrix
};

/// Symmetric InfoNCE over rows of `text` and `image` (row i of each is a
/// matched pair): mean of the text->image and image->text cross-entropies of
/// the similarity matrix text * image^T / temperature. Rows are used as
/// given, so the gradient is with respect to the raw rows.
LossAndGrad contrastive_loss_with_grad(const Eigen::MatrixXd& text, const Eigen::MatrixXd& image,
                                       double temperature);

/// Validates unit norms and size >= 2 (DegenerateBatch), then returns the loss.
double contrastive_loss(const Batch& batch, double temperature);

inline constexpr std::size_t kNoCounterpart = std::numeric_limits<std::size_t>::max();

/// Batches of item indices. counterparts[i] is the index of i's hard-negative
/// counterpart or kNoCounterpart. With hard negatives, counterparts always
/// share a batch; without, they never do. A trailing single item is merged
/// into an earlier batch that can take it (or dropped when none can).
std::vector<std::vector<std::size_t>> plan_batches(const std::vector<std::size_t>& counterparts,
                                                   std::size_t batch_size,
                                                   bool use_hard_negatives, std::uint64_t seed);

/// plan_batches over a training manifest. Pairs whose members are not both
/// in the manifest are ignored.
std::vector<std::vector<std::size_t>> build_batches(const std::vector<AugmentedExample>& manifest,
                                                    const std::vector<HardNegativePair>& pairs,
                                                    const TrainConfig& config, std::uint64_t seed);

/// round(augmented_size / source_size) * epochs.
std::size_t scale_baseline_epochs(double augmented_size, double source_size, std::size_t epochs);

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct TrainingData {
  Eigen::MatrixXd text_features;   // one row per example
  Eigen::MatrixXd image_features;  // one row per example
  std::vector<std::string> example_ids;
  std::vector<std::size_t> counterparts;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  std::size_t dropped_items = 0;  // items plan_batches could not place in an epoch
};

TrainingData prepare_training_data(const std::vector<AugmentedExample>& manifest,
                                   const std::vector<HardNegativePair>& pairs,
                                   const ToyEncoder& encoder, const ImageResolver& images);

/// Plain gradient descent on the contrastive loss, one step per batch.
/// Throws NonFiniteLoss.
TrainResult train_on_features(const TrainingData& data, ToyEncoder& encoder,
                              const TrainConfig& config);

TrainResult train(const std::vector<AugmentedExample>& manifest,
                  const std::vector<HardNegativePair>& pairs, ToyEncoder& encoder,
                  const ImageResolver& images, const TrainConfig& config);

void write_loss_trace(const std::vector<LossRecord>& trace, const std::filesystem::path& path);

void write_checkpoint(const ToyEncoder& encoder, const TrainConfig& config,
                      const std::filesystem::path& path);
/// Loads parameters into an encoder built from the checkpoint's config.
ToyEncoder load_checkpoint(const std::filesystem::path& path, ImageResolver resolver);

}  // namespace biaug
