#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

#include "biaug/backends.hpp"
#include "json.hpp"

namespace biaug {

struct ToyEncoderConfig {
  std::size_t dim = 32;
  std::size_t text_buckets = 512;
  std::int32_t grid = 4;
  std::uint64_t seed = 0;
};

/// Trainable bag-of-tokens / pixel-statistics encoder. Text features are
/// hashed token counts plus a bias; image features are per-cell channel means
/// on a grid, the global channel mean, and a bias. Each modality is a linear
/// projection followed by L2 normalisation.
class ToyEncoder final : public Encoder {
 public:
  ToyEncoder(ToyEncoderConfig config, ImageResolver resolver);

  Eigen::VectorXd embed(const EmbeddingRequest& req) override;
  std::size_t dimension() const override { return config_.dim; }

  Eigen::VectorXd text_features(std::string_view text) const;
  Eigen::VectorXd image_features(const Image& image) const;

  Eigen::MatrixXd& text_weights() noexcept { return text_weights_; }
  Eigen::MatrixXd& image_weights() noexcept { return image_weights_; }
  const Eigen::MatrixXd& text_weights() const noexcept { return text_weights_; }
  const Eigen::MatrixXd& image_weights() const noexcept { return image_weights_; }
  const ToyEncoderConfig& config() const noexcept { return config_; }

  nlohmann::json parameters_to_json() const;
  void load_parameters(const nlohmann::json& j);

 private:
  ToyEncoderConfig config_;
  ImageResolver resolver_;
  Eigen::MatrixXd text_weights_;
  Eigen::MatrixXd image_weights_;
};

/// Divides by the L2 norm; throws biaug::Error on a zero vector.
Eigen::VectorXd l2_normalize(const Eigen::VectorXd& v);

/// Seeded standard-normal matrix (Box-Muller over mt19937_64), identical on
/// every platform.
Eigen::MatrixXd seeded_normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

}  // namespace biaug
