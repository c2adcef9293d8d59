#include "biaug/toy_encoder.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "biaug/error.hpp"
#include "biaug/hash.hpp"

namespace biaug {

Eigen::VectorXd l2_normalize(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot normalise a zero or non-finite vector");
  return v / n;
}

Eigen::MatrixXd seeded_normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&] {
    // (0, 1], 53 bits.
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
  };
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); i += 2) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    m.data()[i] = r * std::cos(theta);
    if (i + 1 < m.size()) m.data()[i + 1] = r * std::sin(theta);
  }
  return m;
}

ToyEncoder::ToyEncoder(ToyEncoderConfig config, ImageResolver resolver)
    : config_(config), resolver_(std::move(resolver)) {
  if (config_.dim == 0 || config_.text_buckets == 0 || config_.grid <= 0) {
    throw ConfigInvalid("toy_encoder", "dim, text_buckets and grid must be positive");
  }
  const auto d = static_cast<Eigen::Index>(config_.dim);
  const auto text_in = static_cast<Eigen::Index>(config_.text_buckets + 1);
  const auto image_in = static_cast<Eigen::Index>(3 * config_.grid * config_.grid + 4);
  text_weights_ = seeded_normal_matrix(d, text_in, config_.seed) /
                  std::sqrt(static_cast<double>(text_in));
  image_weights_ = seeded_normal_matrix(d, image_in, config_.seed ^ 0x9e3779b97f4a7c15ULL) /
                   std::sqrt(static_cast<double>(image_in));
}

Eigen::VectorXd ToyEncoder::text_features(std::string_view text) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.text_buckets + 1));
  for (const auto& w : split_words(text)) {
    const auto tok = normalize_token(w);
    if (tok.empty()) continue;
    f[static_cast<Eigen::Index>(fnv1a64(tok) % config_.text_buckets)] += 1.0;
  }
  f[f.size() - 1] = 1.0;
  return f;
}

Eigen::VectorXd ToyEncoder::image_features(const Image& image) const {
  const auto g = config_.grid;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * g * g + 4);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(g * g);
  for (std::int32_t y = 0; y < image.height; ++y) {
    const auto cy = static_cast<std::int64_t>(y) * g / image.height;
    for (std::int32_t x = 0; x < image.width; ++x) {
      const auto cx = static_cast<std::int64_t>(x) * g / image.width;
      const auto cell = static_cast<Eigen::Index>(cy * g + cx);
      const auto px = image.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double v = px[static_cast<std::size_t>(c)] / 255.0 - 0.5;
        f[cell * 3 + c] += v;
        f[3 * g * g + c] += v;
      }
      counts[cell] += 1.0;
    }
  }
  for (Eigen::Index cell = 0; cell < g * g; ++cell) {
    if (counts[cell] > 0) f.segment(cell * 3, 3) /= counts[cell];
  }
  f.segment(3 * g * g, 3) /= static_cast<double>(image.width) * image.height;
  f[f.size() - 1] = 1.0;
  return f;
}

Eigen::VectorXd ToyEncoder::embed(const EmbeddingRequest& req) {
  validate(req);
  if (req.modality == Modality::text) return l2_normalize(text_weights_ * text_features(req.payload));
  return l2_normalize(image_weights_ * image_features(resolver_.load(req.payload)));
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != m.size()) {
    throw Error("parameter blob size mismatch");
  }
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace

nlohmann::json ToyEncoder::parameters_to_json() const {
  return {{"dim", config_.dim},
          {"text_buckets", config_.text_buckets},
          {"grid", config_.grid},
          {"init_seed", config_.seed},
          {"text_weights", matrix_to_json(text_weights_)},
          {"image_weights", matrix_to_json(image_weights_)}};
}

void ToyEncoder::load_parameters(const nlohmann::json& j) {
  auto t = matrix_from_json(j.at("text_weights"));
  auto i = matrix_from_json(j.at("image_weights"));
  if (t.rows() != text_weights_.rows() || t.cols() != text_weights_.cols() ||
      i.rows() != image_weights_.rows() || i.cols() != image_weights_.cols()) {
    throw Error("checkpoint shape does not match encoder configuration");
  }
  text_weights_ = std::move(t);
  image_weights_ = std::move(i);
}

}  // namespace biaug
