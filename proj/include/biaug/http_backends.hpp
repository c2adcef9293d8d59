#pragma once

// HTTP clients for the backend roles and a server exposing any backend set
// over the same protocol: POST /generate, /detect, /inpaint, /embed with a
// JSON body mirroring the request type, answered by 200 {"result": ...}.
// 429 and 5xx are retried.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "biaug/backends.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace biaug {

struct HttpClientConfig {
  std::string url;  // e.g. http://127.0.0.1:8080 or http://host/prefix
  std::string bearer_token;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds timeout{120};
  int max_in_flight = 8;
};

// Wire encoding of requests and results.
nlohmann::json to_wire(const TextGenRequest& r);
nlohmann::json to_wire(const DetectionRequest& r);
nlohmann::json to_wire(const InpaintRequest& r);
nlohmann::json to_wire(const EmbeddingRequest& r);
TextGenRequest text_request_from_wire(const nlohmann::json& j);
DetectionRequest detection_request_from_wire(const nlohmann::json& j);
InpaintRequest inpaint_request_from_wire(const nlohmann::json& j);
EmbeddingRequest embedding_request_from_wire(const nlohmann::json& j);
nlohmann::json detections_to_wire(const std::vector<Detection>& d);
std::vector<Detection> detections_from_wire(const nlohmann::json& j);

/// POSTs JSON with retry and a per-client bound on in-flight requests. Every
/// request carries X-Request-Id, a hash of path and body, so a retried call
/// is recognisable as the same call.
class HttpTransport {
 public:
  explicit HttpTransport(HttpClientConfig config);
  ~HttpTransport();
  HttpTransport(const HttpTransport&) = delete;
  HttpTransport& operator=(const HttpTransport&) = delete;

  /// Returns the "result" member. Throws BackendUnavailable once retries are
  /// exhausted.
  nlohmann::json post(const std::string& path, const nlohmann::json& body);
  /// GETs a binary body, with the same retry policy as post.
  std::string get_bytes(const std::string& path, const std::string& ref);

 private:
  HttpClientConfig config_;
  std::string scheme_host_port_;
  std::string prefix_;
  std::counting_semaphore<1024> in_flight_;

  template <class Send>
  std::string exchange(const std::string& path, const std::string& request_id, Send&& send);
};

class HttpTextGenerator final : public TextGenerator {
 public:
  explicit HttpTextGenerator(HttpClientConfig config) : transport_(std::move(config)) {}
  std::string generate_text(const TextGenRequest& req) override;

 private:
  HttpTransport transport_;
};

class HttpDetector final : public Detector {
 public:
  explicit HttpDetector(HttpClientConfig config) : transport_(std::move(config)) {}
  std::vector<Detection> detect(const DetectionRequest& req) override;

 private:
  HttpTransport transport_;
};

/// Asks the server to inpaint, then downloads the result from GET /image and
/// stores it under output_root at the returned ref.
class HttpInpainter final : public Inpainter {
 public:
  HttpInpainter(HttpClientConfig config, std::filesystem::path output_root)
      : transport_(std::move(config)), output_root_(std::move(output_root)) {}
  std::string inpaint(const InpaintRequest& req) override;

 private:
  HttpTransport transport_;
  std::filesystem::path output_root_;
};

class HttpEncoder final : public Encoder {
 public:
  HttpEncoder(HttpClientConfig config, std::size_t dimension)
      : transport_(std::move(config)), dimension_(dimension) {}
  Eigen::VectorXd embed(const EmbeddingRequest& req) override;
  std::size_t dimension() const override { return dimension_; }

 private:
  HttpTransport transport_;
  std::size_t dimension_;
};

/// Non-owning view of the backends a server dispatches to; null entries
/// answer 404.
struct BackendRefs {
  TextGenerator* generator = nullptr;
  Detector* detector = nullptr;
  Inpainter* inpainter = nullptr;
  Encoder* encoder = nullptr;
  /// Roots searched by GET /image?ref=..., normally the inpainter's output.
  std::vector<std::filesystem::path> image_roots;
};

class BackendServer {
 public:
  explicit BackendServer(BackendRefs backends);
  ~BackendServer();

  /// Binds to an ephemeral port and returns it.
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  BackendRefs backends_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace biaug
