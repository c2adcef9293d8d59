#include "biaug/http_backends.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "biaug/error.hpp"
#include "biaug/hash.hpp"
#include "biaug/manifest.hpp"
#include "biaug/toy_encoder.hpp"
#include "httplib.h"

namespace biaug {

using nlohmann::json;
namespace fs = std::filesystem;

json to_wire(const TextGenRequest& r) {
  return {{"prompt", r.prompt}, {"temperature", r.temperature}, {"seed", r.seed}};
}

json to_wire(const DetectionRequest& r) {
  return {{"image_ref", r.image_ref}, {"candidate_names", r.candidate_names}};
}

json to_wire(const InpaintRequest& r) {
  return {{"image_ref", r.image_ref}, {"mask", r.mask.as_array()}, {"prompt", r.prompt}};
}

json to_wire(const EmbeddingRequest& r) {
  return {{"modality", r.modality == Modality::text ? "text" : "image"}, {"payload", r.payload}};
}

TextGenRequest text_request_from_wire(const json& j) {
  return {j.at("prompt").get<std::string>(), j.value("temperature", 0.0),
          j.value("seed", std::int64_t{0})};
}

DetectionRequest detection_request_from_wire(const json& j) {
  return {j.at("image_ref").get<std::string>(),
          j.at("candidate_names").get<std::vector<std::string>>()};
}

namespace {

BoundingBox box_from_wire(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x, y, w, h]");
  return BoundingBox(j[0].get<std::int32_t>(), j[1].get<std::int32_t>(),
                     j[2].get<std::int32_t>(), j[3].get<std::int32_t>());
}

}  // namespace

InpaintRequest inpaint_request_from_wire(const json& j) {
  return {j.at("image_ref").get<std::string>(), box_from_wire(j.at("mask")),
          j.at("prompt").get<std::string>()};
}

EmbeddingRequest embedding_request_from_wire(const json& j) {
  const auto modality = j.at("modality").get<std::string>();
  if (modality != "text" && modality != "image") {
    throw std::invalid_argument("modality must be text or image");
  }
  return {modality == "text" ? Modality::text : Modality::image,
          j.at("payload").get<std::string>()};
}

json detections_to_wire(const std::vector<Detection>& d) {
  json out = json::array();
  for (const auto& x : d) {
    out.push_back({{"name", x.name}, {"box", x.box.as_array()}, {"confidence", x.confidence}});
  }
  return out;
}

std::vector<Detection> detections_from_wire(const json& j) {
  std::vector<Detection> out;
  for (const auto& x : j) {
    out.push_back({x.at("name").get<std::string>(), box_from_wire(x.at("box")),
                   x.at("confidence").get<double>()});
  }
  return out;
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(HttpClientConfig config)
    : config_(std::move(config)), in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
  if (config_.attempts < 1) throw ConfigInvalid("attempts", "must be >= 1");
  const auto scheme_end = config_.url.find("://");
  const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_begin = config_.url.find('/', host_begin);
  scheme_host_port_ = config_.url.substr(0, path_begin);
  if (path_begin != std::string::npos) {
    prefix_ = config_.url.substr(path_begin);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

HttpTransport::~HttpTransport() = default;

namespace {

bool is_safe_relative_ref(const std::string& ref) {
  const fs::path p(ref);
  if (ref.empty() || p.is_absolute() || p.has_root_name()) return false;
  return std::none_of(p.begin(), p.end(), [](const fs::path& part) { return part == ".."; });
}

[[noreturn]] void rethrow_remote(int status, const std::string& body) {
  std::string kind, message = body;
  try {
    auto j = json::parse(body);
    kind = j.value("kind", "");
    message = j.value("error", body);
  } catch (const json::exception&) {
  }
  if (kind == "ImageUnreadable") throw ImageUnreadable(message);
  if (kind == "MaskOutOfBounds") throw MaskOutOfBounds(message);
  if (kind == "EmptyResponse") throw EmptyResponse(message);
  if (kind == "InvalidArgument") throw std::invalid_argument(message);
  throw Error("backend rejected request (HTTP " + std::to_string(status) + "): " + message);
}

}  // namespace

template <class Send>
std::string HttpTransport::exchange(const std::string& path, const std::string& request_id,
                                    Send&& send) {
  std::string last_failure;
  for (int attempt = 0; attempt < config_.attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config_.initial_backoff * (1 << (attempt - 1)));

    httplib::Result res;
    {
      in_flight_.acquire();
      httplib::Client client(scheme_host_port_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      httplib::Headers headers{{"X-Request-Id", request_id}};
      if (!config_.bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.bearer_token);
      }
      res = send(client, prefix_ + path, headers);
      in_flight_.release();
    }

    if (!res) {
      last_failure = "connection error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) rethrow_remote(res->status, res->body);
    return res->body;
  }
  throw BackendUnavailable(config_.url + path + " unavailable after " +
                           std::to_string(config_.attempts) + " attempts (" + last_failure + ")");
}

json HttpTransport::post(const std::string& path, const json& body) {
  const auto payload = body.dump();
  const auto text = exchange(path, hex64(hash_fields(path, payload)),
                             [&](httplib::Client& c, const std::string& p, const httplib::Headers& h) {
                               return c.Post(p, h, payload, "application/json");
                             });
  json reply;
  try {
    reply = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("backend returned invalid JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("result")) {
    throw Error("backend reply lacks a result field");
  }
  return reply.at("result");
}

std::string HttpTransport::get_bytes(const std::string& path, const std::string& ref) {
  return exchange(path, hex64(hash_fields(path, ref)),
                  [&](httplib::Client& c, const std::string& p, const httplib::Headers& h) {
                    return c.Get(p, httplib::Params{{"ref", ref}}, h);
                  });
}

std::string HttpTextGenerator::generate_text(const TextGenRequest& req) {
  validate(req);
  auto result = transport_.post("/generate", to_wire(req));
  if (!result.is_string() || trim(result.get<std::string>()).empty()) {
    throw EmptyResponse("text generator returned an empty result");
  }
  return result.get<std::string>();
}

std::vector<Detection> HttpDetector::detect(const DetectionRequest& req) {
  validate(req);
  auto detections = detections_from_wire(transport_.post("/detect", to_wire(req)));
  std::erase_if(detections, [&](const Detection& d) {
    return std::find(req.candidate_names.begin(), req.candidate_names.end(), d.name) ==
           req.candidate_names.end();
  });
  return detections;
}

std::string HttpInpainter::inpaint(const InpaintRequest& req) {
  auto result = transport_.post("/inpaint", to_wire(req));
  if (!result.is_string() || result.get<std::string>().empty()) {
    throw EmptyResponse("inpainter returned no image_ref");
  }
  const auto ref = result.get<std::string>();
  if (!is_safe_relative_ref(ref)) throw Error("inpainter returned an unsafe image_ref: " + ref);
  const auto bytes = transport_.get_bytes("/image", ref);
  write_file_atomic(output_root_ / ref, bytes);
  read_ppm(output_root_ / ref);  // rejects a body that is not an image
  return ref;
}

Eigen::VectorXd HttpEncoder::embed(const EmbeddingRequest& req) {
  validate(req);
  const auto values = transport_.post("/embed", to_wire(req)).get<std::vector<double>>();
  if (values.empty()) throw EmptyResponse("encoder returned an empty vector");
  return l2_normalize(Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                        static_cast<Eigen::Index>(values.size())));
}

// ---------------------------------------------------------------------------

namespace {

template <class Fn>
void handle(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
  auto fail = [&](int status, const char* kind, const std::string& msg) {
    res.status = status;
    res.set_content(json{{"error", msg}, {"kind", kind}}.dump(), "application/json");
  };
  try {
    const auto body = json::parse(req.body);
    res.set_content(json{{"result", fn(body)}}.dump(), "application/json");
  } catch (const BackendUnavailable& e) {
    fail(503, "BackendUnavailable", e.what());
  } catch (const ImageUnreadable& e) {
    fail(400, "ImageUnreadable", e.what());
  } catch (const MaskOutOfBounds& e) {
    fail(400, "MaskOutOfBounds", e.what());
  } catch (const EmptyResponse& e) {
    fail(400, "EmptyResponse", e.what());
  } catch (const std::invalid_argument& e) {
    fail(400, "InvalidArgument", e.what());
  } catch (const json::exception& e) {
    fail(400, "InvalidArgument", e.what());
  } catch (const std::exception& e) {
    fail(500, "Internal", e.what());
  }
}

}  // namespace

BackendServer::BackendServer(BackendRefs backends)
    : backends_(backends), server_(std::make_unique<httplib::Server>()) {
  if (auto* g = backends_.generator) {
    server_->Post("/generate", [g](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const json& b) { return json(g->generate_text(text_request_from_wire(b))); });
    });
  }
  if (auto* d = backends_.detector) {
    server_->Post("/detect", [d](const httplib::Request& req, httplib::Response& res) {
      handle(req, res,
             [&](const json& b) { return detections_to_wire(d->detect(detection_request_from_wire(b))); });
    });
  }
  if (auto* p = backends_.inpainter) {
    server_->Post("/inpaint", [p](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const json& b) { return json(p->inpaint(inpaint_request_from_wire(b))); });
    });
  }
  if (!backends_.image_roots.empty()) {
    ImageResolver images(backends_.image_roots);
    server_->Get("/image", [images](const httplib::Request& req, httplib::Response& res) {
      const auto ref = req.get_param_value("ref");
      std::ifstream in;
      if (is_safe_relative_ref(ref)) in.open(images.resolve(ref), std::ios::binary);
      if (!in.is_open()) {
        res.status = 404;
        res.set_content(json{{"error", "no image " + ref}, {"kind", "ImageUnreadable"}}.dump(),
                        "application/json");
        return;
      }
      std::ostringstream body;
      body << in.rdbuf();
      res.set_content(body.str(), "application/octet-stream");
    });
  }
  if (auto* e = backends_.encoder) {
    server_->Post("/embed", [e](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [&](const json& b) {
        const Eigen::VectorXd v = e->embed(embedding_request_from_wire(b));
        return json(std::vector<double>(v.data(), v.data() + v.size()));
      });
    });
  }
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::bind_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool BackendServer::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

void BackendServer::listen() { server_->listen_after_bind(); }

void BackendServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace biaug
