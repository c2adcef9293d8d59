#include <doctest.h>

#include <thread>

#include "biaug/backends.hpp"
#include "biaug/error.hpp"
#include "biaug/http_backends.hpp"
#include "biaug/toy_encoder.hpp"
#include "test_util.hpp"

using namespace biaug;
using namespace std::chrono_literals;

namespace {

struct RunningServer {
  BackendServer server;
  int port = 0;
  std::thread thread;

  explicit RunningServer(BackendRefs refs) : server(refs) {
    port = server.bind_any_port();
    thread = std::thread([this] { server.listen(); });
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  HttpClientConfig client() const {
    HttpClientConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port);
    c.attempts = 2;
    c.initial_backoff = 1ms;
    c.timeout = 10s;
    return c;
  }
};

}  // namespace

TEST_CASE("wire encoding round-trips") {
  const TextGenRequest t{"hello", 0.5, 42};
  const auto t2 = text_request_from_wire(to_wire(t));
  CHECK(t2.prompt == "hello");
  CHECK(t2.temperature == 0.5);
  CHECK(t2.seed == 42);

  const InpaintRequest p{"a.ppm", BoundingBox(1, 2, 3, 4), "a blue boat"};
  const auto p2 = inpaint_request_from_wire(to_wire(p));
  CHECK(p2.mask == p.mask);
  CHECK(p2.prompt == p.prompt);

  const std::vector<Detection> d = {{"dog", BoundingBox(0, 0, 2, 2), 0.75}};
  CHECK(detections_from_wire(detections_to_wire(d)) == d);
  CHECK(embedding_request_from_wire(to_wire(EmbeddingRequest{Modality::image, "x.ppm"})).modality ==
        Modality::image);
}

TEST_CASE("HTTP clients reproduce the mock backends") {
  const auto dir = testing::temp_dir("http");
  write_ppm(Image(10, 10, {5, 5, 5}), dir / "img.ppm");

  MockLlmConfig llm;
  llm.lexicon = {"dog", "tennis ball"};
  llm.fail_on = {"explode"};
  MockTextGenerator gen(llm);
  MockDetector det({{"img.ppm", {{"dog", BoundingBox(1, 1, 8, 8)}}}}, ImageResolver({dir}));
  MockInpainter paint(ImageResolver({dir}), dir);
  ToyEncoder enc({8, 64, 2, 1}, ImageResolver({dir}));
  RunningServer srv({&gen, &det, &paint, &enc, {dir}});

  HttpTextGenerator remote_gen(srv.client());
  CHECK(remote_gen.generate_text({"Caption: a dog with a tennis ball", 0.0, 0}) ==
        "dog, tennis ball");

  HttpDetector remote_det(srv.client());
  const auto found = remote_det.detect({"img.ppm", {"dog"}});
  REQUIRE(found.size() == 1);
  CHECK(found[0].confidence == doctest::Approx(0.82));

  const auto client_dir = testing::temp_dir("http_client");
  HttpInpainter remote_paint(srv.client(), client_dir);
  const auto ref = remote_paint.inpaint({"img.ppm", BoundingBox(0, 0, 2, 2), "a red dog"});
  CHECK(read_ppm(client_dir / ref) == read_ppm(dir / ref));
  CHECK(read_ppm(client_dir / ref).at(0, 0) == prompt_color("a red dog"));
  CHECK_THROWS_AS(remote_paint.inpaint({"img.ppm", BoundingBox(9, 9, 2, 2), "x"}),
                  MaskOutOfBounds);
  CHECK_THROWS_AS(remote_det.detect({"absent.ppm", {"dog"}}), ImageUnreadable);

  HttpEncoder remote_enc(srv.client(), 8);
  const auto v = remote_enc.embed({Modality::text, "a dog"});
  CHECK((v - enc.embed({Modality::text, "a dog"})).norm() == doctest::Approx(0.0));

  // 503 is retried and then surfaces as BackendUnavailable.
  CHECK_THROWS_AS(remote_gen.generate_text({"Caption: explode", 0.0, 0}), BackendUnavailable);
}

TEST_CASE("unreachable endpoint is BackendUnavailable") {
  HttpClientConfig c;
  c.url = "http://127.0.0.1:1";
  c.attempts = 2;
  c.initial_backoff = 1ms;
  c.timeout = 2s;
  HttpTextGenerator gen(c);
  CHECK_THROWS_AS(gen.generate_text({"Caption: x", 0.0, 0}), BackendUnavailable);
}

TEST_CASE("missing backend role answers 404") {
  RunningServer srv({});
  HttpDetector det(srv.client());
  CHECK_THROWS_AS(det.detect({"img.ppm", {"dog"}}), Error);
}

TEST_CASE("image download refuses unsafe refs") {
  const auto dir = testing::temp_dir("http_images");
  testing::spit(dir / "inside.ppm", "data");
  testing::spit(dir.parent_path() / "outside.txt", "secret");
  BackendRefs refs;
  refs.image_roots = {dir};
  RunningServer srv(refs);
  HttpTransport t(srv.client());
  CHECK(t.get_bytes("/image", "inside.ppm") == "data");
  CHECK_THROWS_AS(t.get_bytes("/image", "../outside.txt"), ImageUnreadable);
  CHECK_THROWS_AS(t.get_bytes("/image", (dir / "inside.ppm").string()), ImageUnreadable);
}
