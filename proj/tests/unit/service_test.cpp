#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include <httplib.h>

#include "robustsyn/data/transforms.hpp"
#include "robustsyn/service/codec.hpp"
#include "robustsyn/service/server.hpp"

using namespace robustsyn;
using namespace robustsyn::service;
using nlohmann::json;

namespace {

ClassifierSpec tiny_spec() {
  ClassifierSpec s;
  s.height = s.width = 16;
  s.num_classes = 2;
  s.stage_widths = {6, 8};
  s.stage_depths = {1, 1};
  return s;
}

Image test_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.1f, 0.9f);
  Image im(3, 16, 16);
  for (auto& v : im.pixels) v = u(rng);
  return im;
}

ModelRegistry& registry() {
  static ModelRegistry r = [] {
    ModelRegistry reg;
    reg.add_model("m", Classifier::build(tiny_spec(), 3));
    BuiltinOptions o;
    o.samples = 40;
    o.size = 16;
    reg.add_seeds("m", fit_seed_models(make_builtin("stripes-blobs", o)));
    return reg;
  }();
  return r;
}

ServerConfig make_config(std::size_t capacity = 64) {
  ServerConfig c;
  c.port = 0;
  c.workers = 4;
  c.frame_capacity = capacity;
  return c;
}

struct Harness {
  Server server;
  httplib::Client client;
  explicit Harness(ServerConfig config = make_config()) : server(registry(), config), client("127.0.0.1", server.start()) {
    client.set_read_timeout(60, 0);
  }
  json post(const std::string& path, const json& body, int expect) {
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    INFO(path << " -> " << res->body);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }
  json get(const std::string& path, int expect = 200) {
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }
  json wait_job(const std::string& id) {
    for (;;) {
      json s = get("/v1/jobs/" + id);
      if (s["state"] == "done" || s["state"] == "failed") return s;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
};

json translate_job(const Image& im, int steps, int stride = 10) {
  return {{"task", "translate"}, {"model", "m"}, {"target", 1}, {"eps", 1.0}, {"steps", steps},
          {"step_size", 0.1},    {"frame_stride", stride}, {"image", encode_image(im, false)}};
}

}  // namespace

TEST_CASE("base64 and image codecs round trip") {
  for (std::string s : std::vector<std::string>{"", "a", "ab", "abc", "abcd", std::string("\0\xff\x10", 3)}) CHECK(base64_decode(base64_encode(s)) == s);
  CHECK(base64_encode("hello") == "aGVsbG8=");
  CHECK_THROWS_AS(base64_decode("a*=="), InvalidArgument);
  Image im = test_image(1);
  json j = encode_image(im);
  CHECK(j["height"] == 16);
  CHECK(j.contains("png_b64"));
  CHECK(decode_image(j) == im);
  CHECK_THROWS_AS(decode_image(json{{"fif_b64", "AAAA"}}), InvalidArgument);
}

TEST_CASE("job specs take desk defaults and reject bad fields") {
  json j = translate_job(test_image(2), 5);
  j.erase("eps");
  JobSpec s = JobSpec::from_json(j);
  CHECK(s.eps == 60.0);
  CHECK(s.steps == 5);
  CHECK_THROWS_AS(JobSpec::from_json(json{{"task", "dance"}, {"model", "m"}}), InvalidArgument);
  CHECK_THROWS_AS(JobSpec::from_json(json{{"task", "inpaint"}, {"model", "m"}, {"image", encode_image(test_image(1))}}),
                  InvalidArgument);
  j["eps"] = -1;
  CHECK_THROWS_AS(JobSpec::from_json(j), InvalidArgument);
  j["eps"] = 1;
  j["target"] = 5;
  CHECK_THROWS_AS(validate_job(JobSpec::from_json(j), registry()), InvalidArgument);
}

TEST_CASE("health, models and error statuses") {
  Harness h;
  CHECK(h.get("/v1/health")["status"] == "ok");
  json models = h.get("/v1/models");
  CHECK(models.dump().find("\"m\"") != std::string::npos);
  h.get("/v1/jobs/nope", 404);
  h.get("/v1/jobs/nope/frames", 404);
  auto del = h.client.Delete("/v1/jobs/nope");
  REQUIRE(del);
  CHECK(del->status == 404);
  auto bad = h.client.Post("/v1/jobs", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  json wrong = translate_job(test_image(1), 3);
  wrong["model"] = "absent";
  h.post("/v1/jobs", wrong, 400);
  Image small(3, 8, 8, 0.5f);
  h.post("/v1/jobs", translate_job(small, 3), 400);
  h.get("/v1/sessions/nope/canvas", 404);
  h.post("/v1/sessions/nope/undo", json::object(), 404);
  h.post("/v1/sessions/nope/apply", translate_job(test_image(1), 1), 404);
}

TEST_CASE("16 concurrent clients get the same results as a synchronous run") {
  Harness h;
  constexpr int kClients = 16;
  std::vector<std::string> ids(kClients);
  std::vector<json> finals(kClients);
  std::atomic<int> errors{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < kClients; ++i) {
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", h.server.port());
      c.set_read_timeout(60, 0);
      auto r = c.Post("/v1/jobs", translate_job(test_image(static_cast<std::uint64_t>(i)), 12, 4).dump(), "application/json");
      if (!r || r->status != 201) {
        ++errors;
        return;
      }
      ids[i] = json::parse(r->body)["id"];
      for (;;) {
        auto s = c.Get("/v1/jobs/" + ids[i]);
        if (!s || s->status != 200) {
          ++errors;
          return;
        }
        json j = json::parse(s->body);
        if (j["state"] == "done" || j["state"] == "failed") {
          finals[i] = j;
          return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
    });
  }
  for (auto& t : threads) t.join();
  REQUIRE(errors == 0);
  std::set<std::string> unique(ids.begin(), ids.end());
  CHECK(unique.size() == kClients);
  for (int i = 0; i < kClients; ++i) {
    INFO("client " << i);
    REQUIRE(finals[i]["state"] == "done");
    JobSpec spec = JobSpec::from_json(translate_job(test_image(static_cast<std::uint64_t>(i)), 12, 4));
    Image expected = run_job(spec, registry()).images.front();
    CHECK(decode_image(finals[i]["output"]) == expected);
    CHECK(finals[i]["latest_frame"]["step"] == 12);
  }
}

TEST_CASE("frames arrive at the stride and the final step; eviction is reported as a gap") {
  Harness h;
  json created = h.post("/v1/jobs", translate_job(test_image(3), 80, 10), 201);
  const std::string id = created["id"];
  h.wait_job(id);
  json f = h.get("/v1/jobs/" + id + "/frames?from=0");
  REQUIRE(f["frames"].size() >= 8);
  int expected = 0;
  for (const auto& fr : f["frames"]) {
    CHECK(fr["step"] == expected);
    expected += 10;
  }
  CHECK(f["gap"] == false);
  CHECK(f["next"] == 81);
  json later = h.get("/v1/jobs/" + id + "/frames?from=41");
  CHECK(later["frames"].size() == 4);
  h.get("/v1/jobs/" + id + "/frames?from=abc", 400);

  Harness small(make_config(3));
  json c2 = small.post("/v1/jobs", translate_job(test_image(3), 80, 10), 201);
  small.wait_job(c2["id"]);
  json g = small.get("/v1/jobs/" + c2["id"].get<std::string>() + "/frames?from=0");
  CHECK(g["gap"] == true);
  CHECK(g["dropped"] == 6);
  CHECK(g["frames"].size() == 3);
  CHECK(g["frames"].back()["step"] == 80);
  json tail = small.get("/v1/jobs/" + c2["id"].get<std::string>() + "/frames?from=65");
  CHECK(tail["gap"] == false);
}

TEST_CASE("steps = 0 returns the projected start") {
  Harness h;
  Image im = test_image(4);
  json c = h.post("/v1/jobs", translate_job(im, 0), 201);
  json s = h.wait_job(c["id"]);
  REQUIRE(s["state"] == "done");
  CHECK(decode_image(s["output"]) == im);
  CHECK(s["latest_frame"]["step"] == 0);
}

TEST_CASE("a running job can be cancelled; finished jobs answer 409") {
  Harness h;
  json c = h.post("/v1/jobs", translate_job(test_image(5), 1000000, 1), 201);
  const std::string id = c["id"];
  for (;;) {
    json s = h.get("/v1/jobs/" + id);
    if (s["state"] == "running" && !s["latest_frame"].is_null()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  auto del = h.client.Delete("/v1/jobs/" + id);
  REQUIRE(del);
  CHECK(del->status == 200);
  json s = h.wait_job(id);
  CHECK(s["state"] == "failed");
  CHECK(s["cancelled"] == true);
  CHECK(s["error"] == "cancelled");
  CHECK(s["output"].is_null());
  auto again = h.client.Delete("/v1/jobs/" + id);
  REQUIRE(again);
  CHECK(again->status == 409);
}

TEST_CASE("jobs cancelled while queued never run") {
  ModelRegistry& reg = registry();
  JobManager jobs(reg, 1, 8);
  JobSpec slow = JobSpec::from_json(translate_job(test_image(6), 1000000, 1));
  const std::string first = jobs.submit(slow);
  const std::string second = jobs.submit(JobSpec::from_json(translate_job(test_image(7), 5)));
  CHECK(jobs.cancel(second) == CancelResult::cancelled);
  CHECK(jobs.cancel(first) == CancelResult::cancelled);
  jobs.wait(first);
  jobs.wait(second);
  auto s = jobs.status(second);
  REQUIRE(s);
  CHECK(s->state == JobState::failed);
  CHECK(s->started == 0);
  CHECK(jobs.cancel("nope") == CancelResult::not_found);
}

TEST_CASE("sessions: apply replaces the canvas, undo restores it bit-identically, busy is 409") {
  Harness h;
  Image start = test_image(8);
  json created = h.post("/v1/sessions", json{{"image", encode_image(start, false)}}, 201);
  const std::string sid = created["id"];
  const std::string base = "/v1/sessions/" + sid;

  Image mask = rect_mask(16, 16, 4, 4, 6, 6);
  json paint{{"task", "paint"}, {"model", "m"}, {"feature", 2}, {"eps", 21}, {"steps", 10},
             {"step_size", 0.5}, {"lambda", 10}, {"mask", encode_image(mask, false)}};
  json applied = h.post(base + "/apply", paint, 202);
  json s1 = h.wait_job(applied["job"]);
  REQUIRE(s1["state"] == "done");
  json canvas1;
  for (;;) {
    canvas1 = h.get(base + "/canvas");
    if (canvas1["active_job"].is_null()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  Image after1 = decode_image(canvas1["image"]);
  CHECK(after1 == decode_image(s1["output"]));
  CHECK_FALSE(after1 == start);
  CHECK(canvas1["history"].size() == 1);
  CHECK_FALSE(canvas1["history"][0].contains("image"));

  // A second edit starts from the edited canvas.
  json t = translate_job(start, 6);
  t.erase("image");
  json applied2 = h.post(base + "/apply", t, 202);
  JobSpec expect_spec = JobSpec::from_json(translate_job(after1, 6));
  Image expected2 = run_job(expect_spec, registry()).images.front();
  h.wait_job(applied2["job"]);
  for (;;) {
    if (h.get(base + "/canvas")["active_job"].is_null()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  CHECK(decode_image(h.get(base + "/canvas")["image"]) == expected2);

  json u1 = h.post(base + "/undo", json::object(), 200);
  CHECK(decode_image(u1["image"]) == after1);
  json u2 = h.post(base + "/undo", json::object(), 200);
  CHECK(decode_image(u2["image"]) == start);
  CHECK(u2["undo_depth"] == 0);
  h.post(base + "/undo", json::object(), 409);

  json slow = translate_job(start, 1000000, 1);
  slow.erase("image");
  json busy = h.post(base + "/apply", slow, 202);
  h.post(base + "/apply", slow, 409);
  h.post(base + "/undo", json::object(), 409);
  auto del = h.client.Delete("/v1/jobs/" + busy["job"].get<std::string>());
  REQUIRE(del);
  h.wait_job(busy["job"]);
  for (;;) {
    if (h.get(base + "/canvas")["active_job"].is_null()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  // A cancelled job leaves the canvas as it was.
  CHECK(decode_image(h.get(base + "/canvas")["image"]) == start);

  h.post("/v1/sessions", json{{"fill", 2.0}, {"channels", 3}, {"height", 4}, {"width", 4}}, 400);
  json blank = h.post("/v1/sessions", json{{"model", "m"}}, 201);
  CHECK(decode_image(h.get("/v1/sessions/" + blank["id"].get<std::string>() + "/canvas")["image"]) ==
        Image(3, 16, 16, 0.5f));
}
