#include <future>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "snowdet/io.hpp"
#include "snowdet/serve.hpp"
#include "support.hpp"

using namespace snowdet;
using snowdet::testing::small_run;
using nlohmann::json;

namespace {

std::shared_ptr<const EnsembleBundle> shared_bundle() {
    static const auto b = std::make_shared<const EnsembleBundle>(EnsembleBundle::load(small_run().outcome.bundle));
    return b;
}

ServeOptions local_options() {
    ServeOptions o;
    o.host = "127.0.0.1";
    o.port = 0;
    o.max_body_bytes = 1u << 20;
    o.cors_origin = "https://capture.example";
    return o;
}

httplib::Result post_image(httplib::Client& cli, const std::string& bytes, const std::string& field = "image") {
    httplib::MultipartFormDataItems items = {{field, bytes, "frame.png", "image/png"}};
    return cli.Post("/api/v1/predict", items);
}

std::span<const unsigned char> as_bytes(const std::string& s) {
    return {reinterpret_cast<const unsigned char*>(s.data()), s.size()};
}

}  // namespace

TEST_SUITE("serve") {

TEST_CASE("service replies without HTTP") {
    InferenceService service;
    CHECK(service.state() == InferenceService::State::loading);
    auto h = service.health();
    CHECK(h.status == 200);
    CHECK(h.body["status"] == "loading");
    CHECK(h.body["bundle_loaded"] == false);
    CHECK(service.model_info().status == 503);
    const std::string junk = "not an image";
    const auto early = service.predict(as_bytes(junk));
    CHECK(early.status == 503);
    CHECK(early.body["error"] == "model_not_loaded");

    service.set_bundle(shared_bundle());
    h = service.health();
    CHECK(h.body["status"] == "ok");
    CHECK(h.body["model_version"] == shared_bundle()->digest());
    const auto bad = service.predict(as_bytes(junk));
    CHECK(bad.status == 422);
    CHECK(bad.body["error"] == "undecodable_image");

    InferenceService broken;
    broken.load("/nonexistent/bundle");
    CHECK(broken.state() == InferenceService::State::failed);
    CHECK(broken.health().body["status"] == "failed");
    CHECK_FALSE(broken.health().body["detail"].get<std::string>().empty());
}

TEST_CASE("HTTP contract") {
    InferenceService service;
    HttpServer server(service, local_options());
    const int port = server.start();
    REQUIRE(port > 0);
    CHECK(server.port() == port);
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(60, 0);

    auto res = cli.Get("/api/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["status"] == "loading");
    res = post_image(cli, read_file(small_run().manifest.records_in(Split::test).front().path));
    REQUIRE(res);
    CHECK(res->status == 503);

    service.set_bundle(shared_bundle());
    res = cli.Get("/api/v1/health");
    REQUIRE(res);
    const auto health = json::parse(res->body);
    CHECK(health["status"] == "ok");
    CHECK(health["bundle_loaded"] == true);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "https://capture.example");

    SUBCASE("model-info reports the on-disk ensemble weight") {
        res = cli.Get("/api/v1/model-info");
        REQUIRE(res);
        CHECK(res->status == 200);
        const auto info = json::parse(res->body);
        const auto on_disk = read_json(small_run().outcome.bundle / "ensemble.json");
        CHECK(info["weight_a"] == on_disk["weight_a"]);
        CHECK(info["archs"] == json::array({"vgg19", "resnet50"}));
        CHECK(info["class_order"] == json::array({"snow_free", "snow"}));
        CHECK(info["model_version"] == shared_bundle()->digest());
    }

    SUBCASE("a snow training image is answered with a warning") {
        std::optional<ImageRecord> snow;
        for (const auto& r : small_run().manifest.records_in(Split::train)) {
            if (r.label == Label::snow) {
                snow = r;
                break;
            }
        }
        REQUIRE(snow);
        res = post_image(cli, read_file(snow->path));
        REQUIRE(res);
        REQUIRE(res->status == 200);
        const auto body = json::parse(res->body);
        CHECK(body["label"] == "snow");
        CHECK(body["alert"] == "warn");
        CHECK(body["snow_probability"].get<double>() >= 0.5);
        CHECK(body["per_model"].contains("vgg19"));
        CHECK(body["per_model"].contains("resnet50"));
        CHECK(body["ensemble_weight_a"] == shared_bundle()->config().weight_a);
        CHECK(body["model_version"] == shared_bundle()->digest());
        CHECK(body["latency_ms"].get<double>() >= 0.0);
    }

    SUBCASE("error statuses") {
        res = post_image(cli, "definitely not a png");
        REQUIRE(res);
        CHECK(res->status == 422);
        CHECK(json::parse(res->body)["error"] == "undecodable_image");

        res = post_image(cli, "x", "file");
        REQUIRE(res);
        CHECK(res->status == 422);
        CHECK(json::parse(res->body)["error"] == "missing_image");

        res = post_image(cli, std::string(2u << 20, 'a'));
        REQUIRE(res);
        CHECK(res->status == 413);
        CHECK(json::parse(res->body)["error"] == "payload_too_large");

        res = cli.Get("/api/v1/nothing");
        REQUIRE(res);
        CHECK(res->status == 404);
        CHECK(json::parse(res->body)["error"] == "not_found");
    }

    SUBCASE("CORS preflight") {
        res = cli.Options("/api/v1/predict");
        REQUIRE(res);
        CHECK(res->status == 204);
        CHECK(res->get_header_value("Access-Control-Allow-Origin") == "https://capture.example");
        CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
    }

    SUBCASE("online answers match offline prediction and are stable under concurrency") {
        const auto test = small_run().manifest.records_in(Split::test);
        const auto offline = shared_bundle()->predict_records(test);
        for (std::size_t i = 0; i < test.size(); ++i) {
            CAPTURE(test[i].id);
            res = post_image(cli, read_file(test[i].path));
            REQUIRE(res);
            REQUIRE(res->status == 200);
            const auto body = json::parse(res->body);
            CHECK(std::abs(body["snow_probability"].get<double>() - offline[i].snow_probability()) <= 1e-5);
            CHECK(std::abs(body["per_model"]["vgg19"].get<double>() - offline[i].probs_a[kSnowIndex]) <= 1e-5);
            CHECK(body["label"] == to_string(offline[i].label));
        }

        const auto bytes = read_file(test.front().path);
        std::vector<std::future<std::string>> calls;
        for (int t = 0; t < 4; ++t) {
            calls.push_back(std::async(std::launch::async, [&] {
                httplib::Client c("127.0.0.1", port);
                c.set_read_timeout(60, 0);
                auto r = post_image(c, bytes);
                if (!r || r->status != 200) return std::string("failed");
                auto j = json::parse(r->body);
                j.erase("latency_ms");
                return j.dump();
            }));
        }
        std::vector<std::string> answers;
        for (auto& c : calls) answers.push_back(c.get());
        CHECK(answers[0] != "failed");
        for (const auto& a : answers) CHECK(a == answers[0]);
    }

    server.stop();
}

}
