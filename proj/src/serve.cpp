#include "snowdet/serve.hpp"

#include <chrono>
#include <csignal>
#include <thread>

#include "httplib.h"
#include "snowdet/preprocess.hpp"

namespace snowdet {

using nlohmann::json;

namespace {

const char* state_name(InferenceService::State s) {
    switch (s) {
        case InferenceService::State::loading: return "loading";
        case InferenceService::State::ready: return "ok";
        case InferenceService::State::failed: return "failed";
    }
    return "failed";
}

json error_body(const std::string& code, const std::string& detail) {
    return {{"error", code}, {"detail", detail}};
}

}  // namespace

json PredictionResponse::to_json() const {
    return {{"label", to_string(label)},
            {"snow_probability", snow_probability},
            {"per_model", per_model},
            {"ensemble_weight_a", ensemble_weight_a},
            {"alert", alert},
            {"model_version", model_version},
            {"latency_ms", latency_ms}};
}

void InferenceService::set_bundle(std::shared_ptr<const EnsembleBundle> bundle) {
    {
        std::lock_guard lock(mutex_);
        bundle_ = std::move(bundle);
    }
    state_ = State::ready;
}

void InferenceService::set_failed(std::string reason) {
    {
        std::lock_guard lock(mutex_);
        failure_ = std::move(reason);
    }
    state_ = State::failed;
}

void InferenceService::load(const std::filesystem::path& bundle_dir) {
    try {
        set_bundle(std::make_shared<const EnsembleBundle>(EnsembleBundle::load(bundle_dir)));
    } catch (const std::exception& e) {
        set_failed(e.what());
    }
}

std::shared_ptr<const EnsembleBundle> InferenceService::bundle() const {
    std::lock_guard lock(mutex_);
    return bundle_;
}

ServiceReply InferenceService::health() const {
    const auto s = state();
    json body = {{"status", state_name(s)}, {"bundle_loaded", s == State::ready}, {"model_version", ""}};
    if (s == State::ready) body["model_version"] = bundle()->digest();
    if (s == State::failed) {
        std::lock_guard lock(mutex_);
        body["detail"] = failure_;
    }
    return {200, body};
}

ServiceReply InferenceService::model_info() const {
    if (state() != State::ready) return {503, error_body("model_not_loaded", state_name(state()))};
    return {200, bundle()->info()};
}

ServiceReply InferenceService::predict(std::span<const unsigned char> image_bytes) const {
    const auto started = std::chrono::steady_clock::now();
    if (state() != State::ready) return {503, error_body("model_not_loaded", state_name(state()))};
    const auto b = bundle();

    cv::Mat rgb;
    try {
        rgb = decode_rgb(image_bytes);
    } catch (const std::exception& e) {
        return {422, error_body("undecodable_image", e.what())};
    }
    const auto result = b->predict_image(rgb);

    PredictionResponse r;
    r.label = result.label;
    r.snow_probability = result.snow_probability();
    r.per_model[std::string(to_string(b->meta_a().arch))] = result.probs_a[kSnowIndex];
    r.per_model[std::string(to_string(b->meta_b().arch))] = result.probs_b[kSnowIndex];
    r.ensemble_weight_a = b->config().weight_a;
    r.alert = r.label == Label::snow ? "warn" : "clear";
    r.model_version = b->digest();
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return {200, r.to_json()};
}

struct HttpServer::Impl {
    InferenceService& service;
    ServeOptions options;
    httplib::Server server;
    std::thread thread;
    int bound_port = -1;

    Impl(InferenceService& s, ServeOptions o) : service(s), options(std::move(o)) {
        server.set_payload_max_length(options.max_body_bytes);
        server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Vary", "Origin"}});

        auto reply = [](httplib::Response& res, const ServiceReply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        server.Get("/api/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, service.health());
        });
        server.Get("/api/v1/model-info", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, service.model_info());
        });
        server.Post("/api/v1/predict", [this, reply](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_file("image")) {
                reply(res, {422, error_body("missing_image", "expected multipart form field 'image'")});
                return;
            }
            const auto& content = req.get_file_value("image").content;
            const auto* data = reinterpret_cast<const unsigned char*>(content.data());
            reply(res, service.predict({data, content.size()}));
        });
        server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.set_error_handler([this](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            json body;
            if (res.status == 413) {
                body = error_body("payload_too_large",
                                  "request body exceeds " + std::to_string(options.max_body_bytes) + " bytes");
            } else if (res.status == 404) {
                body = error_body("not_found", "no such endpoint");
            } else {
                body = error_body("http_" + std::to_string(res.status), httplib::status_message(res.status));
            }
            res.set_content(body.dump(), "application/json");
            return httplib::Server::HandlerResponse::Handled;
        });
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "unknown error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            res.status = 500;
            res.set_content(error_body("internal_error", what).dump(), "application/json");
        });
    }
};

HttpServer::HttpServer(InferenceService& service, ServeOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
    if (impl_->options.port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(impl_->options.host);
    } else if (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
        impl_->bound_port = impl_->options.port;
    }
    if (impl_->bound_port <= 0) {
        throw Error("could not bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->bound_port;
}

bool HttpServer::listen() {
    if (impl_->options.port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(impl_->options.host);
        if (impl_->bound_port <= 0) return false;
        return impl_->server.listen_after_bind();
    }
    impl_->bound_port = impl_->options.port;
    return impl_->server.listen(impl_->options.host, impl_->options.port);
}

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpServer::port() const { return impl_->bound_port; }

int run_server(const std::filesystem::path& bundle_dir, const ServeOptions& options,
               const std::function<void(const std::string&)>& log_fn) {
    auto log = [&](const std::string& m) {
        if (log_fn) log_fn(m);
    };
    InferenceService service;
    HttpServer server(service, options);
    std::thread loader([&] {
        service.load(bundle_dir);
        if (service.state() == InferenceService::State::ready) {
            log("bundle loaded: " + service.health().body["model_version"].get<std::string>());
        } else {
            log("bundle failed to load: " + service.health().body.value("detail", std::string()));
        }
    });
    log("listening on " + options.host + ":" + std::to_string(options.port));
    const bool ok = server.listen();
    loader.join();
    if (!ok) {
        log("could not listen on " + options.host + ":" + std::to_string(options.port));
        return 1;
    }
    return 0;
}

}  // namespace snowdet
