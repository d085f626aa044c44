#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>

#include "json.hpp"
#include "snowdet/bundle.hpp"

namespace snowdet {

struct PredictionResponse {
    Label label = Label::snow_free;
    double snow_probability = 0.0;
    /// arch name -> that member's snow probability
    std::map<std::string, double> per_model;
    double ensemble_weight_a = 0.5;
    /// "warn" iff label is snow.
    std::string alert = "clear";
    std::string model_version;
    double latency_ms = 0.0;

    nlohmann::json to_json() const;
};

/// Status code plus JSON body, independent of the HTTP library.
struct ServiceReply {
    int status = 200;
    nlohmann::json body;
};

/// Holds the loaded bundle and answers requests. The bundle is set once;
/// after that every call only reads shared state.
class InferenceService {
public:
    enum class State { loading, ready, failed };

    State state() const { return state_.load(); }
    void set_bundle(std::shared_ptr<const EnsembleBundle> bundle);
    void set_failed(std::string reason);
    /// Loads a bundle directory; on error the service enters `failed`.
    void load(const std::filesystem::path& bundle_dir);

    ServiceReply health() const;
    ServiceReply model_info() const;
    ServiceReply predict(std::span<const unsigned char> image_bytes) const;

private:
    std::shared_ptr<const EnsembleBundle> bundle() const;

    std::atomic<State> state_{State::loading};
    mutable std::mutex mutex_;
    std::shared_ptr<const EnsembleBundle> bundle_;
    std::string failure_;
};

struct ServeOptions {
    std::string host = "0.0.0.0";
    /// 0 picks a free port.
    int port = 8080;
    std::size_t max_body_bytes = 16u << 20;
    std::string cors_origin = "*";
};

/// HTTP front end:
///
///     GET  /api/v1/health       {"status": "ok"|"loading"|"failed", "bundle_loaded", "model_version"}
///     GET  /api/v1/model-info   bundle metadata
///     POST /api/v1/predict      multipart field "image" -> PredictionResponse
class HttpServer {
public:
    HttpServer(InferenceService& service, ServeOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    bool listen();
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// `serve` entry point: starts listening immediately, loads the bundle on a
/// background thread (health reports "loading" meanwhile) and blocks.
int run_server(const std::filesystem::path& bundle_dir, const ServeOptions& options,
               const std::function<void(const std::string&)>& log = {});

}  // namespace snowdet
