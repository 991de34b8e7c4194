#pragma once

#include <condition_variable>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "titleforge/inference.hpp"

namespace httplib {
class Server;
}

namespace titleforge {

struct ServiceConfig {
    std::string model_dir;
    std::string host = "127.0.0.1";
    int port = 8080;                          // 0 picks a free port
    std::size_t max_concurrent_generations = 2;
    std::size_t max_queue = 16;               // requests waiting for a slot before 429
    double request_timeout = 30.0;            // seconds, queueing included
    std::string cors_origin = "*";
    std::size_t beam_size = 10;

    // Throws InvalidInput on out-of-range values.
    void validate() const;
    // TITLEFORGE_MODEL_DIR and TITLEFORGE_PORT replace model_dir and port when set.
    void apply_env();
};

// JSON API over a shared read-only generator:
//   POST /api/generate   {lang, description, code, num_candidates = 3}
//                        -> {candidates: [{title, score}], model_version, latency_ms}
//   GET  /api/health     -> {status, model_version}
//   GET  /api/languages  -> {languages: [...]}
// Errors carry {"error": message}: 400 malformed JSON, 422 invalid request (unsupported
// languages also list "supported"), 429 queue full, 503 no model, 504 timeout.
class Service {
public:
    struct Response {
        int status = 200;
        nlohmann::json body;
    };

    // `generator` may be null: the service then answers 503 until a model is provided.
    Service(ServiceConfig config, std::shared_ptr<const TitleGenerator> generator);
    ~Service();

    Response handle_generate(const std::string& body);
    Response handle_health() const;
    Response handle_languages() const;

    // Binds the socket; returns the bound port. Throws Error when binding fails.
    int bind();
    // Serves until stop(); call bind() first.
    void run();
    void stop();

    const ServiceConfig& config() const { return config_; }

private:
    class Slot;
    Slot acquire(std::chrono::steady_clock::time_point deadline);

    ServiceConfig config_;
    std::shared_ptr<const TitleGenerator> generator_;
    std::unique_ptr<httplib::Server> server_;

    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::size_t waiting_ = 0;
};

}  // namespace titleforge
