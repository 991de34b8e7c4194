#include "titleforge/service.hpp"

#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "titleforge/log.hpp"

namespace titleforge {

namespace {

using Clock = std::chrono::steady_clock;

struct QueueFull {};
struct QueueTimeout {};

Service::Response error_response(int status, const std::string& message) {
    return {status, {{"error", message}}};
}

}  // namespace

void ServiceConfig::validate() const {
    if (port < 0 || port > 65535) throw InvalidInput("port must be in [0, 65535]");
    if (max_concurrent_generations < 1) throw InvalidInput("max_concurrent_generations must be at least 1");
    if (!(request_timeout > 0)) throw InvalidInput("request_timeout must be positive");
    if (beam_size < 1) throw InvalidInput("beam_size must be at least 1");
}

void ServiceConfig::apply_env() {
    if (const char* dir = std::getenv("TITLEFORGE_MODEL_DIR"); dir != nullptr && *dir != '\0') model_dir = dir;
    if (const char* p = std::getenv("TITLEFORGE_PORT"); p != nullptr && *p != '\0') {
        char* end = nullptr;
        long v = std::strtol(p, &end, 10);
        if (end == p || *end != '\0' || v < 0 || v > 65535) {
            throw InvalidInput("TITLEFORGE_PORT must be a port number, got '" + std::string(p) + "'");
        }
        port = static_cast<int>(v);
    }
}

class Service::Slot {
public:
    explicit Slot(Service* s) : service_(s) {}
    Slot(Slot&& other) noexcept : service_(other.service_) { other.service_ = nullptr; }
    Slot(const Slot&) = delete;
    ~Slot() {
        if (service_ == nullptr) return;
        {
            std::lock_guard lock(service_->mutex_);
            --service_->in_flight_;
        }
        service_->cv_.notify_one();
    }

private:
    Service* service_;
};

Service::Service(ServiceConfig config, std::shared_ptr<const TitleGenerator> generator)
    : config_(std::move(config)), generator_(std::move(generator)) {
    config_.validate();
}

Service::~Service() { stop(); }

Service::Slot Service::acquire(Clock::time_point deadline) {
    std::unique_lock lock(mutex_);
    if (in_flight_ >= config_.max_concurrent_generations) {
        if (waiting_ >= config_.max_queue) throw QueueFull{};
        ++waiting_;
        bool ok = cv_.wait_until(lock, deadline, [&] { return in_flight_ < config_.max_concurrent_generations; });
        --waiting_;
        if (!ok) throw QueueTimeout{};
    }
    ++in_flight_;
    return Slot(this);
}

Service::Response Service::handle_generate(const std::string& body) {
    auto started = Clock::now();
    if (!generator_) return error_response(503, "model not loaded");

    nlohmann::json req;
    try {
        req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    if (!req.is_object()) return error_response(422, "request body must be a JSON object");

    GenerationRequest g;
    try {
        if (!req.contains("lang") || !req["lang"].is_string()) return error_response(422, "lang must be a string");
        g.lang = req["lang"].get<std::string>();
        for (const char* field : {"description", "code"}) {
            if (req.contains(field) && !req[field].is_null() && !req[field].is_string()) {
                return error_response(422, std::string(field) + " must be a string");
            }
        }
        g.description = req.value("description", "");
        g.code = req.value("code", "");
        if (req.contains("num_candidates")) {
            const auto& n = req["num_candidates"];
            if (!n.is_number_integer()) return error_response(422, "num_candidates must be an integer");
            auto v = n.get<std::int64_t>();
            if (v < 1 || v > static_cast<std::int64_t>(config_.beam_size)) {
                return error_response(422, "num_candidates must be between 1 and " + std::to_string(config_.beam_size));
            }
            g.num_candidates = static_cast<std::size_t>(v);
        }
    } catch (const nlohmann::json::exception& e) {
        return error_response(422, e.what());
    }
    auto langs = generator_->languages();
    if (std::find(langs.begin(), langs.end(), g.lang) == langs.end()) {
        auto r = error_response(422, "unsupported language '" + g.lang + "'");
        r.body["supported"] = langs;
        return r;
    }
    if (g.description.empty() && g.code.empty()) {
        return error_response(422, "description and code are both empty");
    }
    g.beam_size = config_.beam_size;

    auto deadline = started + std::chrono::duration_cast<Clock::duration>(
                                  std::chrono::duration<double>(config_.request_timeout));
    g.deadline = deadline;
    try {
        auto slot = acquire(deadline);
        auto result = generator_->generate(g);
        nlohmann::json candidates = nlohmann::json::array();
        for (const auto& c : result.candidates) candidates.push_back({{"title", c.title}, {"score", c.score}});
        auto latency = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
        return {200, {{"candidates", candidates}, {"model_version", result.model_manifest}, {"latency_ms", latency}}};
    } catch (const QueueFull&) {
        return error_response(429, "too many requests in flight");
    } catch (const QueueTimeout&) {
        return error_response(504, "timed out waiting for a generation slot");
    } catch (const GenerationTimeout& e) {
        return error_response(504, e.what());
    } catch (const UnsupportedLanguage& e) {
        auto r = error_response(422, e.what());
        r.body["supported"] = e.supported();
        return r;
    } catch (const InvalidInput& e) {
        return error_response(422, e.what());
    } catch (const std::exception& e) {
        log::error(std::string("generation failed: ") + e.what());
        return error_response(500, e.what());
    }
}

Service::Response Service::handle_health() const {
    if (!generator_) return {200, {{"status", "no_model"}, {"model_version", nullptr}}};
    return {200, {{"status", "ok"}, {"model_version", generator_->model_version()}}};
}

Service::Response Service::handle_languages() const {
    if (!generator_) return error_response(503, "model not loaded");
    return {200, {{"languages", generator_->languages()}}};
}

int Service::bind() {
    server_ = std::make_unique<httplib::Server>();
    auto threads = config_.max_concurrent_generations + config_.max_queue + 2;
    server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json");
    };
    server_->Post("/api/generate",
                  [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, handle_generate(req.body)); });
    server_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_health()); });
    server_->Get("/api/languages",
                 [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_languages()); });
    server_->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    auto origin = config_.cors_origin;
    server_->set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
        if (origin.empty()) return;
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });

    int port = config_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(config_.host);
        if (port < 0) throw Error("cannot bind to " + config_.host);
    } else if (!server_->bind_to_port(config_.host, port)) {
        throw Error("cannot bind to " + config_.host + ":" + std::to_string(port));
    }
    return port;
}

void Service::run() {
    if (!server_) throw Error("Service::run called before bind");
    server_->listen_after_bind();
}

void Service::stop() {
    if (server_) server_->stop();
}

}  // namespace titleforge
