#include "../support/doctest_torch.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include "../support/tiny.hpp"
#include "titleforge/error.hpp"
#include "titleforge/evaluate.hpp"
#include "titleforge/inference.hpp"
#include "titleforge/service.hpp"
#include "titleforge/text.hpp"

using namespace titleforge;
using namespace titleforge::testing;
using namespace std::chrono_literals;

namespace {

std::shared_ptr<Generator> tiny_generator(std::uint64_t seed = 21, std::vector<std::string> langs = {"python"}) {
    return std::make_shared<Generator>(tiny_checkpoint(seed, TemplateKind::hybrid, false, std::move(langs)));
}

GenerationRequest python_request() {
    GenerationRequest r;
    r.lang = "python";
    r.description = "I want to sort my list but it fails.";
    r.code = "x = sort(list)";
    return r;
}

// Stand-in that holds each request until released, for queueing tests.
class BlockingGenerator : public TitleGenerator {
public:
    GenerationResult generate(const GenerationRequest& r) const override {
        ++started;
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return released_; });
        GenerationResult out;
        for (std::size_t i = 0; i < r.num_candidates; ++i) out.candidates.push_back({"title " + std::to_string(i), -0.1 * double(i), {}});
        out.model_manifest = "fake";
        return out;
    }
    std::vector<std::string> languages() const override { return {"python", "java"}; }
    std::string model_version() const override { return "fake"; }

    void release() {
        {
            std::lock_guard lock(mutex_);
            released_ = true;
        }
        cv_.notify_all();
    }

    mutable std::atomic<int> started{0};

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    bool released_ = false;
};

void wait_for(const std::atomic<int>& counter, int value) {
    for (int i = 0; i < 500 && counter.load() < value; ++i) std::this_thread::sleep_for(10ms);
}

const std::string kValidBody = R"j({"lang":"python","description":"I want to sort my list","code":"x = sort(list)"})j";

}  // namespace

// ---------------------------------------------------------------------------
// Generator

TEST_CASE("generator: three distinct candidates sorted by score") {
    auto gen = tiny_generator();
    auto result = gen->generate(python_request());
    REQUIRE(result.candidates.size() == 3);
    std::set<std::vector<TokenId>> seqs;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK_FALSE(result.candidates[i].title.empty());
        CHECK(u32_to_utf8(utf8_to_u32(result.candidates[i].title)) == result.candidates[i].title);
        CHECK(seqs.insert(result.candidates[i].tokens).second);
        CHECK(std::isfinite(result.candidates[i].score));
        CHECK(result.candidates[i].score <= 0.0);
        if (i > 0) CHECK(result.candidates[i - 1].score >= result.candidates[i].score);
        CHECK(result.candidates[i].tokens.size() <= 16);
        for (auto t : result.candidates[i].tokens) {
            CHECK(t != Tokenizer::kPad);
            CHECK(t != Tokenizer::kSoft);
            CHECK(t != Tokenizer::kBos);
        }
    }
    CHECK(result.model_manifest == gen->model_version());
    CHECK(result.model_manifest.rfind("tf-", 0) == 0);

    auto again = gen->generate(python_request());
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(again.candidates[i].tokens == result.candidates[i].tokens);
        CHECK(again.candidates[i].score == result.candidates[i].score);
    }
}

TEST_CASE("generator: one modality is enough; none is an error") {
    auto gen = tiny_generator();
    auto r = python_request();
    r.code.clear();
    CHECK(gen->generate(r).candidates.size() == 3);
    r = python_request();
    r.description.clear();
    CHECK(gen->generate(r).candidates.size() == 3);
    r.code.clear();
    CHECK_THROWS_WITH_AS(gen->generate(r), doctest::Contains("no input modality"), InvalidInput);
}

TEST_CASE("generator: request validation") {
    auto gen = tiny_generator(21, {"python", "java"});
    auto r = python_request();
    r.lang = "rust";
    try {
        gen->generate(r);
        FAIL("expected UnsupportedLanguage");
    } catch (const UnsupportedLanguage& e) {
        CHECK(e.supported() == std::vector<std::string>{"python", "java"});
        CHECK(std::string(e.what()).find("rust") != std::string::npos);
    }
    r = python_request();
    r.num_candidates = 0;
    CHECK_THROWS_AS(gen->generate(r), InvalidInput);
    r.num_candidates = 11;
    CHECK_THROWS_AS(gen->generate(r), InvalidInput);
    r.num_candidates = 10;
    CHECK(gen->generate(r).candidates.size() <= 10);
    r = python_request();
    r.deadline = std::chrono::steady_clock::now() - 1s;
    CHECK_THROWS_AS(gen->generate(r), GenerationTimeout);
    // The model still works after a timeout.
    CHECK(gen->generate(python_request()).candidates.size() == 3);
}

TEST_CASE("generator: beam results dominate greedy on the real decoder") {
    auto ckpt = tiny_checkpoint(23);
    auto input = ckpt.prompt.render(toy_quads("python", 3).back(), ckpt.tokenizer);
    BeamOptions o;
    o.max_len = 16;
    o.length_normalize = false;
    o.beam_size = 1;
    auto greedy = generate_ids(ckpt, input, o);
    o.beam_size = 5;
    auto beam = generate_ids(ckpt, input, o);
    REQUIRE(greedy.size() == 1);
    CHECK(beam.front().log_prob >= greedy.front().log_prob);
    CHECK(greedy.front().tokens.front() != Tokenizer::kEos);
}

TEST_CASE("generator: load from a training output directory") {
    auto ckpt = tiny_checkpoint(25);
    auto root = std::filesystem::temp_directory_path() / "titleforge_test_gen_load";
    std::filesystem::remove_all(root);
    save_checkpoint((root / "best").string(), ckpt);
    CHECK(resolve_model_dir(root.string()) == (root / "best").string());
    auto gen = Generator::load(root.string());
    CHECK(gen->model_version() == ckpt.model_version());
    CHECK(gen->languages() == std::vector<std::string>{"python"});
    CHECK_THROWS_AS(Generator::load((root / "missing").string()), Error);
    std::filesystem::remove_all(root);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST_CASE("evaluate: one record per example, scores consistent with the records") {
    auto gen = tiny_generator();
    auto quads = toy_quads("python", 5);
    quads[2].description.clear();
    quads[2].code.clear();
    EvaluationOptions opts;
    opts.beam_size = 3;
    auto result = evaluate(*gen, {{"python", quads}}, opts);
    REQUIRE(result.records.size() == 5);
    CHECK(result.failures == 1);
    CHECK(result.records[2].error.has_value());
    CHECK(result.records[2].generated.empty());
    std::vector<EvalPair> pairs;
    for (const auto& r : result.records) {
        CHECK(r.lang == "python");
        pairs.push_back(make_eval_pair(r.generated, r.reference, r.post_id));
    }
    auto expected = score_all(pairs);
    CHECK(result.report.languages.at("python").rouge_l == doctest::Approx(expected.rouge_l));
    CHECK(result.report.languages.at("python").pairs == 5);

    auto j = result.to_json(opts);
    CHECK(j["model_version"] == gen->model_version());
    CHECK(j["failures"] == 1);
    CHECK(j["options"]["beam_size"] == 3);
    CHECK(j.contains("metrics_params"));
    CHECK(j["languages"].contains("python"));
    std::ostringstream lines;
    result.write_generations(lines);
    std::istringstream in(lines.str());
    std::size_t n = 0;
    for (std::string line; std::getline(in, line); ++n) CHECK(nlohmann::json::parse(line).contains("generated"));
    CHECK(n == 5);

    opts.limit = 2;
    CHECK(evaluate(*gen, {{"python", quads}}, opts).records.size() == 2);
}

// ---------------------------------------------------------------------------
// Service handlers

TEST_CASE("service: request validation maps to status codes") {
    Service svc(ServiceConfig{}, tiny_generator(21, {"python", "java"}));
    auto ok = svc.handle_generate(kValidBody);
    REQUIRE(ok.status == 200);
    CHECK(ok.body["candidates"].size() == 3);
    CHECK(ok.body["model_version"].get<std::string>().rfind("tf-", 0) == 0);
    CHECK(ok.body["latency_ms"].get<double>() >= 0.0);
    for (const auto& c : ok.body["candidates"]) {
        CHECK(c["title"].is_string());
        CHECK(c["score"].is_number());
    }
    CHECK(svc.handle_generate(R"({"lang":"python","code":"x = 1","num_candidates":1})").body["candidates"].size() == 1);

    CHECK(svc.handle_generate("{not json").status == 400);
    CHECK(svc.handle_generate("[1, 2]").status == 422);
    CHECK(svc.handle_generate(R"({"description":"x"})").status == 422);
    CHECK(svc.handle_generate(R"({"lang":"python"})").status == 422);
    CHECK(svc.handle_generate(R"({"lang":"python","description":"","code":""})").status == 422);
    CHECK(svc.handle_generate(R"({"lang":"python","description":5})").status == 422);
    CHECK(svc.handle_generate(R"({"lang":"python","description":"x","num_candidates":0})").status == 422);
    CHECK(svc.handle_generate(R"({"lang":"python","description":"x","num_candidates":11})").status == 422);
    CHECK(svc.handle_generate(R"({"lang":"python","description":"x","num_candidates":"3"})").status == 422);

    auto bad_lang = svc.handle_generate(R"({"lang":"rust","description":"x"})");
    CHECK(bad_lang.status == 422);
    CHECK(bad_lang.body["supported"] == nlohmann::json::array({"python", "java"}));
    CHECK(bad_lang.body["error"].get<std::string>().find("rust") != std::string::npos);

    CHECK(svc.handle_health().body["status"] == "ok");
    CHECK(svc.handle_languages().body["languages"] == nlohmann::json::array({"python", "java"}));
}

TEST_CASE("service: without a model every generation answers 503") {
    Service svc(ServiceConfig{}, nullptr);
    CHECK(svc.handle_generate(kValidBody).status == 503);
    CHECK(svc.handle_languages().status == 503);
    auto health = svc.handle_health();
    CHECK(health.status == 200);
    CHECK(health.body["status"] == "no_model");
}

TEST_CASE("service: a full queue answers 429 and a slow slot 504") {
    SUBCASE("429") {
        auto fake = std::make_shared<BlockingGenerator>();
        ServiceConfig c;
        c.max_concurrent_generations = 1;
        c.max_queue = 0;
        Service svc(c, fake);
        auto first = std::async(std::launch::async, [&] { return svc.handle_generate(kValidBody); });
        wait_for(fake->started, 1);
        CHECK(svc.handle_generate(kValidBody).status == 429);
        fake->release();
        CHECK(first.get().status == 200);
        CHECK(svc.handle_generate(kValidBody).status == 200);
    }
    SUBCASE("504") {
        auto fake = std::make_shared<BlockingGenerator>();
        ServiceConfig c;
        c.max_concurrent_generations = 1;
        c.max_queue = 4;
        c.request_timeout = 0.2;
        Service svc(c, fake);
        auto first = std::async(std::launch::async, [&] { return svc.handle_generate(kValidBody); });
        wait_for(fake->started, 1);
        auto started = std::chrono::steady_clock::now();
        auto second = svc.handle_generate(kValidBody);
        CHECK(second.status == 504);
        CHECK(std::chrono::steady_clock::now() - started < 5s);
        fake->release();
        first.get();
    }
    SUBCASE("generator timeout") {
        ServiceConfig c;
        c.request_timeout = 1e-9;
        Service svc(c, tiny_generator());
        CHECK(svc.handle_generate(kValidBody).status == 504);
    }
}

TEST_CASE("service: configuration and environment") {
    ServiceConfig c;
    c.port = 70000;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = ServiceConfig{};
    c.max_concurrent_generations = 0;
    CHECK_THROWS_AS(Service(c, nullptr), InvalidInput);

    ::setenv("TITLEFORGE_MODEL_DIR", "/models/x", 1);
    ::setenv("TITLEFORGE_PORT", "9123", 1);
    c = ServiceConfig{};
    c.apply_env();
    CHECK(c.model_dir == "/models/x");
    CHECK(c.port == 9123);
    ::setenv("TITLEFORGE_PORT", "eighty", 1);
    CHECK_THROWS_AS(c.apply_env(), InvalidInput);
    ::unsetenv("TITLEFORGE_MODEL_DIR");
    ::unsetenv("TITLEFORGE_PORT");
    c = ServiceConfig{};
    c.apply_env();
    CHECK(c.model_dir.empty());
    CHECK(c.port == 8080);
}

TEST_CASE("service: live HTTP round trip with CORS headers") {
    ServiceConfig c;
    c.port = 0;
    c.cors_origin = "http://localhost:5173";
    Service svc(c, tiny_generator());
    int port = svc.bind();
    REQUIRE(port > 0);
    std::thread server([&] { svc.run(); });

    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(60, 0);
    auto health = client.Get("/api/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(nlohmann::json::parse(health->body)["status"] == "ok");
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

    auto gen = client.Post("/api/generate", kValidBody, "application/json");
    REQUIRE(gen);
    CHECK(gen->status == 200);
    CHECK(nlohmann::json::parse(gen->body)["candidates"].size() == 3);
    CHECK(gen->get_header_value("Content-Type") == "application/json");

    auto bad = client.Post("/api/generate", R"({"lang":"cobol","code":"x"})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    CHECK(nlohmann::json::parse(bad->body)["supported"] == nlohmann::json::array({"python"}));

    auto pre = client.Options("/api/generate");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

    auto langs = client.Get("/api/languages");
    REQUIRE(langs);
    CHECK(nlohmann::json::parse(langs->body)["languages"] == nlohmann::json::array({"python"}));

    svc.stop();
    server.join();
}
