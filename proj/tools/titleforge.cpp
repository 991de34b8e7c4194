// titleforge command-line entry point.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "titleforge/corpus.hpp"
#include "titleforge/error.hpp"
#include "titleforge/evaluate.hpp"
#include "titleforge/inference.hpp"
#include "titleforge/log.hpp"
#include "titleforge/service.hpp"
#include "titleforge/training.hpp"

namespace fs = std::filesystem;
using namespace titleforge;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, CorpusSplit> read_corpus(const std::string& dir, std::vector<std::string>& langs) {
    if (langs.empty()) langs = split_languages(dir);
    if (langs.empty()) throw Error("no {lang}.train.jsonl files in " + dir);
    std::map<std::string, CorpusSplit> splits;
    for (const auto& lang : langs) splits.emplace(lang, read_split(dir, lang));
    return splits;
}

// ---------------------------------------------------------------------------

struct BuildCorpusArgs {
    std::string dump, out, rounding = "floor";
    std::vector<std::string> langs;
    std::int64_t min_score = 10;
};

int build_corpus_cmd(const BuildCorpusArgs& a) {
    BuildOptions options;
    options.langs = a.langs;
    options.rules.min_score = a.min_score;
    if (a.rounding == "floor") {
        options.rounding = ValidRounding::floor_ratio;
    } else if (a.rounding == "halve") {
        options.rounding = ValidRounding::halve_remainder;
    } else {
        throw InvalidInput("--valid-rounding must be floor or halve");
    }
    std::ifstream xml(a.dump, std::ios::binary);
    if (!xml) throw Error("cannot read " + a.dump);
    auto report = build_corpus(xml, options);
    fs::create_directories(a.out);
    nlohmann::json summary{{"rows", report.dump.rows},
                           {"questions", report.dump.questions},
                           {"rejected_rows", report.dump.rejected_rows},
                           {"rejected_extractions", report.rejected_extractions},
                           {"multi_language_posts", report.multi_language_posts}};
    for (const auto& [lang, split] : report.splits) {
        write_split(a.out, split);
        summary["languages"][lang] = {{"passing", report.passing[lang]},
                                      {"extracted", report.extracted[lang]},
                                      {"train", split.train.size()},
                                      {"valid", split.valid.size()},
                                      {"test", split.test.size()}};
        std::cout << lang << ": " << split.train.size() << " train, " << split.valid.size() << " valid, "
                  << split.test.size() << " test\n";
    }
    std::ofstream(fs::path(a.out) / "build_report.json") << summary.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string corpus, out, mode = "hybrid", modality = "bimodal", preset = "base", init, select_by = "loss";
    std::vector<std::string> langs;
    std::size_t epochs = 10, patience = 3, batch_size = 16, max_src = 512, max_tgt = 64, vocab_size = 32000;
    std::size_t select_sample = 50, limit_train = 0;
    double lr = 5e-5, weight_decay = 0.0, max_grad_norm = 1.0;
    std::uint64_t seed = 42;
    bool freeze_backbone = false, evaluate_initial = false;
};

int train_cmd(TrainArgs a) {
    auto splits = read_corpus(a.corpus, a.langs);
    if (a.limit_train > 0) {
        for (auto& [lang, s] : splits) {
            if (s.train.size() > a.limit_train) s.train.resize(a.limit_train);
        }
    }
    TrainingConfig config;
    config.learning_rate = a.lr;
    config.batch_size = a.batch_size;
    config.max_src = a.max_src;
    config.max_tgt = a.max_tgt;
    config.weight_decay = a.weight_decay;
    config.max_grad_norm = a.max_grad_norm;
    config.patience = a.patience;
    config.max_epochs = a.epochs;
    config.seed = a.seed;
    config.mode = parse_train_mode(a.mode);
    config.modality = parse_modality(a.modality);
    config.tasks = a.langs;
    config.freeze_backbone = a.freeze_backbone;
    config.select_by = parse_select_by(a.select_by);
    config.select_sample = a.select_sample;
    config.evaluate_initial = a.evaluate_initial;
    config.validate();

    Checkpoint ckpt;
    if (!a.init.empty()) {
        ckpt = load_checkpoint(resolve_model_dir(a.init));
        adopt_layout(ckpt, config);
    } else {
        ckpt = init_for_training(config, splits, a.preset, a.vocab_size);
    }
    log::info("model " + ckpt.config.to_json().dump() + ", vocabulary " + std::to_string(ckpt.tokenizer.size()) +
              ", soft-prompt rows " + std::to_string(ckpt.bank->rows()));
    auto state = train(config, splits, ckpt, a.out);
    std::cout << "best epoch " << state.best_epoch << ", validation loss " << state.best_validation_loss
              << (state.stopped_early ? " (stopped early)" : "") << "\ncheckpoint " << state.best_checkpoint_path
              << " (" << ckpt.model_version() << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string model, corpus, out, generations;
    std::vector<std::string> langs;
    std::size_t beam = 10, max_len = 64, limit = 0;
    bool no_length_normalize = false;
};

int evaluate_cmd(EvaluateArgs a) {
    auto generator = Generator::load(a.model);
    if (a.langs.empty()) a.langs = generator->languages();
    std::map<std::string, std::vector<Quadruplet>> test_sets;
    for (const auto& lang : a.langs) test_sets[lang] = read_split(a.corpus, lang).test;
    EvaluationOptions options;
    options.beam_size = a.beam;
    options.max_len = a.max_len;
    options.length_normalize = !a.no_length_normalize;
    if (a.limit > 0) options.limit = a.limit;
    auto result = evaluate(*generator, test_sets, options);

    auto out = fs::path(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream report(out);
    report << result.to_json(options).dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    if (!report) throw Error("cannot write " + a.out);
    auto gens = a.generations.empty() ? (out.parent_path() / (out.stem().string() + ".generations.jsonl")).string()
                                      : a.generations;
    std::ofstream g(gens);
    result.write_generations(g);
    if (!g) throw Error("cannot write " + gens);
    std::cout << result.report.to_table();
    if (result.failures > 0) std::cout << result.failures << " generation failures (scored as empty)\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string model, lang, desc_file, code_file;
    std::size_t k = 3, beam = 10, max_len = 64;
};

int generate_cmd(const GenerateArgs& a) {
    auto generator = Generator::load(a.model);
    GenerationRequest r;
    r.lang = a.lang;
    if (!a.desc_file.empty()) r.description = read_file(a.desc_file);
    if (!a.code_file.empty()) r.code = read_file(a.code_file);
    r.num_candidates = a.k;
    r.beam_size = a.beam;
    r.max_len = a.max_len;
    for (const auto& c : generator->generate(r).candidates) {
        std::cout << std::fixed << std::setprecision(4) << c.score << '\t' << c.title << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------

volatile std::sig_atomic_t g_stop_requested = 0;

extern "C" void on_signal(int) { g_stop_requested = 1; }

struct ServeArgs {
    ServiceConfig config;
    std::string model, host;
    int port = -1;
};

int serve_cmd(ServeArgs a) {
    // Defaults, then environment, then explicit flags.
    auto& c = a.config;
    c.apply_env();
    if (!a.model.empty()) c.model_dir = a.model;
    if (!a.host.empty()) c.host = a.host;
    if (a.port >= 0) c.port = a.port;
    c.validate();

    std::shared_ptr<const TitleGenerator> generator;
    if (c.model_dir.empty()) {
        log::warn("no model given (--model or TITLEFORGE_MODEL_DIR); generation requests will answer 503");
    } else {
        generator = Generator::load(c.model_dir);
    }
    Service service(c, generator);
    int port = service.bind();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    // A signal may arrive before the accept loop starts, so stop() is retried until run() returns.
    std::atomic<bool> finished{false};
    std::thread watcher([&] {
        while (!finished) {
            if (g_stop_requested) service.stop();
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    });
    std::cout << "titleforge serving on http://" << c.host << ":" << port
              << (generator ? " with model " + generator->model_version() : std::string(" without a model")) << std::endl;
    service.run();
    finished = true;
    watcher.join();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Question-title generation from problem descriptions and code snippets", "titleforge"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "Log debug messages");
    app.add_flag("-q,--quiet", quiet, "Log warnings and errors only");

    BuildCorpusArgs bc;
    auto* build = app.add_subcommand("build-corpus", "Extract title/description/code corpora from a Posts.xml dump");
    build->add_option("--dump", bc.dump, "Posts.xml path")->required();
    build->add_option("--langs", bc.langs, "Language tags, comma separated")->required()->delimiter(',');
    build->add_option("--out", bc.out, "Output directory")->required();
    build->add_option("--min-score", bc.min_score, "Minimum question score")->capture_default_str();
    build->add_option("--valid-rounding", bc.rounding, "Validation size rounding: floor or halve")
        ->check(CLI::IsMember({"floor", "halve"}))
        ->capture_default_str();

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Prompt-tune or fine-tune a title generator");
    tr->add_option("--corpus", ta.corpus, "Directory with {lang}.{train,valid,test}.jsonl")->required();
    tr->add_option("--out", ta.out, "Output directory (history, run config, best/ checkpoint)")->required();
    tr->add_option("--langs", ta.langs, "Task languages (default: all in the corpus)")->delimiter(',');
    tr->add_option("--mode", ta.mode, "hybrid, hard, soft or finetune")
        ->check(CLI::IsMember({"hybrid", "hard", "soft", "finetune"}))
        ->capture_default_str();
    tr->add_option("--modality", ta.modality, "bimodal, desc or code")
        ->check(CLI::IsMember({"bimodal", "desc", "code", "desc_only", "code_only"}))
        ->capture_default_str();
    tr->add_option("--init", ta.init, "Start from this checkpoint instead of fresh weights");
    tr->add_option("--preset", ta.preset, "Fresh model shape: base or small")
        ->check(CLI::IsMember({"base", "small"}))
        ->capture_default_str();
    tr->add_option("--vocab-size", ta.vocab_size, "Vocabulary size for a fresh model")->capture_default_str();
    tr->add_option("--epochs", ta.epochs, "Maximum epochs")->capture_default_str();
    tr->add_option("--patience", ta.patience, "Epochs without improvement before stopping")->capture_default_str();
    tr->add_option("--lr", ta.lr, "AdamW learning rate")->capture_default_str();
    tr->add_option("--batch-size", ta.batch_size, "Examples per batch")->capture_default_str();
    tr->add_option("--max-src", ta.max_src, "Encoder input length")->capture_default_str();
    tr->add_option("--max-tgt", ta.max_tgt, "Title length")->capture_default_str();
    tr->add_option("--weight-decay", ta.weight_decay, "AdamW weight decay")->capture_default_str();
    tr->add_option("--max-grad-norm", ta.max_grad_norm, "Gradient clipping norm, 0 disables")->capture_default_str();
    tr->add_option("--seed", ta.seed, "Random seed")->capture_default_str();
    tr->add_flag("--freeze-backbone", ta.freeze_backbone, "Train the soft prompts only");
    tr->add_option("--select-by", ta.select_by, "Checkpoint selection: loss or rouge")
        ->check(CLI::IsMember({"loss", "rouge"}))
        ->capture_default_str();
    tr->add_option("--select-sample", ta.select_sample, "Validation examples per language for --select-by rouge")
        ->capture_default_str();
    tr->add_option("--limit-train", ta.limit_train, "Use only the first N training examples per language");
    tr->add_flag("--evaluate-initial", ta.evaluate_initial, "Log the losses before the first update");

    EvaluateArgs ea;
    auto* ev = app.add_subcommand("evaluate", "Score a model on the test splits");
    ev->add_option("--model", ea.model, "Checkpoint or training output directory")->required();
    ev->add_option("--corpus", ea.corpus, "Corpus directory")->required();
    ev->add_option("--out", ea.out, "Report JSON path")->required();
    ev->add_option("--generations", ea.generations, "Generations JSONL path (default: next to the report)");
    ev->add_option("--langs", ea.langs, "Languages (default: the model's)")->delimiter(',');
    ev->add_option("--beam", ea.beam, "Beam size")->capture_default_str();
    ev->add_option("--max-len", ea.max_len, "Maximum title length")->capture_default_str();
    ev->add_option("--limit", ea.limit, "First N test examples per language");
    ev->add_flag("--no-length-normalize", ea.no_length_normalize, "Rank by total log-probability");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Suggest titles for one post");
    gen->add_option("--model", ga.model, "Checkpoint or training output directory")->required();
    gen->add_option("--lang", ga.lang, "Language tag")->required();
    gen->add_option("--desc-file", ga.desc_file, "Problem description file")->check(CLI::ExistingFile);
    gen->add_option("--code-file", ga.code_file, "Code snippet file")->check(CLI::ExistingFile);
    gen->add_option("--k", ga.k, "Number of candidates")->capture_default_str();
    gen->add_option("--beam", ga.beam, "Beam size")->capture_default_str();
    gen->add_option("--max-len", ga.max_len, "Maximum title length")->capture_default_str();

    ServeArgs sa;
    auto* serve = app.add_subcommand("serve", "Serve the JSON generation API");
    serve->add_option("--model", sa.model, "Checkpoint directory (overrides TITLEFORGE_MODEL_DIR)");
    serve->add_option("--port", sa.port, "Port, 0 for any free port (overrides TITLEFORGE_PORT; default 8080)");
    serve->add_option("--host", sa.host, "Bind address (default 127.0.0.1)");
    serve->add_option("--max-concurrent", sa.config.max_concurrent_generations, "Generations in flight")
        ->capture_default_str();
    serve->add_option("--max-queue", sa.config.max_queue, "Requests waiting before 429")->capture_default_str();
    serve->add_option("--timeout", sa.config.request_timeout, "Request timeout in seconds")->capture_default_str();
    serve->add_option("--cors-origin", sa.config.cors_origin, "Allowed browser origin, empty to disable")
        ->capture_default_str();
    serve->add_option("--beam", sa.config.beam_size, "Beam size")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }
    log::set_min_level(verbose ? log::Level::debug : quiet ? log::Level::warn : log::Level::info);

    try {
        if (build->parsed()) return build_corpus_cmd(bc);
        if (tr->parsed()) return train_cmd(ta);
        if (ev->parsed()) return evaluate_cmd(ea);
        if (gen->parsed()) return generate_cmd(ga);
        if (serve->parsed()) return serve_cmd(sa);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
