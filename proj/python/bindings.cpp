#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "titleforge/corpus.hpp"
#include "titleforge/error.hpp"
#include "titleforge/evaluate.hpp"
#include "titleforge/inference.hpp"
#include "titleforge/metrics.hpp"
#include "titleforge/prompt.hpp"
#include "titleforge/tokenizer.hpp"
#include "titleforge/training.hpp"

namespace py = pybind11;
using namespace titleforge;

namespace {

std::vector<EvalPair> pairs_of(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
    if (candidates.size() != references.size()) throw InvalidInput("candidates and references differ in length");
    std::vector<EvalPair> pairs;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        pairs.push_back(make_eval_pair(candidates[i], references[i], static_cast<std::int64_t>(i)));
    }
    return pairs;
}

py::dict scores_dict(const Scores& s) {
    py::dict d;
    d["rouge_l"] = s.rouge_l;
    d["meteor"] = s.meteor;
    d["bleu"] = std::vector<double>(s.bleu.begin(), s.bleu.end());
    d["cider"] = s.cider;
    d["pairs"] = s.pairs;
    return d;
}

py::dict quad_dict(const Quadruplet& q) {
    py::dict d;
    d["lang"] = q.lang;
    d["title"] = q.title;
    d["description"] = q.description;
    d["code"] = q.code;
    d["source_post_id"] = q.source_post_id;
    return d;
}

}  // namespace

PYBIND11_MODULE(_titleforge, m) {
    m.doc() = "Question-title generation: corpus, prompts, model, metrics";

    // Translators run newest first, so the subclass is registered last.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);

    // Metrics (fractions; CIDEr raw).
    m.def("rouge_l", [](const std::vector<std::string>& c, const std::vector<std::string>& r) { return rouge_l(pairs_of(c, r)); },
          py::arg("candidates"), py::arg("references"));
    m.def("bleu", [](const std::vector<std::string>& c, const std::vector<std::string>& r, int n) { return bleu(pairs_of(c, r), n); },
          py::arg("candidates"), py::arg("references"), py::arg("n") = 4);
    m.def("meteor", [](const std::vector<std::string>& c, const std::vector<std::string>& r) { return meteor(pairs_of(c, r)); },
          py::arg("candidates"), py::arg("references"));
    m.def("cider", [](const std::vector<std::string>& c, const std::vector<std::string>& r) { return cider(pairs_of(c, r)); },
          py::arg("candidates"), py::arg("references"));
    m.def("score_all",
          [](const std::vector<std::string>& c, const std::vector<std::string>& r) { return scores_dict(score_all(pairs_of(c, r))); },
          py::arg("candidates"), py::arg("references"));

    // Corpus.
    m.def("split_sizes", [](std::size_t n, bool halve) {
        auto s = split_sizes(n, {}, halve ? ValidRounding::halve_remainder : ValidRounding::floor_ratio);
        return py::make_tuple(s.train, s.valid, s.test);
    }, py::arg("n"), py::arg("halve_remainder") = false);
    m.def("read_split", [](const std::string& dir, const std::string& lang) {
        auto s = read_split(dir, lang);
        py::dict d;
        for (auto [name, part] : {std::pair{"train", &s.train}, {"valid", &s.valid}, {"test", &s.test}}) {
            py::list l;
            for (const auto& q : *part) l.append(quad_dict(q));
            d[name] = l;
        }
        return d;
    }, py::arg("dir"), py::arg("lang"));

    // Tokenizer.
    py::class_<Tokenizer>(m, "Tokenizer")
        .def_static("train", &Tokenizer::train, py::arg("texts"), py::arg("max_vocab"), py::arg("min_count") = 1)
        .def_static("load", &Tokenizer::load)
        .def("save", &Tokenizer::save)
        .def("encode", &Tokenizer::encode, py::arg("text"), py::arg("leading_space") = false)
        .def("decode", &Tokenizer::decode)
        .def("__len__", &Tokenizer::size);

    // Inference.
    py::class_<Generator, std::shared_ptr<Generator>>(m, "Generator")
        .def_static("load", &Generator::load, py::arg("model_dir"))
        .def_property_readonly("model_version", &Generator::model_version)
        .def_property_readonly("languages", &Generator::languages)
        .def(
            "generate",
            [](const Generator& g, const std::string& lang, const std::string& description, const std::string& code,
               std::size_t k, std::size_t beam_size) {
                GenerationRequest r;
                r.lang = lang;
                r.description = description;
                r.code = code;
                r.num_candidates = k;
                r.beam_size = beam_size;
                GenerationResult result;
                {
                    py::gil_scoped_release release;
                    result = g.generate(r);
                }
                py::list out;
                for (const auto& c : result.candidates) out.append(py::make_tuple(c.title, c.score));
                return out;
            },
            py::arg("lang"), py::arg("description") = "", py::arg("code") = "", py::arg("k") = 3,
            py::arg("beam_size") = 10);

    // Training from a corpus directory with a fresh model.
    m.def(
        "train",
        [](const std::string& corpus, const std::string& out, std::vector<std::string> langs, const std::string& mode,
           const std::string& preset, std::size_t epochs, double lr, std::size_t batch_size, std::size_t vocab_size,
           std::uint64_t seed) {
            TrainingConfig config;
            config.mode = parse_train_mode(mode);
            config.max_epochs = epochs;
            config.learning_rate = lr;
            config.batch_size = batch_size;
            config.seed = seed;
            if (langs.empty()) langs = split_languages(corpus);
            config.tasks = langs;
            std::map<std::string, CorpusSplit> splits;
            for (const auto& l : langs) splits.emplace(l, read_split(corpus, l));
            TrainState state;
            {
                py::gil_scoped_release release;
                auto ckpt = init_for_training(config, splits, preset, vocab_size);
                state = titleforge::train(config, splits, ckpt, out);
            }
            py::list history;
            for (const auto& r : state.history) {
                py::dict d;
                d["epoch"] = r.epoch;
                d["train_loss"] = r.train_loss;
                d["valid_loss"] = r.valid_loss;
                d["improved"] = r.improved;
                history.append(d);
            }
            return history;
        },
        py::arg("corpus"), py::arg("out"), py::arg("langs") = std::vector<std::string>{}, py::arg("mode") = "hybrid",
        py::arg("preset") = "small", py::arg("epochs") = 1, py::arg("lr") = 1e-3, py::arg("batch_size") = 8,
        py::arg("vocab_size") = 4000, py::arg("seed") = 42);
}
