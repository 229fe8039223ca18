// SPDX-License-Identifier: Apache-2.0
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "ddeval/baselines.hpp"
#include "ddeval/classifier.hpp"
#include "ddeval/corpus.hpp"
#include "ddeval/errors.hpp"
#include "ddeval/harness.hpp"
#include "ddeval/markov.hpp"
#include "ddeval/oracle.hpp"
#include "ddeval/rng.hpp"

namespace py = pybind11;
using nlohmann::ordered_json;
using namespace ddeval;

namespace {

// lines -> encoded corpus over a private vocabulary
Corpus corpus_from_lines(const std::vector<std::string>& lines,
                         std::shared_ptr<const Vocab> vocab, int32_t max_len,
                         bool lowercase) {
    EncodeOptions opts;
    opts.max_len = max_len;
    opts.lowercase = lowercase;
    return encode_lines(lines, std::move(vocab), opts);
}

std::shared_ptr<const Vocab> vocab_over(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b,
                                        bool lowercase) {
    std::vector<std::string> all = a;
    all.insert(all.end(), b.begin(), b.end());
    return std::make_shared<Vocab>(build_vocab_from_lines(all, 1, lowercase));
}

std::vector<std::string> lines_of(const Corpus& corpus) {
    std::vector<std::string> out;
    out.reserve(corpus.sequences.size());
    for (const auto& seq : corpus.sequences) {
        const auto tokens = decode(seq, *corpus.vocab);
        std::string line;
        for (size_t i = 0; i < tokens.size(); ++i) {
            if (i) line += ' ';
            line += tokens[i];
        }
        out.push_back(std::move(line));
    }
    return out;
}

py::dict score_to_dict(const DdScore& s) {
    py::dict d;
    d["dd"] = s.value;
    d["method"] = s.method == DdMethod::Enumerated ? "enumerated" : "monte_carlo";
    d["n"] = s.n;
    if (s.method == DdMethod::MonteCarlo) d["std_err"] = s.std_err;
    return d;
}

py::dict report_to_dict(const DdReport& r) {
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["error"] = r.error;
    d["dd"] = r.dd;
    d["dev_accuracy"] = r.dev_accuracy;
    d["acc_real"] = r.acc_real;
    d["acc_generated"] = r.acc_generated;
    d["epochs_run"] = r.epochs_run;
    d["best_epoch"] = r.best_epoch;
    d["n_train"] = r.n_train;
    d["n_dev"] = r.n_dev;
    d["n_test"] = r.n_test;
    d["seed"] = r.seed;
    return d;
}

ClassifierConfig classifier_from_json_str(const std::string& config_json) {
    if (config_json.empty()) return ClassifierConfig{};
    ordered_json wrapped;
    wrapped["reference"] = "builtin:desk_base";
    wrapped["families"] = ordered_json::array(
        {ordered_json{{"kind", "lambda"},
                      {"name", "f"},
                      {"base", "builtin:desk_base"},
                      {"levels", ordered_json::array({0.0})}}});
    try {
        wrapped["classifier"] = ordered_json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("classifier config: ") + e.what());
    }
    return config_from_json(wrapped).classifier;
}

}  // namespace

PYBIND11_MODULE(_ddeval, m) {
    m.doc() = "distributional discrepancy evaluation toolkit";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<MarkovModel, std::shared_ptr<MarkovModel>>(m, "Model")
        .def_property_readonly("order", &MarkovModel::order)
        .def_property_readonly("vocab_size", &MarkovModel::vocab_size)
        .def_property_readonly("max_len", &MarkovModel::max_len)
        .def("save", &MarkovModel::save, py::arg("path"))
        .def("__repr__", [](const MarkovModel& mm) {
            std::ostringstream os;
            os << "Model(order=" << mm.order() << ", vocab_size=" << mm.vocab_size()
               << ", max_len=" << mm.max_len() << ")";
            return os.str();
        });

    m.def("builtin_models", &builtin_model_names,
          "names accepted by load_model('builtin:NAME')");

    m.def(
        "load_model", [](const std::string& ref) { return resolve_model(ref); },
        py::arg("ref"), "load a model file or a builtin via 'builtin:NAME'");

    m.def(
        "fit_model",
        [](const std::vector<std::string>& lines, int order, double alpha,
           int32_t max_len, bool lowercase) {
            auto vocab = std::make_shared<Vocab>(
                build_vocab_from_lines(lines, 1, lowercase));
            const Corpus corpus = corpus_from_lines(lines, vocab, max_len, lowercase);
            return std::make_shared<MarkovModel>(
                fit_markov(corpus, order, alpha, max_len));
        },
        py::arg("lines"), py::arg("order") = 2, py::arg("alpha") = 1e-3,
        py::arg("max_len") = 52, py::arg("lowercase") = false,
        "fit a smoothed Markov model to tokenized lines");

    m.def(
        "sample_lines",
        [](std::shared_ptr<MarkovModel> model, size_t n, uint64_t seed,
           double temperature, double lam, std::shared_ptr<MarkovModel> noise) {
            GeneratorSpec spec;
            spec.base = std::move(model);
            spec.noise = std::move(noise);
            spec.temperature = temperature;
            spec.lambda = lam;
            spec.name = "sample";
            spec.validate();
            return lines_of(sample(spec, n, seed));
        },
        py::arg("model"), py::arg("n"), py::arg("seed") = 0,
        py::arg("temperature") = 1.0, py::arg("lam") = 0.0,
        py::arg("noise").none(true) = nullptr,
        "draw sentences and decode them to strings");

    m.def(
        "oracle_dd",
        [](std::shared_ptr<MarkovModel> p, std::shared_ptr<MarkovModel> q,
           uint64_t budget, size_t mc_n, uint64_t seed) {
            const SequenceSpace space = SequenceSpace::of(*p, budget);
            const DdScore score =
                space.enumerable() ? tv_exact(*p, *q, space) : tv_mc(*p, *q, mc_n, seed);
            return score_to_dict(score);
        },
        py::arg("p"), py::arg("q"), py::arg("budget") = 10'000'000,
        py::arg("mc_n") = 100'000, py::arg("seed") = 0,
        "exact total variation when enumerable, Monte-Carlo otherwise");

    m.def(
        "classifier_dd",
        [](const std::vector<std::string>& real_lines,
           const std::vector<std::string>& generated_lines,
           const std::string& config_json, uint64_t seed, int32_t max_len,
           bool lowercase) {
            const auto vocab = vocab_over(real_lines, generated_lines, lowercase);
            Corpus real = corpus_from_lines(real_lines, vocab, max_len, lowercase);
            real.label = CorpusLabel::Real;
            Corpus gen = corpus_from_lines(generated_lines, vocab, max_len, lowercase);
            gen.label = CorpusLabel::Generated;
            const TrainResult res = train_classifier(
                classifier_from_json_str(config_json), real, gen, seed);
            return report_to_dict(res.report);
        },
        py::arg("real_lines"), py::arg("generated_lines"),
        py::arg("config_json") = "", py::arg("seed") = 0, py::arg("max_len") = 52,
        py::arg("lowercase") = false,
        "train the real-vs-generated classifier and report the dd estimate");

    m.def(
        "bleu_score",
        [](const std::vector<std::string>& candidates,
           const std::vector<std::string>& references, int max_n, bool lowercase) {
            const auto vocab = vocab_over(candidates, references, lowercase);
            return bleu(corpus_from_lines(candidates, vocab, 1 << 20, lowercase),
                        corpus_from_lines(references, vocab, 1 << 20, lowercase),
                        max_n);
        },
        py::arg("candidates"), py::arg("references"), py::arg("max_n") = 5,
        py::arg("lowercase") = false);

    m.def(
        "self_bleu_score",
        [](const std::vector<std::string>& lines, int max_n, size_t eval_cap,
           uint64_t seed, bool lowercase) {
            const auto vocab = vocab_over(lines, {}, lowercase);
            return self_bleu(corpus_from_lines(lines, vocab, 1 << 20, lowercase),
                             max_n, eval_cap, seed);
        },
        py::arg("lines"), py::arg("max_n") = 5, py::arg("eval_cap") = 1000,
        py::arg("seed") = 0, py::arg("lowercase") = false);

    m.def(
        "kn_nll",
        [](const std::vector<std::string>& train_lines,
           const std::vector<std::string>& scored_lines, int order, double discount,
           bool lowercase) {
            const auto vocab = vocab_over(train_lines, scored_lines, lowercase);
            const NgramTable lm(corpus_from_lines(train_lines, vocab, 1 << 20, lowercase),
                                order, discount);
            return kn_score(lm, corpus_from_lines(scored_lines, vocab, 1 << 20,
                                                  lowercase));
        },
        py::arg("train_lines"), py::arg("scored_lines"), py::arg("order") = 5,
        py::arg("discount") = 0.75, py::arg("lowercase") = false,
        "per-token negative log-likelihood under a Kneser-Ney model");

    m.def(
        "fed_score",
        [](const std::vector<std::string>& lines_a,
           const std::vector<std::string>& lines_b, int dim, uint64_t seed,
           bool lowercase) {
            const auto vocab = vocab_over(lines_a, lines_b, lowercase);
            const EmbeddingModel emb{dim, seed};
            return fed(corpus_from_lines(lines_a, vocab, 1 << 20, lowercase),
                       corpus_from_lines(lines_b, vocab, 1 << 20, lowercase), emb);
        },
        py::arg("lines_a"), py::arg("lines_b"), py::arg("dim") = 128,
        py::arg("seed") = 0, py::arg("lowercase") = false);

    m.def("kendall_tau", &kendall_tau, py::arg("order_a"), py::arg("order_b"),
          "tau-a between two permutations of 0..n-1");

    m.def(
        "run_experiment_json",
        [](const std::string& config_json) {
            ordered_json j;
            try {
                j = ordered_json::parse(config_json);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError(std::string("config: ") + e.what());
            }
            return report_to_json(run_experiment(config_from_json(j))).dump(2);
        },
        py::arg("config_json"),
        "run a ranking experiment from a config JSON string; returns report JSON");

    m.def(
        "temperature_sweep_json",
        [](const std::string& config_json, const std::vector<double>& temperatures) {
            ordered_json j;
            try {
                j = ordered_json::parse(config_json);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError(std::string("config: ") + e.what());
            }
            return report_to_json(
                       temperature_sweep(config_from_json(j), temperatures))
                .dump(2);
        },
        py::arg("config_json"), py::arg("temperatures"),
        "re-run a config across a temperature grid; returns report JSON");
}
