// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddeval/baselines.hpp"
#include "ddeval/classifier.hpp"
#include "ddeval/corpus.hpp"
#include "ddeval/errors.hpp"
#include "ddeval/harness.hpp"
#include "ddeval/markov.hpp"
#include "ddeval/oracle.hpp"
#include "ddeval/rng.hpp"

namespace {

using nlohmann::ordered_json;
using namespace ddeval;

bool verbose() {
    static const bool on = [] {
        const char* v = std::getenv("DDEVAL_LOG");
        return v != nullptr && *v != '\0';
    }();
    return on;
}

void vlog(const std::string& msg) {
    if (verbose()) std::fprintf(stderr, "[ddeval] %s\n", msg.c_str());
}

// every command's stdout is one JSON document holding the resolved config
// and the results; --out redirects the full document to a file, leaving a
// short pointer document on stdout
void emit(const ordered_json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::printf("%s\n", doc.dump(2).c_str());
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write output file: " + out_path);
    out << doc.dump(2) << "\n";
    if (!out) throw DataError("failed writing output file: " + out_path);
    ordered_json pointer;
    pointer["command"] = doc.contains("command") ? doc.at("command") : ordered_json("rank");
    pointer["out"] = out_path;
    if (doc.contains("partial")) pointer["partial"] = doc.at("partial");
    std::printf("%s\n", pointer.dump(2).c_str());
}

std::vector<std::string> split_csv(const std::string& csv) {
    std::vector<std::string> parts;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) parts.push_back(item);
    return parts;
}

ordered_json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read file: " + path);
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path + ": " + e.what());
    }
}

std::shared_ptr<const Vocab> shared_vocab(const std::vector<std::string>& a,
                                          const std::vector<std::string>& b,
                                          int min_count, bool lowercase) {
    std::vector<std::string> all = a;
    all.insert(all.end(), b.begin(), b.end());
    return std::make_shared<Vocab>(build_vocab_from_lines(all, min_count, lowercase));
}

ordered_json dd_report_json(const DdReport& r) {
    ordered_json j;
    j["accuracy"] = r.accuracy;
    j["error"] = r.error;
    j["dd"] = r.dd;
    j["dev_accuracy"] = r.dev_accuracy;
    j["acc_real"] = r.acc_real;
    j["acc_generated"] = r.acc_generated;
    j["epochs_run"] = r.epochs_run;
    j["best_epoch"] = r.best_epoch;
    j["n_train"] = r.n_train;
    j["n_dev"] = r.n_dev;
    j["n_test"] = r.n_test;
    j["seed"] = r.seed;
    return j;
}

// --- subcommand options ------------------------------------------------

struct FitOpts {
    std::string corpus;
    std::string out;
    int order = 2;
    double alpha = 1e-3;
    int32_t max_len = 52;
    int min_count = 1;
    bool lowercase = false;
};

struct SampleOpts {
    std::string model;
    std::string out;
    size_t n = 1000;
    uint64_t seed = 0;
    double temperature = 1.0;
    std::string noise;
    double lambda = 0.0;
};

struct OracleOpts {
    std::string p;
    std::string q;
    uint64_t budget = 10'000'000;
    size_t mc_n = 100'000;
    uint64_t seed = 0;
    std::string out;
};

struct ClfOpts {
    std::string real;
    std::string generated;
    std::string config;
    std::string out;
    std::string save_model;
    uint64_t seed = 0;
    int32_t max_len = 52;
    int min_count = 1;
    bool lowercase = false;
    ClassifierConfig clf;
    SplitSpec split;
    CLI::Option* o_embedding = nullptr;
    CLI::Option* o_dropout = nullptr;
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_batch = nullptr;
    CLI::Option* o_epochs = nullptr;
    CLI::Option* o_patience = nullptr;
    int embedding_dim = 32;
    double dropout = 0.5;
    double learning_rate = 1e-4;
    int batch_size = 512;
    int max_epochs = 100;
    int patience = 10;
};

struct EvalOpts {
    ClfOpts clf;  // reuses corpus and classifier plumbing
    std::string metrics = "dd,bleu,selfbleu,lm,rlm,fed";
    int kn_order = 5;
    double kn_discount = 0.75;
    int bleu_max_n = 5;
    size_t self_bleu_cap = 1000;
    int embedding_dim = 128;
};

struct RankOpts {
    std::string config;
    std::string out;
    std::string temperatures;  // sweep only
    uint64_t seed = 0;
    int threads = 1;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_threads = nullptr;
};

// applies config file then explicit flags, flags winning
void resolve_classifier(ClfOpts& o) {
    if (!o.config.empty()) {
        const ordered_json j = parse_json_file(o.config);
        ExperimentConfig probe;  // reuse the strict sub-parsers
        for (const auto& item : j.items()) {
            if (item.key() == "classifier" || item.key() == "split") continue;
            throw UsageError("config: unknown key '" + item.key() +
                             "' in classifier config");
        }
        ordered_json wrapped;
        wrapped["reference"] = "builtin:desk_base";
        wrapped["families"] = ordered_json::array(
            {ordered_json{{"kind", "lambda"},
                          {"name", "f"},
                          {"base", "builtin:desk_base"},
                          {"levels", ordered_json::array({0.0})}}});
        if (j.contains("classifier")) wrapped["classifier"] = j.at("classifier");
        if (j.contains("split")) wrapped["classifier_split"] = j.at("split");
        const ExperimentConfig parsed = config_from_json(wrapped);
        o.clf = parsed.classifier;
        o.split = parsed.classifier_split;
    }
    if (o.o_embedding->count()) o.clf.embedding_dim = o.embedding_dim;
    if (o.o_dropout->count()) o.clf.dropout = o.dropout;
    if (o.o_lr->count()) o.clf.learning_rate = o.learning_rate;
    if (o.o_batch->count()) o.clf.batch_size = o.batch_size;
    if (o.o_epochs->count()) o.clf.max_epochs = o.max_epochs;
    if (o.o_patience->count()) o.clf.patience = o.patience;
    o.clf.validate();
    o.split.validate();
}

void add_corpus_flags(CLI::App* cmd, ClfOpts& o) {
    cmd->add_option("--real", o.real, "real corpus file, one sentence per line")
        ->required();
    cmd->add_option("--generated", o.generated, "generated corpus file")->required();
    cmd->add_option("--max-len", o.max_len, "token cap per sentence")
        ->capture_default_str();
    cmd->add_option("--min-count", o.min_count, "vocabulary frequency floor")
        ->capture_default_str();
    cmd->add_flag("--lowercase", o.lowercase, "lowercase while tokenizing");
    cmd->add_option("--seed", o.seed, "master seed")->capture_default_str();
    cmd->add_option("--config", o.config,
                    "JSON file with classifier and split settings");
    cmd->add_option("--out", o.out, "write the JSON report here");
    o.o_embedding = cmd->add_option("--embedding-dim", o.embedding_dim,
                                    "embedding width (overrides config)");
    o.o_dropout = cmd->add_option("--dropout", o.dropout, "dropout rate");
    o.o_lr = cmd->add_option("--learning-rate", o.learning_rate, "Adam step size");
    o.o_batch = cmd->add_option("--batch-size", o.batch_size, "minibatch size");
    o.o_epochs = cmd->add_option("--max-epochs", o.max_epochs, "epoch cap");
    o.o_patience = cmd->add_option("--patience", o.patience,
                                   "epochs without dev improvement before stopping");
}

ordered_json corpus_flags_echo(const ClfOpts& o) {
    ordered_json j;
    j["real"] = o.real;
    j["generated"] = o.generated;
    j["max_len"] = o.max_len;
    j["min_count"] = o.min_count;
    j["lowercase"] = o.lowercase;
    j["seed"] = o.seed;
    return j;
}

// --- subcommands ---------------------------------------------------------

int cmd_fit(const FitOpts& o) {
    const auto lines = read_lines(o.corpus);
    auto vocab = std::make_shared<Vocab>(
        build_vocab_from_lines(lines, o.min_count, o.lowercase));
    EncodeOptions opts;
    opts.max_len = o.max_len;
    opts.lowercase = o.lowercase;
    EncodeStats stats;
    const Corpus corpus = encode_lines(lines, vocab, opts, &stats);
    const MarkovModel model = fit_markov(corpus, o.order, o.alpha, o.max_len);
    model.save(o.out);
    vlog("fit " + std::to_string(stats.kept) + " sentences -> " + o.out);

    ordered_json doc;
    doc["command"] = "fit";
    doc["corpus"] = o.corpus;
    doc["out"] = o.out;
    doc["order"] = o.order;
    doc["alpha"] = o.alpha;
    doc["max_len"] = o.max_len;
    doc["min_count"] = o.min_count;
    doc["lowercase"] = o.lowercase;
    doc["vocab_size"] = vocab->size();
    doc["sentences"] = stats.kept;
    doc["skipped_empty"] = stats.skipped_empty;
    doc["skipped_overlong"] = stats.skipped_overlong;
    std::printf("%s\n", doc.dump(2).c_str());
    return 0;
}

int cmd_sample(const SampleOpts& o) {
    GeneratorSpec spec;
    spec.base = resolve_model(o.model);
    spec.temperature = o.temperature;
    spec.lambda = o.lambda;
    if (!o.noise.empty()) spec.noise = resolve_model(o.noise);
    spec.name = "sample";
    spec.validate();
    SampleStats stats;
    const Corpus corpus = sample(spec, o.n, o.seed, &stats);
    save_corpus(corpus, o.out);
    vlog("sampled " + std::to_string(o.n) + " sentences -> " + o.out);

    ordered_json doc;
    doc["command"] = "sample";
    doc["model"] = o.model;
    doc["out"] = o.out;
    doc["n"] = o.n;
    doc["seed"] = o.seed;
    doc["temperature"] = o.temperature;
    doc["noise"] = o.noise;
    doc["lambda"] = o.lambda;
    doc["n_capped"] = stats.n_capped;
    std::printf("%s\n", doc.dump(2).c_str());
    return 0;
}

int cmd_oracle(const OracleOpts& o) {
    const auto p = resolve_model(o.p);
    const auto q = resolve_model(o.q);
    const SequenceSpace space = SequenceSpace::of(*p, o.budget);
    const DdScore score = space.enumerable()
                              ? tv_exact(*p, *q, space)
                              : tv_mc(*p, *q, o.mc_n, o.seed);

    ordered_json doc;
    doc["command"] = "oracle";
    doc["p"] = o.p;
    doc["q"] = o.q;
    doc["budget"] = o.budget;
    doc["mc_n"] = o.mc_n;
    doc["seed"] = o.seed;
    doc["dd"] = score.value;
    doc["method"] = score.method == DdMethod::Enumerated ? "enumerated" : "monte_carlo";
    doc["n"] = score.n;
    if (score.method == DdMethod::MonteCarlo) doc["std_err"] = score.std_err;
    emit(doc, o.out);
    return 0;
}

int cmd_train_clf(ClfOpts& o) {
    resolve_classifier(o);
    const auto real_lines = read_lines(o.real);
    const auto gen_lines = read_lines(o.generated);
    const auto vocab = shared_vocab(real_lines, gen_lines, o.min_count, o.lowercase);
    EncodeOptions opts;
    opts.max_len = o.max_len;
    opts.lowercase = o.lowercase;
    Corpus real = encode_lines(real_lines, vocab, opts);
    real.label = CorpusLabel::Real;
    Corpus generated = encode_lines(gen_lines, vocab, opts);
    generated.label = CorpusLabel::Generated;

    const TrainResult res =
        train_classifier(o.clf, real, generated, o.seed, o.split);
    if (!o.save_model.empty()) res.model.save(o.save_model);
    vlog("trained: test accuracy " + std::to_string(res.report.accuracy));

    ordered_json doc;
    doc["command"] = "train-clf";
    doc["flags"] = corpus_flags_echo(o);
    {
        ExperimentConfig echo;
        echo.classifier = o.clf;
        echo.classifier_split = o.split;
        const ordered_json full = config_to_json(echo);
        doc["classifier"] = full.at("classifier");
        doc["split"] = full.at("classifier_split");
    }
    if (!o.save_model.empty()) doc["model_out"] = o.save_model;
    doc["report"] = dd_report_json(res.report);
    ordered_json epochs = ordered_json::array();
    for (const auto& e : res.log)
        epochs.push_back(ordered_json{{"epoch", e.epoch},
                                      {"train_loss", e.train_loss},
                                      {"dev_accuracy", e.dev_accuracy}});
    doc["epoch_log"] = epochs;
    emit(doc, o.out);
    return 0;
}

int cmd_eval(EvalOpts& eo) {
    ClfOpts& o = eo.clf;
    const auto real_lines = read_lines(o.real);
    const auto gen_lines = read_lines(o.generated);
    const auto vocab = shared_vocab(real_lines, gen_lines, o.min_count, o.lowercase);
    EncodeOptions opts;
    opts.max_len = o.max_len;
    opts.lowercase = o.lowercase;
    Corpus real = encode_lines(real_lines, vocab, opts);
    real.label = CorpusLabel::Real;
    Corpus generated = encode_lines(gen_lines, vocab, opts);
    generated.label = CorpusLabel::Generated;

    std::vector<Metric> metrics;
    for (const auto& name : split_csv(eo.metrics))
        metrics.push_back(metric_from_name(name));
    if (metrics.empty()) throw UsageError("eval: no metrics selected");

    ordered_json values;
    ordered_json detail;
    for (Metric m : metrics) {
        switch (m) {
            case Metric::Dd: {
                resolve_classifier(o);
                const TrainResult res =
                    train_classifier(o.clf, real, generated, o.seed, o.split);
                values["dd"] = res.report.dd;
                detail["dd"] = dd_report_json(res.report);
                break;
            }
            case Metric::Bleu:
                values["bleu"] = bleu(generated, real, eo.bleu_max_n);
                break;
            case Metric::SelfBleu:
                values["selfbleu"] = self_bleu(generated, eo.bleu_max_n,
                                               eo.self_bleu_cap, mix_seed(o.seed, 3));
                break;
            case Metric::Lm: {
                const NgramTable lm(real, eo.kn_order, eo.kn_discount);
                values["lm"] = kn_score(lm, generated);
                break;
            }
            case Metric::Rlm: {
                const NgramTable lm(generated, eo.kn_order, eo.kn_discount);
                values["rlm"] = kn_score(lm, real);
                break;
            }
            case Metric::Fed: {
                const EmbeddingModel emb{eo.embedding_dim, mix_seed(o.seed, 4)};
                values["fed"] = fed(real, generated, emb);
                break;
            }
        }
        vlog("scored " + metric_name(m));
    }

    ordered_json doc;
    doc["command"] = "eval";
    doc["flags"] = corpus_flags_echo(o);
    doc["metrics_requested"] = split_csv(eo.metrics);
    doc["kn_order"] = eo.kn_order;
    doc["kn_discount"] = eo.kn_discount;
    doc["bleu_max_n"] = eo.bleu_max_n;
    doc["self_bleu_cap"] = eo.self_bleu_cap;
    doc["embedding_dim"] = eo.embedding_dim;
    doc["metrics"] = values;
    if (!detail.empty()) doc["detail"] = detail;
    emit(doc, o.out);
    return 0;
}

int cmd_rank(const RankOpts& o, bool is_sweep) {
    ExperimentConfig cfg = config_from_json(parse_json_file(o.config));
    if (o.o_seed->count()) cfg.seed = o.seed;
    if (o.o_threads->count()) cfg.threads = o.threads;

    RankReport report;
    if (is_sweep) {
        std::vector<double> temps;
        for (const auto& t : split_csv(o.temperatures.empty()
                                           ? "0.8,0.9,1.0,1.1,1.2"
                                           : o.temperatures))
            temps.push_back(std::stod(t));
        report = temperature_sweep(cfg, temps);
    } else {
        report = run_experiment(cfg);
    }
    for (const auto& line : report.logs) vlog(line);

    ordered_json doc = report_to_json(report);
    doc["command"] = is_sweep ? "sweep" : "rank";
    emit(doc, o.out);
    if (report.partial) {
        std::fprintf(stderr, "error: %s\n", report.error.c_str());
        return report.error_kind == 0 ? 2 : report.error_kind;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributional discrepancy evaluation toolkit"};
    app.require_subcommand(1);

    FitOpts fit;
    CLI::App* c_fit = app.add_subcommand("fit", "fit a Markov model to a corpus");
    c_fit->add_option("--corpus", fit.corpus, "training corpus file")->required();
    c_fit->add_option("--out", fit.out, "model file to write")->required();
    c_fit->add_option("--order", fit.order, "Markov order")->capture_default_str();
    c_fit->add_option("--alpha", fit.alpha, "additive smoothing")
        ->capture_default_str();
    c_fit->add_option("--max-len", fit.max_len, "token cap per sentence")
        ->capture_default_str();
    c_fit->add_option("--min-count", fit.min_count, "vocabulary frequency floor")
        ->capture_default_str();
    c_fit->add_flag("--lowercase", fit.lowercase, "lowercase while tokenizing");

    SampleOpts smp;
    CLI::App* c_smp = app.add_subcommand("sample", "sample sentences from a model");
    c_smp->add_option("--model", smp.model, "model file or builtin:NAME")->required();
    c_smp->add_option("--out", smp.out, "corpus file to write")->required();
    c_smp->add_option("--n", smp.n, "sentences to draw")->capture_default_str();
    c_smp->add_option("--seed", smp.seed, "sampling seed")->capture_default_str();
    c_smp->add_option("--temperature", smp.temperature, "softmax temperature")
        ->capture_default_str();
    c_smp->add_option("--noise", smp.noise, "noise model for interpolation");
    c_smp->add_option("--lambda", smp.lambda, "noise mixing weight")
        ->capture_default_str();

    OracleOpts orc;
    CLI::App* c_orc =
        app.add_subcommand("oracle", "exact or Monte-Carlo dd between two models");
    c_orc->add_option("--p", orc.p, "first model (reference)")->required();
    c_orc->add_option("--q", orc.q, "second model")->required();
    c_orc->add_option("--budget", orc.budget, "enumeration budget")
        ->capture_default_str();
    c_orc->add_option("--mc-n", orc.mc_n, "Monte-Carlo draws per side")
        ->capture_default_str();
    c_orc->add_option("--seed", orc.seed, "Monte-Carlo seed")->capture_default_str();
    c_orc->add_option("--out", orc.out, "write the JSON result here");

    ClfOpts clf;
    CLI::App* c_clf = app.add_subcommand(
        "train-clf", "train the real-vs-generated classifier and report dd");
    add_corpus_flags(c_clf, clf);
    c_clf->add_option("--save-model", clf.save_model, "checkpoint file to write");

    EvalOpts ev;
    CLI::App* c_ev =
        app.add_subcommand("eval", "score metrics for a (real, generated) pair");
    add_corpus_flags(c_ev, ev.clf);
    c_ev->add_option("--metrics", ev.metrics, "comma-separated metric list")
        ->capture_default_str();
    c_ev->add_option("--kn-order", ev.kn_order, "Kneser-Ney order")
        ->capture_default_str();
    c_ev->add_option("--kn-discount", ev.kn_discount, "Kneser-Ney discount")
        ->capture_default_str();
    c_ev->add_option("--bleu-max-n", ev.bleu_max_n, "largest BLEU n-gram")
        ->capture_default_str();
    c_ev->add_option("--self-bleu-cap", ev.self_bleu_cap,
                     "sentences scored for self-BLEU")
        ->capture_default_str();
    c_ev->add_option("--embedding-dim-fed", ev.embedding_dim,
                     "embedding width for fed")
        ->capture_default_str();

    RankOpts rank;
    CLI::App* c_rank =
        app.add_subcommand("rank", "run a full experiment config and report taus");
    c_rank->add_option("--config", rank.config, "experiment config JSON")->required();
    c_rank->add_option("--out", rank.out, "write the report here");
    rank.o_seed = c_rank->add_option("--seed", rank.seed, "override the config seed");
    rank.o_threads =
        c_rank->add_option("--threads", rank.threads, "cells scored in parallel");

    RankOpts sweep;
    CLI::App* c_sweep = app.add_subcommand(
        "sweep", "re-run a config across a temperature grid");
    c_sweep->add_option("--config", sweep.config, "experiment config JSON")
        ->required();
    c_sweep->add_option("--out", sweep.out, "write the report here");
    c_sweep->add_option("--temperatures", sweep.temperatures,
                        "comma-separated grid (default 0.8,0.9,1.0,1.1,1.2)");
    sweep.o_seed =
        c_sweep->add_option("--seed", sweep.seed, "override the config seed");
    sweep.o_threads =
        c_sweep->add_option("--threads", sweep.threads, "cells scored in parallel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (c_fit->parsed()) return cmd_fit(fit);
        if (c_smp->parsed()) return cmd_sample(smp);
        if (c_orc->parsed()) return cmd_oracle(orc);
        if (c_clf->parsed()) return cmd_train_clf(clf);
        if (c_ev->parsed()) return cmd_eval(ev);
        if (c_rank->parsed()) return cmd_rank(rank, false);
        if (c_sweep->parsed()) return cmd_rank(sweep, true);
        throw UsageError("no subcommand selected");
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
