// SPDX-License-Identifier: Apache-2.0
#include "ddeval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <thread>

#include "ddeval/baselines.hpp"
#include "ddeval/errors.hpp"
#include "ddeval/rng.hpp"

namespace ddeval {

namespace {

using nlohmann::ordered_json;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string iso_now() {
    const std::time_t t =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int error_kind_of(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 1;
    if (dynamic_cast<const NumericError*>(&e)) return 3;
    return 2;
}

// indices 0..n-1 stably sorted by ascending key; ties keep declaration order
std::vector<size_t> sorted_order(const std::vector<double>& keys) {
    std::vector<size_t> idx(keys.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return keys[a] < keys[b]; });
    return idx;
}

bool has_adjacent_ties(const std::vector<double>& keys,
                       const std::vector<size_t>& order) {
    for (size_t i = 1; i < order.size(); ++i)
        if (keys[order[i - 1]] == keys[order[i]]) return true;
    return false;
}

bool all_equal(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

}  // namespace

double kendall_tau(const std::vector<size_t>& order_a,
                   const std::vector<size_t>& order_b) {
    const size_t n = order_a.size();
    if (n != order_b.size())
        throw UsageError("kendall_tau: orderings have different lengths");
    if (n < 2) throw UsageError("kendall_tau: need at least two items");
    std::vector<size_t> rank_a(n, n), rank_b(n, n);
    for (size_t pos = 0; pos < n; ++pos) {
        const size_t ia = order_a[pos];
        const size_t ib = order_b[pos];
        if (ia >= n || rank_a[ia] != n || ib >= n || rank_b[ib] != n)
            throw UsageError("kendall_tau: inputs must be permutations of 0..n-1");
        rank_a[ia] = pos;
        rank_b[ib] = pos;
    }
    int64_t concordant = 0;
    int64_t discordant = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const bool da = rank_a[i] < rank_a[j];
            const bool db = rank_b[i] < rank_b[j];
            if (da == db)
                ++concordant;
            else
                ++discordant;
        }
    }
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    return static_cast<double>(concordant - discordant) / pairs;
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Dd: return "dd";
        case Metric::Bleu: return "bleu";
        case Metric::SelfBleu: return "selfbleu";
        case Metric::Lm: return "lm";
        case Metric::Rlm: return "rlm";
        case Metric::Fed: return "fed";
    }
    throw UsageError("metric_name: bad metric");
}

Metric metric_from_name(const std::string& name) {
    for (Metric m : kAllMetrics)
        if (metric_name(m) == name) return m;
    throw UsageError("unknown metric: " + name);
}

// self-BLEU counts as discrepancy-like: higher means less diverse output,
// which the benchmark treats as farther from the reference
bool metric_higher_is_closer(Metric m) { return m == Metric::Bleu; }

std::shared_ptr<const MarkovModel> resolve_model(const std::string& ref) {
    if (ref.empty()) throw UsageError("empty model reference");
    const std::string prefix = "builtin:";
    if (ref.rfind(prefix, 0) == 0) return builtin_model(ref.substr(prefix.size()));
    return std::make_shared<MarkovModel>(MarkovModel::load(ref));
}

void FamilyConfig::validate() const {
    if (name.empty()) throw UsageError("family: name is required");
    if (name == "pooled") throw UsageError("family: the name 'pooled' is reserved");
    if (levels.empty()) throw UsageError("family '" + name + "': levels are required");
    if (kind == Kind::LambdaLadder) {
        if (base.empty())
            throw UsageError("family '" + name + "': base model is required");
        bool needs_noise = false;
        for (double l : levels) {
            if (l < 0.0 || l > 1.0)
                throw UsageError("family '" + name + "': lambda levels must be in [0,1]");
            if (l > 0.0) needs_noise = true;
        }
        if (needs_noise && noise.empty())
            throw UsageError("family '" + name + "': noise model is required");
    } else {
        for (double l : levels)
            if (l <= 0.0 || l > 1.0)
                throw UsageError("family '" + name +
                                 "': fraction levels must be in (0,1]");
        if (fit_order < 1)
            throw UsageError("family '" + name + "': fit_order must be >= 1");
        if (!(fit_alpha > 0.0))
            throw UsageError("family '" + name + "': fit_alpha must be positive");
        if (fit_pool == 0)
            throw UsageError("family '" + name + "': fit_pool must be positive");
    }
}

void ExperimentConfig::validate() const {
    if (version != 1) throw UsageError("unsupported config version");
    if (reference.empty()) throw UsageError("config: reference model is required");
    if (families.empty()) throw UsageError("config: at least one family is required");
    std::set<std::string> names;
    for (const auto& f : families) {
        f.validate();
        if (!names.insert(f.name).second)
            throw UsageError("config: duplicate family name '" + f.name + "'");
    }
    if (temperatures.empty()) throw UsageError("config: temperatures are required");
    std::set<double> temps;
    for (double t : temperatures) {
        if (!(t > 0.0)) throw UsageError("config: temperatures must be positive");
        if (!temps.insert(t).second)
            throw UsageError("config: duplicate temperature");
    }
    if (n_reference == 0 || n_generated == 0)
        throw UsageError("config: sample sizes must be positive");
    if (metrics.empty()) throw UsageError("config: at least one metric is required");
    std::set<Metric> seen;
    for (Metric m : metrics)
        if (!seen.insert(m).second)
            throw UsageError("config: duplicate metric " + metric_name(m));
    classifier.validate();
    classifier_split.validate();
    if (kn_order < 1) throw UsageError("config: kn_order must be >= 1");
    if (!(kn_discount > 0.0 && kn_discount < 1.0))
        throw UsageError("config: kn_discount must be in (0,1)");
    if (bleu_max_n < 1) throw UsageError("config: bleu_max_n must be >= 1");
    if (self_bleu_cap == 0) throw UsageError("config: self_bleu_cap must be positive");
    if (embedding_dim < 1) throw UsageError("config: embedding_dim must be >= 1");
    if (seen.count(Metric::Rlm) && n_heldout < 1)
        throw UsageError("config: n_heldout must be positive for rlm");
    if (threads < 1) throw UsageError("config: threads must be >= 1");
    if (oracle_mc_n == 0) throw UsageError("config: oracle_mc_n must be positive");
}

namespace {

// --- config <-> json ------------------------------------------------------

void expect_keys(const ordered_json& j,
                 std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) ok = true;
        if (!ok)
            throw UsageError(std::string("config: unknown key '") + item.key() +
                             "' in " + where);
    }
}

template <class T>
T get_or(const ordered_json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

ordered_json classifier_to_json(const ClassifierConfig& c) {
    ordered_json j;
    j["embedding_dim"] = c.embedding_dim;
    ordered_json layers = ordered_json::array();
    for (const auto& [window, kernels] : c.layers)
        layers.push_back(ordered_json::array({window, kernels}));
    j["layers"] = layers;
    j["dropout"] = c.dropout;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["min_improvement"] = c.min_improvement;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    return j;
}

ClassifierConfig classifier_from_json(const ordered_json& j) {
    expect_keys(j,
                {"embedding_dim", "layers", "dropout", "learning_rate",
                 "batch_size", "max_epochs", "patience", "min_improvement",
                 "adam_beta1", "adam_beta2", "adam_eps"},
                "classifier");
    ClassifierConfig c;
    c.embedding_dim = get_or(j, "embedding_dim", c.embedding_dim);
    if (j.contains("layers")) {
        c.layers.clear();
        for (const auto& l : j.at("layers")) {
            if (!l.is_array() || l.size() != 2)
                throw UsageError("config: classifier layers must be [window, kernels] pairs");
            c.layers.emplace_back(l.at(0).get<int>(), l.at(1).get<int>());
        }
    }
    c.dropout = get_or(j, "dropout", c.dropout);
    c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.max_epochs = get_or(j, "max_epochs", c.max_epochs);
    c.patience = get_or(j, "patience", c.patience);
    c.min_improvement = get_or(j, "min_improvement", c.min_improvement);
    c.adam_beta1 = get_or(j, "adam_beta1", c.adam_beta1);
    c.adam_beta2 = get_or(j, "adam_beta2", c.adam_beta2);
    c.adam_eps = get_or(j, "adam_eps", c.adam_eps);
    return c;
}

ordered_json split_to_json(const SplitSpec& s) {
    ordered_json j;
    j["train"] = s.train_fraction;
    j["dev"] = s.dev_fraction;
    j["test"] = s.test_fraction;
    j["ordering"] =
        s.ordering == SplitSpec::Ordering::Sequential ? "sequential" : "shuffled";
    j["shuffle_seed"] = s.shuffle_seed;
    return j;
}

SplitSpec split_from_json(const ordered_json& j) {
    expect_keys(j, {"train", "dev", "test", "ordering", "shuffle_seed"},
                "classifier_split");
    SplitSpec s;
    s.train_fraction = get_or(j, "train", s.train_fraction);
    s.dev_fraction = get_or(j, "dev", s.dev_fraction);
    s.test_fraction = get_or(j, "test", s.test_fraction);
    if (j.contains("ordering")) {
        const auto o = j.at("ordering").get<std::string>();
        if (o == "sequential")
            s.ordering = SplitSpec::Ordering::Sequential;
        else if (o == "shuffled")
            s.ordering = SplitSpec::Ordering::Shuffled;
        else
            throw UsageError("config: ordering must be 'sequential' or 'shuffled'");
    }
    s.shuffle_seed = get_or(j, "shuffle_seed", s.shuffle_seed);
    return s;
}

ordered_json family_to_json(const FamilyConfig& f) {
    ordered_json j;
    j["kind"] = f.kind == FamilyConfig::Kind::LambdaLadder ? "lambda" : "fraction";
    j["name"] = f.name;
    j["base"] = f.base;
    if (f.kind == FamilyConfig::Kind::LambdaLadder) {
        j["noise"] = f.noise;
    } else {
        j["fit_order"] = f.fit_order;
        j["fit_alpha"] = f.fit_alpha;
        j["fit_pool"] = f.fit_pool;
    }
    j["levels"] = f.levels;
    return j;
}

FamilyConfig family_from_json(const ordered_json& j) {
    expect_keys(j,
                {"kind", "name", "base", "noise", "levels", "fit_order",
                 "fit_alpha", "fit_pool"},
                "family");
    FamilyConfig f;
    const auto kind = get_or<std::string>(j, "kind", "lambda");
    if (kind == "lambda")
        f.kind = FamilyConfig::Kind::LambdaLadder;
    else if (kind == "fraction")
        f.kind = FamilyConfig::Kind::FractionLadder;
    else
        throw UsageError("config: family kind must be 'lambda' or 'fraction'");
    f.name = get_or(j, "name", f.name);
    f.base = get_or(j, "base", f.base);
    f.noise = get_or(j, "noise", f.noise);
    if (f.kind == FamilyConfig::Kind::FractionLadder && !f.noise.empty())
        throw UsageError("config: noise is only valid for lambda ladders");
    if (f.kind == FamilyConfig::Kind::LambdaLadder &&
        (j.contains("fit_order") || j.contains("fit_alpha") || j.contains("fit_pool")))
        throw UsageError("config: fit_* keys are only valid for fraction ladders");
    f.levels = get_or(j, "levels", f.levels);
    f.fit_order = get_or(j, "fit_order", f.fit_order);
    f.fit_alpha = get_or(j, "fit_alpha", f.fit_alpha);
    f.fit_pool = get_or(j, "fit_pool", f.fit_pool);
    return f;
}

}  // namespace

nlohmann::ordered_json config_to_json(const ExperimentConfig& config) {
    ordered_json j;
    j["version"] = config.version;
    j["name"] = config.name;
    j["reference"] = config.reference;
    ordered_json families = ordered_json::array();
    for (const auto& f : config.families) families.push_back(family_to_json(f));
    j["families"] = families;
    j["temperatures"] = config.temperatures;
    j["n_reference"] = config.n_reference;
    j["n_generated"] = config.n_generated;
    j["n_heldout"] = config.n_heldout;
    ordered_json metrics = ordered_json::array();
    for (Metric m : config.metrics) metrics.push_back(metric_name(m));
    j["metrics"] = metrics;
    j["classifier"] = classifier_to_json(config.classifier);
    j["classifier_split"] = split_to_json(config.classifier_split);
    j["kn_order"] = config.kn_order;
    j["kn_discount"] = config.kn_discount;
    j["bleu_max_n"] = config.bleu_max_n;
    j["self_bleu_cap"] = config.self_bleu_cap;
    j["embedding_dim"] = config.embedding_dim;
    j["seed"] = config.seed;
    j["threads"] = config.threads;
    j["oracle_mc_n"] = config.oracle_mc_n;
    return j;
}

ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
    try {
        if (!j.is_object()) throw UsageError("config: top level must be an object");
        expect_keys(j,
                    {"version", "name", "reference", "families", "temperatures",
                     "n_reference", "n_generated", "n_heldout", "metrics",
                     "classifier", "classifier_split", "kn_order", "kn_discount",
                     "bleu_max_n", "self_bleu_cap", "embedding_dim", "seed",
                     "threads", "oracle_mc_n"},
                    "config");
        ExperimentConfig c;
        c.version = get_or(j, "version", c.version);
        c.name = get_or(j, "name", c.name);
        c.reference = get_or(j, "reference", c.reference);
        if (j.contains("families")) {
            c.families.clear();
            for (const auto& f : j.at("families"))
                c.families.push_back(family_from_json(f));
        }
        c.temperatures = get_or(j, "temperatures", c.temperatures);
        c.n_reference = get_or(j, "n_reference", c.n_reference);
        c.n_generated = get_or(j, "n_generated", c.n_generated);
        c.n_heldout = get_or(j, "n_heldout", c.n_heldout);
        if (j.contains("metrics")) {
            c.metrics.clear();
            for (const auto& m : j.at("metrics"))
                c.metrics.push_back(metric_from_name(m.get<std::string>()));
        }
        if (j.contains("classifier"))
            c.classifier = classifier_from_json(j.at("classifier"));
        if (j.contains("classifier_split"))
            c.classifier_split = split_from_json(j.at("classifier_split"));
        c.kn_order = get_or(j, "kn_order", c.kn_order);
        c.kn_discount = get_or(j, "kn_discount", c.kn_discount);
        c.bleu_max_n = get_or(j, "bleu_max_n", c.bleu_max_n);
        c.self_bleu_cap = get_or(j, "self_bleu_cap", c.self_bleu_cap);
        c.embedding_dim = get_or(j, "embedding_dim", c.embedding_dim);
        c.seed = get_or(j, "seed", c.seed);
        c.threads = get_or(j, "threads", c.threads);
        c.oracle_mc_n = get_or(j, "oracle_mc_n", c.oracle_mc_n);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

namespace {

// --- experiment execution --------------------------------------------------

struct SharedState {
    const ExperimentConfig* cfg = nullptr;
    std::shared_ptr<const MarkovModel> reference;
    Corpus real;
    Corpus heldout;
    std::optional<NgramTable> real_lm;
    std::optional<GaussianFit> real_gaussian;
    EmbeddingModel emb;
    bool want(Metric m) const {
        return std::find(cfg->metrics.begin(), cfg->metrics.end(), m) !=
               cfg->metrics.end();
    }
};

struct CellDesc {
    size_t family_idx = 0;
    size_t level_idx = 0;
    GeneratorSpec spec;  // temperature already applied
    double level = 0.0;
    double temperature = 1.0;
    uint64_t seed = 0;
};

uint64_t cell_seed_of(uint64_t master, size_t family_idx, size_t level_idx,
                      double temperature) {
    uint64_t s = mix_seed(master, 0x10 + family_idx);
    s = mix_seed(s, level_idx + 1);
    return mix_seed(s, std::bit_cast<uint64_t>(temperature));
}

GaussianFit gaussian_of(const Corpus& corpus, const EmbeddingModel& emb) {
    std::vector<Eigen::VectorXd> points;
    points.reserve(corpus.sequences.size());
    for (const auto& x : corpus.sequences) points.push_back(emb.embed(x));
    return fit_gaussian(points);
}

CellResult run_cell(const SharedState& shared, const CellDesc& desc,
                    std::string* log_line) {
    const ExperimentConfig& cfg = *shared.cfg;
    CellResult cell;
    cell.generator = desc.spec.name;
    cell.family = cfg.families[desc.family_idx].name;
    cell.level = desc.level;
    cell.temperature = desc.temperature;
    cell.seed = desc.seed;

    SampleStats stats;
    const Corpus gen =
        sample(desc.spec, cfg.n_generated, mix_seed(desc.seed, 1), &stats);
    cell.n_capped = stats.n_capped;

    for (Metric m : cfg.metrics) {
        double value = 0.0;
        switch (m) {
            case Metric::Dd: {
                const TrainResult res =
                    train_classifier(cfg.classifier, shared.real, gen,
                                     mix_seed(desc.seed, 2), cfg.classifier_split);
                cell.has_dd = true;
                cell.dd_detail = res.report;
                value = res.report.dd;
                break;
            }
            case Metric::Bleu:
                value = bleu(gen, shared.real, cfg.bleu_max_n);
                break;
            case Metric::SelfBleu:
                value = self_bleu(gen, cfg.bleu_max_n, cfg.self_bleu_cap,
                                  mix_seed(desc.seed, 3));
                break;
            case Metric::Lm:
                value = kn_score(*shared.real_lm, gen);
                break;
            case Metric::Rlm: {
                const NgramTable gen_lm(gen, cfg.kn_order, cfg.kn_discount);
                value = kn_score(gen_lm, shared.heldout);
                break;
            }
            case Metric::Fed:
                value = frechet_distance(*shared.real_gaussian,
                                         gaussian_of(gen, shared.emb));
                break;
        }
        cell.values.emplace_back(m, value);
    }

    std::string line = "cell " + desc.spec.name + " T=" + fmt_double(desc.temperature) +
                       ": sampled " + std::to_string(cfg.n_generated) + " (" +
                       std::to_string(cell.n_capped) + " capped)";
    if (cell.has_dd)
        line += ", classifier acc=" + fmt_double(cell.dd_detail.accuracy) +
                " after " + std::to_string(cell.dd_detail.epochs_run) + " epochs";
    *log_line = std::move(line);
    return cell;
}

std::string method_name(DdMethod m) {
    return m == DdMethod::Enumerated ? "enumerated" : "monte_carlo";
}

}  // namespace

RankReport run_experiment(const ExperimentConfig& config) {
    config.validate();

    RankReport report;
    report.config = config;
    report.generated_at = iso_now();

    const size_t n_families = config.families.size();
    const size_t n_temps = config.temperatures.size();

    std::vector<CellDesc> descs;
    std::vector<CellResult> slots;
    std::vector<std::string> cell_logs;
    std::vector<char> done;
    // gold oracle dd per group, in declaration order of the members
    std::vector<std::vector<std::vector<double>>> family_gold(n_families);
    std::vector<std::vector<double>> pooled_gold(n_temps);

    try {
        SharedState shared;
        shared.cfg = &config;
        shared.reference = resolve_model(config.reference);

        // generator specs per family, temperature not yet applied
        std::vector<std::vector<GeneratorSpec>> family_specs(n_families);
        for (size_t f = 0; f < n_families; ++f) {
            const FamilyConfig& fam = config.families[f];
            if (fam.kind == FamilyConfig::Kind::LambdaLadder) {
                const auto base = resolve_model(fam.base);
                const auto noise =
                    fam.noise.empty() ? nullptr : resolve_model(fam.noise);
                for (double level : fam.levels) {
                    GeneratorSpec spec;
                    spec.base = base;
                    spec.noise = noise;
                    spec.lambda = level;
                    spec.name = fam.name + "/" + fmt_double(level);
                    family_specs[f].push_back(std::move(spec));
                }
            } else {
                const auto source =
                    fam.base.empty() ? shared.reference : resolve_model(fam.base);
                const Corpus pool =
                    sample(*source, fam.fit_pool, mix_seed(config.seed, 0x100 + f));
                for (double level : fam.levels) {
                    Corpus slice = pool;
                    slice.sequences.resize(static_cast<size_t>(
                        std::llround(level * static_cast<double>(fam.fit_pool))));
                    auto fit = std::make_shared<MarkovModel>(fit_markov(
                        slice, fam.fit_order, fam.fit_alpha, source->max_len()));
                    GeneratorSpec spec;
                    spec.base = std::move(fit);
                    spec.training_fraction = level;
                    spec.name = fam.name + "/" + fmt_double(level);
                    report.logs.push_back("fit " + spec.name + " on " +
                                          std::to_string(slice.sequences.size()) +
                                          " sentences");
                    family_specs[f].push_back(std::move(spec));
                }
            }
            for (const auto& spec : family_specs[f]) spec.validate();
        }

        shared.real = sample(*shared.reference, config.n_reference,
                             mix_seed(config.seed, 1));
        shared.emb = EmbeddingModel{config.embedding_dim, mix_seed(config.seed, 3)};
        if (shared.want(Metric::Rlm))
            shared.heldout = sample(*shared.reference, config.n_heldout,
                                    mix_seed(config.seed, 2));
        if (shared.want(Metric::Lm))
            shared.real_lm.emplace(shared.real, config.kn_order, config.kn_discount);
        if (shared.want(Metric::Fed))
            shared.real_gaussian = gaussian_of(shared.real, shared.emb);

        // gold orders, per family and pooled, at each temperature
        const uint64_t gold_seed = mix_seed(config.seed, 4);
        for (size_t t = 0; t < n_temps; ++t) {
            const double temp = config.temperatures[t];
            std::vector<GeneratorSpec> pooled_specs;
            for (size_t f = 0; f < n_families; ++f) {
                std::vector<GeneratorSpec> specs;
                for (const auto& s : family_specs[f])
                    specs.push_back(s.with_temperature(temp));
                pooled_specs.insert(pooled_specs.end(), specs.begin(), specs.end());
                const GoldRank gr = gold_rank(specs, *shared.reference,
                                              config.oracle_mc_n, gold_seed);
                GoldEntry entry;
                entry.family = config.families[f].name;
                entry.temperature = temp;
                entry.method = method_name(gr.scores[0].method);
                std::vector<double> decl(specs.size());
                for (size_t i = 0; i < specs.size(); ++i)
                    decl[i] = gr.scores[i].value;
                for (size_t rank : gr.order) {
                    entry.order.push_back(specs[rank].name);
                    entry.scores.push_back(gr.scores[rank].value);
                }
                family_gold[f].push_back(decl);
                report.gold.push_back(std::move(entry));
            }
            if (n_families > 1) {
                const GoldRank gr = gold_rank(pooled_specs, *shared.reference,
                                              config.oracle_mc_n, gold_seed);
                GoldEntry entry;
                entry.family = "pooled";
                entry.temperature = temp;
                entry.method = method_name(gr.scores[0].method);
                pooled_gold[t].resize(pooled_specs.size());
                for (size_t i = 0; i < pooled_specs.size(); ++i)
                    pooled_gold[t][i] = gr.scores[i].value;
                for (size_t rank : gr.order) {
                    entry.order.push_back(pooled_specs[rank].name);
                    entry.scores.push_back(gr.scores[rank].value);
                }
                report.gold.push_back(std::move(entry));
            }
        }
        for (const auto& entry : report.gold)
            report.logs.push_back("gold " + entry.family + " T=" +
                                  fmt_double(entry.temperature) + " via " +
                                  entry.method);

        // cells in family-major, level, temperature order
        for (size_t f = 0; f < n_families; ++f)
            for (size_t l = 0; l < family_specs[f].size(); ++l)
                for (size_t t = 0; t < n_temps; ++t) {
                    CellDesc desc;
                    desc.family_idx = f;
                    desc.level_idx = l;
                    desc.temperature = config.temperatures[t];
                    desc.level = config.families[f].levels[l];
                    desc.spec = family_specs[f][l].with_temperature(desc.temperature);
                    desc.seed =
                        cell_seed_of(config.seed, f, l, desc.temperature);
                    descs.push_back(std::move(desc));
                }

        slots.resize(descs.size());
        cell_logs.resize(descs.size());
        done.assign(descs.size(), 0);

        std::atomic<size_t> next{0};
        std::atomic<bool> stop{false};
        std::mutex err_mu;
        std::exception_ptr first_error;
        const auto worker = [&] {
            while (!stop.load()) {
                const size_t i = next.fetch_add(1);
                if (i >= descs.size()) break;
                try {
                    slots[i] = run_cell(shared, descs[i], &cell_logs[i]);
                    done[i] = 1;
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    stop.store(true);
                }
            }
        };
        const size_t n_workers = std::min<size_t>(
            static_cast<size_t>(config.threads), std::max<size_t>(descs.size(), 1));
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> threads;
            for (size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
            for (auto& th : threads) th.join();
        }
        if (first_error) std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
        report.partial = true;
        report.error = e.what();
        report.error_kind = error_kind_of(e);
    }

    for (size_t i = 0; i < slots.size(); ++i) {
        if (!done[i]) continue;
        report.cells.push_back(slots[i]);
        report.logs.push_back(cell_logs[i]);
    }
    if (report.partial) return report;

    // tau of each metric against gold, per family and pooled, per temperature
    const auto cell_at = [&](size_t f, size_t l, size_t t) -> const CellResult& {
        const size_t levels_before = [&] {
            size_t n = 0;
            for (size_t g = 0; g < f; ++g) n += config.families[g].levels.size();
            return n;
        }();
        return report.cells[(levels_before + l) * n_temps + t];
    };
    const auto add_taus = [&](const std::string& group_name, size_t t,
                              const std::vector<std::pair<size_t, size_t>>& members,
                              const std::vector<double>& gold_scores) {
        if (members.size() < 2) return;
        const auto gold_order = sorted_order(gold_scores);
        const bool gold_ties = has_adjacent_ties(gold_scores, gold_order);
        const bool degenerate = all_equal(gold_scores);
        for (Metric m : config.metrics) {
            std::vector<double> keys(members.size());
            for (size_t i = 0; i < members.size(); ++i) {
                const CellResult& cell =
                    cell_at(members[i].first, members[i].second, t);
                for (const auto& [metric, value] : cell.values)
                    if (metric == m)
                        keys[i] = metric_higher_is_closer(m) ? -value : value;
            }
            const auto pred_order = sorted_order(keys);
            TauEntry entry;
            entry.family = group_name;
            entry.temperature = config.temperatures[t];
            entry.metric = m;
            entry.metric_ties = has_adjacent_ties(keys, pred_order);
            entry.gold_ties = gold_ties;
            entry.degenerate = degenerate;
            entry.tau = degenerate ? std::numeric_limits<double>::quiet_NaN()
                                   : kendall_tau(gold_order, pred_order);
            report.taus.push_back(entry);
        }
    };
    for (size_t t = 0; t < n_temps; ++t) {
        std::vector<std::pair<size_t, size_t>> pooled_members;
        for (size_t f = 0; f < n_families; ++f) {
            std::vector<std::pair<size_t, size_t>> members;
            for (size_t l = 0; l < config.families[f].levels.size(); ++l) {
                members.emplace_back(f, l);
                pooled_members.emplace_back(f, l);
            }
            add_taus(config.families[f].name, t, members, family_gold[f][t]);
        }
        if (n_families > 1)
            add_taus("pooled", t, pooled_members, pooled_gold[t]);
    }
    return report;
}

RankReport temperature_sweep(ExperimentConfig config,
                             const std::vector<double>& temperatures) {
    config.temperatures = temperatures;
    return run_experiment(config);
}

nlohmann::ordered_json report_to_json(const RankReport& report) {
    ordered_json j;
    j["version"] = 1;
    j["generated_at"] = report.generated_at;
    j["partial"] = report.partial;
    j["error"] = report.error;
    j["error_kind"] = report.error_kind;
    j["config_echo"] = config_to_json(report.config);

    ordered_json gold = ordered_json::array();
    for (const auto& entry : report.gold) {
        ordered_json g;
        g["family"] = entry.family;
        g["temperature"] = entry.temperature;
        g["method"] = entry.method;
        g["order"] = entry.order;
        g["scores"] = entry.scores;
        gold.push_back(std::move(g));
    }
    j["gold_order"] = gold;

    ordered_json cells = ordered_json::array();
    for (const auto& cell : report.cells) {
        ordered_json c;
        c["generator"] = cell.generator;
        c["family"] = cell.family;
        c["level"] = cell.level;
        c["temperature"] = cell.temperature;
        c["seed"] = cell.seed;
        c["n_capped"] = cell.n_capped;
        ordered_json metrics;
        for (const auto& [m, value] : cell.values) metrics[metric_name(m)] = value;
        c["metrics"] = metrics;
        if (cell.has_dd) {
            const DdReport& d = cell.dd_detail;
            ordered_json detail;
            detail["accuracy"] = d.accuracy;
            detail["dev_accuracy"] = d.dev_accuracy;
            detail["acc_real"] = d.acc_real;
            detail["acc_generated"] = d.acc_generated;
            detail["epochs_run"] = d.epochs_run;
            detail["best_epoch"] = d.best_epoch;
            detail["n_train"] = d.n_train;
            detail["n_dev"] = d.n_dev;
            detail["n_test"] = d.n_test;
            c["dd_detail"] = std::move(detail);
        }
        cells.push_back(std::move(c));
    }
    j["per_cell_metrics"] = cells;

    ordered_json taus = ordered_json::array();
    for (const auto& entry : report.taus) {
        ordered_json t;
        t["family"] = entry.family;
        t["temperature"] = entry.temperature;
        t["metric"] = metric_name(entry.metric);
        if (std::isnan(entry.tau))
            t["tau"] = nullptr;
        else
            t["tau"] = entry.tau;
        t["metric_ties"] = entry.metric_ties;
        t["gold_ties"] = entry.gold_ties;
        t["degenerate"] = entry.degenerate;
        taus.push_back(std::move(t));
    }
    j["tau_table"] = taus;

    j["logs"] = report.logs;
    return j;
}

}  // namespace ddeval
