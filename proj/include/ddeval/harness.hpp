// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddeval/classifier.hpp"
#include "ddeval/corpus.hpp"
#include "ddeval/markov.hpp"
#include "ddeval/oracle.hpp"

namespace ddeval {

// Kendall's tau-a between two orderings of the same n >= 2 items. Both
// arguments are permutations of {0..n-1} listing item indices best-first.
// (C - D) / (n(n-1)/2); ties must be resolved by the caller beforehand.
double kendall_tau(const std::vector<size_t>& order_a,
                   const std::vector<size_t>& order_b);

enum class Metric { Dd, Bleu, SelfBleu, Lm, Rlm, Fed };

inline constexpr Metric kAllMetrics[] = {Metric::Dd, Metric::Bleu,
                                         Metric::SelfBleu, Metric::Lm,
                                         Metric::Rlm, Metric::Fed};

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& name);

// true when a larger value means the generator is closer to the reference
// (BLEU); every other metric grows with discrepancy
bool metric_higher_is_closer(Metric m);

// "builtin:NAME" resolves through builtin_model; anything else is loaded
// as a saved model file
std::shared_ptr<const MarkovModel> resolve_model(const std::string& ref);

// One generator ladder. A lambda ladder interpolates base with noise at
// each level; a fraction ladder fits a Markov model of fit_order on the
// first level * fit_pool sentences sampled from base ("" = the reference).
struct FamilyConfig {
    enum class Kind { LambdaLadder, FractionLadder };
    Kind kind = Kind::LambdaLadder;
    std::string name;
    std::string base;
    std::string noise;           // lambda ladders only
    std::vector<double> levels;
    int fit_order = 3;           // fraction ladders only
    double fit_alpha = 1e-3;
    size_t fit_pool = 300;

    void validate() const;
};

struct ExperimentConfig {
    int version = 1;
    std::string name = "experiment";
    std::string reference;
    std::vector<FamilyConfig> families;
    std::vector<double> temperatures = {1.0};
    size_t n_reference = 20000;
    size_t n_generated = 20000;
    size_t n_heldout = 2000;  // real sample scored under each generator's LM
    std::vector<Metric> metrics{kAllMetrics, std::end(kAllMetrics)};
    ClassifierConfig classifier;
    SplitSpec classifier_split;
    int kn_order = 5;
    double kn_discount = 0.75;
    int bleu_max_n = 5;
    size_t self_bleu_cap = 1000;
    int embedding_dim = 128;
    uint64_t seed = 0;
    int threads = 1;
    size_t oracle_mc_n = 100'000;  // gold fallback when not enumerable

    void validate() const;
};

// Strict parse: unknown keys and version mismatches are UsageErrors.
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& config);

struct CellResult {
    std::string generator;  // "<family>/<level>"
    std::string family;
    double level = 0.0;
    double temperature = 1.0;
    uint64_t seed = 0;
    size_t n_capped = 0;
    std::vector<std::pair<Metric, double>> values;  // config metric order
    bool has_dd = false;
    DdReport dd_detail;  // valid iff has_dd
};

struct GoldEntry {
    std::string family;  // family name, or "pooled" across all families
    double temperature = 1.0;
    std::string method;                // "enumerated" | "monte_carlo"
    std::vector<std::string> order;    // generator names, closest first
    std::vector<double> scores;        // oracle dd, aligned with order
};

struct TauEntry {
    std::string family;  // family name or "pooled"
    double temperature = 1.0;
    Metric metric = Metric::Dd;
    double tau = 0.0;          // NaN when degenerate
    bool metric_ties = false;  // broken by declaration order
    bool gold_ties = false;
    bool degenerate = false;   // every gold score equal: tau undefined
};

struct RankReport {
    ExperimentConfig config;
    std::vector<CellResult> cells;
    std::vector<GoldEntry> gold;
    std::vector<TauEntry> taus;
    std::vector<std::string> logs;
    std::string generated_at;  // the one field that varies between runs
    bool partial = false;      // a module error aborted the run
    std::string error;
    int error_kind = 0;  // CLI exit code: 1 usage, 2 data, 3 numeric
};

// Scores every generator x temperature cell with the configured metrics,
// computes the oracle gold order per family and pooled, and Kendall's tau
// of each metric against gold. Config errors throw; errors after that
// return a partial report. Cell seeds depend only on (family, level,
// temperature) and the master seed, so results are independent of cell
// order and thread count.
RankReport run_experiment(const ExperimentConfig& config);

// run_experiment with the temperature grid replaced; the T = 1.0 cells
// match a plain single-temperature run bit for bit
RankReport temperature_sweep(ExperimentConfig config,
                             const std::vector<double>& temperatures);

nlohmann::ordered_json report_to_json(const RankReport& report);

}  // namespace ddeval
