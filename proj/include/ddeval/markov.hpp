// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ddeval/corpus.hpp"
#include "ddeval/rng.hpp"

namespace ddeval {

// One conditional distribution over {0..V-1} union {EOS}. Ids listed in
// `probs` (sorted) carry their own probability; every id not listed shares
// `rest_prob`. This sparse-plus-floor form is closed under the temperature
// and interpolation transforms, so fitted models on large vocabularies stay
// exact and compact.
struct SparseRow {
    std::vector<std::pair<TokenId, double>> probs;  // sorted by id
    double rest_prob = 0.0;

    double prob_of(TokenId id) const;
    // sum over all n_outcomes ids (listed + rest)
    double total(int32_t n_outcomes) const;
    void normalize(int32_t n_outcomes);
};

// Order-k Markov chain over token ids 0..V-1 with an explicit end-of-sequence
// outcome (index V). Contexts are k-tuples over {BOS} union ids, BOS-padded
// on the left, packed into a uint64 code. A sequence shorter than max_len is
// a terminated event (its final factor is P(EOS|ctx)); a sequence of exactly
// max_len tokens is a capped event (no EOS factor). Terminated plus capped
// mass is exactly 1.
class MarkovModel {
public:
    MarkovModel(int order, TokenId vocab_size, int32_t max_len,
                std::shared_ptr<const Vocab> vocab = nullptr);

    int order() const { return order_; }
    TokenId vocab_size() const { return vocab_size_; }
    int32_t max_len() const { return max_len_; }
    TokenId eos() const { return vocab_size_; }          // outcome index
    int32_t n_outcomes() const { return vocab_size_ + 1; }
    const std::shared_ptr<const Vocab>& vocab() const { return vocab_; }

    // context symbol for padding; contexts are packed base (V+1)
    TokenId bos_symbol() const { return vocab_size_; }
    uint64_t context_code(const TokenSequence& prefix) const;
    uint64_t shift_context(uint64_t code, TokenId next) const;
    uint64_t initial_context() const;

    void set_row(uint64_t context_code, SparseRow row);  // validates normalization
    void set_fallback(SparseRow row);
    const SparseRow& row(uint64_t context_code) const;
    double cond_prob(uint64_t context_code, TokenId outcome) const;

    const std::unordered_map<uint64_t, SparseRow>& table() const { return table_; }
    const SparseRow& fallback() const { return fallback_; }

    // every stored row sums to 1 within tol
    void check_normalization(double tol = 1e-12) const;

    // versioned binary format, bit-exact probability round-trip
    void save(const std::string& path) const;
    static MarkovModel load(const std::string& path);

private:
    int order_;
    TokenId vocab_size_;
    int32_t max_len_;
    std::unordered_map<uint64_t, SparseRow> table_;
    SparseRow fallback_;  // unseen contexts; uniform after fitting
    std::shared_ptr<const Vocab> vocab_;
};

// A generator = base chain, optional interpolation toward a corruption chain,
// and a softmax-style temperature on every conditional. Interpolation is
// applied first, temperature second; `realize` materializes the transformed
// chain so sampling and scoring always use the same distribution.
struct GeneratorSpec {
    std::shared_ptr<const MarkovModel> base;
    std::shared_ptr<const MarkovModel> noise;  // required iff lambda > 0
    double temperature = 1.0;
    double lambda = 0.0;
    double training_fraction = 1.0;  // provenance for data-volume ladders
    std::string name;

    void validate() const;
    GeneratorSpec with_temperature(double t) const;
};

struct SampleStats {
    size_t n_capped = 0;  // sequences cut at max_len without EOS
};

// post: conditional(c)(w) = (count(c,w) + alpha) / (count(c) + alpha*(V+1));
// EOS is a counted outcome for every sentence shorter than max_len. With
// max_len = 0 the cap is inferred as (longest sentence + 1) so every observed
// sentence counts as terminated; pass the generator's cap to fit ladder
// models that must interpolate with each other.
MarkovModel fit_markov(const Corpus& corpus, int order, double alpha, int32_t max_len = 0);

// q_i = p_i^(1/T) / sum_j p_j^(1/T); zero entries stay zero
std::vector<double> apply_temperature(const std::vector<double>& p, double temperature);
SparseRow apply_temperature_row(const SparseRow& row, double temperature, int32_t n_outcomes);

GeneratorSpec interpolate(std::shared_ptr<const MarkovModel> base,
                          std::shared_ptr<const MarkovModel> noise, double lambda);

// materialized transformed chain; lambda=0, T=1 returns a plain copy of base
MarkovModel realize(const GeneratorSpec& spec);

Corpus sample(const GeneratorSpec& spec, size_t n, uint64_t seed,
              SampleStats* stats = nullptr);
Corpus sample(const MarkovModel& model, size_t n, uint64_t seed,
              SampleStats* stats = nullptr);

double sequence_logprob(const MarkovModel& model, const TokenSequence& x);
double sequence_logprob(const GeneratorSpec& spec, const TokenSequence& x);

// deterministic synthetic vocab "w0".."w{n-1}" for hand-built models
std::shared_ptr<const Vocab> synthetic_vocab(TokenId n_tokens);

// named desk-scale fixture models used by configs, tests, and the docs
std::shared_ptr<const MarkovModel> builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

}  // namespace ddeval
