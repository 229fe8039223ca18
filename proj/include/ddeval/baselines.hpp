// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ddeval/corpus.hpp"

namespace ddeval {

// --- BLEU -------------------------------------------------------------

// Corpus-as-reference BLEU: per candidate, modified n-gram precision
// clipped by the maximum count of the n-gram inside any single reference
// sentence, geometric mean over n = 1..max_n with eps = 1e-9 substituted
// for zero (or undefined) precisions, brevity penalty against the closest
// reference length. The corpus score is the mean of sentence scores.
double sentence_bleu(const TokenSequence& candidate,
                     const std::vector<TokenSequence>& references, int max_n = 5);
double bleu(const Corpus& candidates, const Corpus& references, int max_n = 5);

// Leave-one-out BLEU of each sentence against the rest of its own corpus,
// averaged. At most eval_cap sentences are scored and every other sentence
// still serves as a reference. The subsample is drawn from a canonical
// (sorted) order of the sentences, so the value depends only on the corpus
// as a multiset plus (seed, cap), never on sentence order.
double self_bleu(const Corpus& corpus, int max_n = 5, size_t eval_cap = 1000,
                 uint64_t seed = 0);

// --- Kneser-Ney language model -----------------------------------------

struct TokenVecHash {
    size_t operator()(const std::vector<TokenId>& v) const;
};

// Interpolated Kneser-Ney n-gram model with a fixed discount. Sentences are
// framed with order-1 BOS ids on the left and a terminating EOS id, so the
// EOS event is part of every score. Conditionals are distributions over the
// full vocab id range (EOS included as the reserved EOS id); the recursion
// bottoms out in a continuation-unigram interpolated with the uniform
// distribution, so unseen words (UNK included) keep positive mass and every
// conditional sums to exactly 1.
class NgramTable {
public:
    NgramTable(const Corpus& corpus, int order, double discount = 0.75);

    int order() const { return order_; }
    double discount() const { return discount_; }
    TokenId vocab_size() const { return vocab_size_; }

    // context = most recent order-1 ids, oldest first; shorter contexts are
    // BOS-padded on the left
    double cond_prob(const std::vector<TokenId>& context, TokenId w) const;

    // total negative log-likelihood of [tokens..., EOS] and the event count
    std::pair<double, size_t> sequence_nll(const TokenSequence& x) const;

private:
    using CountMap = std::unordered_map<std::vector<TokenId>, double, TokenVecHash>;

    struct Level {
        CountMap gram;        // (context, w) -> count
        CountMap ctx_total;   // context -> sum of counts
        CountMap ctx_types;   // context -> distinct followers
    };

    double prob_at(int n, const std::vector<TokenId>& context, TokenId w) const;

    int order_;
    double discount_;
    TokenId vocab_size_;
    std::vector<Level> raw_;   // raw counts, indexed by order-1 (only top order used)
    std::vector<Level> cont_;  // continuation counts for orders 1..order-1
};

// mean negative log-likelihood per scored event (tokens plus EOS), in nats
double kn_score(const NgramTable& lm, const Corpus& scored);

// --- Frechet embedding distance ------------------------------------------

// Deterministic stand-in for a pretrained sentence encoder: every token id
// gets a fixed seeded Gaussian vector and a sequence embeds as the mean of
// its token vectors (zero vector for an empty sequence).
struct EmbeddingModel {
    int dim = 128;
    uint64_t seed = 0;

    std::vector<double> embed_token(TokenId id) const;
    Eigen::VectorXd embed(const TokenSequence& x) const;
};

struct GaussianFit {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;  // symmetric, regularized PSD
};

// unbiased covariance plus reg * I; needs at least 2 points
GaussianFit fit_gaussian(const std::vector<Eigen::VectorXd>& points, double reg = 1e-6);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), the matrix square root
// taken via the symmetric eigendecomposition of Sa^(1/2) Sb Sa^(1/2);
// negative roundoff eigenvalues clamp to zero and the result clamps at 0
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

double fed(const Corpus& corpus_a, const Corpus& corpus_b, const EmbeddingModel& emb);

}  // namespace ddeval
