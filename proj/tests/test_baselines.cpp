// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "ddeval/baselines.hpp"
#include "ddeval/errors.hpp"
#include "ddeval/markov.hpp"
#include "ddeval/rng.hpp"
#include "test_util.hpp"

using namespace ddeval;
using doctest::Approx;

namespace {

Corpus corpus_from(std::vector<TokenSequence> seqs, std::shared_ptr<const Vocab> vocab) {
    Corpus c;
    c.sequences = std::move(seqs);
    c.vocab = std::move(vocab);
    return c;
}

}  // namespace

// --- BLEU -------------------------------------------------------------

TEST_CASE("hand-computed corpus-as-reference BLEU-2") {
    // refs: [a b], [c a], [b b c d]; candidate [a b a]
    //   p1: 'a' appears at most once per reference -> clip 1 of 2; 'b' 1/1
    //       -> 2/3
    //   p2: (a,b) matches, (b,a) does not -> 1/2
    //   BP: len 3 vs ref lengths {2,2,4}, tie resolves to 2, BP = 1
    //   BLEU-2 = sqrt(2/3 * 1/2) = sqrt(1/3)
    const std::vector<TokenSequence> refs = {{4, 5}, {6, 4}, {5, 5, 6, 7}};
    CHECK(sentence_bleu({4, 5, 4}, refs, 2) == Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));

    // short candidate: p1 = 1, p2 undefined -> eps; BP = exp(1 - 2/1)
    CHECK(sentence_bleu({4}, refs, 2) ==
          Approx(std::exp(-1.0) * std::sqrt(1e-9)).epsilon(1e-9));

    // corpus score is the mean of sentence scores
    const auto vocab = synthetic_vocab(8);
    const auto cands = corpus_from({{4, 5, 4}, {4}}, vocab);
    const auto ref_corpus = corpus_from({{4, 5}, {6, 4}, {5, 5, 6, 7}}, vocab);
    const double expected =
        (std::sqrt(1.0 / 3.0) + std::exp(-1.0) * std::sqrt(1e-9)) / 2.0;
    CHECK(bleu(cands, ref_corpus, 2) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("candidate equal to a reference scores exactly 1") {
    const std::vector<TokenSequence> refs = {{4, 5}, {6, 4}, {5, 5, 6, 7}};
    CHECK(sentence_bleu({4, 5}, refs, 2) == 1.0);
    CHECK(sentence_bleu({5, 5, 6, 7}, refs, 4) == 1.0);
}

TEST_CASE("candidate sharing nothing with references hits the eps floor") {
    const std::vector<TokenSequence> refs = {{4, 5}, {6, 4}};
    CHECK(sentence_bleu({7, 7}, refs, 2) == Approx(1e-9).epsilon(1e-9));
    CHECK(sentence_bleu({}, refs, 2) == 0.0);
}

TEST_CASE("bleu input validation") {
    const auto vocab = synthetic_vocab(8);
    const auto c = corpus_from({{4}}, vocab);
    Corpus empty;
    empty.vocab = vocab;
    CHECK_THROWS_AS(sentence_bleu({4}, {}, 2), DataError);
    CHECK_THROWS_AS(sentence_bleu({4}, {{4}}, 0), UsageError);
    CHECK_THROWS_AS(bleu(empty, c, 2), DataError);
    CHECK_THROWS_AS(bleu(c, empty, 2), DataError);
}

// --- self-BLEU -----------------------------------------------------------

TEST_CASE("self_bleu of identical sentences is 1") {
    const auto vocab = synthetic_vocab(8);
    const auto c = corpus_from({{4, 5, 6}, {4, 5, 6}, {4, 5, 6}, {4, 5, 6}}, vocab);
    CHECK(self_bleu(c, 2) == 1.0);
}

TEST_CASE("self_bleu of pairwise disjoint sentences is the eps floor") {
    const auto vocab = synthetic_vocab(8);
    const auto c = corpus_from({{4}, {5}, {6}, {7}}, vocab);
    CHECK(self_bleu(c, 1) == Approx(1e-9).epsilon(1e-9));
}

TEST_CASE("hand-computed 3-sentence leave-one-out self-BLEU") {
    // sentences [a b], [a b a], [b c]:
    //   [a b]   -> p1 = 1, p2 = 1, score 1
    //   [a b a] -> 'a' clips to 1 (sole best holder), p1 = 2/3; (b,a) unique
    //              to itself -> p2 = 1/2; score sqrt(1/3)
    //   [b c]   -> 'c' and (b,c) are its own -> p1 = 1/2, p2 = eps;
    //              score sqrt(0.5e-9)
    const auto vocab = synthetic_vocab(8);
    const auto c = corpus_from({{4, 5}, {4, 5, 4}, {5, 6}}, vocab);
    const double expected =
        (1.0 + std::sqrt(1.0 / 3.0) + std::sqrt(0.5e-9)) / 3.0;
    CHECK(self_bleu(c, 2) == Approx(expected).epsilon(1e-12));
}

TEST_CASE("self_bleu is invariant under corpus permutation") {
    const auto base = builtin_model("desk_base");
    auto c = sample(*base, 60, 91);
    const double capped = self_bleu(c, 3, 20, 5);
    const double full = self_bleu(c, 3, 1000, 5);
    Rng rng(17);
    rng.shuffle(c.sequences);
    CHECK(self_bleu(c, 3, 20, 5) == capped);
    CHECK(self_bleu(c, 3, 1000, 5) == full);
    // the subsample itself is seed-dependent
    CHECK(self_bleu(c, 3, 20, 6) != capped);
}

TEST_CASE("self_bleu input validation") {
    const auto vocab = synthetic_vocab(8);
    const auto single = corpus_from({{4}}, vocab);
    CHECK_THROWS_AS(self_bleu(single, 2), DataError);
    const auto pair = corpus_from({{4}, {5}}, vocab);
    CHECK_THROWS_AS(self_bleu(pair, 0), UsageError);
    CHECK_THROWS_AS(self_bleu(pair, 2, 0), UsageError);
}

// --- Kneser-Ney -----------------------------------------------------------

// The KN fixture: 4 sentences over {a=4, b=5}, vocab size 6.
// Framed bigrams: (B,a):3 (B,b):1 (a,b):1 (b,E):1 (a,E):3 (b,a):1 (a,a):1.
// Context totals B:4 a:5 b:2; follower types B:2 a:3 b:2.
// Continuation unigrams (distinct left-extensions): a:3 b:2 E:2, total 7,
// types 3. With D = 0.75 and uniform 1/6:
//   Pc(a) = (3-D)/7 + D*3/7/6           = 3/8
//   Pc(b) = (2-D)/7 + D*3/7/6           = 13/56
//   Pc(E) = 13/56,  Pc(unseen) = D*3/42 = 3/56
TEST_CASE("hand-computed interpolated KN bigram probabilities") {
    const std::vector<std::string> lines = {"a b", "a", "b a", "a a"};
    auto vocab = std::make_shared<Vocab>(build_vocab_from_lines(lines, 1));
    REQUIRE(vocab->size() == 6);
    REQUIRE(vocab->id_of("a") == 4);
    REQUIRE(vocab->id_of("b") == 5);
    const auto corpus = encode_lines(lines, vocab, EncodeOptions{});
    const NgramTable lm(corpus, 2);

    // P(a|BOS) = (3-D)/4 + D*(2/4)*Pc(a) = 9/16 + (3/8)(3/8) = 45/64
    CHECK(lm.cond_prob({}, 4) == Approx(45.0 / 64.0).epsilon(1e-10));
    // P(b|a) = (1-D)/5 + D*(3/5)*Pc(b) = 1/20 + (9/20)(13/56) = 173/1120
    CHECK(lm.cond_prob({4}, 5) == Approx(173.0 / 1120.0).epsilon(1e-10));
    // P(E|a) = (3-D)/5 + (9/20)(13/56) = 621/1120
    CHECK(lm.cond_prob({4}, Vocab::kEos) == Approx(621.0 / 1120.0).epsilon(1e-10));
    // P(E|b) = (1-D)/2 + D*(2/2)*Pc(E) = 1/8 + (3/4)(13/56) = 67/224
    CHECK(lm.cond_prob({5}, Vocab::kEos) == Approx(67.0 / 224.0).epsilon(1e-10));
    // unseen context backs off to the continuation unigram
    CHECK(lm.cond_prob({Vocab::kEos}, 4) == Approx(3.0 / 8.0).epsilon(1e-10));
    // unseen word under a seen context keeps floor mass
    CHECK(lm.cond_prob({}, Vocab::kPad) ==
          Approx((3.0 / 8.0) * (3.0 / 56.0)).epsilon(1e-10));

    // sequence NLL composes those conditionals, EOS event included
    const auto [nll, events] = lm.sequence_nll({4, 5});
    CHECK(events == 3);
    CHECK(nll == Approx(-std::log(45.0 / 64.0) - std::log(173.0 / 1120.0) -
                        std::log(67.0 / 224.0))
                     .epsilon(1e-12));

    // kn_score averages per event across the corpus
    const auto scored = corpus_from({{4, 5}, {4}}, corpus.vocab);
    const auto [nll2, events2] = lm.sequence_nll({4});
    CHECK(kn_score(lm, scored) ==
          Approx((nll + nll2) / static_cast<double>(events + events2)).epsilon(1e-12));
}

TEST_CASE("KN conditionals sum to 1 over the vocab") {
    const std::vector<std::string> lines = {"a b", "a", "b a", "a a"};
    auto vocab = std::make_shared<Vocab>(build_vocab_from_lines(lines, 1));
    const auto corpus = encode_lines(lines, vocab, EncodeOptions{});
    const NgramTable lm(corpus, 2);
    const std::vector<std::vector<TokenId>> contexts = {
        {}, {4}, {5}, {Vocab::kEos}, {Vocab::kPad}};
    for (const auto& ctx : contexts) {
        double sum = 0.0;
        for (TokenId w = 0; w < lm.vocab_size(); ++w) sum += lm.cond_prob(ctx, w);
        CHECK(sum == Approx(1.0).epsilon(1e-9));
    }

    // 5-gram model on a sampled corpus, 100 random contexts
    const auto base = builtin_model("desk_base");
    const auto sampled = sample(*base, 400, 2101);
    const NgramTable lm5(sampled, 5);
    Rng rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TokenId> ctx;
        const auto len = rng.next_below(5);
        for (uint64_t i = 0; i < len; ++i)
            ctx.push_back(static_cast<TokenId>(rng.next_below(
                static_cast<uint64_t>(lm5.vocab_size()))));
        double sum = 0.0;
        for (TokenId w = 0; w < lm5.vocab_size(); ++w) sum += lm5.cond_prob(ctx, w);
        CHECK(sum == Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("training text scores lower NLL than token-shuffled text") {
    const auto base = builtin_model("desk_base");
    const auto corpus = sample(*base, 800, 2102);
    const NgramTable lm(corpus, 3);

    // same tokens, same lengths, order destroyed
    std::vector<TokenId> pool;
    for (const auto& s : corpus.sequences) pool.insert(pool.end(), s.begin(), s.end());
    Rng rng(31);
    rng.shuffle(pool);
    Corpus shuffled = corpus;
    size_t at = 0;
    for (auto& s : shuffled.sequences) {
        for (auto& t : s) t = pool[at++];
    }
    CHECK(kn_score(lm, corpus) < kn_score(lm, shuffled));
}

TEST_CASE("ngram table input validation") {
    const auto vocab = synthetic_vocab(6);
    const auto c = corpus_from({{4, 5}}, vocab);
    CHECK_THROWS_AS(NgramTable(c, 0), UsageError);
    CHECK_THROWS_AS(NgramTable(c, 2, 0.0), UsageError);
    CHECK_THROWS_AS(NgramTable(c, 2, 1.0), UsageError);
    Corpus empty;
    empty.vocab = vocab;
    CHECK_THROWS_AS(NgramTable(empty, 2), DataError);
    const NgramTable lm(c, 2);
    CHECK_THROWS_AS(kn_score(lm, empty), DataError);
    CHECK_THROWS_AS(lm.cond_prob({}, 6), UsageError);
    CHECK_THROWS_AS(lm.cond_prob({}, -1), UsageError);
    const auto oob = corpus_from({{9}}, vocab);
    CHECK_THROWS_AS(kn_score(lm, oob), DataError);
}

// --- Frechet embedding distance ------------------------------------------

TEST_CASE("embedding model is deterministic") {
    const EmbeddingModel emb{16, 9};
    const auto a = emb.embed({4, 5, 6});
    const auto b = emb.embed({4, 5, 6});
    CHECK(a == b);
    CHECK(emb.embed_token(4) == emb.embed_token(4));
    CHECK(emb.embed_token(4) != emb.embed_token(5));
    CHECK(emb.embed({}).isZero(0.0));
    const EmbeddingModel other{16, 10};
    CHECK(emb.embed_token(4) != other.embed_token(4));
}

TEST_CASE("frechet distance on hand-built gaussians") {
    GaussianFit a, b;
    a.mu = Eigen::VectorXd::Zero(2);
    a.sigma = Eigen::MatrixXd::Identity(2, 2);
    b.mu = a.mu;
    b.sigma = a.sigma;

    SUBCASE("identical fits give zero") { CHECK(frechet_distance(a, b) <= 1e-12); }
    SUBCASE("mean shift with equal covariance is the squared norm") {
        b.mu << 3.0, 4.0;
        CHECK(frechet_distance(a, b) == Approx(25.0).epsilon(1e-8));
    }
    SUBCASE("diag(1,4) vs diag(4,1) gives 2") {
        a.sigma = Eigen::Vector2d(1.0, 4.0).asDiagonal();
        b.sigma = Eigen::Vector2d(4.0, 1.0).asDiagonal();
        // 5 + 5 - 2*tr(sqrt(diag(4,4))) = 10 - 8
        CHECK(frechet_distance(a, b) == Approx(2.0).epsilon(1e-8));
    }
    SUBCASE("dimension mismatch is rejected") {
        GaussianFit c;
        c.mu = Eigen::VectorXd::Zero(3);
        c.sigma = Eigen::MatrixXd::Identity(3, 3);
        CHECK_THROWS_AS(frechet_distance(a, c), UsageError);
    }
}

TEST_CASE("fed over corpora: self-distance, symmetry, positivity") {
    const EmbeddingModel emb{16, 7};
    const auto base = builtin_model("desk_base");
    const auto noise = builtin_model("desk_noise");
    const auto ca = sample(*base, 300, 41);
    const auto cb = sample(*noise, 300, 42);

    CHECK(fed(ca, ca, emb) <= 1e-6);
    const double ab = fed(ca, cb, emb);
    const double ba = fed(cb, ca, emb);
    CHECK(ab >= 0.0);
    CHECK(ab == Approx(ba).epsilon(1e-8));
    CHECK(ab > fed(ca, sample(*base, 300, 43), emb));
}

TEST_CASE("gaussian fit needs two points and matching dimensions") {
    const std::vector<Eigen::VectorXd> one = {Eigen::VectorXd::Zero(3)};
    CHECK_THROWS_AS(fit_gaussian(one), DataError);
    std::vector<Eigen::VectorXd> bad = {Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2)};
    CHECK_THROWS_AS(fit_gaussian(bad), UsageError);

    const EmbeddingModel emb{8, 1};
    const auto vocab = synthetic_vocab(8);
    const auto single = corpus_from({{4}}, vocab);
    const auto pair = corpus_from({{4}, {5}}, vocab);
    CHECK_THROWS_AS(fed(single, pair, emb), DataError);
    CHECK_THROWS_AS(fed(pair, single, emb), DataError);
}

TEST_CASE("fit_gaussian matches hand statistics") {
    // points (0,0), (2,0), (0,2), (2,2): mean (1,1), unbiased cov (4/3) I
    const std::vector<std::pair<double, double>> raw = {
        {0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}, {2.0, 2.0}};
    std::vector<Eigen::VectorXd> pts;
    for (const auto& p : raw) {
        Eigen::VectorXd v(2);
        v << p.first, p.second;
        pts.push_back(v);
    }
    const auto fit = fit_gaussian(pts, 1e-6);
    CHECK(fit.mu[0] == Approx(1.0).epsilon(1e-12));
    CHECK(fit.mu[1] == Approx(1.0).epsilon(1e-12));
    CHECK(fit.sigma(0, 0) == Approx(4.0 / 3.0 + 1e-6).epsilon(1e-12));
    CHECK(fit.sigma(1, 1) == Approx(4.0 / 3.0 + 1e-6).epsilon(1e-12));
    CHECK(std::abs(fit.sigma(0, 1)) <= 1e-12);
    CHECK((fit.sigma - fit.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}
