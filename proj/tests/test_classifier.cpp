// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "ddeval/classifier.hpp"
#include "ddeval/errors.hpp"
#include "ddeval/markov.hpp"
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

// random sentences drawn from the given token pool, lengths 1..max_len
Corpus random_corpus(const std::vector<TokenId>& pool, size_t n, int max_len,
                     std::shared_ptr<const Vocab> vocab, uint64_t seed) {
    Rng rng(seed);
    std::vector<TokenSequence> seqs;
    for (size_t i = 0; i < n; ++i) {
        const auto len = static_cast<size_t>(1 + rng.next_below(static_cast<uint64_t>(max_len)));
        TokenSequence s;
        for (size_t j = 0; j < len; ++j) s.push_back(pool[rng.next_below(pool.size())]);
        seqs.push_back(std::move(s));
    }
    return corpus_from(std::move(seqs), std::move(vocab));
}

ClassifierConfig tiny_config() {
    ClassifierConfig cfg;
    cfg.embedding_dim = 4;
    cfg.layers = {{2, 3}, {3, 2}};
    cfg.dropout = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("config validation rejects bad settings") {
    ClassifierConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.embedding_dim = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.layers.clear();
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.layers = {{0, 5}};
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.layers = {{2, 0}};
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.dropout = -0.1;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = cfg;
    bad.patience = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    CHECK_THROWS_AS(ClassifierModel(cfg, 8, 2, 1), UsageError);  // frame < widest window
    CHECK_THROWS_AS(ClassifierModel(cfg, 2, 8, 1), UsageError);  // vocab below reserved ids
}

TEST_CASE("all-zero parameters always produce z = 0.5") {
    ClassifierModel model(tiny_config(), 8, 6, 42);
    std::fill(model.params().begin(), model.params().end(), 0.0);
    const auto z = model.forward({{4, 5, 6}, {7}, {}});
    REQUIRE(z.size() == 3);
    for (const double zi : z) CHECK(zi == 0.5);
}

TEST_CASE("hand-set single-kernel window-1 forward") {
    ClassifierConfig cfg;
    cfg.embedding_dim = 2;
    cfg.layers = {{1, 1}};
    cfg.dropout = 0.0;
    ClassifierModel m(cfg, 6, 4, 0);
    auto& p = m.params();
    std::fill(p.begin(), p.end(), 0.0);
    REQUIRE(p.size() == 6 * 2 + 2 + 1 + 1 + 1);
    const auto set_emb = [&](TokenId id, double a, double b) {
        p[m.embedding_offset(id)] = a;
        p[m.embedding_offset(id) + 1] = b;
    };
    set_emb(Vocab::kBos, 0.5, -1.0);
    set_emb(Vocab::kEos, 1.0, 1.0);
    set_emb(4, 2.0, 0.5);
    set_emb(5, -1.0, 2.0);
    p[m.kernel_offset(0)] = 0.3;
    p[m.kernel_offset(0) + 1] = -0.2;
    p[m.bias_offset(0)] = 0.1;
    p[m.affine_offset()] = 2.0;
    p[m.affine_bias_offset()] = -0.3;

    // frame [BOS, 4, 5, EOS]; per-position pre-activation 0.3*x0 - 0.2*x1 + 0.1:
    //   BOS 0.45, token4 0.6, token5 -0.6, EOS 0.2 -> pooled 0.6
    //   logit = 2*0.6 - 0.3 = 0.9
    const double z = m.forward({{4, 5}})[0];
    CHECK(z == Approx(1.0 / (1.0 + std::exp(-0.9))).epsilon(1e-12));

    // loss matches the cross-entropy of that z for both labels
    std::vector<double> grads;
    CHECK(m.loss_and_grads({{4, 5}}, {1}, grads, nullptr) ==
          Approx(-std::log(z)).epsilon(1e-12));
    CHECK(m.loss_and_grads({{4, 5}}, {0}, grads, nullptr) ==
          Approx(-std::log(1.0 - z)).epsilon(1e-12));
}

TEST_CASE("window-2 kernel sums adjacent embedding rows") {
    ClassifierConfig cfg;
    cfg.embedding_dim = 2;
    cfg.layers = {{2, 1}};
    cfg.dropout = 0.0;
    ClassifierModel m(cfg, 6, 4, 0);
    auto& p = m.params();
    std::fill(p.begin(), p.end(), 0.0);
    p[m.embedding_offset(Vocab::kBos)] = 0.5;
    p[m.embedding_offset(Vocab::kEos)] = 1.0;
    p[m.embedding_offset(4)] = 2.0;
    p[m.embedding_offset(5)] = -1.0;
    p[m.kernel_offset(0)] = 1.0;      // u = 0, dim 0
    p[m.kernel_offset(0) + 2] = 1.0;  // u = 1, dim 0
    p[m.affine_offset()] = 1.0;

    // windows over [BOS, 4, 5, EOS]: 0.5+2, 2-1, -1+1 -> pooled 2.5
    const double z = m.forward({{4, 5}})[0];
    CHECK(z == Approx(1.0 / (1.0 + std::exp(-2.5))).epsilon(1e-12));
}

TEST_CASE("padding positions are excluded from max pooling") {
    ClassifierConfig cfg;
    cfg.embedding_dim = 2;
    cfg.layers = {{1, 1}};
    cfg.dropout = 0.0;
    ClassifierModel m(cfg, 6, 4, 0);
    auto& p = m.params();
    std::fill(p.begin(), p.end(), 0.0);
    p[m.embedding_offset(Vocab::kBos)] = 0.5;
    p[m.embedding_offset(Vocab::kEos)] = 1.0;
    p[m.embedding_offset(4)] = 2.0;
    p[m.kernel_offset(0)] = -1.0;
    p[m.bias_offset(0)] = 0.05;
    p[m.affine_offset()] = 2.0;
    p[m.affine_bias_offset()] = -0.3;

    // frame [BOS, 4, EOS, PAD]: valid pre-activations are all negative
    // (-0.45, -1.95, -0.95) so the pooled feature is 0; the PAD position
    // would have scored 0.05 and shifted the logit if it were scanned
    const double z = m.forward({{4}})[0];
    CHECK(z == Approx(1.0 / (1.0 + std::exp(0.3))).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
    const auto cfg = tiny_config();
    const std::vector<TokenSequence> batch = {{4, 5, 6}, {7}, {}, {5, 4}};
    const std::vector<int> labels = {1, 0, 1, 0};
    const double h = 1e-4;
    // frozen inits; an init whose max-pool argmax flips within +-h makes the
    // central difference measure a blend of two branches (seed 15 here), so
    // such seeds are excluded rather than loosening the tolerance
    const std::vector<uint64_t> seeds = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                         11, 12, 13, 14, 16, 17, 18, 19, 20, 21};
    for (const uint64_t seed : seeds) {
        CAPTURE(seed);
        ClassifierModel model(cfg, 8, 5, seed);
        std::vector<double> grads, scratch;
        model.loss_and_grads(batch, labels, grads, nullptr);
        double worst = 0.0;
        for (size_t i = 0; i < model.params().size(); ++i) {
            const double saved = model.params()[i];
            model.params()[i] = saved + h;
            const double up = model.loss_and_grads(batch, labels, scratch, nullptr);
            model.params()[i] = saved - h;
            const double down = model.loss_and_grads(batch, labels, scratch, nullptr);
            model.params()[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double rel =
                std::abs(grads[i] - fd) / std::max(1e-6, std::abs(grads[i]) + std::abs(fd));
            worst = std::max(worst, rel);
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("final-bias gradient equals mean(z - y)") {
    ClassifierModel model(tiny_config(), 8, 6, 17);
    const std::vector<TokenSequence> batch = {{4}, {5, 6}, {7, 4, 5}, {6}, {}, {4, 7}};
    const std::vector<int> labels = {1, 0, 1, 1, 0, 0};
    std::vector<double> grads;
    const double loss = model.loss_and_grads(batch, labels, grads, nullptr);
    const auto z = model.forward(batch);
    double mean_residual = 0.0, manual_loss = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        const double y = labels[i];
        mean_residual += (z[i] - y) / static_cast<double>(z.size());
        manual_loss -= (y * std::log(z[i]) + (1.0 - y) * std::log(1.0 - z[i])) /
                       static_cast<double>(z.size());
    }
    CHECK(grads[model.affine_bias_offset()] == Approx(mean_residual).epsilon(1e-12));
    CHECK(loss == Approx(manual_loss).epsilon(1e-12));
}

TEST_CASE("dropout masks are seeded and reproducible") {
    ClassifierConfig cfg = tiny_config();
    cfg.dropout = 0.5;
    ClassifierModel model(cfg, 8, 6, 3);
    const std::vector<TokenSequence> batch = {{4, 5}, {6, 7}, {5}, {7, 6, 4}};
    const std::vector<int> labels = {1, 0, 0, 1};
    std::vector<double> g1, g2, g3;
    Rng r1(42), r2(42), r3(43);
    const double l1 = model.loss_and_grads(batch, labels, g1, &r1);
    const double l2 = model.loss_and_grads(batch, labels, g2, &r2);
    const double l3 = model.loss_and_grads(batch, labels, g3, &r3);
    CHECK(l1 == l2);
    CHECK(g1 == g2);
    CHECK(l1 != l3);

    // a null rng disables dropout entirely
    std::vector<double> g4;
    const double l4 = model.loss_and_grads(batch, labels, g4, nullptr);
    const auto z = model.forward(batch);
    double manual = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        const double y = labels[i];
        manual -= (y * std::log(z[i]) + (1.0 - y) * std::log(1.0 - z[i])) /
                  static_cast<double>(z.size());
    }
    CHECK(l4 == Approx(manual).epsilon(1e-12));
}

TEST_CASE("forward rejects malformed input") {
    ClassifierModel model(tiny_config(), 8, 5, 1);
    CHECK_THROWS_AS(model.forward({{4, 5, 6, 7}}), DataError);  // needs frame 6
    CHECK_THROWS_AS(model.forward({{8}}), DataError);           // id outside vocab
    CHECK_THROWS_AS(model.forward({{-1}}), DataError);
    std::vector<double> grads;
    CHECK_THROWS_AS(model.loss_and_grads({}, {}, grads, nullptr), DataError);
    CHECK_THROWS_AS(model.loss_and_grads({{4}}, {1, 0}, grads, nullptr), UsageError);
}

TEST_CASE("evaluate thresholds at 0.5 with ties predicted positive") {
    ClassifierModel model(tiny_config(), 8, 6, 11);
    std::fill(model.params().begin(), model.params().end(), 0.0);
    const std::vector<TokenSequence> batch = {{4}, {5}, {6}, {7}};
    const std::vector<int> labels = {1, 1, 0, 0};
    const auto r = evaluate(model, batch, labels);
    CHECK(r.accuracy == 0.5);
    CHECK(r.acc_positive == 1.0);
    CHECK(r.acc_negative == 0.0);
    CHECK_THROWS_AS(evaluate(model, {}, {}), DataError);
}

TEST_CASE("evaluation is invariant to example order") {
    ClassifierModel model(tiny_config(), 8, 6, 23);
    std::vector<TokenSequence> batch = {{4, 5}, {6}, {7, 7}, {5, 4, 6}, {6, 6}, {4}};
    std::vector<int> labels = {1, 0, 1, 0, 1, 0};
    const auto base = evaluate(model, batch, labels);
    std::vector<size_t> perm = {3, 0, 5, 1, 4, 2};
    std::vector<TokenSequence> pb;
    std::vector<int> pl;
    for (const size_t i : perm) {
        pb.push_back(batch[i]);
        pl.push_back(labels[i]);
    }
    const auto shuffled = evaluate(model, pb, pl);
    CHECK(base.accuracy == shuffled.accuracy);
    CHECK(base.acc_positive == shuffled.acc_positive);
    CHECK(base.acc_negative == shuffled.acc_negative);
}

TEST_CASE("dd_from_accuracy clamps at zero") {
    CHECK(dd_from_accuracy(1.0).value == 1.0);
    CHECK(dd_from_accuracy(0.75).value == 0.5);
    CHECK(dd_from_accuracy(0.5).value == 0.0);
    CHECK(dd_from_accuracy(0.3).value == 0.0);
    CHECK(dd_from_accuracy(0.8).method == DdMethod::ClassifierEstimate);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    ClassifierConfig cfg;
    cfg.embedding_dim = 3;
    cfg.layers = {{2, 4}, {3, 2}};
    cfg.dropout = 0.25;
    cfg.learning_rate = 5e-4;
    cfg.batch_size = 33;
    ClassifierModel model(cfg, 9, 7, 777);
    const auto path = testutil::tmp_path("clf.bin");
    model.save(path);
    const auto loaded = ClassifierModel::load(path);
    CHECK(loaded.params() == model.params());
    CHECK(loaded.vocab_size() == model.vocab_size());
    CHECK(loaded.frame_len() == model.frame_len());
    CHECK(loaded.config().embedding_dim == cfg.embedding_dim);
    CHECK(loaded.config().layers == cfg.layers);
    CHECK(loaded.config().dropout == cfg.dropout);
    CHECK(loaded.config().learning_rate == cfg.learning_rate);
    CHECK(loaded.config().batch_size == cfg.batch_size);
    const std::vector<TokenSequence> batch = {{4, 5, 6}, {8}, {}};
    CHECK(loaded.forward(batch) == model.forward(batch));
    std::remove(path.c_str());

    CHECK_THROWS_AS(ClassifierModel::load("/nonexistent/clf.bin"), DataError);
    const auto junk = testutil::tmp_path("junk.bin");
    std::ofstream(junk) << "not a checkpoint";
    CHECK_THROWS_AS(ClassifierModel::load(junk), DataError);
    std::remove(junk.c_str());
}

TEST_CASE("training separates corpora with disjoint vocabularies") {
    const auto vocab = synthetic_vocab(8);
    const auto real = random_corpus({4, 5}, 400, 4, vocab, 101);
    const auto gen = random_corpus({6, 7}, 400, 4, vocab, 102);
    ClassifierConfig cfg;
    cfg.embedding_dim = 8;
    cfg.layers = {{1, 8}, {2, 8}};
    cfg.dropout = 0.0;
    cfg.learning_rate = 5e-3;
    cfg.batch_size = 64;
    cfg.max_epochs = 30;
    cfg.patience = 8;
    const auto result = train_classifier(cfg, real, gen, 2024);
    CHECK(result.report.accuracy > 0.99);
    CHECK(result.report.dd > 0.98);
    CHECK(result.report.n_train == 640);
    CHECK(result.report.n_dev == 80);
    CHECK(result.report.n_test == 80);
    CHECK(result.report.epochs_run == static_cast<int>(result.log.size()));
    CHECK(result.report.dev_accuracy == Approx(1.0));
    CHECK(result.model.vocab_size() == 8);
}

TEST_CASE("training is deterministic in the seed") {
    const auto vocab = synthetic_vocab(8);
    const auto real = random_corpus({4, 5, 6}, 120, 3, vocab, 7);
    const auto gen = random_corpus({5, 6, 7}, 120, 3, vocab, 8);
    ClassifierConfig cfg;
    cfg.embedding_dim = 4;
    cfg.layers = {{2, 6}};
    cfg.dropout = 0.3;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 32;
    cfg.max_epochs = 5;
    const auto a = train_classifier(cfg, real, gen, 55);
    const auto b = train_classifier(cfg, real, gen, 55);
    CHECK(a.model.params() == b.model.params());
    CHECK(a.report.accuracy == b.report.accuracy);
    CHECK(a.report.dd == b.report.dd);
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].dev_accuracy == b.log[i].dev_accuracy);
    }
    const auto c = train_classifier(cfg, real, gen, 56);
    CHECK(a.model.params() != c.model.params());
}

TEST_CASE("near-identical corpora give a near-zero dd estimate") {
    const auto base = builtin_model("desk_base");
    const auto real = sample(*base, 2000, 501);
    const auto gen = sample(*base, 2000, 502);
    ClassifierConfig cfg;
    cfg.embedding_dim = 8;
    cfg.layers = {{2, 16}, {3, 16}};
    cfg.dropout = 0.3;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 128;
    cfg.max_epochs = 12;
    cfg.patience = 5;
    const auto result = train_classifier(cfg, real, gen, 9001);
    CHECK(result.report.accuracy > 0.40);
    CHECK(result.report.accuracy < 0.60);
    CHECK(result.report.dd < 0.15);
}

TEST_CASE("early stopping respects patience and max_epochs") {
    const auto vocab = synthetic_vocab(8);
    const auto real = random_corpus({4, 5}, 100, 3, vocab, 31);
    const auto gen = random_corpus({6, 7}, 100, 3, vocab, 32);
    ClassifierConfig cfg;
    cfg.embedding_dim = 4;
    cfg.layers = {{2, 4}};
    cfg.dropout = 0.0;
    cfg.batch_size = 50;

    SUBCASE("a frozen model stops after exactly patience stale epochs") {
        cfg.learning_rate = 1e-15;
        cfg.max_epochs = 50;
        cfg.patience = 6;
        const auto result = train_classifier(cfg, real, gen, 3);
        CHECK(result.report.epochs_run == 1 + cfg.patience);
        CHECK(result.report.best_epoch == 1);
    }
    SUBCASE("max_epochs caps the run") {
        cfg.learning_rate = 1e-3;
        cfg.max_epochs = 3;
        cfg.patience = 10;
        const auto result = train_classifier(cfg, real, gen, 3);
        CHECK(result.report.epochs_run == 3);
    }
}

TEST_CASE("imbalanced corpora are downsampled to parity") {
    const auto vocab = synthetic_vocab(8);
    const auto real = random_corpus({4, 5, 6}, 100, 3, vocab, 61);
    const auto gen = random_corpus({5, 6, 7}, 40, 3, vocab, 62);
    ClassifierConfig cfg;
    cfg.embedding_dim = 4;
    cfg.layers = {{2, 4}};
    cfg.dropout = 0.0;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 32;
    cfg.max_epochs = 2;
    const auto result = train_classifier(cfg, real, gen, 5);
    CHECK(result.report.n_train == 64);  // 32 per side
    CHECK(result.report.n_dev == 8);
    CHECK(result.report.n_test == 8);
}

TEST_CASE("training rejects malformed corpus pairs") {
    const auto vocab = synthetic_vocab(8);
    const auto real = random_corpus({4, 5}, 50, 3, vocab, 71);
    ClassifierConfig cfg;
    cfg.embedding_dim = 4;
    cfg.layers = {{2, 4}};

    Corpus empty;
    empty.vocab = vocab;
    CHECK_THROWS_AS(train_classifier(cfg, real, empty, 1), DataError);
    CHECK_THROWS_AS(train_classifier(cfg, empty, real, 1), DataError);

    const auto other = random_corpus({4, 5}, 50, 3, synthetic_vocab(9), 72);
    CHECK_THROWS_AS(train_classifier(cfg, real, other, 1), DataError);

    auto renamed = std::make_shared<Vocab>();
    for (int i = 0; i < 4; ++i) renamed->add_token("x" + std::to_string(i));
    const auto mismatched = random_corpus({4, 5}, 50, 3, renamed, 73);
    CHECK_THROWS_AS(train_classifier(cfg, real, mismatched, 1), DataError);

    Corpus no_vocab = real;
    no_vocab.vocab = nullptr;
    CHECK_THROWS_AS(train_classifier(cfg, real, no_vocab, 1), DataError);
}
