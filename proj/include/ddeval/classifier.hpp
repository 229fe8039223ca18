// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddeval/corpus.hpp"
#include "ddeval/oracle.hpp"
#include "ddeval/rng.hpp"

namespace ddeval {

struct ClassifierConfig {
    int embedding_dim = 32;
    // (window, kernels) per conv layer
    std::vector<std::pair<int, int>> layers = {{2, 100}, {3, 200}};
    double dropout = 0.5;
    double learning_rate = 1e-4;
    int batch_size = 512;
    int max_epochs = 100;
    int patience = 10;
    double min_improvement = 1e-3;
    // fixed Adam constants, recorded here so runs are fully specified
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// Binary discriminator with a fixed topology: embedding -> per-layer 1-D
// convolution + ReLU -> max-over-time pooling (padding masked out) ->
// concat -> inverted dropout (train only) -> affine -> sigmoid. Every
// sequence is framed as [BOS, tokens..., EOS] and padded to frame_len, so
// start, end, and interior n-grams are all visible to the windows. All
// parameters live in one flat vector; gradients are hand-derived.
class ClassifierModel {
public:
    ClassifierModel(ClassifierConfig cfg, TokenId vocab_size, int32_t frame_len,
                    uint64_t init_seed);

    const ClassifierConfig& config() const { return cfg_; }
    TokenId vocab_size() const { return vocab_size_; }
    int32_t frame_len() const { return frame_len_; }
    int32_t max_tokens() const { return frame_len_ - 2; }  // minus BOS/EOS

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // flat layout: embeddings, then per layer kernels + biases, then the
    // final affine weights and bias
    size_t embedding_offset(TokenId id) const {
        return static_cast<size_t>(id) * static_cast<size_t>(cfg_.embedding_dim);
    }
    size_t kernel_offset(size_t layer) const { return k_off_.at(layer); }
    size_t bias_offset(size_t layer) const { return b_off_.at(layer); }
    size_t affine_offset() const { return a_off_; }
    size_t affine_bias_offset() const { return c_off_; }
    size_t n_features() const { return n_features_; }

    // eval-mode probability z per example (no dropout)
    std::vector<double> forward(const std::vector<TokenSequence>& batch) const;

    // mean binary cross-entropy and exact analytic gradients; grads is
    // resized and overwritten; dropout masks come from rng (nullptr or
    // dropout == 0 disables dropout)
    double loss_and_grads(const std::vector<TokenSequence>& batch,
                          const std::vector<int>& labels, std::vector<double>& grads,
                          Rng* dropout_rng) const;

    // versioned checkpoint, bit-exact parameter round-trip
    void save(const std::string& path) const;
    static ClassifierModel load(const std::string& path);

private:
    struct Scratch;
    double example_forward(const TokenSequence& seq, Scratch& s,
                           const double* dropout_mask) const;

    ClassifierConfig cfg_;
    TokenId vocab_size_;
    int32_t frame_len_;
    size_t n_features_;         // total pooled kernels
    std::vector<size_t> k_off_; // per-layer kernel offset into params
    std::vector<size_t> b_off_; // per-layer bias offset
    size_t a_off_;              // final affine weights
    size_t c_off_;              // final affine bias
    std::vector<double> params_;
};

struct DdReport {
    double accuracy = 0.0;       // held-out test accuracy, feeds dd
    double error = 0.0;          // 1 - accuracy
    double dd = 0.0;             // max(0, 2*accuracy - 1)
    double dev_accuracy = 0.0;   // best dev accuracy (checkpoint)
    double acc_real = 0.0;       // per-class on test
    double acc_generated = 0.0;
    int epochs_run = 0;
    int best_epoch = 0;
    size_t n_train = 0;
    size_t n_dev = 0;
    size_t n_test = 0;
    uint64_t seed = 0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
};

struct TrainResult {
    ClassifierModel model;
    DdReport report;
    std::vector<EpochLog> log;
};

// the full protocol: balance by seeded downsampling, split 80/10/10 per
// side, train with Adam until dev accuracy stops improving, return the
// checkpoint with the highest dev accuracy and its test-set DdReport
TrainResult train_classifier(const ClassifierConfig& cfg, const Corpus& real,
                             const Corpus& generated, uint64_t seed,
                             const SplitSpec& split = SplitSpec{});

struct EvalResult {
    double accuracy = 0.0;
    double acc_positive = 0.0;
    double acc_negative = 0.0;
};

// threshold z >= 0.5 (ties predict positive); labels are 1 = real, 0 = generated
EvalResult evaluate(const ClassifierModel& model, const std::vector<TokenSequence>& batch,
                    const std::vector<int>& labels);

// dd estimate from held-out accuracy, clamped at 0 from below
DdScore dd_from_accuracy(double accuracy);

}  // namespace ddeval
