// SPDX-License-Identifier: Apache-2.0
#include "ddeval/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "binio.hpp"
#include "ddeval/errors.hpp"

namespace ddeval {

using namespace binio;

namespace {

constexpr uint32_t kCheckpointMagic = 0x46434444;  // "DDCF"
constexpr uint32_t kCheckpointVersion = 1;
constexpr double kProbClamp = 1e-7;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void ClassifierConfig::validate() const {
    if (embedding_dim < 1) throw UsageError("embedding_dim must be >= 1");
    if (layers.empty()) throw UsageError("at least one conv layer is required");
    for (const auto& [w, k] : layers) {
        if (w < 1) throw UsageError("conv window must be >= 1");
        if (k < 1) throw UsageError("conv kernel count must be >= 1");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must be in [0, 1)");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
    if (patience < 1) throw UsageError("patience must be >= 1");
    if (min_improvement < 0.0) throw UsageError("min_improvement must be >= 0");
}

ClassifierModel::ClassifierModel(ClassifierConfig cfg, TokenId vocab_size,
                                 int32_t frame_len, uint64_t init_seed)
    : cfg_(std::move(cfg)), vocab_size_(vocab_size), frame_len_(frame_len) {
    cfg_.validate();
    if (vocab_size_ < Vocab::kNumReserved) throw UsageError("vocab_size too small");
    int max_window = 0;
    for (const auto& [w, k] : cfg_.layers) max_window = std::max(max_window, w);
    if (frame_len_ < max_window || frame_len_ < 2)
        throw UsageError("frame_len must cover BOS/EOS and the widest window");

    const size_t d = static_cast<size_t>(cfg_.embedding_dim);
    size_t off = static_cast<size_t>(vocab_size_) * d;
    n_features_ = 0;
    for (const auto& [w, k] : cfg_.layers) {
        k_off_.push_back(off);
        off += static_cast<size_t>(k) * static_cast<size_t>(w) * d;
        b_off_.push_back(off);
        off += static_cast<size_t>(k);
        n_features_ += static_cast<size_t>(k);
    }
    a_off_ = off;
    off += n_features_;
    c_off_ = off;
    params_.assign(off + 1, 0.0);

    Rng rng(init_seed);
    auto uniform = [&rng](double scale) { return (2.0 * rng.next_double() - 1.0) * scale; };
    for (size_t i = 0; i < static_cast<size_t>(vocab_size_) * d; ++i)
        params_[i] = uniform(0.1);
    for (size_t l = 0; l < cfg_.layers.size(); ++l) {
        const auto [w, k] = cfg_.layers[l];
        const double scale = std::sqrt(6.0 / (static_cast<double>(w) * static_cast<double>(d) + 1.0));
        for (size_t i = 0; i < static_cast<size_t>(k) * static_cast<size_t>(w) * d; ++i)
            params_[k_off_[l] + i] = uniform(scale);
        // biases stay zero
    }
    const double a_scale = std::sqrt(6.0 / (static_cast<double>(n_features_) + 1.0));
    for (size_t f = 0; f < n_features_; ++f) params_[a_off_ + f] = uniform(a_scale);
    // final bias stays zero
}

struct ClassifierModel::Scratch {
    std::vector<TokenId> ids;
    std::vector<double> X;
    std::vector<double> h;       // pooled, post-ReLU, pre-dropout
    std::vector<int> argmax;     // winning window position per feature
    std::vector<double> dX;
};

double ClassifierModel::example_forward(const TokenSequence& seq, Scratch& s,
                                        const double* dropout_mask) const {
    const int d = cfg_.embedding_dim;
    const int W = frame_len_;
    const int len = static_cast<int>(seq.size());
    if (len + 2 > W)
        throw DataError("sequence of length " + std::to_string(len) +
                        " does not fit classifier frame " + std::to_string(W));

    s.ids.assign(static_cast<size_t>(W), Vocab::kPad);
    s.ids[0] = Vocab::kBos;
    for (int i = 0; i < len; ++i) {
        const TokenId t = seq[static_cast<size_t>(i)];
        if (t < 0 || t >= vocab_size_)
            throw DataError("token id " + std::to_string(t) + " outside classifier vocab");
        s.ids[static_cast<size_t>(i + 1)] = t;
    }
    s.ids[static_cast<size_t>(len + 1)] = Vocab::kEos;
    const int flen = len + 2;

    s.X.resize(static_cast<size_t>(W) * static_cast<size_t>(d));
    for (int p = 0; p < W; ++p) {
        const double* row = params_.data() + static_cast<size_t>(s.ids[static_cast<size_t>(p)]) * d;
        std::copy(row, row + d, s.X.data() + static_cast<size_t>(p) * d);
    }

    s.h.resize(n_features_);
    s.argmax.resize(n_features_);
    size_t f = 0;
    for (size_t l = 0; l < cfg_.layers.size(); ++l) {
        const auto [w, k] = cfg_.layers[l];
        const int span = w * d;
        const int n_valid = std::max(flen - w + 1, 1);
        const double* kern = params_.data() + k_off_[l];
        const double* bias = params_.data() + b_off_[l];
        for (int j = 0; j < k; ++j, ++f) {
            const double* kj = kern + static_cast<size_t>(j) * static_cast<size_t>(span);
            double best = -std::numeric_limits<double>::infinity();
            int best_t = 0;
            for (int t = 0; t < n_valid; ++t) {
                const double* x = s.X.data() + static_cast<size_t>(t) * d;
                double pre = bias[j];
                for (int u = 0; u < span; ++u) pre += kj[u] * x[u];
                if (pre > best) {
                    best = pre;
                    best_t = t;
                }
            }
            s.h[f] = best > 0.0 ? best : 0.0;
            s.argmax[f] = best_t;
        }
    }

    double logit = params_[c_off_];
    const double* a = params_.data() + a_off_;
    if (dropout_mask != nullptr) {
        for (size_t i = 0; i < n_features_; ++i) logit += a[i] * s.h[i] * dropout_mask[i];
    } else {
        for (size_t i = 0; i < n_features_; ++i) logit += a[i] * s.h[i];
    }
    return sigmoid(logit);
}

std::vector<double> ClassifierModel::forward(const std::vector<TokenSequence>& batch) const {
    Scratch s;
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& seq : batch) out.push_back(example_forward(seq, s, nullptr));
    return out;
}

double ClassifierModel::loss_and_grads(const std::vector<TokenSequence>& batch,
                                       const std::vector<int>& labels,
                                       std::vector<double>& grads, Rng* dropout_rng) const {
    if (batch.empty()) throw DataError("empty classifier batch");
    if (batch.size() != labels.size()) throw UsageError("batch/label size mismatch");
    grads.assign(params_.size(), 0.0);

    const int d = cfg_.embedding_dim;
    const int W = frame_len_;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const bool use_dropout = dropout_rng != nullptr && cfg_.dropout > 0.0;
    const double keep = 1.0 - cfg_.dropout;

    Scratch s;
    std::vector<double> mask(n_features_, 1.0);
    double loss = 0.0;

    for (size_t i = 0; i < batch.size(); ++i) {
        if (use_dropout) {
            for (size_t f = 0; f < n_features_; ++f)
                mask[f] = dropout_rng->next_double() < keep ? 1.0 / keep : 0.0;
        }
        const double z = example_forward(batch[i], s, use_dropout ? mask.data() : nullptr);
        const double y = labels[i] != 0 ? 1.0 : 0.0;
        const double zc = std::clamp(z, kProbClamp, 1.0 - kProbClamp);
        loss -= (y * std::log(zc) + (1.0 - y) * std::log(1.0 - zc)) * inv_b;

        // the clamp flattens the loss outside [eps, 1-eps], so no gradient there
        if (z < kProbClamp || z > 1.0 - kProbClamp) continue;
        const double dlogit = (z - y) * inv_b;

        grads[c_off_] += dlogit;
        const double* a = params_.data() + a_off_;
        s.dX.assign(static_cast<size_t>(W) * static_cast<size_t>(d), 0.0);
        size_t f = 0;
        for (size_t l = 0; l < cfg_.layers.size(); ++l) {
            const auto [w, k] = cfg_.layers[l];
            const int span = w * d;
            const double* kern = params_.data() + k_off_[l];
            double* gkern = grads.data() + k_off_[l];
            for (int j = 0; j < k; ++j, ++f) {
                const double m = use_dropout ? mask[f] : 1.0;
                grads[a_off_ + f] += dlogit * s.h[f] * m;
                if (s.h[f] <= 0.0 || m == 0.0) continue;
                const double dpre = dlogit * a[f] * m;
                grads[b_off_[l] + static_cast<size_t>(j)] += dpre;
                const double* kj = kern + static_cast<size_t>(j) * static_cast<size_t>(span);
                double* gkj = gkern + static_cast<size_t>(j) * static_cast<size_t>(span);
                const size_t base = static_cast<size_t>(s.argmax[f]) * static_cast<size_t>(d);
                const double* x = s.X.data() + base;
                double* dx = s.dX.data() + base;
                for (int u = 0; u < span; ++u) {
                    gkj[u] += dpre * x[u];
                    dx[u] += dpre * kj[u];
                }
            }
        }
        for (int p = 0; p < W; ++p) {
            double* ge = grads.data() + static_cast<size_t>(s.ids[static_cast<size_t>(p)]) * d;
            const double* dx = s.dX.data() + static_cast<size_t>(p) * d;
            for (int e = 0; e < d; ++e) ge[e] += dx[e];
        }
    }
    return loss;
}

void ClassifierModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    write_u32(out, kCheckpointMagic);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<uint32_t>(vocab_size_));
    write_u32(out, static_cast<uint32_t>(frame_len_));
    write_u32(out, static_cast<uint32_t>(cfg_.embedding_dim));
    write_u32(out, static_cast<uint32_t>(cfg_.layers.size()));
    for (const auto& [w, k] : cfg_.layers) {
        write_u32(out, static_cast<uint32_t>(w));
        write_u32(out, static_cast<uint32_t>(k));
    }
    write_f64(out, cfg_.dropout);
    write_f64(out, cfg_.learning_rate);
    write_u32(out, static_cast<uint32_t>(cfg_.batch_size));
    write_u32(out, static_cast<uint32_t>(cfg_.max_epochs));
    write_u32(out, static_cast<uint32_t>(cfg_.patience));
    write_f64(out, cfg_.min_improvement);
    write_f64(out, cfg_.adam_beta1);
    write_f64(out, cfg_.adam_beta2);
    write_f64(out, cfg_.adam_eps);
    write_u64(out, params_.size());
    for (const double v : params_) write_f64(out, v);
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

ClassifierModel ClassifierModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    if (read_u32(in) != kCheckpointMagic) throw DataError("not a checkpoint file: " + path);
    const uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    const auto vocab_size = static_cast<TokenId>(read_u32(in));
    const auto frame_len = static_cast<int32_t>(read_u32(in));
    ClassifierConfig cfg;
    cfg.embedding_dim = static_cast<int>(read_u32(in));
    const uint32_t n_layers = read_u32(in);
    cfg.layers.clear();
    for (uint32_t l = 0; l < n_layers; ++l) {
        const int w = static_cast<int>(read_u32(in));
        const int k = static_cast<int>(read_u32(in));
        cfg.layers.emplace_back(w, k);
    }
    cfg.dropout = read_f64(in);
    cfg.learning_rate = read_f64(in);
    cfg.batch_size = static_cast<int>(read_u32(in));
    cfg.max_epochs = static_cast<int>(read_u32(in));
    cfg.patience = static_cast<int>(read_u32(in));
    cfg.min_improvement = read_f64(in);
    cfg.adam_beta1 = read_f64(in);
    cfg.adam_beta2 = read_f64(in);
    cfg.adam_eps = read_f64(in);
    ClassifierModel model(cfg, vocab_size, frame_len, 0);
    const uint64_t n = read_u64(in);
    if (n != model.params_.size()) throw DataError("checkpoint parameter count mismatch");
    for (auto& v : model.params_) v = read_f64(in);
    if (!in) throw DataError("truncated checkpoint: " + path);
    return model;
}

EvalResult evaluate(const ClassifierModel& model, const std::vector<TokenSequence>& batch,
                    const std::vector<int>& labels) {
    if (batch.size() != labels.size()) throw UsageError("batch/label size mismatch");
    if (batch.empty()) throw DataError("empty evaluation set");
    const auto z = model.forward(batch);
    size_t n_pos = 0, n_neg = 0, hit_pos = 0, hit_neg = 0;
    for (size_t i = 0; i < z.size(); ++i) {
        const bool predicted_real = z[i] >= 0.5;  // ties count as the positive class
        if (labels[i] != 0) {
            ++n_pos;
            if (predicted_real) ++hit_pos;
        } else {
            ++n_neg;
            if (!predicted_real) ++hit_neg;
        }
    }
    EvalResult r;
    r.accuracy = static_cast<double>(hit_pos + hit_neg) / static_cast<double>(z.size());
    r.acc_positive = n_pos > 0 ? static_cast<double>(hit_pos) / static_cast<double>(n_pos) : 0.0;
    r.acc_negative = n_neg > 0 ? static_cast<double>(hit_neg) / static_cast<double>(n_neg) : 0.0;
    return r;
}

DdScore dd_from_accuracy(double accuracy) {
    DdScore s;
    s.value = std::max(0.0, 2.0 * accuracy - 1.0);
    s.method = DdMethod::ClassifierEstimate;
    return s;
}

namespace {

struct LabeledSet {
    std::vector<TokenSequence> seqs;
    std::vector<int> labels;

    void append(const Corpus& c, int label) {
        for (const auto& s : c.sequences) {
            seqs.push_back(s);
            labels.push_back(label);
        }
    }
};

Corpus downsample(const Corpus& c, size_t n, Rng rng) {
    if (c.size() <= n) return c;
    Corpus out = c;
    rng.shuffle(out.sequences);
    out.sequences.resize(n);
    return out;
}

void require_same_vocab(const Corpus& real, const Corpus& generated) {
    if (!real.vocab || !generated.vocab) throw DataError("corpus has no vocab");
    if (real.vocab->size() != generated.vocab->size())
        throw DataError("vocab mismatch between real and generated corpora");
    for (TokenId id = Vocab::kNumReserved; id < real.vocab->size(); ++id)
        if (real.vocab->token_of(id) != generated.vocab->token_of(id))
            throw DataError("vocab mismatch between real and generated corpora");
}

}  // namespace

TrainResult train_classifier(const ClassifierConfig& cfg, const Corpus& real,
                             const Corpus& generated, uint64_t seed,
                             const SplitSpec& split) {
    cfg.validate();
    split.validate();
    if (real.empty() || generated.empty())
        throw DataError("classifier training needs non-empty corpora");
    require_same_vocab(real, generated);

    const Rng root(seed);
    const size_t n = std::min(real.size(), generated.size());
    const Corpus real_b = downsample(real, n, root.fork(1));
    const Corpus gen_b = downsample(generated, n, root.fork(2));

    int32_t max_tokens = 0;
    for (const auto& s : real_b.sequences)
        max_tokens = std::max<int32_t>(max_tokens, static_cast<int32_t>(s.size()));
    for (const auto& s : gen_b.sequences)
        max_tokens = std::max<int32_t>(max_tokens, static_cast<int32_t>(s.size()));
    int32_t frame = max_tokens + 2;
    for (const auto& [w, k] : cfg.layers) frame = std::max(frame, static_cast<int32_t>(w));

    const auto real_splits = split_corpus(real_b, split);
    const auto gen_splits = split_corpus(gen_b, split);
    LabeledSet train, dev, test;
    train.append(real_splits[0], 1);
    train.append(gen_splits[0], 0);
    dev.append(real_splits[1], 1);
    dev.append(gen_splits[1], 0);
    test.append(real_splits[2], 1);
    test.append(gen_splits[2], 0);

    ClassifierModel model(cfg, real_b.vocab->size(), frame, mix_seed(seed, 3));

    std::vector<double> grads, m(model.params().size(), 0.0), v(model.params().size(), 0.0);
    int64_t adam_t = 0;
    const auto adam_step = [&](const std::vector<double>& g) {
        ++adam_t;
        auto& p = model.params();
        const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
        }
    };

    std::vector<size_t> order(train.seqs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> best_params = model.params();
    double best_acc = -1.0;
    double patience_ref = -1.0;
    int best_epoch = 0;
    int epochs_without_gain = 0;
    std::vector<EpochLog> log;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng = root.fork(1000 + static_cast<uint64_t>(epoch));
        Rng dropout_rng = root.fork(2000 + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::vector<TokenSequence> batch;
        std::vector<int> labels;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            batch.clear();
            labels.clear();
            for (size_t i = start; i < stop; ++i) {
                batch.push_back(train.seqs[order[i]]);
                labels.push_back(train.labels[order[i]]);
            }
            const double loss = model.loss_and_grads(batch, labels, grads, &dropout_rng);
            epoch_loss += loss * static_cast<double>(batch.size());
            adam_step(grads);
        }
        epoch_loss /= static_cast<double>(order.size());

        const double dev_acc = evaluate(model, dev.seqs, dev.labels).accuracy;
        log.push_back({epoch, epoch_loss, dev_acc});
        if (dev_acc > best_acc) {
            best_acc = dev_acc;
            best_params = model.params();
            best_epoch = epoch;
        }
        if (dev_acc > patience_ref + cfg.min_improvement) {
            patience_ref = dev_acc;
            epochs_without_gain = 0;
        } else if (++epochs_without_gain >= cfg.patience) {
            break;
        }
    }

    model.params() = best_params;
    const EvalResult test_eval = evaluate(model, test.seqs, test.labels);

    DdReport report;
    report.accuracy = test_eval.accuracy;
    report.error = 1.0 - test_eval.accuracy;
    report.dd = dd_from_accuracy(test_eval.accuracy).value;
    report.dev_accuracy = best_acc;
    report.acc_real = test_eval.acc_positive;
    report.acc_generated = test_eval.acc_negative;
    report.epochs_run = static_cast<int>(log.size());
    report.best_epoch = best_epoch;
    report.n_train = train.seqs.size();
    report.n_dev = dev.seqs.size();
    report.n_test = test.seqs.size();
    report.seed = seed;

    return TrainResult{std::move(model), report, std::move(log)};
}

}  // namespace ddeval
