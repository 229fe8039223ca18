// SPDX-License-Identifier: Apache-2.0
#include "ddeval/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ddeval/errors.hpp"
#include "ddeval/rng.hpp"

namespace ddeval {

namespace {

constexpr double kBleuEps = 1e-9;

// FNV-1a over the id bytes
size_t hash_ids(const std::vector<TokenId>& v) {
    uint64_t h = 1469598103934665603ULL;
    for (const TokenId id : v) {
        auto u = static_cast<uint32_t>(id);
        for (int i = 0; i < 4; ++i) {
            h ^= (u >> (8 * i)) & 0xffu;
            h *= 1099511628211ULL;
        }
    }
    return static_cast<size_t>(h);
}

}  // namespace

size_t TokenVecHash::operator()(const std::vector<TokenId>& v) const { return hash_ids(v); }

// --- BLEU -------------------------------------------------------------

namespace {

using GramCounts = std::unordered_map<std::vector<TokenId>, int, TokenVecHash>;

GramCounts count_grams(const TokenSequence& s, int n) {
    GramCounts out;
    if (static_cast<int>(s.size()) >= n) {
        for (size_t t = 0; t + static_cast<size_t>(n) <= s.size(); ++t)
            out[std::vector<TokenId>(s.begin() + static_cast<ptrdiff_t>(t),
                                     s.begin() + static_cast<ptrdiff_t>(t) + n)] += 1;
    }
    return out;
}

// per-gram maximum within any single reference sentence
struct RefTables {
    std::vector<GramCounts> max_counts;  // index n-1
    std::vector<int64_t> lengths;        // sorted

    RefTables(const std::vector<TokenSequence>& refs, int max_n) : max_counts(max_n) {
        for (const auto& r : refs) {
            lengths.push_back(static_cast<int64_t>(r.size()));
            for (int n = 1; n <= max_n; ++n)
                for (const auto& [g, c] : count_grams(r, n)) {
                    auto& best = max_counts[static_cast<size_t>(n - 1)][g];
                    best = std::max(best, c);
                }
        }
        std::sort(lengths.begin(), lengths.end());
    }
};

// closest reference length, ties to the shorter one
int64_t closest_length(const std::vector<int64_t>& sorted, int64_t c) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), c);
    if (it == sorted.begin()) return *it;
    if (it == sorted.end()) return sorted.back();
    const int64_t hi = *it, lo = *(it - 1);
    return (c - lo <= hi - c) ? lo : hi;
}

double geometric_bleu(const std::vector<double>& precisions, int64_t cand_len,
                      int64_t ref_len) {
    double log_sum = 0.0;
    for (const double p : precisions) log_sum += std::log(p > 0.0 ? p : kBleuEps);
    const double bp =
        cand_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum / static_cast<double>(precisions.size()));
}

double bleu_against(const TokenSequence& cand, const RefTables& tables, int max_n) {
    if (cand.empty()) return 0.0;
    std::vector<double> precisions;
    for (int n = 1; n <= max_n; ++n) {
        const auto grams = count_grams(cand, n);
        const int64_t total = std::max<int64_t>(static_cast<int64_t>(cand.size()) - n + 1, 0);
        int64_t clipped = 0;
        const auto& ref_max = tables.max_counts[static_cast<size_t>(n - 1)];
        for (const auto& [g, c] : grams) {
            const auto it = ref_max.find(g);
            if (it != ref_max.end()) clipped += std::min(c, it->second);
        }
        precisions.push_back(total > 0 ? static_cast<double>(clipped) / static_cast<double>(total)
                                       : 0.0);
    }
    const int64_t r = closest_length(tables.lengths, static_cast<int64_t>(cand.size()));
    return geometric_bleu(precisions, static_cast<int64_t>(cand.size()), r);
}

}  // namespace

double sentence_bleu(const TokenSequence& candidate,
                     const std::vector<TokenSequence>& references, int max_n) {
    if (max_n < 1) throw UsageError("bleu max_n must be >= 1");
    if (references.empty()) throw DataError("bleu needs at least one reference");
    return bleu_against(candidate, RefTables(references, max_n), max_n);
}

double bleu(const Corpus& candidates, const Corpus& references, int max_n) {
    if (max_n < 1) throw UsageError("bleu max_n must be >= 1");
    if (candidates.empty() || references.empty())
        throw DataError("bleu needs non-empty candidate and reference corpora");
    const RefTables tables(references.sequences, max_n);
    double sum = 0.0;
    for (const auto& cand : candidates.sequences) sum += bleu_against(cand, tables, max_n);
    return sum / static_cast<double>(candidates.size());
}

// --- self-BLEU -----------------------------------------------------------

namespace {

// leave-one-out maxima: per gram, the best and second-best within-sentence
// count and how many sentences achieve the best
struct Top2 {
    int best = 0;
    int n_best = 0;
    int second = 0;
};

}  // namespace

double self_bleu(const Corpus& corpus, int max_n, size_t eval_cap, uint64_t seed) {
    if (max_n < 1) throw UsageError("bleu max_n must be >= 1");
    if (eval_cap < 1) throw UsageError("self_bleu eval_cap must be >= 1");
    if (corpus.size() < 2) throw DataError("self_bleu needs at least 2 sentences");
    const auto& seqs = corpus.sequences;

    std::vector<std::unordered_map<std::vector<TokenId>, Top2, TokenVecHash>> tables(
        static_cast<size_t>(max_n));
    std::vector<int64_t> lengths;
    for (const auto& s : seqs) {
        lengths.push_back(static_cast<int64_t>(s.size()));
        for (int n = 1; n <= max_n; ++n)
            for (const auto& [g, c] : count_grams(s, n)) {
                Top2& e = tables[static_cast<size_t>(n - 1)][g];
                if (c > e.best) {
                    e.second = e.best;
                    e.best = c;
                    e.n_best = 1;
                } else if (c == e.best) {
                    ++e.n_best;
                } else {
                    e.second = std::max(e.second, c);
                }
            }
    }
    std::sort(lengths.begin(), lengths.end());

    // canonical order, then a seeded subsample: the value depends only on
    // the sentence multiset
    std::vector<size_t> idx(seqs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return seqs[a] < seqs[b]; });
    if (seqs.size() > eval_cap) {
        Rng rng(seed);
        rng.shuffle(idx);
        idx.resize(eval_cap);
    }

    double sum = 0.0;
    for (const size_t i : idx) {
        const auto& cand = seqs[i];
        if (cand.empty()) continue;  // scored as 0, same as bleu()
        std::vector<double> precisions;
        for (int n = 1; n <= max_n; ++n) {
            const auto grams = count_grams(cand, n);
            const int64_t total =
                std::max<int64_t>(static_cast<int64_t>(cand.size()) - n + 1, 0);
            int64_t clipped = 0;
            const auto& table = tables[static_cast<size_t>(n - 1)];
            for (const auto& [g, c] : grams) {
                const Top2& e = table.at(g);
                const int loo_max = (c == e.best && e.n_best == 1) ? e.second : e.best;
                clipped += std::min(c, loo_max);
            }
            precisions.push_back(
                total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0);
        }

        // closest other-sentence length: drop one instance of our own length
        const auto c_len = static_cast<int64_t>(cand.size());
        int64_t r;
        const auto lo = std::lower_bound(lengths.begin(), lengths.end(), c_len);
        const auto hi = std::upper_bound(lengths.begin(), lengths.end(), c_len);
        if (hi - lo >= 2) {
            r = c_len;  // another sentence shares the length
        } else {
            int64_t best_r = std::numeric_limits<int64_t>::max();
            int64_t best_gap = std::numeric_limits<int64_t>::max();
            const auto consider = [&](int64_t len) {
                const int64_t gap = std::abs(len - c_len);
                if (gap < best_gap || (gap == best_gap && len < best_r)) {
                    best_gap = gap;
                    best_r = len;
                }
            };
            if (lo != lengths.begin()) consider(*(lo - 1));
            if (hi != lengths.end()) consider(*hi);
            r = best_r;
        }
        sum += geometric_bleu(precisions, c_len, r);
    }
    return sum / static_cast<double>(idx.size());
}

// --- Kneser-Ney -----------------------------------------------------------

NgramTable::NgramTable(const Corpus& corpus, int order, double discount)
    : order_(order), discount_(discount) {
    if (order_ < 1) throw UsageError("ngram order must be >= 1");
    if (discount_ <= 0.0 || discount_ >= 1.0) throw UsageError("discount must be in (0, 1)");
    if (corpus.empty()) throw DataError("cannot fit an lm on an empty corpus");
    if (!corpus.vocab) throw DataError("corpus has no vocab");
    vocab_size_ = corpus.vocab->size();

    raw_.resize(static_cast<size_t>(order_));
    cont_.resize(static_cast<size_t>(order_));

    const auto add = [](Level& lv, const std::vector<TokenId>& gram, double c) {
        const std::vector<TokenId> ctx(gram.begin(), gram.end() - 1);
        auto [it, fresh] = lv.gram.emplace(gram, 0.0);
        if (it->second == 0.0) lv.ctx_types[ctx] += 1.0;
        it->second += c;
        lv.ctx_total[ctx] += c;
        (void)fresh;
    };

    for (const auto& sent : corpus.sequences) {
        std::vector<TokenId> framed(static_cast<size_t>(order_ - 1), Vocab::kBos);
        for (const TokenId t : sent) {
            if (t < 0 || t >= vocab_size_)
                throw DataError("token id " + std::to_string(t) + " outside lm vocab");
            framed.push_back(t);
        }
        framed.push_back(Vocab::kEos);
        for (int n = 1; n <= order_; ++n) {
            const auto start = static_cast<size_t>(order_ - n);
            for (size_t t = start; t + static_cast<size_t>(n) <= framed.size(); ++t)
                add(raw_[static_cast<size_t>(n - 1)],
                    std::vector<TokenId>(framed.begin() + static_cast<ptrdiff_t>(t),
                                         framed.begin() + static_cast<ptrdiff_t>(t) + n),
                    1.0);
        }
    }

    // continuation counts at order n: one unit per distinct (n+1)-gram suffix
    for (int n = 1; n < order_; ++n) {
        Level& lv = cont_[static_cast<size_t>(n - 1)];
        for (const auto& [gram, c] : raw_[static_cast<size_t>(n)].gram) {
            (void)c;
            add(lv, std::vector<TokenId>(gram.begin() + 1, gram.end()), 1.0);
        }
    }
}

double NgramTable::prob_at(int n, const std::vector<TokenId>& context, TokenId w) const {
    // context holds order-1 ids; level n uses its most recent n-1
    if (n == 1) {
        const Level& lv = order_ == 1 ? raw_[0] : cont_[0];
        const auto total_it = lv.ctx_total.find({});
        const double total = total_it == lv.ctx_total.end() ? 0.0 : total_it->second;
        const double uniform = 1.0 / static_cast<double>(vocab_size_);
        if (total == 0.0) return uniform;
        const auto g_it = lv.gram.find({w});
        const double cnt = g_it == lv.gram.end() ? 0.0 : g_it->second;
        const double types = lv.ctx_types.at({});
        return std::max(cnt - discount_, 0.0) / total +
               discount_ * types / total * uniform;
    }
    const Level& lv = n == order_ ? raw_[static_cast<size_t>(n - 1)]
                                  : cont_[static_cast<size_t>(n - 1)];
    const std::vector<TokenId> ctx(context.end() - (n - 1), context.end());
    const auto total_it = lv.ctx_total.find(ctx);
    if (total_it == lv.ctx_total.end()) return prob_at(n - 1, context, w);
    const double total = total_it->second;
    std::vector<TokenId> gram = ctx;
    gram.push_back(w);
    const auto g_it = lv.gram.find(gram);
    const double cnt = g_it == lv.gram.end() ? 0.0 : g_it->second;
    const double types = lv.ctx_types.at(ctx);
    return std::max(cnt - discount_, 0.0) / total +
           discount_ * types / total * prob_at(n - 1, context, w);
}

double NgramTable::cond_prob(const std::vector<TokenId>& context, TokenId w) const {
    if (w < 0 || w >= vocab_size_) throw UsageError("token id outside lm vocab");
    std::vector<TokenId> padded(static_cast<size_t>(order_ - 1), Vocab::kBos);
    const size_t take = std::min(context.size(), static_cast<size_t>(order_ - 1));
    std::copy(context.end() - static_cast<ptrdiff_t>(take), context.end(),
              padded.end() - static_cast<ptrdiff_t>(take));
    return prob_at(order_, padded, w);
}

std::pair<double, size_t> NgramTable::sequence_nll(const TokenSequence& x) const {
    std::vector<TokenId> framed(static_cast<size_t>(order_ - 1), Vocab::kBos);
    for (const TokenId t : x) {
        if (t < 0 || t >= vocab_size_)
            throw DataError("token id " + std::to_string(t) + " outside lm vocab");
        framed.push_back(t);
    }
    framed.push_back(Vocab::kEos);
    double nll = 0.0;
    for (size_t t = static_cast<size_t>(order_ - 1); t < framed.size(); ++t) {
        const std::vector<TokenId> ctx(framed.begin() + static_cast<ptrdiff_t>(t) -
                                           (order_ - 1),
                                       framed.begin() + static_cast<ptrdiff_t>(t));
        nll -= std::log(prob_at(order_, ctx, framed[t]));
    }
    return {nll, x.size() + 1};
}

double kn_score(const NgramTable& lm, const Corpus& scored) {
    if (scored.empty()) throw DataError("cannot score an empty corpus");
    double nll = 0.0;
    size_t events = 0;
    for (const auto& s : scored.sequences) {
        const auto [n, e] = lm.sequence_nll(s);
        nll += n;
        events += e;
    }
    return nll / static_cast<double>(events);
}

// --- Frechet embedding distance ------------------------------------------

std::vector<double> EmbeddingModel::embed_token(TokenId id) const {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(static_cast<uint32_t>(id))));
    std::vector<double> v(static_cast<size_t>(dim));
    for (int i = 0; i < dim; i += 2) {
        // Box-Muller; u1 shifted into (0, 1]
        const double u1 = 1.0 - rng.next_double();
        const double u2 = rng.next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        v[static_cast<size_t>(i)] = r * std::cos(2.0 * M_PI * u2);
        if (i + 1 < dim) v[static_cast<size_t>(i) + 1] = r * std::sin(2.0 * M_PI * u2);
    }
    return v;
}

Eigen::VectorXd EmbeddingModel::embed(const TokenSequence& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
    if (x.empty()) return out;
    for (const TokenId t : x) {
        const auto v = embed_token(t);
        for (int i = 0; i < dim; ++i) out[i] += v[static_cast<size_t>(i)];
    }
    out /= static_cast<double>(x.size());
    return out;
}

GaussianFit fit_gaussian(const std::vector<Eigen::VectorXd>& points, double reg) {
    if (points.size() < 2) throw DataError("gaussian fit needs at least 2 points");
    const auto n = static_cast<Eigen::Index>(points.size());
    const Eigen::Index d = points.front().size();
    GaussianFit fit;
    fit.mu = Eigen::VectorXd::Zero(d);
    for (const auto& p : points) {
        if (p.size() != d) throw UsageError("embedding dimension mismatch");
        fit.mu += p;
    }
    fit.mu /= static_cast<double>(n);
    fit.sigma = Eigen::MatrixXd::Zero(d, d);
    for (const auto& p : points) {
        const Eigen::VectorXd c = p - fit.mu;
        fit.sigma.noalias() += c * c.transpose();
    }
    fit.sigma /= static_cast<double>(n - 1);
    fit.sigma += reg * Eigen::MatrixXd::Identity(d, d);
    return fit;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.mu.size() != b.mu.size()) throw UsageError("gaussian dimension mismatch");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(a.sigma);
    if (es_a.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const Eigen::MatrixXd root_a = es_a.eigenvectors() *
                                   es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                   es_a.eigenvectors().transpose();

    Eigen::MatrixXd m = root_a * b.sigma * root_a;
    m = ((m + m.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(m);
    if (es_m.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    const double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (a.mu - b.mu).squaredNorm();
    const double value = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
    return std::max(value, 0.0);
}

double fed(const Corpus& corpus_a, const Corpus& corpus_b, const EmbeddingModel& emb) {
    if (corpus_a.size() < 2 || corpus_b.size() < 2)
        throw DataError("fed needs at least 2 sequences per corpus");
    std::vector<Eigen::VectorXd> pa, pb;
    pa.reserve(corpus_a.size());
    pb.reserve(corpus_b.size());
    for (const auto& s : corpus_a.sequences) pa.push_back(emb.embed(s));
    for (const auto& s : corpus_b.sequences) pb.push_back(emb.embed(s));
    return frechet_distance(fit_gaussian(pa), fit_gaussian(pb));
}

}  // namespace ddeval
