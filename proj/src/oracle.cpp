// SPDX-License-Identifier: Apache-2.0
#include "ddeval/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ddeval/errors.hpp"

namespace ddeval {

namespace {

// compensated accumulator; enumeration sums stay exact to O(eps) so the
// Eq. 1 and Eq. 2 routes agree at 1e-12 even over 10^5 leaves
struct Kahan {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) {
        const double y = v - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

std::vector<TokenId> union_support(const SparseRow& a, const SparseRow& b,
                                   int32_t n_outcomes) {
    std::vector<TokenId> ids;
    if (a.rest_prob > 0.0 || b.rest_prob > 0.0) {
        ids.resize(static_cast<size_t>(n_outcomes));
        for (int32_t i = 0; i < n_outcomes; ++i) ids[static_cast<size_t>(i)] = i;
        return ids;
    }
    ids.reserve(a.probs.size() + b.probs.size());
    size_t i = 0, j = 0;
    while (i < a.probs.size() || j < b.probs.size()) {
        if (j >= b.probs.size())
            ids.push_back(a.probs[i++].first);
        else if (i >= a.probs.size())
            ids.push_back(b.probs[j++].first);
        else if (a.probs[i].first < b.probs[j].first)
            ids.push_back(a.probs[i++].first);
        else if (b.probs[j].first < a.probs[i].first)
            ids.push_back(b.probs[j++].first);
        else {
            ids.push_back(a.probs[i].first);
            ++i;
            ++j;
        }
    }
    return ids;
}

struct PairWalk {
    PairWalk(const MarkovModel& p_in, const MarkovModel& q_in, int32_t len)
        : p(p_in), q(q_in), max_len(len) {}

    const MarkovModel& p;
    const MarkovModel& q;
    int32_t max_len;
    Kahan cap_p;
    Kahan cap_q;

    // visits every terminating sequence once with its exact pair of masses;
    // capped mass is aggregated into cap_p/cap_q
    template <class F>
    void run(F&& on_terminated) {
        walk(p.initial_context(), q.initial_context(), 0, 1.0, 1.0, on_terminated);
    }

    template <class F>
    void walk(uint64_t cp, uint64_t cq, int32_t depth, double pp, double pq,
              F&& on_terminated) {
        const SparseRow& rp = p.row(cp);
        const SparseRow& rq = q.row(cq);
        const TokenId eos = p.eos();
        for (TokenId o : union_support(rp, rq, p.n_outcomes())) {
            const double np = pp * rp.prob_of(o);
            const double nq = pq * rq.prob_of(o);
            if (np == 0.0 && nq == 0.0) continue;
            if (o == eos) {
                on_terminated(np, nq);
            } else if (depth + 1 == max_len) {
                cap_p.add(np);
                cap_q.add(nq);
            } else {
                walk(p.shift_context(cp, o), q.shift_context(cq, o), depth + 1, np, nq,
                     on_terminated);
            }
        }
    }
};

void require_compatible(const MarkovModel& p, const MarkovModel& q,
                        const SequenceSpace& space) {
    if (!space.enumerable())
        throw DataError("sequence space exceeds the enumeration budget; use tv_mc");
    if (p.vocab_size() != q.vocab_size())
        throw DataError("models have different vocab sizes");
    if (p.vocab_size() != space.vocab_size || p.max_len() != space.max_len ||
        q.max_len() != space.max_len)
        throw DataError("models do not match the sequence space");
}

}  // namespace

bool SequenceSpace::enumerable() const {
    const auto base = static_cast<uint64_t>(vocab_size) + 1;
    uint64_t total = 1;
    for (int32_t i = 0; i < max_len; ++i) {
        if (total > budget / base) return false;
        total *= base;
    }
    return total <= budget;
}

SequenceSpace SequenceSpace::of(const MarkovModel& model, uint64_t budget) {
    return SequenceSpace{model.vocab_size(), model.max_len(), budget};
}

MassSplit total_mass(const MarkovModel& model, const SequenceSpace& space) {
    require_compatible(model, model, space);
    Kahan terminated;
    PairWalk w(model, model, space.max_len);
    w.run([&](double pp, double) { terminated.add(pp); });
    return MassSplit{terminated.sum, w.cap_p.sum};
}

DdScore tv_exact(const MarkovModel& p, const MarkovModel& q, const SequenceSpace& space) {
    require_compatible(p, q, space);
    Kahan acc;
    uint64_t n = 0;
    PairWalk w(p, q, space.max_len);
    w.run([&](double pp, double pq) {
        acc.add(std::abs(pp - pq));
        ++n;
    });
    acc.add(std::abs(w.cap_p.sum - w.cap_q.sum));
    DdScore score;
    score.value = 0.5 * acc.sum;
    score.method = DdMethod::Enumerated;
    score.n = n + 1;
    return score;
}

DdScore tv_indicator_exact(const MarkovModel& p, const MarkovModel& q,
                           const SequenceSpace& space) {
    require_compatible(p, q, space);
    // Eq. 2: dd = (1/2)[P_p(z>=.5) + P_q(z<.5) - P_q(z>=.5) - P_p(z<.5)],
    // evaluated by exact weighting; z >= 0.5 iff p(x) >= q(x)
    Kahan p_hi, q_lo, q_hi, p_lo;
    uint64_t n = 0;
    const auto bucket = [&](double pp, double pq) {
        if (pp == 0.0 && pq == 0.0) return;
        if (pp >= pq) {
            p_hi.add(pp);
            q_hi.add(pq);
        } else {
            q_lo.add(pq);
            p_lo.add(pp);
        }
    };
    PairWalk w(p, q, space.max_len);
    w.run([&](double pp, double pq) {
        bucket(pp, pq);
        ++n;
    });
    bucket(w.cap_p.sum, w.cap_q.sum);
    DdScore score;
    score.value = 0.5 * ((p_hi.sum + q_lo.sum) - (q_hi.sum + p_lo.sum));
    score.method = DdMethod::Enumerated;
    score.n = n + 1;
    return score;
}

DdScore tv_mc(const MarkovModel& p, const MarkovModel& q, size_t n, uint64_t seed) {
    if (n < 1000) throw DataError("tv_mc needs n >= 1000 samples per side");
    if (p.vocab_size() != q.vocab_size())
        throw DataError("models have different vocab sizes");
    if (p.max_len() != q.max_len())
        throw DataError("models have different max_len");

    const Corpus from_p = sample(p, n, mix_seed(seed, 1));
    const Corpus from_q = sample(q, n, mix_seed(seed, 2));

    // z >= 0.5 iff log p(x) >= log q(x); ties join the >= branch
    size_t p_hi = 0;
    for (const auto& x : from_p.sequences)
        if (sequence_logprob(p, x) >= sequence_logprob(q, x)) ++p_hi;
    size_t q_lo = 0;
    for (const auto& x : from_q.sequences)
        if (sequence_logprob(p, x) < sequence_logprob(q, x)) ++q_lo;

    const double a = static_cast<double>(p_hi) / static_cast<double>(n);
    const double b = static_cast<double>(q_lo) / static_cast<double>(n);
    DdScore score;
    // (1/2)[a + b - (1-b) - (1-a)] = a + b - 1, clamped into [0,1]
    score.value = std::clamp(a + b - 1.0, 0.0, 1.0);
    score.method = DdMethod::MonteCarlo;
    score.n = n;
    score.seed = seed;
    score.std_err =
        std::sqrt((a * (1.0 - a) + b * (1.0 - b)) / static_cast<double>(n));
    return score;
}

GoldRank gold_rank(const std::vector<GeneratorSpec>& family, const MarkovModel& reference,
                   size_t mc_n, uint64_t mc_seed) {
    if (family.empty()) throw DataError("gold_rank needs a non-empty family");
    GoldRank result;
    result.scores.reserve(family.size());
    const SequenceSpace space = SequenceSpace::of(reference);
    for (size_t i = 0; i < family.size(); ++i) {
        const MarkovModel g = realize(family[i]);
        result.scores.push_back(space.enumerable()
                                    ? tv_exact(reference, g, space)
                                    : tv_mc(reference, g, mc_n, mix_seed(mc_seed, i)));
    }
    result.order.resize(family.size());
    for (size_t i = 0; i < family.size(); ++i) result.order[i] = i;
    std::stable_sort(result.order.begin(), result.order.end(), [&](size_t a, size_t b) {
        return result.scores[a].value < result.scores[b].value;
    });
    return result;
}

}  // namespace ddeval
