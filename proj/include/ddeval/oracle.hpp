// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ddeval/markov.hpp"

namespace ddeval {

// The sample space: all token sequences up to max_len plus the aggregate
// cap bucket. Enumeration is allowed only under the budget.
struct SequenceSpace {
    TokenId vocab_size = 0;  // outcomes per step = vocab_size + 1 (EOS)
    int32_t max_len = 0;
    uint64_t budget = 10'000'000;

    bool enumerable() const;  // (V+1)^max_len <= budget
    static SequenceSpace of(const MarkovModel& model, uint64_t budget = 10'000'000);
};

enum class DdMethod { Enumerated, MonteCarlo, ClassifierEstimate };

struct DdScore {
    double value = 0.0;  // in [0,1]
    DdMethod method = DdMethod::Enumerated;
    uint64_t n = 0;       // outcomes enumerated, or MC samples per side
    double std_err = 0.0; // MonteCarlo only
    uint64_t seed = 0;    // MonteCarlo only
};

// terminated and cap-bucket probability mass of one model; the pair sums
// to 1 within 1e-9 for any well-formed model (tested at tiny scale)
struct MassSplit {
    double terminated = 0.0;
    double capped = 0.0;
};
MassSplit total_mass(const MarkovModel& model, const SequenceSpace& space);

// dd via Eq. 1: (1/2) sum_x |p(x) - q(x)| over terminating sequences, plus
// the cap bucket as one aggregate outcome
DdScore tv_exact(const MarkovModel& p, const MarkovModel& q, const SequenceSpace& space);

// dd via the Eq. 2 indicator form with z = p/(p+q), evaluated exactly by
// weighted enumeration over the same space; equals tv_exact to 1e-12
DdScore tv_indicator_exact(const MarkovModel& p, const MarkovModel& q,
                           const SequenceSpace& space);

// dd via the Eq. 2 indicator form with n Monte-Carlo samples from each
// side and exact densities for z; ties z == 0.5 count as z >= 0.5
DdScore tv_mc(const MarkovModel& p, const MarkovModel& q, size_t n, uint64_t seed);

struct GoldRank {
    std::vector<size_t> order;    // family indices, ascending oracle dd
    std::vector<DdScore> scores;  // indexed by family position
};

// ground-truth ordering of a generator family against a reference model:
// tv_exact when the space is enumerable, tv_mc otherwise; ties keep
// declaration order
GoldRank gold_rank(const std::vector<GeneratorSpec>& family, const MarkovModel& reference,
                   size_t mc_n = 100'000, uint64_t mc_seed = 0);

}  // namespace ddeval
