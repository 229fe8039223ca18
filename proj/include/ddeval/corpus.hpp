// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ddeval {

using TokenId = int32_t;
// Integer-encoded sentence. Token ids only; EOS is an event of the sequence
// models, never a stored id.
using TokenSequence = std::vector<TokenId>;

// Word-level vocabulary with four reserved ids. Ids 4.. are assigned by
// descending corpus frequency, ties broken lexicographically, so two builds
// over the same text are identical.
class Vocab {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr TokenId kBos = 2;
    static constexpr TokenId kEos = 3;
    static constexpr TokenId kNumReserved = 4;

    Vocab();

    TokenId size() const { return static_cast<TokenId>(id_to_token_.size()); }

    // UNK for anything not in the table; the reserved surface forms
    // ("<s>" etc.) are not in the table, so tokenized text can never
    // produce a reserved id
    TokenId id_of(std::string_view token) const;
    const std::string& token_of(TokenId id) const;
    bool contains(std::string_view token) const;

    void add_token(const std::string& token);  // next free id; rejects duplicates

    // one token per line, line number = id - 4
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
};

enum class CorpusLabel { Real, Generated };

struct Corpus {
    std::vector<TokenSequence> sequences;
    std::shared_ptr<const Vocab> vocab;
    CorpusLabel label = CorpusLabel::Real;

    size_t size() const { return sequences.size(); }
    bool empty() const { return sequences.empty(); }
};

struct SplitSpec {
    double train_fraction = 0.8;
    double dev_fraction = 0.1;
    double test_fraction = 0.1;
    enum class Ordering { Sequential, Shuffled };
    Ordering ordering = Ordering::Sequential;
    uint64_t shuffle_seed = 0;

    void validate() const;  // positive fractions summing to 1
};

enum class OverlongPolicy { Skip, Truncate, Error };

struct EncodeOptions {
    int32_t max_len = 52;  // longest paper sentence (51 words) plus EOS headroom
    bool lowercase = false;
    OverlongPolicy overlong = OverlongPolicy::Skip;
};

struct EncodeStats {
    size_t kept = 0;
    size_t skipped_empty = 0;
    size_t skipped_overlong = 0;
    size_t truncated = 0;
};

// whitespace-run splitting; no empty tokens
std::vector<std::string> tokenize(std::string_view line, bool lowercase = false);

// counts over pre-tokenized lines; every type with count >= min_count kept
Vocab build_vocab(const std::vector<std::vector<std::string>>& lines, int min_count);
Vocab build_vocab_from_lines(const std::vector<std::string>& lines, int min_count,
                             bool lowercase = false);

TokenSequence encode(const std::vector<std::string>& tokens, const Vocab& vocab);
std::vector<std::string> decode(const TokenSequence& ids, const Vocab& vocab);

Corpus encode_lines(const std::vector<std::string>& lines,
                    std::shared_ptr<const Vocab> vocab, const EncodeOptions& opts,
                    EncodeStats* stats = nullptr);

// exact partition into (train, dev, test); Sequential takes contiguous
// blocks front to back, Shuffled permutes with the spec seed first
std::array<Corpus, 3> split_corpus(const Corpus& corpus, const SplitSpec& spec);

// corpus files are UTF-8, one sentence per line, space-separated tokens
std::vector<std::string> read_lines(const std::string& path);
Corpus load_corpus(const std::string& path, std::shared_ptr<const Vocab> vocab,
                   const EncodeOptions& opts, EncodeStats* stats = nullptr);
void save_corpus(const Corpus& corpus, const std::string& path);

}  // namespace ddeval
