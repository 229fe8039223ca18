// SPDX-License-Identifier: Apache-2.0
#include "ddeval/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "ddeval/errors.hpp"
#include "ddeval/rng.hpp"

namespace ddeval {

namespace {
const std::array<std::string, 4> kReservedTokens = {"<pad>", "<unk>", "<s>", "</s>"};
}

Vocab::Vocab() {
    id_to_token_.assign(kReservedTokens.begin(), kReservedTokens.end());
}

TokenId Vocab::id_of(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
    if (id < 0 || id >= size())
        throw DataError("token id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

bool Vocab::contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
}

void Vocab::add_token(const std::string& token) {
    if (contains(token)) throw DataError("duplicate vocab token: " + token);
    const TokenId id = size();
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocab file: " + path);
    for (TokenId id = kNumReserved; id < size(); ++id) out << id_to_token_[id] << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocab file: " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.add_token(line);
    }
    return v;
}

void SplitSpec::validate() const {
    if (train_fraction <= 0 || dev_fraction <= 0 || test_fraction <= 0)
        throw DataError("split fractions must be positive");
    if (std::abs(train_fraction + dev_fraction + test_fraction - 1.0) > 1e-9)
        throw DataError("split fractions must sum to 1");
}

std::vector<std::string> tokenize(std::string_view line, bool lowercase) {
    std::vector<std::string> tokens;
    size_t i = 0;
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) {
            std::string tok(line.substr(start, i - start));
            if (lowercase)
                std::transform(tok.begin(), tok.end(), tok.begin(),
                               [](unsigned char c) { return std::tolower(c); });
            tokens.push_back(std::move(tok));
        }
    }
    return tokens;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& lines, int min_count) {
    if (min_count < 1) throw DataError("min_count must be >= 1");
    std::unordered_map<std::string, int64_t> counts;
    size_t n_tokens = 0;
    for (const auto& toks : lines)
        for (const auto& t : toks) {
            ++counts[t];
            ++n_tokens;
        }
    if (n_tokens == 0) throw DataError("cannot build a vocabulary from an empty corpus");

    std::vector<std::pair<std::string, int64_t>> kept;
    kept.reserve(counts.size());
    for (auto& [tok, c] : counts)
        if (c >= min_count) kept.emplace_back(tok, c);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    for (auto& [tok, c] : kept) v.add_token(tok);
    return v;
}

Vocab build_vocab_from_lines(const std::vector<std::string>& lines, int min_count,
                             bool lowercase) {
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(lines.size());
    for (const auto& line : lines) tokenized.push_back(tokenize(line, lowercase));
    return build_vocab(tokenized, min_count);
}

TokenSequence encode(const std::vector<std::string>& tokens, const Vocab& vocab) {
    TokenSequence ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

std::vector<std::string> decode(const TokenSequence& ids, const Vocab& vocab) {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (TokenId id : ids) tokens.push_back(vocab.token_of(id));
    return tokens;
}

Corpus encode_lines(const std::vector<std::string>& lines,
                    std::shared_ptr<const Vocab> vocab, const EncodeOptions& opts,
                    EncodeStats* stats) {
    if (!vocab) throw DataError("encode_lines: null vocab");
    EncodeStats local;
    Corpus corpus;
    corpus.vocab = vocab;
    corpus.sequences.reserve(lines.size());
    for (const auto& line : lines) {
        auto tokens = tokenize(line, opts.lowercase);
        if (tokens.empty()) {
            ++local.skipped_empty;
            continue;
        }
        if (static_cast<int32_t>(tokens.size()) > opts.max_len) {
            switch (opts.overlong) {
                case OverlongPolicy::Skip:
                    ++local.skipped_overlong;
                    continue;
                case OverlongPolicy::Truncate:
                    tokens.resize(static_cast<size_t>(opts.max_len));
                    ++local.truncated;
                    break;
                case OverlongPolicy::Error:
                    throw DataError("sentence exceeds max_len=" +
                                    std::to_string(opts.max_len) + " tokens");
            }
        }
        corpus.sequences.push_back(encode(tokens, *vocab));
        ++local.kept;
    }
    if (stats) *stats = local;
    return corpus;
}

std::array<Corpus, 3> split_corpus(const Corpus& corpus, const SplitSpec& spec) {
    spec.validate();
    const size_t n = corpus.size();
    const auto n_train = static_cast<size_t>(std::llround(double(n) * spec.train_fraction));
    const auto n_dev = static_cast<size_t>(std::llround(double(n) * spec.dev_fraction));
    if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n)
        throw DataError("corpus of " + std::to_string(n) +
                        " sequences is too small for the requested split");
    const size_t n_test = n - n_train - n_dev;

    std::vector<size_t> index(n);
    for (size_t i = 0; i < n; ++i) index[i] = i;
    if (spec.ordering == SplitSpec::Ordering::Shuffled) {
        Rng rng(spec.shuffle_seed);
        rng.shuffle(index);
    }

    std::array<Corpus, 3> parts;
    const size_t bounds[4] = {0, n_train, n_train + n_dev, n};
    for (int p = 0; p < 3; ++p) {
        parts[p].vocab = corpus.vocab;
        parts[p].label = corpus.label;
        parts[p].sequences.reserve(bounds[p + 1] - bounds[p]);
        for (size_t i = bounds[p]; i < bounds[p + 1]; ++i)
            parts[p].sequences.push_back(corpus.sequences[index[i]]);
    }
    (void)n_test;
    return parts;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read corpus file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

Corpus load_corpus(const std::string& path, std::shared_ptr<const Vocab> vocab,
                   const EncodeOptions& opts, EncodeStats* stats) {
    return encode_lines(read_lines(path), std::move(vocab), opts, stats);
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    if (!corpus.vocab) throw DataError("save_corpus: corpus has no vocab");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + path);
    for (const auto& seq : corpus.sequences) {
        for (size_t i = 0; i < seq.size(); ++i) {
            if (i) out << ' ';
            out << corpus.vocab->token_of(seq[i]);
        }
        out << '\n';
    }
}

}  // namespace ddeval
