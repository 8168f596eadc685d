#pragma once

#include <cstddef>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ccnl/error.hpp"
#include "ccnl/layers.hpp"
#include "ccnl/random.hpp"
#include "ccnl/vocab.hpp"

namespace ccnl {

struct Example {
    std::string id;
    std::string text;
    int label = 0;  // 0 = non-misogynistic, 1 = misogynistic

    friend bool operator==(const Example&, const Example&) = default;
};

struct ParallelExample {
    Example source;
    std::string target_text;

    int label() const { return source.label; }
    friend bool operator==(const ParallelExample&, const ParallelExample&) = default;
};

struct CorpusFormat {
    std::string id_column = "id";
    std::string text_column = "text";
    std::string label_column = "label";
};

// Corpus TSV: UTF-8, a header naming the columns, one example per row.
// Malformed rows and labels other than 0/1 throw ParseError with the line number.
std::vector<Example> load_corpus(const std::string& path, const CorpusFormat& format = {});
std::vector<Example> parse_corpus(std::istream& in, const std::string& source_name, const CorpusFormat& format = {});
void write_corpus(const std::string& path, std::span<const Example> examples);

// Lowercases; URLs -> <url>; @mentions -> <user>; "#tag" -> "#", "tag";
// ASCII punctuation becomes separate tokens; splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

// <pad>=0, <unk>=1, then tokens by descending count with ties alphabetical.
Vocabulary build_vocab(std::span<const std::vector<std::string>> tokenized, std::size_t min_count = 1);
Vocabulary build_vocab_from_texts(std::span<const std::string> texts, std::size_t min_count = 1);

/// Ids for the first `length` tokens, right-padded with kPadId.
std::vector<std::size_t> encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                                       std::size_t length);

/// Uniform(-0.05, 0.05) rows, zero pad row.
EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t dim, Rng& rng);

// Text vector format: optional "V e" header line, then "token v1 ... ve".
// Rows for vocabulary tokens missing from the file are drawn from
// uniform(-0.05, 0.05); the pad row is forced to zero.
EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab, Rng& rng);

/// Whole file as a matrix whose vocabulary is the file's tokens in order.
EmbeddingMatrix read_embedding_file(const std::string& path);
void write_embedding_file(const std::string& path, const EmbeddingMatrix& embeddings);

/// Joins on id; the source label is authoritative.
std::vector<ParallelExample> pair_parallel(std::span<const Example> source, std::span<const Example> translation);

/// Seeded shuffle then split; the second part holds round(fraction * n) items.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_val(std::span<const T> corpus, double fraction,
                                                          std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    shuffle(order, rng);
    const auto held_out = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(corpus.size())));
    std::pair<std::vector<T>, std::vector<T>> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < order.size() - held_out ? out.first : out.second).push_back(corpus[order[i]]);
    }
    return out;
}

struct CorpusStats {
    std::size_t count = 0;
    std::size_t positives = 0;
    double mtr = 0.0;  // misogynistic text rate = positives / count
};

CorpusStats corpus_stats(std::span<const int> labels);
CorpusStats corpus_stats(std::span<const Example> corpus);

struct SynthSpec {
    std::size_t n = 100;
    double rate = 0.5;          // fraction of positive examples
    double separability = 1.0;  // probability a positive text carries a marker token
    std::size_t vocab_size = 200;
    std::size_t marker_tokens = 10;
    std::size_t min_length = 6;
    std::size_t max_length = 12;
};

struct SynthCorpus {
    std::vector<Example> source;
    std::vector<Example> translation;
};

// Pseudo-texts over a synthetic source vocabulary. Negative texts never use
// marker tokens; each positive text carries at least one with probability
// `separability`. The translation maps every token through a fixed seeded
// bijection onto a disjoint target vocabulary.
SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed);

}  // namespace ccnl
