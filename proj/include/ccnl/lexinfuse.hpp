#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccnl/layers.hpp"

namespace ccnl {

enum class LexiconSource { hurtlex, sentiment, senticnet };

struct LexiconEntry {
    std::string token;
    std::string category;
    auto operator<=>(const LexiconEntry&) const = default;
};

struct Lexicon {
    std::set<LexiconEntry> entries;  // lowercased, deduplicated
    std::string language;
    LexiconSource source = LexiconSource::hurtlex;

    /// Distinct tokens in sorted order.
    std::vector<std::string> words() const;
};

// Lexicon file: UTF-8, one token per line, optional TAB + category.
Lexicon load_lexicon(const std::string& path, const std::string& language, LexiconSource source);
Lexicon parse_lexicon(std::istream& in, const std::string& language, LexiconSource source);

/// Headword -> related words in rank order.
using RelationTable = std::map<std::string, std::vector<std::string>>;

// Relations file: UTF-8, "headword TAB word1,word2,..." in rank order.
// A missing file is an InputError.
RelationTable load_relations(const std::string& path);
RelationTable parse_relations(std::istream& in, const std::string& source_name);

inline constexpr std::size_t kNeighborsPerSource = 5;

struct NeighborGraph {
    /// Directed edges token -> (neighbor, beta).
    std::map<std::string, std::vector<std::pair<std::string, double>>> adjacency;
    /// alpha per node; nodes absent here use 1.
    std::map<std::string, double> anchors;
    /// Vectors for lexicon words that were out of vocabulary.
    std::map<std::string, std::vector<double>> proxies;
    std::vector<std::string> warnings;

    std::size_t edge_count() const;
    double anchor(const std::string& token) const;
    /// Adds a directed edge and renormalises the node's betas to 1/outdegree.
    void add_edge(const std::string& from, const std::string& to);
};

// For every lexicon word: its top-5 related words from `relations` (if given)
// become edges; if the word is not in `embeddings`, a proxy vector is taken
// from `reference` (if given) or else the mean of its in-vocabulary related
// words, and the 5 nearest in-vocabulary words by cosine become edges too.
// Edge targets are restricted to the embedding vocabulary.
NeighborGraph build_graph(std::span<const Lexicon> lexicons, const RelationTable* relations,
                          const EmbeddingMatrix& embeddings, const EmbeddingMatrix* reference = nullptr);

/// Ids of the k rows most cosine-similar to `query` (exhaustive; ties to the lower id).
std::vector<std::size_t> nearest_neighbors(std::span<const double> query, const EmbeddingMatrix& embeddings,
                                           std::size_t k);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Appends one row per proxy vector (OOV expansion). Existing rows are untouched.
EmbeddingMatrix expand_with_proxies(const EmbeddingMatrix& embeddings, const NeighborGraph& graph);

/// sum_i alpha_i |q_i - q^_i|^2 + sum_i sum_j beta_ij |q_i - q_j|^2 over graph nodes.
double retrofit_objective(const EmbeddingMatrix& current, const EmbeddingMatrix& original, const NeighborGraph& graph);

struct RetrofitResult {
    EmbeddingMatrix embeddings;
    std::vector<double> objective;  // before the first sweep, then after each
};

// Synchronous (Jacobi) sweeps of exact minimisation of the objective above
// per node: each node is pulled towards every node it shares an edge with,
// in either direction, with weight beta_ij + beta_ji, and anchored to its
// original vector with alpha_i. Rows without edges are never touched.
RetrofitResult retrofit(const EmbeddingMatrix& embeddings, const NeighborGraph& graph, std::size_t iterations = 10);

/// Mean cosine similarity over directed edges whose ends are both in the vocabulary.
double mean_linked_cosine(const EmbeddingMatrix& embeddings, const NeighborGraph& graph);

}  // namespace ccnl
