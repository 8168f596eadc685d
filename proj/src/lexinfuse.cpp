#include "ccnl/lexinfuse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ccnl/error.hpp"

namespace ccnl {

namespace {

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

std::vector<std::string> Lexicon::words() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (out.empty() || out.back() != e.token) out.push_back(e.token);
    return out;
}

Lexicon parse_lexicon(std::istream& in, const std::string& language, LexiconSource source) {
    Lexicon lex;
    lex.language = language;
    lex.source = source;
    std::string line;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        std::string token = lowercase(trim(line.substr(0, tab)));
        if (token.empty()) continue;
        std::string category = tab == std::string::npos ? "" : trim(line.substr(tab + 1));
        lex.entries.insert(LexiconEntry{std::move(token), std::move(category)});
    }
    return lex;
}

Lexicon load_lexicon(const std::string& path, const std::string& language, LexiconSource source) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open lexicon '" + path + "'");
    return parse_lexicon(in, language, source);
}

RelationTable parse_relations(std::istream& in, const std::string& source_name) {
    RelationTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected 'headword<TAB>related,...'");
        }
        const std::string head = lowercase(trim(line.substr(0, tab)));
        std::vector<std::string>& related = table[head];
        std::string rest = line.substr(tab + 1);
        std::size_t start = 0;
        while (start <= rest.size()) {
            std::size_t comma = rest.find(',', start);
            if (comma == std::string::npos) comma = rest.size();
            std::string word = lowercase(trim(rest.substr(start, comma - start)));
            if (!word.empty() && word != head && std::find(related.begin(), related.end(), word) == related.end()) {
                related.push_back(std::move(word));
            }
            start = comma + 1;
        }
    }
    return table;
}

RelationTable load_relations(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("relations file '" + path + "' not found or unreadable");
    return parse_relations(in, path);
}

std::size_t NeighborGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& [tok, edges] : adjacency) n += edges.size();
    return n;
}

double NeighborGraph::anchor(const std::string& token) const {
    auto it = anchors.find(token);
    return it == anchors.end() ? 1.0 : it->second;
}

void NeighborGraph::add_edge(const std::string& from, const std::string& to) {
    if (from == to) return;
    auto& edges = adjacency[from];
    if (std::any_of(edges.begin(), edges.end(), [&](const auto& e) { return e.first == to; })) return;
    edges.emplace_back(to, 0.0);
    const double beta = 1.0 / static_cast<double>(edges.size());
    for (auto& e : edges) e.second = beta;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

std::vector<std::size_t> nearest_neighbors(std::span<const double> query, const EmbeddingMatrix& embeddings,
                                           std::size_t k) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(embeddings.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        scored.emplace_back(cosine_similarity(query, embeddings.vector(i)), i);
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second);
    return out;
}

NeighborGraph build_graph(std::span<const Lexicon> lexicons, const RelationTable* relations,
                          const EmbeddingMatrix& embeddings, const EmbeddingMatrix* reference) {
    std::set<std::string> words;
    for (const auto& lex : lexicons)
        for (auto& w : lex.words()) words.insert(w);

    const auto top_related = [&](const std::string& word) {
        std::vector<std::string> out;
        if (!relations) return out;
        if (auto it = relations->find(word); it != relations->end()) {
            const auto& ranked = it->second;
            out.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(kNeighborsPerSource, ranked.size())));
        }
        return out;
    };

    NeighborGraph graph;
    std::size_t overlapping = 0;
    std::size_t skipped_oov = 0;
    for (const std::string& word : words) {
        if (embeddings.vocab.contains(word)) {
            ++overlapping;
            continue;
        }
        std::vector<double> proxy;
        if (reference) {
            if (auto id = reference->vocab.find(word); id && reference->dim() == embeddings.dim()) {
                const auto v = reference->vector(*id);
                proxy.assign(v.begin(), v.end());
            }
        }
        if (proxy.empty()) {
            std::size_t used = 0;
            proxy.assign(embeddings.dim(), 0.0);
            for (const auto& r : top_related(word)) {
                const auto id = embeddings.vocab.find(r);
                if (!id) continue;
                const auto v = embeddings.vector(*id);
                for (std::size_t i = 0; i < proxy.size(); ++i) proxy[i] += v[i];
                ++used;
            }
            if (used == 0) {
                ++skipped_oov;
                continue;
            }
            for (double& x : proxy) x /= static_cast<double>(used);
        }
        graph.proxies.emplace(word, std::move(proxy));
    }

    const auto known = [&](const std::string& t) { return embeddings.vocab.contains(t) || graph.proxies.contains(t); };
    for (const std::string& word : words) {
        if (!known(word)) continue;
        for (const auto& r : top_related(word))
            if (known(r)) graph.add_edge(word, r);
        if (auto it = graph.proxies.find(word); it != graph.proxies.end()) {
            for (std::size_t id : nearest_neighbors(it->second, embeddings, kNeighborsPerSource)) {
                graph.add_edge(word, embeddings.vocab.token(id));
            }
        }
    }
    if (!words.empty() && overlapping == 0 && graph.proxies.empty()) {
        graph.warnings.push_back("no lexicon word overlaps the embedding vocabulary; graph is empty");
    }
    if (skipped_oov > 0) {
        graph.warnings.push_back(std::to_string(skipped_oov) +
                                 " out-of-vocabulary lexicon words skipped (no proxy vector available)");
    }
    return graph;
}

EmbeddingMatrix expand_with_proxies(const EmbeddingMatrix& embeddings, const NeighborGraph& graph) {
    EmbeddingMatrix out;
    out.vocab = embeddings.vocab;
    out.trainable = embeddings.trainable;
    std::vector<std::pair<std::string, const std::vector<double>*>> added;
    for (const auto& [tok, vec] : graph.proxies) {
        if (!out.vocab.contains(tok)) {
            out.vocab.add(tok);
            added.emplace_back(tok, &vec);
        }
    }
    Tensor table(Shape{out.vocab.size(), embeddings.dim()});
    std::copy(embeddings.table.value.values().begin(), embeddings.table.value.values().end(), table.data());
    for (std::size_t i = 0; i < added.size(); ++i) {
        const auto& v = *added[i].second;
        if (v.size() != embeddings.dim()) throw DimensionError("proxy vector for '" + added[i].first + "' has wrong width");
        std::copy(v.begin(), v.end(), table.row(embeddings.size() + i).begin());
    }
    out.table = Parameter(embeddings.table.name, std::move(table));
    return out;
}

namespace {

struct IndexedGraph {
    std::vector<std::size_t> nodes;                                   // rows in the graph
    std::vector<double> alpha;                                        // per node
    std::vector<std::vector<std::pair<std::size_t, double>>> directed;   // row -> (row, beta)
    std::vector<std::vector<std::pair<std::size_t, double>>> symmetric;  // row -> (row, beta_ij + beta_ji)
};

IndexedGraph index_graph(const EmbeddingMatrix& e, const NeighborGraph& g) {
    IndexedGraph ig;
    std::map<std::size_t, std::map<std::size_t, double>> sym;
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> dir;
    std::set<std::size_t> nodes;
    for (const auto& [tok, edges] : g.adjacency) {
        const auto from = e.vocab.find(tok);
        if (!from) continue;
        for (const auto& [nb, beta] : edges) {
            const auto to = e.vocab.find(nb);
            if (!to || *to == *from) continue;
            dir[*from].emplace_back(*to, beta);
            sym[*from][*to] += beta;
            sym[*to][*from] += beta;
            nodes.insert(*from);
            nodes.insert(*to);
        }
    }
    ig.nodes.assign(nodes.begin(), nodes.end());
    ig.directed.resize(ig.nodes.size());
    ig.symmetric.resize(ig.nodes.size());
    for (std::size_t k = 0; k < ig.nodes.size(); ++k) {
        const std::size_t row = ig.nodes[k];
        ig.alpha.push_back(g.anchor(e.vocab.token(row)));
        if (auto it = dir.find(row); it != dir.end()) ig.directed[k] = it->second;
        for (const auto& [to, w] : sym[row]) ig.symmetric[k].emplace_back(to, w);
    }
    return ig;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

double objective(const Tensor& current, const Tensor& original, const IndexedGraph& ig) {
    double total = 0.0;
    for (std::size_t k = 0; k < ig.nodes.size(); ++k) {
        const std::size_t i = ig.nodes[k];
        total += ig.alpha[k] * squared_distance(current.row(i), original.row(i));
        for (const auto& [j, beta] : ig.directed[k]) total += beta * squared_distance(current.row(i), current.row(j));
    }
    return total;
}

}  // namespace

double retrofit_objective(const EmbeddingMatrix& current, const EmbeddingMatrix& original, const NeighborGraph& graph) {
    if (current.table.value.shape() != original.table.value.shape()) {
        throw DimensionError("retrofit_objective: matrices differ in shape");
    }
    return objective(current.table.value, original.table.value, index_graph(current, graph));
}

RetrofitResult retrofit(const EmbeddingMatrix& embeddings, const NeighborGraph& graph, std::size_t iterations) {
    if (iterations == 0) throw ConfigError("retrofitting needs at least one iteration");
    const IndexedGraph ig = index_graph(embeddings, graph);
    const Tensor& original = embeddings.table.value;
    const std::size_t dim = embeddings.dim();

    RetrofitResult result;
    result.embeddings = embeddings;
    Tensor current = original;
    result.objective.push_back(objective(current, original, ig));
    std::vector<double> updated(ig.nodes.size() * dim);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t k = 0; k < ig.nodes.size(); ++k) {
            const std::size_t i = ig.nodes[k];
            double denom = ig.alpha[k];
            double* out = updated.data() + k * dim;
            for (std::size_t c = 0; c < dim; ++c) out[c] = ig.alpha[k] * original.at(i, c);
            for (const auto& [j, w] : ig.symmetric[k]) {
                denom += w;
                for (std::size_t c = 0; c < dim; ++c) out[c] += w * current.at(j, c);
            }
            for (std::size_t c = 0; c < dim; ++c) out[c] /= denom;
        }
        for (std::size_t k = 0; k < ig.nodes.size(); ++k) {
            std::copy_n(updated.data() + k * dim, dim, current.row(ig.nodes[k]).begin());
        }
        result.objective.push_back(objective(current, original, ig));
    }
    result.embeddings.table.value = std::move(current);
    return result;
}

double mean_linked_cosine(const EmbeddingMatrix& embeddings, const NeighborGraph& graph) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& [tok, edges] : graph.adjacency) {
        const auto from = embeddings.vocab.find(tok);
        if (!from) continue;
        for (const auto& [nb, beta] : edges) {
            const auto to = embeddings.vocab.find(nb);
            if (!to) continue;
            total += cosine_similarity(embeddings.vector(*from), embeddings.vector(*to));
            ++count;
        }
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace ccnl
