#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ccnl/data.hpp"
#include "ccnl/error.hpp"
#include "ccnl/lexinfuse.hpp"
#include "test_util.hpp"

using namespace ccnl;

namespace {

const std::string kFixtures = CCNL_FIXTURES;

EmbeddingMatrix matrix_of(const std::vector<std::string>& tokens, const Tensor& values) {
    EmbeddingMatrix e;
    e.vocab = Vocabulary(tokens);
    e.table = Parameter("embedding", values);
    return e;
}

EmbeddingMatrix random_matrix(std::size_t n, std::size_t dim, Rng& rng) {
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(i));
    return matrix_of(tokens, testutil::random_tensor({n, dim}, rng));
}

Lexicon lexicon_of(const std::vector<std::string>& words) {
    Lexicon lex;
    for (const auto& w : words) lex.entries.insert({w, ""});
    return lex;
}

std::set<std::string> neighbours(const NeighborGraph& g, const std::string& token) {
    std::set<std::string> out;
    if (auto it = g.adjacency.find(token); it != g.adjacency.end())
        for (const auto& [n, beta] : it->second) out.insert(n);
    return out;
}

double cosine_ref(std::span<const double> a, std::span<const double> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("lexicon loader lowercases and deduplicates") {
    const Lexicon lex = load_lexicon(kFixtures + "/lexicon_toy.txt", "en", LexiconSource::hurtlex);
    const auto words = lex.words();
    CHECK(words == std::vector<std::string>{"w00", "w03", "w07", "w21", "w33", "zzz_unrelated"});
    CHECK(lex.entries.count({"w00", "insult"}) == 1);
    CHECK(lex.entries.size() == 6);
    CHECK_THROWS_AS(load_lexicon(kFixtures + "/missing.txt", "en", LexiconSource::hurtlex), IoError);
}

TEST_CASE("relations loader") {
    const RelationTable rel = load_relations(kFixtures + "/relations_toy.tsv");
    CHECK(rel.size() == 50);
    CHECK(rel.at("w00").size() == 7);
    CHECK(rel.at("w00").front() == "w15");
    CHECK_THROWS_AS(load_relations(kFixtures + "/no_such_relations.tsv"), InputError);
    std::istringstream bad("headword without tab\n");
    CHECK_THROWS_AS(parse_relations(bad, "bad.tsv"), ParseError);
}

TEST_CASE("graph construction") {
    const RelationTable rel = load_relations(kFixtures + "/relations_toy.tsv");
    std::vector<std::string> all;
    for (int i = 0; i < 50; ++i) all.push_back((i < 10 ? "w0" : "w") + std::to_string(i));
    Rng rng(1);
    const EmbeddingMatrix full = matrix_of(all, testutil::random_tensor({50, 4}, rng));

    SUBCASE("empty lexicon gives an empty graph") {
        const std::vector<Lexicon> none{Lexicon{}};
        const NeighborGraph g = build_graph(none, &rel, full);
        CHECK(g.adjacency.empty());
        CHECK(g.edge_count() == 0);
    }
    SUBCASE("seven ranked relations become exactly the top five edges") {
        const std::vector<Lexicon> lex{lexicon_of({"w00"})};
        const NeighborGraph g = build_graph(lex, &rel, full);
        const auto& ranked = rel.at("w00");
        CHECK(neighbours(g, "w00") == std::set<std::string>(ranked.begin(), ranked.begin() + 5));
        for (const auto& [n, beta] : g.adjacency.at("w00")) CHECK(beta == 0.2);
    }
    SUBCASE("edges are restricted to the vocabulary") {
        const EmbeddingMatrix toy = read_embedding_file(kFixtures + "/embeddings_toy.vec");
        const std::vector<Lexicon> lex{lexicon_of({"w00"})};
        const NeighborGraph g = build_graph(lex, &rel, toy);
        CHECK(neighbours(g, "w00") == std::set<std::string>{"w15", "w19", "w06"});
    }
    SUBCASE("no overlap warns and yields an empty graph") {
        const std::vector<Lexicon> lex{lexicon_of({"qqq", "rrr"})};
        const NeighborGraph g = build_graph(lex, nullptr, full);
        CHECK(g.adjacency.empty());
        CHECK_FALSE(g.warnings.empty());
    }
}

TEST_CASE("OOV words link to their nearest neighbours by cosine") {
    const EmbeddingMatrix toy = read_embedding_file(kFixtures + "/embeddings_toy.vec");
    REQUIRE(toy.size() == 20);
    // "w21" is OOV; its relations give it a proxy vector.
    RelationTable rel;
    rel["w21"] = {"w02", "w11", "w40"};
    const std::vector<Lexicon> lex{lexicon_of({"w21"})};
    const NeighborGraph g = build_graph(lex, &rel, toy);
    REQUIRE(g.proxies.count("w21") == 1);
    const auto& proxy = g.proxies.at("w21");
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(proxy[c] == doctest::Approx((toy.vector(2)[c] + toy.vector(11)[c]) / 2.0).epsilon(1e-15));

    std::vector<std::pair<double, std::string>> scan;
    for (std::size_t i = 0; i < toy.size(); ++i) scan.emplace_back(-cosine_ref(proxy, toy.vector(i)), toy.vocab.token(i));
    std::sort(scan.begin(), scan.end());
    const auto edges = neighbours(g, "w21");
    CHECK(edges.count(scan[0].second) == 1);
    std::set<std::string> expected{"w02", "w11"};
    for (std::size_t i = 0; i < 5; ++i) expected.insert(scan[i].second);
    CHECK(edges == expected);

    const EmbeddingMatrix expanded = expand_with_proxies(toy, g);
    CHECK(expanded.size() == 21);
    CHECK(expanded.vocab.token(20) == "w21");
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::equal(toy.vector(i).begin(), toy.vector(i).end(), expanded.vector(i).begin()));
}

TEST_CASE("reference vectors take precedence for OOV proxies") {
    const EmbeddingMatrix toy = read_embedding_file(kFixtures + "/embeddings_toy.vec");
    const EmbeddingMatrix ref = matrix_of({"w21"}, Tensor::matrix({{0.1, 0.2, 0.3}}));
    const std::vector<Lexicon> lex{lexicon_of({"w21", "w30"})};
    const NeighborGraph g = build_graph(lex, nullptr, toy, &ref);
    CHECK(g.proxies.at("w21") == std::vector<double>{0.1, 0.2, 0.3});
    CHECK(g.proxies.count("w30") == 0);
    CHECK(neighbours(g, "w21").size() == 5);
    CHECK_FALSE(g.warnings.empty());
}

TEST_CASE("retrofit closed forms") {
    Rng rng(2);
    const EmbeddingMatrix e = random_matrix(6, 4, rng);
    NeighborGraph g;
    g.add_edge("t0", "t1");  // t0 has one neighbour, t1 none of its own
    g.add_edge("t3", "t4");
    g.add_edge("t4", "t3");
    const RetrofitResult r = retrofit(e, g, 1);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(r.embeddings.vector(0)[c] == (e.vector(0)[c] + e.vector(1)[c]) / 2.0);
    }
    for (std::size_t row : {2u, 5u})
        for (std::size_t c = 0; c < 4; ++c) CHECK(r.embeddings.vector(row)[c] == e.vector(row)[c]);
    CHECK(r.embeddings.vocab == e.vocab);
    CHECK(r.embeddings.table.value.shape() == e.table.value.shape());
    CHECK_THROWS_AS(retrofit(e, g, 0), ConfigError);
}

TEST_CASE("two mutually linked nodes move toward each other with a monotone objective") {
    const EmbeddingMatrix e = matrix_of({"a", "b"}, Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    NeighborGraph g;
    g.add_edge("a", "b");
    g.add_edge("b", "a");
    const RetrofitResult r = retrofit(e, g, 100);
    // strictly monotone while moving; at the fixed point only rounding remains
    for (std::size_t i = 1; i <= 10; ++i) CHECK(r.objective[i] <= r.objective[i - 1]);
    for (std::size_t i = 11; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-15);
    const auto a = r.embeddings.vector(0), b = r.embeddings.vector(1);
    double gap = 0.0;
    for (std::size_t c = 0; c < 2; ++c) gap += (a[c] - b[c]) * (a[c] - b[c]);
    CHECK(gap < 2.0);
    // Fixed point of the objective: a = (e_a + 2 b) / 3, b = (e_b + 2 a) / 3 -> a = (0.6, 0.4)
    CHECK(a[0] == doctest::Approx(0.6).epsilon(1e-9));
    CHECK(a[1] == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(b[0] == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(retrofit_objective(r.embeddings, e, g) == doctest::Approx(r.objective.back()).epsilon(1e-12));
}

TEST_CASE("objective never increases on random graphs and linked pairs get closer") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const EmbeddingMatrix e = random_matrix(100, 5, rng);
        NeighborGraph g;
        for (int k = 0; k < 250; ++k) {
            const auto a = uniform_index(rng, 100), b = uniform_index(rng, 100);
            if (a != b) g.add_edge("t" + std::to_string(a), "t" + std::to_string(b));
        }
        for (std::size_t i = 0; i < 100; i += 7) g.anchors["t" + std::to_string(i)] = 0.5 + uniform(rng, 0.0, 1.0);
        const RetrofitResult r = retrofit(e, g, 10);
        REQUIRE(r.objective.size() == 11);
        for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1]);
        CHECK(mean_linked_cosine(r.embeddings, g) >= mean_linked_cosine(e, g));
    }
}
