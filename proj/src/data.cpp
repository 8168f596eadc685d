#include "ccnl/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "ccnl/error.hpp"

namespace ccnl {

namespace {

constexpr double kMissingEmbeddingLimit = 0.05;

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
}

std::string location(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return in;
}

bool parse_double(std::string_view s, double& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_size(std::string_view s, std::size_t& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

struct EmbeddingRows {
    std::size_t dim = 0;
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> rows;
};

EmbeddingRows parse_embedding_file(const std::string& path) {
    std::ifstream in = open_input(path);
    EmbeddingRows out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (is_blank(line)) continue;
        const auto fields = split_whitespace(line);
        if (line_no == 1 && fields.size() == 2) {
            std::size_t count = 0, dim = 0;
            if (parse_size(fields[0], count) && parse_size(fields[1], dim)) {
                out.dim = dim;
                continue;
            }
        }
        if (fields.size() < 2) throw ParseError(location(path, line_no) + ": expected a token followed by values");
        const std::size_t dim = fields.size() - 1;
        if (out.dim == 0) out.dim = dim;
        if (dim != out.dim) {
            throw ParseError(location(path, line_no) + ": expected " + std::to_string(out.dim) + " values, got " +
                             std::to_string(dim));
        }
        std::vector<double> row(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            if (!parse_double(fields[i + 1], row[i])) {
                throw ParseError(location(path, line_no) + ": bad number '" + std::string(fields[i + 1]) + "'");
            }
        }
        out.tokens.emplace_back(fields[0]);
        out.rows.push_back(std::move(row));
    }
    if (out.dim == 0) throw ParseError(path + ": no embedding vectors found");
    return out;
}

}  // namespace

std::vector<Example> parse_corpus(std::istream& in, const std::string& source_name, const CorpusFormat& format) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(source_name + ": missing header line");
    strip_cr(line);
    const auto header = split(line, '\t');
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError(location(source_name, 1) + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = column(format.id_column);
    const std::size_t text_col = column(format.text_column);
    const std::size_t label_col = column(format.label_column);

    std::vector<Example> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split(line, '\t');
        if (fields.size() != header.size()) {
            throw ParseError(location(source_name, line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        Example ex;
        ex.id = std::string(fields[id_col]);
        ex.text = std::string(fields[text_col]);
        const std::string_view label = fields[label_col];
        if (label == "0") {
            ex.label = 0;
        } else if (label == "1") {
            ex.label = 1;
        } else {
            throw ParseError(location(source_name, line_no) + ": unknown label '" + std::string(label) + "'");
        }
        if (ex.id.empty()) throw ParseError(location(source_name, line_no) + ": empty id");
        if (is_blank(ex.text)) throw ParseError(location(source_name, line_no) + ": empty text");
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Example> load_corpus(const std::string& path, const CorpusFormat& format) {
    std::ifstream in = open_input(path);
    return parse_corpus(in, path, format);
}

void write_corpus(const std::string& path, std::span<const Example> examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "id\ttext\tlabel\n";
    for (const auto& ex : examples) {
        if (ex.text.find_first_of("\t\n") != std::string::npos || ex.id.find_first_of("\t\n") != std::string::npos) {
            throw InputError("example '" + ex.id + "' contains a tab or newline");
        }
        out << ex.id << '\t' << ex.text << '\t' << ex.label << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    for (std::string_view chunk : split_whitespace(text)) {
        std::string lower(chunk);
        for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")) {
            tokens.emplace_back("<url>");
            continue;
        }
        std::string word;
        auto flush = [&] {
            if (!word.empty()) tokens.push_back(std::move(word));
            word.clear();
        };
        for (std::size_t i = 0; i < lower.size(); ++i) {
            const auto c = static_cast<unsigned char>(lower[i]);
            if (c == '@' && i + 1 < lower.size() && is_word_char(static_cast<unsigned char>(lower[i + 1]))) {
                flush();
                while (i + 1 < lower.size() && is_word_char(static_cast<unsigned char>(lower[i + 1]))) ++i;
                tokens.emplace_back("<user>");
            } else if (is_word_char(c)) {
                word.push_back(static_cast<char>(c));
            } else {
                flush();
                tokens.emplace_back(1, static_cast<char>(c));
            }
        }
        flush();
    }
    return tokens;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> tokenized, std::size_t min_count) {
    if (min_count == 0) throw ConfigError("min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& seq : tokenized)
        for (const auto& tok : seq) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : counts) {
        if (n >= min_count && tok != kPadToken && tok != kUnkToken) ranked.emplace_back(tok, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    tokens.reserve(ranked.size());
    for (auto& [tok, n] : ranked) tokens.push_back(tok);
    return Vocabulary::with_reserved(tokens);
}

Vocabulary build_vocab_from_texts(std::span<const std::string> texts, std::size_t min_count) {
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(texts.size());
    for (const auto& t : texts) tokenized.push_back(tokenize(t));
    return build_vocab(tokenized, min_count);
}

std::vector<std::size_t> encode_tokens(std::span<const std::string> tokens, const Vocabulary& vocab,
                                       std::size_t length) {
    std::vector<std::size_t> ids(length, kPadId);
    for (std::size_t i = 0; i < std::min(length, tokens.size()); ++i) ids[i] = vocab.id_or_unk(tokens[i]);
    return ids;
}

EmbeddingMatrix random_embeddings(const Vocabulary& vocab, std::size_t dim, Rng& rng) {
    if (dim == 0) throw ConfigError("embedding dimension must be positive");
    EmbeddingMatrix e;
    e.vocab = vocab;
    Tensor table(Shape{vocab.size(), dim});
    for (std::size_t i = 0; i < table.size(); ++i) table[i] = uniform(rng, -kMissingEmbeddingLimit, kMissingEmbeddingLimit);
    if (vocab.has_reserved()) std::fill(table.row(kPadId).begin(), table.row(kPadId).end(), 0.0);
    e.table = Parameter("embedding", std::move(table));
    return e;
}

EmbeddingMatrix load_embeddings(const std::string& path, const Vocabulary& vocab, Rng& rng) {
    const EmbeddingRows rows = parse_embedding_file(path);
    EmbeddingMatrix e = random_embeddings(vocab, rows.dim, rng);
    for (std::size_t i = 0; i < rows.tokens.size(); ++i) {
        if (auto id = vocab.find(rows.tokens[i])) std::copy(rows.rows[i].begin(), rows.rows[i].end(), e.table.value.row(*id).begin());
    }
    if (vocab.has_reserved()) std::fill(e.table.value.row(kPadId).begin(), e.table.value.row(kPadId).end(), 0.0);
    return e;
}

EmbeddingMatrix read_embedding_file(const std::string& path) {
    EmbeddingRows rows = parse_embedding_file(path);
    EmbeddingMatrix e;
    Tensor table(Shape{rows.tokens.size(), rows.dim});
    for (std::size_t i = 0; i < rows.tokens.size(); ++i) {
        if (e.vocab.contains(rows.tokens[i])) throw ParseError(path + ": duplicate token '" + rows.tokens[i] + "'");
        e.vocab.add(rows.tokens[i]);
        std::copy(rows.rows[i].begin(), rows.rows[i].end(), table.row(i).begin());
    }
    e.table = Parameter("embedding", std::move(table));
    return e;
}

void write_embedding_file(const std::string& path, const EmbeddingMatrix& embeddings) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << embeddings.size() << ' ' << embeddings.dim() << '\n';
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        out << embeddings.vocab.token(i);
        for (double v : embeddings.vector(i)) out << ' ' << format_double(v);
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::vector<ParallelExample> pair_parallel(std::span<const Example> source, std::span<const Example> translation) {
    std::unordered_map<std::string, const Example*> by_id;
    for (const auto& t : translation) {
        if (!by_id.emplace(t.id, &t).second) throw PairingError("duplicate id '" + t.id + "' in translation corpus");
    }
    std::vector<ParallelExample> out;
    out.reserve(source.size());
    for (const auto& s : source) {
        auto it = by_id.find(s.id);
        if (it == by_id.end()) throw PairingError("id '" + s.id + "' has no translation");
        out.push_back(ParallelExample{s, it->second->text});
    }
    if (source.size() != translation.size()) {
        std::unordered_map<std::string, bool> seen;
        for (const auto& s : source) seen[s.id] = true;
        for (const auto& t : translation) {
            if (!seen.count(t.id)) throw PairingError("id '" + t.id + "' in translation corpus has no source example");
        }
        throw PairingError("source has " + std::to_string(source.size()) + " rows but translation has " +
                           std::to_string(translation.size()));
    }
    return out;
}

CorpusStats corpus_stats(std::span<const int> labels) {
    CorpusStats s;
    s.count = labels.size();
    s.positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    s.mtr = s.count ? static_cast<double>(s.positives) / static_cast<double>(s.count) : 0.0;
    return s;
}

CorpusStats corpus_stats(std::span<const Example> corpus) {
    std::vector<int> labels;
    labels.reserve(corpus.size());
    for (const auto& ex : corpus) labels.push_back(ex.label);
    return corpus_stats(labels);
}

SynthCorpus synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.n < 2) throw ConfigError("synthetic corpus needs n >= 2");
    if (!(spec.rate >= 0.0 && spec.rate <= 1.0)) throw ConfigError("positive rate must lie in [0, 1]");
    if (!(spec.separability >= 0.0 && spec.separability <= 1.0)) throw ConfigError("separability must lie in [0, 1]");
    if (spec.marker_tokens == 0 || spec.vocab_size <= spec.marker_tokens) {
        throw ConfigError("vocab_size must exceed marker_tokens >= 1");
    }
    if (spec.min_length == 0 || spec.max_length < spec.min_length) throw ConfigError("bad text length range");

    Rng rng(seed);
    std::vector<std::size_t> dictionary(spec.vocab_size);
    std::iota(dictionary.begin(), dictionary.end(), std::size_t{0});
    shuffle(dictionary, rng);

    const auto positives = static_cast<std::size_t>(std::llround(spec.rate * static_cast<double>(spec.n)));
    std::vector<int> labels(spec.n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
    shuffle(labels, rng);

    const std::size_t neutral = spec.vocab_size - spec.marker_tokens;
    SynthCorpus out;
    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::size_t length = spec.min_length + uniform_index(rng, spec.max_length - spec.min_length + 1);
        std::vector<std::size_t> words(length);
        for (auto& w : words) w = spec.marker_tokens + uniform_index(rng, neutral);
        if (labels[i] == 1 && uniform(rng, 0.0, 1.0) < spec.separability) {
            words[uniform_index(rng, length)] = uniform_index(rng, spec.marker_tokens);
        }
        std::string src, tgt;
        for (std::size_t k = 0; k < words.size(); ++k) {
            if (k) {
                src += ' ';
                tgt += ' ';
            }
            src += "src" + std::to_string(words[k]);
            tgt += "tgt" + std::to_string(dictionary[words[k]]);
        }
        char id[32];
        std::snprintf(id, sizeof id, "syn%06zu", i);
        out.source.push_back(Example{id, src, labels[i]});
        out.translation.push_back(Example{id, tgt, labels[i]});
    }
    return out;
}

}  // namespace ccnl
