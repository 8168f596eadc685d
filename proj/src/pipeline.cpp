#include "ccnl/pipeline.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ccnl/ablation.hpp"
#include "ccnl/checkpoint.hpp"
#include "ccnl/error.hpp"
#include "ccnl/lexinfuse.hpp"

namespace ccnl {

namespace fs = std::filesystem;

namespace {

std::size_t parse_size(std::string_view key, std::string_view v) {
    std::size_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

double parse_double(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
    }
    return out;
}

bool parse_flag(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

std::vector<std::string> split_commas(std::string_view v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        std::size_t comma = v.find(',', start);
        if (comma == std::string_view::npos) comma = v.size();
        if (comma > start) out.emplace_back(v.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

using Setter = void (*)(RunConfig&, std::string_view, std::string_view);

const std::map<std::string, Setter, std::less<>>& run_fields() {
    static const std::map<std::string, Setter, std::less<>> table{
        {"out", [](RunConfig& c, std::string_view, std::string_view v) { c.out = v; }},
        {"source", [](RunConfig& c, std::string_view, std::string_view v) { c.source = v; }},
        {"translated", [](RunConfig& c, std::string_view, std::string_view v) { c.translated = v; }},
        {"test_source", [](RunConfig& c, std::string_view, std::string_view v) { c.test_source = v; }},
        {"test_translated", [](RunConfig& c, std::string_view, std::string_view v) { c.test_translated = v; }},
        {"train_labels", [](RunConfig& c, std::string_view, std::string_view v) { c.train_labels = v; }},
        {"test_labels", [](RunConfig& c, std::string_view, std::string_view v) { c.test_labels = v; }},
        {"embeddings", [](RunConfig& c, std::string_view, std::string_view v) { c.embeddings = v; }},
        {"reference_embeddings", [](RunConfig& c, std::string_view, std::string_view v) { c.reference_embeddings = v; }},
        {"source_embeddings", [](RunConfig& c, std::string_view, std::string_view v) { c.source_embeddings = v; }},
        {"target_embeddings", [](RunConfig& c, std::string_view, std::string_view v) { c.target_embeddings = v; }},
        {"lexicon", [](RunConfig& c, std::string_view, std::string_view v) { c.lexicons.emplace_back(v); }},
        {"relations", [](RunConfig& c, std::string_view, std::string_view v) { c.relations = v; }},
        {"retrofit_iterations",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.retrofit_iterations = parse_size(k, v); }},
        {"expand_oov", [](RunConfig& c, std::string_view k, std::string_view v) { c.expand_oov = parse_flag(k, v); }},
        {"checkpoint", [](RunConfig& c, std::string_view, std::string_view v) { c.checkpoint = v; }},
        {"val_fraction", [](RunConfig& c, std::string_view k, std::string_view v) { c.val_fraction = parse_double(k, v); }},
        {"refit", [](RunConfig& c, std::string_view k, std::string_view v) { c.refit = parse_flag(k, v); }},
        {"majority", [](RunConfig& c, std::string_view k, std::string_view v) { c.majority = parse_flag(k, v); }},
        {"epochs", [](RunConfig& c, std::string_view k, std::string_view v) { c.epochs = parse_size(k, v); }},
        {"target_f1", [](RunConfig& c, std::string_view k, std::string_view v) { c.target_f1 = parse_double(k, v); }},
        {"variants",
         [](RunConfig& c, std::string_view, std::string_view v) {
             c.variants.clear();
             for (const auto& tag : split_commas(v)) c.variants.push_back(parse_ablation(tag));
         }},
        {"pair", [](RunConfig& c, std::string_view, std::string_view v) { c.pair = v; }},
        {"n", [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.n = parse_size(k, v); }},
        {"rate", [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.rate = parse_double(k, v); }},
        {"separability",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.separability = parse_double(k, v); }},
        {"vocab_size", [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.vocab_size = parse_size(k, v); }},
        {"marker_tokens",
         [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.marker_tokens = parse_size(k, v); }},
        {"min_length", [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.min_length = parse_size(k, v); }},
        {"max_length", [](RunConfig& c, std::string_view k, std::string_view v) { c.synth.max_length = parse_size(k, v); }},
    };
    return table;
}

std::string scalar_string(const nlohmann::json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_float()) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof buf, v.get<double>());
        return std::string(buf, res.ptr);
    }
    throw ConfigError("config key '" + key + "' has unsupported value " + v.dump());
}

std::string shortest(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string fixed4(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

void log(const RunConfig& c, LogLevel level, const std::string& msg) {
    if (c.log) c.log(level, msg);
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw ConfigError("missing required " + what + " path");
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw IoError(what + " file not found: '" + path + "'");
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot read " + what + " file '" + path + "'");
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
}

std::string out_path(const RunConfig& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

void write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << content;
        if (!out) throw IoError("failed writing '" + path + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::vector<EncodedPair> encode_all(const CcnlModel& model, std::span<const ParallelExample> examples) {
    std::vector<EncodedPair> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(model.encode(ex));
    return out;
}

FitOptions fit_options(const RunConfig& c) {
    FitOptions opts;
    opts.epochs = c.epochs;
    opts.target_val_macro_f1 = c.target_f1;
    opts.on_epoch = [&c](const EpochRecord& r) {
        log(c, LogLevel::info,
            "epoch " + std::to_string(r.epoch) + "\tloss " + fixed4(r.train_loss) + "\tval_macro_f1 " +
                (std::isnan(r.val_macro_f1) ? std::string("nan") : fixed4(r.val_macro_f1)));
    };
    return opts;
}

double training_macro_f1(const CcnlModel& model, std::span<const EncodedPair> encoded) {
    std::vector<int> gold;
    std::vector<int> pred;
    for (const auto& p : predict(model, encoded)) pred.push_back(p.label);
    for (const auto& e : encoded) gold.push_back(e.label);
    return macro_f1(gold, pred);
}

}  // namespace

std::vector<std::string> run_config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, setter] : run_fields()) keys.push_back(k);
    for (auto& k : config_keys()) keys.push_back(std::move(k));
    return keys;
}

void set_run_value(RunConfig& config, std::string_view key, std::string_view value) {
    if (auto it = run_fields().find(key); it != run_fields().end()) {
        it->second(config, key, value);
        return;
    }
    set_config_value(config.model, key, value);
}

void apply_config_json(RunConfig& config, std::string_view json, const std::string& source_name) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(source_name + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(source_name + ": config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "lexicons" || key == "lexicon") {
                if (value.is_array()) {
                    for (const auto& v : value) config.lexicons.push_back(v.get<std::string>());
                } else {
                    config.lexicons.push_back(value.get<std::string>());
                }
            } else if (key == "variants" && value.is_array()) {
                config.variants.clear();
                for (const auto& v : value) config.variants.push_back(parse_ablation(v.get<std::string>()));
            } else {
                set_run_value(config, key, scalar_string(value, key));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(source_name + ": bad value for '" + key + "': " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(source_name + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_json(config, buf.str(), path);
}

std::vector<ParallelExample> load_parallel(const std::string& source, const std::string& translated) {
    const auto src = load_corpus(source);
    const auto tgt = load_corpus(translated);
    return pair_parallel(src, tgt);
}

std::vector<EmbeddingMatrix> tower_embeddings(const ModelConfig& config, std::span<const ParallelExample> train,
                                              const std::string& source_embeddings,
                                              const std::string& target_embeddings, Rng& rng) {
    std::vector<std::string> source_texts;
    std::vector<std::string> target_texts;
    for (const auto& ex : train) {
        source_texts.push_back(ex.source.text);
        target_texts.push_back(ex.target_text);
    }
    const auto make = [&](const std::vector<std::string>& texts, const std::string& file) {
        const Vocabulary vocab = build_vocab_from_texts(texts);
        return file.empty() ? random_embeddings(vocab, config.embedding_dim, rng) : load_embeddings(file, vocab, rng);
    };
    std::vector<EmbeddingMatrix> out;
    if (CcnlModel::tower_count(config.ablation) == 2) out.push_back(make(source_texts, source_embeddings));
    out.push_back(make(target_texts, target_embeddings));
    return out;
}

RetrofitSummary cmd_retrofit(const RunConfig& c) {
    require_file(c.embeddings, "embedding");
    if (c.lexicons.empty()) throw ConfigError("retrofit needs at least one lexicon");
    for (const auto& l : c.lexicons) require_file(l, "lexicon");
    if (!c.reference_embeddings.empty()) require_file(c.reference_embeddings, "reference embedding");

    const EmbeddingMatrix original = read_embedding_file(c.embeddings);
    std::vector<Lexicon> lexicons;
    for (const auto& l : c.lexicons) lexicons.push_back(load_lexicon(l, "", LexiconSource::hurtlex));
    std::optional<RelationTable> relations;
    if (!c.relations.empty()) relations = load_relations(c.relations);
    std::optional<EmbeddingMatrix> reference;
    if (!c.reference_embeddings.empty()) reference = read_embedding_file(c.reference_embeddings);

    const NeighborGraph graph =
        build_graph(lexicons, relations ? &*relations : nullptr, original, reference ? &*reference : nullptr);
    for (const auto& w : graph.warnings) log(c, LogLevel::warning, w);
    const EmbeddingMatrix base = c.expand_oov ? expand_with_proxies(original, graph) : original;
    const RetrofitResult result = retrofit(base, graph, c.retrofit_iterations);

    RetrofitSummary summary;
    summary.objective = result.objective;
    summary.graph_edges = graph.edge_count();
    std::set<std::string> nodes;
    for (const auto& [tok, edges] : graph.adjacency) {
        nodes.insert(tok);
        for (const auto& e : edges) nodes.insert(e.first);
    }
    summary.graph_nodes = nodes.size();
    summary.warnings = graph.warnings;
    for (std::size_t i = 0; i < result.objective.size(); ++i) {
        log(c, LogLevel::info, "iteration " + std::to_string(i) + "\tobjective " + shortest(result.objective[i]));
    }
    ensure_out_dir(c.out);
    summary.output_path = out_path(c, "retrofitted.vec");
    const std::string tmp = summary.output_path + ".tmp";
    write_embedding_file(tmp, result.embeddings);
    fs::rename(tmp, summary.output_path);
    return summary;
}

TrainSummary cmd_train(const RunConfig& c) {
    require_file(c.source, "source corpus");
    require_file(c.translated, "translated corpus");
    if (!c.source_embeddings.empty()) require_file(c.source_embeddings, "source embedding");
    if (!c.target_embeddings.empty()) require_file(c.target_embeddings, "target embedding");
    c.model.validate();
    if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");

    const auto examples = load_parallel(c.source, c.translated);
    if (examples.empty()) throw ConfigError("training corpus is empty");
    std::vector<ParallelExample> train = examples;
    std::vector<ParallelExample> val;
    if (c.val_fraction > 0.0) {
        auto split = split_train_val<ParallelExample>(examples, c.val_fraction, c.model.seed);
        train = std::move(split.first);
        val = std::move(split.second);
    }
    if (train.empty()) throw ConfigError("no training examples left after the validation split");

    Rng rng(c.model.seed);
    CcnlModel model(c.model, tower_embeddings(c.model, train, c.source_embeddings, c.target_embeddings, rng), rng);
    const auto train_enc = encode_all(model, train);
    const auto val_enc = encode_all(model, val);
    TrainSummary summary;
    summary.report = fit(model, train_enc, val_enc, fit_options(c));
    summary.train_macro_f1 = training_macro_f1(model, train_enc);

    if (c.refit && !val.empty()) {
        log(c, LogLevel::info, "refit on train+val for " + std::to_string(summary.report.best_epoch) + " epochs");
        Rng refit_rng(c.model.seed);
        CcnlModel full(c.model, tower_embeddings(c.model, examples, c.source_embeddings, c.target_embeddings, refit_rng),
                       refit_rng);
        const auto all_enc = encode_all(full, examples);
        FitOptions opts = fit_options(c);
        opts.epochs = std::max<std::size_t>(summary.report.best_epoch, 1);
        opts.target_val_macro_f1.reset();
        fit(full, all_enc, {}, opts);
        summary.train_macro_f1 = training_macro_f1(full, all_enc);
        model = std::move(full);
    }

    std::string report = "epoch\ttrain_loss\tval_macro_f1\n";
    for (const auto& r : summary.report.epochs) {
        report += std::to_string(r.epoch) + "\t" + shortest(r.train_loss) + "\t" +
                  (std::isnan(r.val_macro_f1) ? std::string("nan") : shortest(r.val_macro_f1)) + "\n";
    }
    std::string overview;
    overview += "ablation\t" + std::string(ablation_tag(c.model.ablation)) + "\n";
    overview += "epochs_run\t" + std::to_string(summary.report.epochs.size()) + "\n";
    overview += "best_epoch\t" + std::to_string(summary.report.best_epoch) + "\n";
    overview += "best_val_macro_f1\t" +
                (std::isnan(summary.report.best_val_macro_f1) ? std::string("nan") : fixed4(summary.report.best_val_macro_f1)) +
                "\n";
    overview += "stopped_early\t" + std::string(summary.report.stopped_early ? "true" : "false") + "\n";
    overview += "train_macro_f1\t" + fixed4(summary.train_macro_f1) + "\n";

    ensure_out_dir(c.out);
    summary.checkpoint_path = out_path(c, "model.ckpt");
    save_checkpoint(model, summary.checkpoint_path);
    write_text(out_path(c, "train_report.tsv"), report);
    write_text(out_path(c, "train_summary.txt"), overview);
    log(c, LogLevel::info, "train_macro_f1\t" + fixed4(summary.train_macro_f1));
    return summary;
}

EvalSummary cmd_eval(const RunConfig& c) {
    EvalSummary summary;
    std::vector<std::pair<std::string, std::string>> files;
    if (c.majority) {
        require_file(c.train_labels, "training corpus");
        require_file(c.test_labels, "test corpus");
        const auto train = load_corpus(c.train_labels);
        const auto test = load_corpus(c.test_labels);
        if (train.empty()) throw ConfigError("majority baseline needs a non-empty training corpus");
        std::vector<int> train_y;
        std::vector<int> test_y;
        std::vector<std::string> ids;
        for (const auto& e : train) train_y.push_back(e.label);
        for (const auto& e : test) {
            test_y.push_back(e.label);
            ids.push_back(e.id);
        }
        summary.report = majority_baseline(train_y, test_y, ids);
    } else {
        require_file(c.checkpoint, "checkpoint");
        require_file(c.test_source, "test source corpus");
        require_file(c.test_translated, "test translated corpus");
        const CcnlModel model = load_checkpoint(c.checkpoint);
        const auto examples = load_parallel(c.test_source, c.test_translated);
        if (examples.empty()) throw ConfigError("test corpus is empty");
        const auto encoded = encode_all(model, examples);
        const auto predictions = predict(model, encoded);
        std::vector<int> gold;
        std::vector<int> pred;
        std::vector<std::string> ids;
        std::string mis = "id\tgold\tpred\tp0\tp1\tsource_text\ttarget_text\n";
        for (std::size_t i = 0; i < examples.size(); ++i) {
            gold.push_back(examples[i].label());
            pred.push_back(predictions[i].label);
            ids.push_back(examples[i].source.id);
            if (gold.back() != pred.back()) {
                mis += examples[i].source.id + "\t" + std::to_string(gold.back()) + "\t" + std::to_string(pred.back()) +
                       "\t" + shortest(predictions[i].probabilities[0]) + "\t" +
                       shortest(predictions[i].probabilities[1]) + "\t" + examples[i].source.text + "\t" +
                       examples[i].target_text + "\n";
            }
        }
        summary.report = evaluate(gold, pred, ids);
        files.emplace_back("misclassified.tsv", std::move(mis));
    }
    files.emplace_back("eval_report.tsv", report_tsv(summary.report));
    files.emplace_back("eval_summary.txt", report_summary(summary.report));

    ensure_out_dir(c.out);
    for (const auto& [name, content] : files) {
        write_text(out_path(c, name), content);
        summary.written.push_back(out_path(c, name));
    }
    log(c, LogLevel::info, "macro_f1\t" + fixed4(summary.report.macro_f1));
    return summary;
}

std::string cmd_ablate(const RunConfig& c) {
    require_file(c.source, "source corpus");
    require_file(c.translated, "translated corpus");
    const bool has_test = !c.test_source.empty() || !c.test_translated.empty();
    if (has_test) {
        require_file(c.test_source, "test source corpus");
        require_file(c.test_translated, "test translated corpus");
    }
    if (!c.source_embeddings.empty()) require_file(c.source_embeddings, "source embedding");
    if (!c.target_embeddings.empty()) require_file(c.target_embeddings, "target embedding");

    const auto examples = load_parallel(c.source, c.translated);
    if (examples.empty()) throw ConfigError("training corpus is empty");
    std::vector<ParallelExample> test;
    if (has_test) test = load_parallel(c.test_source, c.test_translated);
    std::vector<ParallelExample> train = examples;
    std::vector<ParallelExample> val;
    if (c.val_fraction > 0.0) {
        auto split = split_train_val<ParallelExample>(examples, c.val_fraction, c.model.seed);
        train = std::move(split.first);
        val = std::move(split.second);
    }
    if (test.empty() && val.empty()) throw ConfigError("ablate needs a test corpus or a validation split to score on");

    std::vector<ModelConfig> configs;
    const std::vector<Ablation> variants =
        c.variants.empty() ? std::vector<Ablation>(kAblationTableOrder.begin(), kAblationTableOrder.end()) : c.variants;
    for (Ablation a : variants) {
        ModelConfig mc = c.model;
        mc.ablation = a;
        mc.validate();
        configs.push_back(mc);
    }
    const ModelFactory factory = [&](const ModelConfig& mc) {
        Rng rng(mc.seed);
        log(c, LogLevel::info, "training " + std::string(ablation_display_name(mc.ablation)));
        return CcnlModel(mc, tower_embeddings(mc, train, c.source_embeddings, c.target_embeddings, rng), rng);
    };
    FitOptions opts;
    opts.epochs = c.epochs;
    opts.target_val_macro_f1 = c.target_f1;
    const AblationTable table = ablation_report(configs, AblationData{train, val, test}, factory, c.pair, opts);
    const std::string tsv = table.to_tsv();
    ensure_out_dir(c.out);
    write_text(out_path(c, "ablation.tsv"), tsv);
    log(c, LogLevel::info, tsv);
    return tsv;
}

void cmd_synth(const RunConfig& c) {
    if (c.synth.n == 0) throw ConfigError("synth needs n >= 1");
    const SynthCorpus corpus = synth_corpus(c.synth, c.model.seed);
    ensure_out_dir(c.out);
    const std::string src = out_path(c, "source.tsv");
    const std::string tgt = out_path(c, "translated.tsv");
    write_corpus(src + ".tmp", corpus.source);
    write_corpus(tgt + ".tmp", corpus.translation);
    fs::rename(src + ".tmp", src);
    fs::rename(tgt + ".tmp", tgt);
    const CorpusStats stats = corpus_stats(corpus.source);
    log(c, LogLevel::info, "wrote " + std::to_string(stats.count) + " pairs, mtr " + fixed4(stats.mtr));
}

}  // namespace ccnl
