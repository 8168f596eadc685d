#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ccnl/data.hpp"
#include "ccnl/eval.hpp"
#include "ccnl/model.hpp"

namespace ccnl {

enum class LogLevel { info, warning };
using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Everything one CLI command needs. Keys accepted by set_run_value are the
/// field names below plus every ModelConfig key.
struct RunConfig {
    ModelConfig model;
    std::string out = ".";

    // corpora (id/text/label TSV)
    std::string source;           // training corpus, source language
    std::string translated;       // its translation, target language
    std::string test_source;
    std::string test_translated;
    std::string train_labels;     // eval --majority
    std::string test_labels;      // eval --majority

    // embeddings and lexical resources
    std::string embeddings;            // retrofit input
    std::string reference_embeddings;  // retrofit: vectors for OOV lexicon words
    std::string source_embeddings;
    std::string target_embeddings;
    std::vector<std::string> lexicons;
    std::string relations;
    std::size_t retrofit_iterations = 10;
    bool expand_oov = true;

    // train / eval / ablate
    std::string checkpoint;
    double val_fraction = 0.2;
    bool refit = false;
    bool majority = false;
    std::optional<std::size_t> epochs;
    std::optional<double> target_f1;
    std::vector<Ablation> variants;  // empty = all six
    std::string pair = "synthetic";

    // synth
    SynthSpec synth;

    LogSink log;
};

std::vector<std::string> run_config_keys();
void set_run_value(RunConfig& config, std::string_view key, std::string_view value);
/// JSON object of keys (as in set_run_value) to scalars; "lexicons" and "variants" may be arrays.
void apply_config_file(RunConfig& config, const std::string& path);
void apply_config_json(RunConfig& config, std::string_view json, const std::string& source_name = "<config>");

struct RetrofitSummary {
    std::string output_path;
    std::vector<double> objective;
    std::size_t graph_nodes = 0;
    std::size_t graph_edges = 0;
    std::vector<std::string> warnings;
};

struct TrainSummary {
    std::string checkpoint_path;
    TrainingReport report;
    double train_macro_f1 = 0.0;
};

struct EvalSummary {
    EvalReport report;
    std::vector<std::string> written;
};

RetrofitSummary cmd_retrofit(const RunConfig& config);
TrainSummary cmd_train(const RunConfig& config);
EvalSummary cmd_eval(const RunConfig& config);
std::string cmd_ablate(const RunConfig& config);  // returns the table TSV
void cmd_synth(const RunConfig& config);

/// Tower inputs for a model config: vocabularies built from the texts and
/// embeddings loaded from the given files (or drawn at random).
std::vector<EmbeddingMatrix> tower_embeddings(const ModelConfig& config, std::span<const ParallelExample> train,
                                              const std::string& source_embeddings,
                                              const std::string& target_embeddings, Rng& rng);

std::vector<ParallelExample> load_parallel(const std::string& source, const std::string& translated);

}  // namespace ccnl
