#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccnl/data.hpp"
#include "ccnl/model.hpp"

namespace ccnl {

struct AblationRow {
    Ablation variant = Ablation::full;
    std::vector<double> scores;  // one macro-F1 per column

    friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

// Rows are variants (display names, kAblationTableOrder), columns
// are language pairs.
struct AblationTable {
    std::vector<std::string> columns;
    std::vector<AblationRow> rows;

    std::string to_tsv() const;
    static AblationTable parse_tsv(std::string_view tsv);
    friend bool operator==(const AblationTable&, const AblationTable&) = default;
};

struct AblationData {
    std::span<const ParallelExample> train;
    std::span<const ParallelExample> val;
    /// Scored on test when non-empty, otherwise on val.
    std::span<const ParallelExample> test;
};

/// Builds an untrained model (vocabularies, embeddings, parameters) for a config.
using ModelFactory = std::function<CcnlModel(const ModelConfig&)>;

// Trains and scores every config with the shared data; the seed comes from
// each config. Rows come back in table order, whatever the input order.
AblationTable ablation_report(std::span<const ModelConfig> configs, const AblationData& data,
                              const ModelFactory& make_model, const std::string& column,
                              const FitOptions& options = {});

}  // namespace ccnl
