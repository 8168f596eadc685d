#include "ccnl/ablation.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "ccnl/error.hpp"
#include "ccnl/eval.hpp"

namespace ccnl {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

std::size_t table_position(Ablation a) {
    return static_cast<std::size_t>(std::find(kAblationTableOrder.begin(), kAblationTableOrder.end(), a) -
                                    kAblationTableOrder.begin());
}

std::vector<EncodedPair> encode_all(const CcnlModel& model, std::span<const ParallelExample> data) {
    std::vector<EncodedPair> out;
    out.reserve(data.size());
    for (const auto& ex : data) out.push_back(model.encode(ex));
    return out;
}

}  // namespace

std::string AblationTable::to_tsv() const {
    std::ostringstream out;
    out << "model";
    for (const auto& c : columns) out << '\t' << c;
    out << '\n';
    for (const auto& row : rows) {
        out << ablation_display_name(row.variant);
        for (double s : row.scores) {
            char buf[64];
            const auto res = std::to_chars(buf, buf + sizeof buf, s);
            out << '\t' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
        }
        out << '\n';
    }
    return out.str();
}

AblationTable AblationTable::parse_tsv(std::string_view tsv) {
    AblationTable table;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < tsv.size()) {
        std::size_t end = tsv.find('\n', start);
        if (end == std::string_view::npos) end = tsv.size();
        const std::string_view line = tsv.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (line_no == 1) {
            if (fields.empty() || fields[0] != "model") throw ParseError("ablation table: header must start with 'model'");
            for (std::size_t i = 1; i < fields.size(); ++i) table.columns.emplace_back(fields[i]);
            continue;
        }
        if (fields.size() != table.columns.size() + 1) {
            throw ParseError("ablation table line " + std::to_string(line_no) + ": wrong number of fields");
        }
        AblationRow row;
        const auto it = std::find_if(kAblationTableOrder.begin(), kAblationTableOrder.end(),
                                     [&](Ablation a) { return ablation_display_name(a) == fields[0]; });
        if (it == kAblationTableOrder.end()) {
            throw ParseError("ablation table line " + std::to_string(line_no) + ": unknown model '" +
                             std::string(fields[0]) + "'");
        }
        row.variant = *it;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            double v = 0.0;
            const auto res = std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
            if (res.ec != std::errc() || res.ptr != fields[i].data() + fields[i].size()) {
                throw ParseError("ablation table line " + std::to_string(line_no) + ": bad score");
            }
            row.scores.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    if (line_no == 0) throw ParseError("ablation table is empty");
    return table;
}

AblationTable ablation_report(std::span<const ModelConfig> configs, const AblationData& data,
                              const ModelFactory& make_model, const std::string& column, const FitOptions& options) {
    const auto scored = data.test.empty() ? data.val : data.test;
    if (scored.empty()) throw InputError("ablation report needs a validation or test set to score");

    std::vector<const ModelConfig*> ordered;
    for (const auto& c : configs) ordered.push_back(&c);
    std::stable_sort(ordered.begin(), ordered.end(), [](const ModelConfig* a, const ModelConfig* b) {
        return table_position(a->ablation) < table_position(b->ablation);
    });

    AblationTable table;
    table.columns.push_back(column);
    for (const ModelConfig* config : ordered) {
        CcnlModel model = make_model(*config);
        const auto train = encode_all(model, data.train);
        const auto val = encode_all(model, data.val);
        fit(model, train, val, options);
        const auto eval_set = encode_all(model, scored);
        std::vector<int> gold, pred;
        for (const auto& p : predict(model, eval_set)) pred.push_back(p.label);
        for (const auto& ex : eval_set) gold.push_back(ex.label);
        table.rows.push_back(AblationRow{config->ablation, {macro_f1(gold, pred)}});
    }
    return table;
}

}  // namespace ccnl
