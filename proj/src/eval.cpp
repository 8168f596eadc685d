#include "ccnl/eval.hpp"

#include <charconv>
#include <sstream>

#include "ccnl/error.hpp"

namespace ccnl {

namespace {

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

EvalReport evaluate(std::span<const int> gold, std::span<const int> predicted, std::span<const std::string> ids) {
    if (gold.size() != predicted.size()) {
        throw InputError("gold has " + std::to_string(gold.size()) + " labels but predictions have " +
                         std::to_string(predicted.size()));
    }
    if (gold.empty()) throw InputError("cannot evaluate an empty label set");
    if (!ids.empty() && ids.size() != gold.size()) throw InputError("id count does not match label count");

    EvalReport r;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || gold[i] > 1 || predicted[i] < 0 || predicted[i] > 1) throw InputError("labels must be 0 or 1");
        ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
        if (gold[i] != predicted[i] && !ids.empty()) r.misclassified_ids.push_back(ids[i]);
    }
    for (std::size_t c = 0; c < 2; ++c) {
        const double tp = static_cast<double>(r.confusion[c][c]);
        const double predicted_c = static_cast<double>(r.confusion[0][c] + r.confusion[1][c]);
        const double actual_c = static_cast<double>(r.confusion[c][0] + r.confusion[c][1]);
        ClassMetrics& m = r.per_class[c];
        m.precision = safe_ratio(tp, predicted_c);
        m.recall = safe_ratio(tp, actual_c);
        m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        m.support = r.confusion[c][0] + r.confusion[c][1];
    }
    r.macro_f1 = 0.5 * (r.per_class[0].f1 + r.per_class[1].f1);
    return r;
}

double macro_f1(std::span<const int> gold, std::span<const int> predicted) {
    return evaluate(gold, predicted).macro_f1;
}

int majority_label(std::span<const int> train_labels) {
    if (train_labels.empty()) throw InputError("majority baseline needs a non-empty training set");
    std::size_t positives = 0;
    for (int l : train_labels) positives += l == 1 ? 1 : 0;
    return 2 * positives > train_labels.size() ? 1 : 0;
}

EvalReport majority_baseline(std::span<const int> train_labels, std::span<const int> test_labels,
                             std::span<const std::string> test_ids) {
    const std::vector<int> predicted(test_labels.size(), majority_label(train_labels));
    return evaluate(test_labels, predicted, test_ids);
}

double majority_macro_f1_closed_form(double positive_rate) {
    // Class 0: precision 1-m, recall 1, F1 = 2(1-m)/(2-m); class 1: F1 = 0.
    return 0.5 * 2.0 * (1.0 - positive_rate) / (2.0 - positive_rate);
}

std::string report_tsv(const EvalReport& report) {
    std::ostringstream out;
    out << "class\tprecision\trecall\tf1\tsupport\n";
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& m = report.per_class[c];
        out << c << '\t' << fmt(m.precision) << '\t' << fmt(m.recall) << '\t' << fmt(m.f1) << '\t' << m.support
            << '\n';
    }
    out << "macro\t\t\t" << fmt(report.macro_f1) << '\t' << (report.per_class[0].support + report.per_class[1].support)
        << '\n';
    return out.str();
}

std::string report_summary(const EvalReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "macro_f1\t%.4f\n", report.macro_f1);
    out << line;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& m = report.per_class[c];
        std::snprintf(line, sizeof line, "class %zu\tprecision %.4f\trecall %.4f\tf1 %.4f\tsupport %zu\n", c,
                      m.precision, m.recall, m.f1, m.support);
        out << line;
    }
    out << "confusion (rows gold, cols predicted)\n";
    for (std::size_t g = 0; g < 2; ++g) out << report.confusion[g][0] << '\t' << report.confusion[g][1] << '\n';
    out << "misclassified\t" << report.misclassified_ids.size() << '\n';
    return out.str();
}

}  // namespace ccnl
