#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ccnl {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    std::array<ClassMetrics, 2> per_class{};
    double macro_f1 = 0.0;
    std::array<std::array<std::size_t, 2>, 2> confusion{};  // [gold][predicted]
    std::vector<std::string> misclassified_ids;
};

// Undefined precision or recall (zero denominators) count as 0, and so does
// F1 when precision + recall == 0.
EvalReport evaluate(std::span<const int> gold, std::span<const int> predicted, std::span<const std::string> ids = {});
double macro_f1(std::span<const int> gold, std::span<const int> predicted);

/// Most frequent training label; a tie goes to 0.
int majority_label(std::span<const int> train_labels);
EvalReport majority_baseline(std::span<const int> train_labels, std::span<const int> test_labels,
                             std::span<const std::string> test_ids = {});
/// Macro-F1 of always predicting 0 on a test set with positive rate m.
double majority_macro_f1_closed_form(double positive_rate);

/// Columns: class, precision, recall, f1, support; then a macro row.
std::string report_tsv(const EvalReport& report);
std::string report_summary(const EvalReport& report);

}  // namespace ccnl
