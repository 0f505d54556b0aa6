#pragma once
#include <vector>

namespace casenet {

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double mcc = 0.0;
    std::vector<std::vector<long>> confusion;  // [true][pred]
};

/// Accuracy, macro-F1 (0 for classes with undefined P/R) and multiclass MCC
/// (0 when the denominator vanishes) over integer predictions.
MetricsReport compute_metrics(const std::vector<int>& pred, const std::vector<int>& labels, int n_classes);

}  // namespace casenet
