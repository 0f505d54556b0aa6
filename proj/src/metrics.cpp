#include "casenet/metrics.hpp"

#include <cmath>
#include <string>

#include "casenet/errors.hpp"

namespace casenet {

MetricsReport compute_metrics(const std::vector<int>& pred, const std::vector<int>& labels, int n_classes) {
    if (pred.empty() || pred.size() != labels.size())
        throw ContractError("compute_metrics: need equal, non-empty pred/label vectors");
    if (n_classes < 1) throw ContractError("compute_metrics: n_classes must be >= 1");

    MetricsReport r;
    r.confusion.assign(static_cast<size_t>(n_classes), std::vector<long>(static_cast<size_t>(n_classes), 0));
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= n_classes || labels[i] < 0 || labels[i] >= n_classes)
            throw ContractError("compute_metrics: entry out of range [0," + std::to_string(n_classes) +
                                ") at sample " + std::to_string(i));
        r.confusion[static_cast<size_t>(labels[i])][static_cast<size_t>(pred[i])]++;
    }

    const double total = static_cast<double>(pred.size());
    double trace = 0.0;
    for (int c = 0; c < n_classes; ++c) trace += static_cast<double>(r.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)]);
    r.accuracy = trace / total;

    double f1_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        long tp = r.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
        long fp = 0, fn = 0;
        for (int o = 0; o < n_classes; ++o) {
            if (o == c) continue;
            fp += r.confusion[static_cast<size_t>(o)][static_cast<size_t>(c)];
            fn += r.confusion[static_cast<size_t>(c)][static_cast<size_t>(o)];
        }
        const double p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double q = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        f1_sum += (p + q) > 0.0 ? 2.0 * p * q / (p + q) : 0.0;
    }
    r.macro_f1 = f1_sum / n_classes;

    // multiclass MCC via the covariance form over the confusion matrix
    double sum_tp = 0.0, sum_t2 = 0.0, sum_p2 = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        double t = 0.0, p = 0.0;
        for (int o = 0; o < n_classes; ++o) {
            t += static_cast<double>(r.confusion[static_cast<size_t>(c)][static_cast<size_t>(o)]);
            p += static_cast<double>(r.confusion[static_cast<size_t>(o)][static_cast<size_t>(c)]);
        }
        sum_tp += t * p;
        sum_t2 += t * t;
        sum_p2 += p * p;
    }
    const double num = trace * total - sum_tp;
    const double den = std::sqrt(total * total - sum_p2) * std::sqrt(total * total - sum_t2);
    r.mcc = den > 0.0 ? num / den : 0.0;
    return r;
}

}  // namespace casenet
