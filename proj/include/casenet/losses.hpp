#pragma once
#include <vector>

#include "casenet/graph.hpp"
#include "casenet/tensor.hpp"

namespace casenet {

struct LossBreakdown {
    double l_cls = 0.0;
    double l_sim = 0.0;
    double l_diff = 0.0;
    double l_total = 0.0;
};

/// Mean over the batch of -log softmax(logits)[label], max-stabilized.
Tensor nll_loss(Graph& g, const Tensor& logits, const std::vector<int>& labels);

/// Cross-scale cosine consistency on shared representations: mean over
/// unordered scale pairs and batch of 1 - cos(pooled_s1, pooled_s2).
/// Inputs are [B, D, L_s] (pooled over time here) or already-pooled [B, D].
/// Returns a constant 0 when fewer than two scales are given.
Tensor sim_loss(Graph& g, const std::vector<Tensor>& shared);

/// Shared/specific orthogonality: sum over scales of ||Z_sh^T Z_sp||_F^2
/// over time-pooled batch matrices, normalized by B^2 * S.
Tensor diff_loss(Graph& g, const std::vector<Tensor>& shared, const std::vector<Tensor>& specific);

struct TotalLoss {
    Tensor total;  // scalar on the graph; feed to Graph::backward
    LossBreakdown values;
};

TotalLoss total_loss(Graph& g, const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<Tensor>& shared, const std::vector<Tensor>& specific,
                     double lambda1, double lambda2);

}  // namespace casenet
