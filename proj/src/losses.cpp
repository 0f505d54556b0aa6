#include "casenet/losses.hpp"

#include <cmath>
#include <string>

#include "casenet/errors.hpp"
#include "casenet/ops.hpp"

namespace casenet {

Tensor nll_loss(Graph& g, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw ShapeError("nll_loss: logits must be [B, K], got " + shape_str(logits.shape));
    const int b = logits.shape[0], k = logits.shape[1];
    if (static_cast<int>(labels.size()) != b)
        throw ContractError("nll_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                            std::to_string(b));
    for (int i = 0; i < b; ++i)
        if (labels[i] < 0 || labels[i] >= k)
            throw ContractError("nll_loss: label " + std::to_string(labels[i]) + " out of range [0," +
                                std::to_string(k) + ") at sample " + std::to_string(i));

    const bool rg = g.wants_grad(logits);
    Tensor out = Tensor::zeros({}, rg);
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(b) * k);
    const double* z = logits.data->data();
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* row = z + static_cast<std::int64_t>(i) * k;
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        for (int j = 0; j < k; ++j) (*probs)[static_cast<size_t>(i) * k + j] = std::exp(row[j] - lse);
        loss += lse - row[labels[i]];
    }
    (*out.data)[0] = loss / b;
    if (rg) {
        g.push("nll_loss", {&logits}, out, [logits, out, probs, labels, b, k]() {
            const double dy = (*out.grad)[0] / b;
            double* dz = logits.grad->data();
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < k; ++j)
                    dz[static_cast<std::int64_t>(i) * k + j] +=
                        dy * ((*probs)[static_cast<size_t>(i) * k + j] - (j == labels[i] ? 1.0 : 0.0));
        });
    }
    return out;
}

namespace {

Tensor pool_time(Graph& g, const Tensor& h) {
    if (h.rank() == 3) return ops::reduce_mean(g, h, 2);
    if (h.rank() == 2) return h;
    throw ShapeError("loss pooling: expected [B, D, L] or [B, D], got " + shape_str(h.shape));
}

}  // namespace

Tensor sim_loss(Graph& g, const std::vector<Tensor>& shared) {
    const int s = static_cast<int>(shared.size());
    if (s < 2) return Tensor::zeros({});
    std::vector<Tensor> pooled;
    pooled.reserve(shared.size());
    for (const Tensor& h : shared) pooled.push_back(pool_time(g, h));

    Tensor cos_sum;
    int pairs = 0;
    for (int s1 = 0; s1 < s; ++s1) {
        for (int s2 = s1 + 1; s2 < s; ++s2) {
            const Tensor& u = pooled[static_cast<size_t>(s1)];
            const Tensor& v = pooled[static_cast<size_t>(s2)];
            if (u.shape != v.shape)
                throw ShapeError("sim_loss: pooled shapes differ, " + shape_str(u.shape) + " vs " +
                                 shape_str(v.shape));
            Tensor dot = ops::reduce_sum(g, ops::mul(g, u, v), 1);
            Tensor nu = ops::sqrt(g, ops::reduce_sum(g, ops::mul(g, u, u), 1));
            Tensor nv = ops::sqrt(g, ops::reduce_sum(g, ops::mul(g, v, v), 1));
            // the epsilon engages only for vanishing norms, so cos(u, u) stays 1
            Tensor denom = ops::clamp_min(g, ops::mul(g, nu, nv), 1e-8);
            Tensor cos_b = ops::reduce_mean(g, ops::div(g, dot, denom), 0);
            cos_sum = pairs == 0 ? cos_b : ops::add(g, cos_sum, cos_b);
            ++pairs;
        }
    }
    return ops::add_scalar(g, ops::scale(g, cos_sum, -1.0 / pairs), 1.0);
}

Tensor diff_loss(Graph& g, const std::vector<Tensor>& shared, const std::vector<Tensor>& specific) {
    if (shared.size() != specific.size())
        throw ContractError("diff_loss: shared/specific scale counts differ");
    const int s = static_cast<int>(shared.size());
    if (s == 0) return Tensor::zeros({});
    Tensor acc;
    int batch = 0;
    for (int i = 0; i < s; ++i) {
        const Tensor& sh = shared[static_cast<size_t>(i)];
        const Tensor& sp = specific[static_cast<size_t>(i)];
        if (sh.shape != sp.shape)
            throw ShapeError("diff_loss: scale " + std::to_string(i) + " shapes differ, " +
                             shape_str(sh.shape) + " vs " + shape_str(sp.shape));
        Tensor zsh = pool_time(g, sh);
        Tensor zsp = pool_time(g, sp);
        batch = zsh.shape[0];
        Tensor cross = ops::matmul(g, ops::transpose(g, zsh), zsp);  // [D, D]
        Tensor fro2 = ops::reduce_sum_all(g, ops::mul(g, cross, cross));
        acc = i == 0 ? fro2 : ops::add(g, acc, fro2);
    }
    return ops::scale(g, acc, 1.0 / (static_cast<double>(batch) * batch * s));
}

TotalLoss total_loss(Graph& g, const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<Tensor>& shared, const std::vector<Tensor>& specific,
                     double lambda1, double lambda2) {
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw ContractError("total_loss: lambda weights must be non-negative");
    Tensor cls = nll_loss(g, logits, labels);
    Tensor sim = sim_loss(g, shared);
    Tensor diff = diff_loss(g, shared, specific);
    Tensor total = ops::add(g, cls, ops::add(g, ops::scale(g, sim, lambda1), ops::scale(g, diff, lambda2)));
    TotalLoss result;
    result.total = total;
    result.values.l_cls = cls.item();
    result.values.l_sim = sim.item();
    result.values.l_diff = diff.item();
    result.values.l_total = total.item();
    return result;
}

}  // namespace casenet
