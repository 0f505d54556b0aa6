#include "casenet/trainer.hpp"

#include <chrono>
#include <cmath>

#include "casenet/errors.hpp"

namespace casenet {

Adam::Adam(const ParameterStore& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& [name, t] : params) {
        Slot s;
        s.m.assign(static_cast<size_t>(t.numel()), 0.0);
        s.v.assign(static_cast<size_t>(t.numel()), 0.0);
        slots_.emplace(name, std::move(s));
    }
}

void Adam::step(ParameterStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        auto it = slots_.find(name);
        if (it == slots_.end()) throw ContractError("adam: no state for parameter '" + name + "'");
        Slot& s = it->second;
        const std::vector<double>& grad = *p.grad;
        std::vector<double>& value = *p.data;
        for (size_t i = 0; i < value.size(); ++i) {
            const double gi = grad[i];
            if (!std::isfinite(gi))
                throw NumericError("adam: non-finite gradient in parameter '" + name + "'");
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

LossBreakdown train_epoch(ParameterStore& params, const Dataset& train, Adam& opt,
                          const ModelConfig& cfg, const TrainConfig& tcfg, std::mt19937_64& rng) {
    if (train.samples.empty()) throw ContractError("train_epoch: empty dataset");
    const auto batches = batch_indices(train.size(), tcfg.batch_size, true, rng);
    LossBreakdown mean;
    double total_weight = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
        const auto& batch = batches[bi];
        Tensor x = batch_to_tensor(train, batch);
        const std::vector<int> labels = batch_labels(train, batch);
        Graph g;
        RunMode mode;
        mode.training = true;
        mode.rng = &rng;
        ModelOut out = model_forward(g, x, params, cfg, mode);
        TotalLoss tl = total_loss(g, out.logits, labels, out.shared, out.specific, cfg.lambda1, cfg.lambda2);
        if (!std::isfinite(tl.values.l_total))
            throw NumericError("train_epoch: non-finite loss in batch " + std::to_string(bi));
        params.zero_grad();
        g.backward(tl.total);
        opt.step(params);
        const double w = static_cast<double>(batch.size());
        mean.l_cls += w * tl.values.l_cls;
        mean.l_sim += w * tl.values.l_sim;
        mean.l_diff += w * tl.values.l_diff;
        mean.l_total += w * tl.values.l_total;
        total_weight += w;
    }
    mean.l_cls /= total_weight;
    mean.l_sim /= total_weight;
    mean.l_diff /= total_weight;
    mean.l_total /= total_weight;
    return mean;
}

std::pair<LossBreakdown, MetricsReport> evaluate(const ParameterStore& params, const Dataset& ds,
                                                 const ModelConfig& cfg, int batch_size) {
    if (ds.samples.empty()) throw ContractError("evaluate: empty dataset");
    std::mt19937_64 unused(0);
    const auto batches = batch_indices(ds.size(), batch_size, false, unused);
    LossBreakdown mean;
    double total_weight = 0.0;
    std::vector<int> preds, labels_all;
    preds.reserve(ds.samples.size());
    labels_all.reserve(ds.samples.size());
    for (const auto& batch : batches) {
        Tensor x = batch_to_tensor(ds, batch);
        const std::vector<int> labels = batch_labels(ds, batch);
        Graph g;
        g.recording = false;
        ModelOut out = model_forward(g, x, params, cfg);
        TotalLoss tl = total_loss(g, out.logits, labels, out.shared, out.specific, cfg.lambda1, cfg.lambda2);
        const double w = static_cast<double>(batch.size());
        mean.l_cls += w * tl.values.l_cls;
        mean.l_sim += w * tl.values.l_sim;
        mean.l_diff += w * tl.values.l_diff;
        mean.l_total += w * tl.values.l_total;
        total_weight += w;
        const int b = static_cast<int>(batch.size());
        const int k = out.logits.shape[1];
        const double* z = out.logits.data->data();
        for (int i = 0; i < b; ++i) {
            int arg = 0;
            for (int j = 1; j < k; ++j)
                if (z[static_cast<std::int64_t>(i) * k + j] > z[static_cast<std::int64_t>(i) * k + arg]) arg = j;
            preds.push_back(arg);
            labels_all.push_back(labels[static_cast<size_t>(i)]);
        }
    }
    mean.l_cls /= total_weight;
    mean.l_sim /= total_weight;
    mean.l_diff /= total_weight;
    mean.l_total /= total_weight;
    return {mean, compute_metrics(preds, labels_all, ds.n_classes)};
}

FitResult fit(const ModelConfig& cfg, const Dataset& train, const Dataset& val,
              const TrainConfig& tcfg, std::uint64_t seed, const EpochCallback& on_epoch) {
    cfg.validate();
    if (tcfg.max_epochs < 1) throw ConfigError("fit: max_epochs must be >= 1");
    ParameterStore params = ParameterStore::init(cfg, seed);
    Adam opt(params, tcfg.adam);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

    RunRecord rec;
    rec.seed = seed;
    rec.cfg = cfg;
    FitResult result;
    double best_acc = -1.0;
    int since_improved = 0;
    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord er;
        try {
            er.train_loss = train_epoch(params, train, opt, cfg, tcfg, rng);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
        auto [vl, vm] = evaluate(params, val, cfg, tcfg.batch_size);
        er.val_loss = vl;
        er.val_metrics = vm;
        er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (on_epoch) on_epoch(epoch, er);
        rec.epochs.push_back(std::move(er));

        if (vm.accuracy > best_acc) {
            best_acc = vm.accuracy;
            rec.best_epoch = epoch;
            result.best_params = params.deep_copy();
            since_improved = 0;
        } else {
            ++since_improved;
        }
        if (since_improved >= tcfg.patience) break;
    }
    result.record = std::move(rec);
    return result;
}

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names{"full", "no_causal", "no_se", "mlp_head", "baseline"};
    return names;
}

ModelConfig build_variant(const std::string& name, ModelConfig base) {
    base.causal = true;
    base.se = true;
    base.mlp_head_only = false;
    base.projection_only = false;
    if (name == "full") return base;
    if (name == "no_causal") {
        base.causal = false;
        return base;
    }
    if (name == "no_se") {
        base.se = false;
        return base;
    }
    if (name == "mlp_head") {
        base.mlp_head_only = true;
        return base;
    }
    if (name == "baseline") {
        base.projection_only = true;
        base.mlp_head_only = true;
        base.n_scales = 1;
        return base;
    }
    throw ConfigError("build_variant: unknown variant '" + name +
                      "' (expected full|no_causal|no_se|mlp_head|baseline)");
}

}  // namespace casenet
