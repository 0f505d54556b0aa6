#pragma once
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "casenet/data.hpp"
#include "casenet/layers.hpp"
#include "casenet/losses.hpp"
#include "casenet/metrics.hpp"

namespace casenet {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a ParameterStore. Moment buffers mirror the
/// parameter shapes; the step count advances once per step() call.
class Adam {
public:
    explicit Adam(const ParameterStore& params, AdamConfig cfg = {});
    void step(ParameterStore& params);
    long step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    std::map<std::string, Slot> slots_;
    long t_ = 0;
    AdamConfig cfg_;
};

struct TrainConfig {
    AdamConfig adam;
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 10;
};

/// One pass over shuffled batches: forward, total loss, backward, Adam step,
/// dropout active. Returns the batch-size-weighted mean loss.
LossBreakdown train_epoch(ParameterStore& params, const Dataset& train, Adam& opt,
                          const ModelConfig& cfg, const TrainConfig& tcfg, std::mt19937_64& rng);

/// Deterministic: dropout off, argmax predictions (ties to the lowest class).
std::pair<LossBreakdown, MetricsReport> evaluate(const ParameterStore& params, const Dataset& ds,
                                                 const ModelConfig& cfg, int batch_size = 32);

struct EpochRecord {
    LossBreakdown train_loss;
    LossBreakdown val_loss;
    MetricsReport val_metrics;
    double seconds = 0.0;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;  // 0-based index into epochs
    std::uint64_t seed = 0;
    ModelConfig cfg;
};

struct FitResult {
    ParameterStore best_params;
    RunRecord record;
};

using EpochCallback = std::function<void(int epoch, const EpochRecord&)>;

/// Trains until val accuracy fails to improve for `patience` epochs (or
/// max_epochs); returns the in-memory checkpoint from the best-val epoch.
FitResult fit(const ModelConfig& cfg, const Dataset& train, const Dataset& val,
              const TrainConfig& tcfg, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// full | no_causal | no_se | mlp_head | baseline
ModelConfig build_variant(const std::string& name, ModelConfig base);
const std::vector<std::string>& variant_names();

}  // namespace casenet
