#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "casenet/tensor.hpp"

namespace casenet {

struct MtsSample {
    std::vector<double> x;  // row-major N x L
    int label = 0;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stdev;
};

struct Dataset {
    std::string name;
    int n_channels = 0;
    int length = 0;
    int n_classes = 0;
    std::vector<MtsSample> samples;
    std::optional<ChannelStats> channel_stats;

    int size() const { return static_cast<int>(samples.size()); }
    void validate() const;
};

/// Binary probe for the causality tests: the class signal is a sinusoid
/// (2 or 4 cycles, unit amplitude, random phase per channel) confined to
/// t in [0, L/2); the tail is label-independent N(0, 3^2) noise.
Dataset gen_causal_probe(int n, int n_channels = 3, int length = 64, std::uint64_t seed = 0);

/// Per-class AR(1) processes with (coef, drift, volatility) in
/// {(0.9, 0, 0.5), (0.5, 0.05, 1.0), (0.2, -0.05, 2.0)} and one random
/// switch point per sample after which volatility doubles.
Dataset gen_regime_switch(int n, int n_channels = 5, int length = 128, int n_classes = 3,
                          std::uint64_t seed = 0);

/// Directory layout: manifest.json + one CSV per sample (N rows x L columns,
/// 17 significant digits, LF endings, no header).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& manifest_or_dir);

/// Per-channel (x - mean) / std. Without given stats they are computed from
/// ds (training path) and returned for reuse on val/test.
std::pair<Dataset, ChannelStats> zscore_normalize(const Dataset& ds,
                                                  const std::optional<ChannelStats>& stats = std::nullopt);

struct SplitResult {
    Dataset train, val, test;
    std::vector<int> train_idx, val_idx, test_idx;
};

/// Stratified by label, deterministic in `seed`; per-class counts land within
/// one sample of the exact fractional targets.
SplitResult split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);

/// Index batches covering every sample exactly once; the final partial batch
/// is kept.
std::vector<std::vector<int>> batch_indices(int n, int batch_size, bool shuffle, std::mt19937_64& rng);

Tensor batch_to_tensor(const Dataset& ds, const std::vector<int>& idx);  // [B, N, L]
std::vector<int> batch_labels(const Dataset& ds, const std::vector<int>& idx);

}  // namespace casenet
