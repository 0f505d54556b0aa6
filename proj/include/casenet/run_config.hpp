#pragma once
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "casenet/layers.hpp"
#include "casenet/trainer.hpp"

namespace casenet {

/// Flat JSON run configuration. Dataset geometry (N, L, K) always comes from
/// the dataset manifest, never from the config. Unknown keys are rejected.
struct RunConfig {
    std::string dataset;  // dataset directory (or manifest path)
    std::string out_dir = "runs/out";
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::string variant = "full";

    int n_scales = 4;
    int hidden_dim = 64;
    int n_heads = 4;
    int se_ratio = 4;
    int encoder_layers = 2;
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double dropout_p = 0.1;

    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 10;

    std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
    std::uint64_t split_seed = 1234;
    bool normalize = true;

    void validate() const;
    ModelConfig model_config(int n_channels, int length, int n_classes) const;
    TrainConfig train_config() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& rc);

}  // namespace casenet
