#pragma once
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "casenet/graph.hpp"
#include "casenet/tensor.hpp"

namespace casenet {

struct ModelConfig {
    int n_channels = 3;
    int length = 64;
    int n_classes = 2;
    int n_scales = 4;      // S
    int hidden_dim = 64;   // D
    int n_heads = 4;
    int se_ratio = 4;      // r
    int encoder_layers = 2;
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double dropout_p = 0.1;
    // variant switches
    bool causal = true;
    bool se = true;
    bool mlp_head_only = false;
    bool projection_only = false;  // "projection + MLP" baseline, skips the encoder entirely

    void validate() const;
    int scale_stride(int s) const { return 1 << (s - 1); }  // s is 1-based
    int scale_kernel(int s) const { return 3 + 2 * (s - 1); }
    int scale_length(int s) const { return (length + scale_stride(s) - 1) / scale_stride(s); }
    int head_dim() const { return hidden_dim / n_heads; }
};

/// Named map of learnable leaves. There is exactly one encoder parameter set
/// regardless of the number of scales; every leaf has requires_grad set.
/// Each parameter is initialized from an rng seeded by (seed, name), so shared
/// parameters get identical draws across variants that add or drop modules.
class ParameterStore {
public:
    static ParameterStore init(const ModelConfig& cfg, std::uint64_t seed);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    void insert(const std::string& name, Tensor t);
    std::vector<std::string> names() const;
    size_t size() const { return params_.size(); }
    std::int64_t total_elements() const;
    void zero_grad();
    ParameterStore deep_copy() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor> params_;
};

struct ScaleViews {
    std::vector<Tensor> views;  // V_s: [B, D, L_s]
};

struct DisentangledPair {
    Tensor shared_part;    // m ⊙ H~
    Tensor specific_part;  // (1 - m) ⊙ H~
    Tensor gate;           // m
};

struct EncoderOut {
    std::vector<Tensor> pre_se;        // block-stack output per scale, before recalibration
    std::vector<Tensor> recalibrated;  // H~ per scale
    std::vector<Tensor> saliency;      // a per scale: [B, D]
};

struct RunMode {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training with dropout_p > 0
};

struct FusionOut {
    Tensor logits;  // [B, n_classes]
    Tensor fused;   // [B, 2D] aggregate fed to the MLP
};

struct ModelOut {
    Tensor logits;
    std::vector<Tensor> shared;    // per-scale H_sh (empty for GAP-head variants)
    std::vector<Tensor> specific;  // per-scale H_sp
    Tensor fused;                  // [B, 2D]
};

/// M[i][j] = 0 for i >= j, -inf sentinel above the diagonal.
Tensor build_causal_mask(int length);
Tensor zero_mask(int length);

ScaleViews multi_scale_project(Graph& g, const Tensor& x, const ModelConfig& cfg, const ParameterStore& params);

/// Length-preserving conv: pads (k-1)*d zeros (all left when causal_padding,
/// else split with the extra zero on the left) then convolves at stride 1.
Tensor causal_conv1d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b,
                     int kernel, int dilation, bool causal_padding = true);

Tensor masked_attention(Graph& g, const Tensor& h, const ParameterStore& params, int layer,
                        const ModelConfig& cfg);

EncoderOut encoder_forward(Graph& g, const ScaleViews& views, const ParameterStore& params,
                           const ModelConfig& cfg, const RunMode& mode = {});

/// Returns (H~, a). With cfg.se == false the input passes through and a == 1.
std::pair<Tensor, Tensor> se_recalibrate(Graph& g, const Tensor& h, const ParameterStore& params,
                                         const ModelConfig& cfg);

DisentangledPair disentangle(Graph& g, const Tensor& h_tilde, const ParameterStore& params);

FusionOut fuse_and_classify(Graph& g, const std::vector<DisentangledPair>& pairs,
                            const ParameterStore& params, const ModelConfig& cfg);

ModelOut model_forward(Graph& g, const Tensor& x, const ParameterStore& params, const ModelConfig& cfg,
                       const RunMode& mode = {});

}  // namespace casenet
