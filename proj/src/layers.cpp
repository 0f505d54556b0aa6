#include "casenet/layers.hpp"

#include <cmath>

#include "casenet/errors.hpp"
#include "casenet/kernels.hpp"
#include "casenet/ops.hpp"

namespace casenet {

void ModelConfig::validate() const {
    if (n_channels < 1 || length < 1 || n_classes < 1)
        throw ConfigError("config: n_channels, length and n_classes must be positive");
    if (n_scales < 1) throw ConfigError("config: n_scales must be >= 1");
    if (n_scales > 30) throw ConfigError("config: n_scales too large (dyadic stride would overflow)");
    if (hidden_dim < 1 || encoder_layers < 1)
        throw ConfigError("config: hidden_dim and encoder_layers must be >= 1");
    if (n_heads < 1 || hidden_dim % n_heads != 0)
        throw ConfigError("config: n_heads must divide hidden_dim (" + std::to_string(n_heads) + " vs " +
                          std::to_string(hidden_dim) + ")");
    if (se_ratio < 1 || hidden_dim % se_ratio != 0)
        throw ConfigError("config: se_ratio must divide hidden_dim (" + std::to_string(se_ratio) + " vs " +
                          std::to_string(hidden_dim) + ")");
    if (scale_stride(n_scales) > length)
        throw ConfigError("config: scale too deep for sequence length (stride " +
                          std::to_string(scale_stride(n_scales)) + " > L=" + std::to_string(length) + ")");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("config: lambda weights must be non-negative");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("config: dropout_p must be in [0, 1)");
}

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Tensor init_uniform(const std::string& name, std::uint64_t seed, std::vector<int> shape,
                    int fan_in, int fan_out) {
    std::mt19937_64 rng(seed ^ fnv1a64(name));
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& v : *t.data) v = dist(rng);
    return t;
}

Tensor init_const(std::vector<int> shape, double value) {
    Tensor t = Tensor::full(std::move(shape), value, true);
    return t;
}

Tensor dropout(Graph& g, const Tensor& x, double p, std::mt19937_64& rng) {
    Tensor mask = Tensor::zeros(x.shape);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double keep = 1.0 / (1.0 - p);
    for (double& v : *mask.data) v = dist(rng) < p ? 0.0 : keep;
    return ops::mul(g, x, mask);
}

}  // namespace

ParameterStore ParameterStore::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int d = cfg.hidden_dim;
    ParameterStore store;
    for (int s = 1; s <= cfg.n_scales; ++s) {
        const int k = cfg.scale_kernel(s);
        const std::string base = "proj.s" + std::to_string(s);
        store.insert(base + ".w", init_uniform(base + ".w", seed, {d, cfg.n_channels, k},
                                               cfg.n_channels * k, d * k));
        store.insert(base + ".b", init_const({d}, 0.0));
    }
    if (!cfg.projection_only) {
        for (int l = 1; l <= cfg.encoder_layers; ++l) {
            const std::string base = "enc.l" + std::to_string(l);
            store.insert(base + ".conv.w", init_uniform(base + ".conv.w", seed, {d, d, 3}, d * 3, d * 3));
            store.insert(base + ".conv.b", init_const({d}, 0.0));
            for (const char* wn : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
                store.insert(base + wn, init_uniform(base + wn, seed, {d, d}, d, d));
            for (const char* ln : {".ln1", ".ln2"}) {
                store.insert(base + ln + ".g", init_const({d}, 1.0));
                store.insert(base + ln + ".b", init_const({d}, 0.0));
            }
        }
        if (cfg.se) {
            const int dr = d / cfg.se_ratio;
            store.insert("se.w1", init_uniform("se.w1", seed, {dr, d}, d, dr));
            store.insert("se.w2", init_uniform("se.w2", seed, {d, dr}, dr, d));
        }
        if (!cfg.mlp_head_only) {
            store.insert("gate.w", init_uniform("gate.w", seed, {d, d}, d, d));
            store.insert("gate.b", init_const({d}, 0.0));
        }
    }
    store.insert("head.fc1.w", init_uniform("head.fc1.w", seed, {2 * d, d}, 2 * d, d));
    store.insert("head.fc1.b", init_const({d}, 0.0));
    store.insert("head.fc2.w", init_uniform("head.fc2.w", seed, {d, cfg.n_classes}, d, cfg.n_classes));
    store.insert("head.fc2.b", init_const({cfg.n_classes}, 0.0));
    return store;
}

Tensor& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("parameter store: no parameter named '" + name + "'");
    return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("parameter store: no parameter named '" + name + "'");
    return it->second;
}

void ParameterStore::insert(const std::string& name, Tensor t) {
    if (!params_.emplace(name, std::move(t)).second)
        throw ContractError("parameter store: duplicate parameter '" + name + "'");
}

std::vector<std::string> ParameterStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
}

std::int64_t ParameterStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& [k, v] : params_) v.zero_grad();
}

ParameterStore ParameterStore::deep_copy() const {
    ParameterStore out;
    for (const auto& [k, v] : params_) {
        Tensor t = Tensor::zeros(v.shape, true);
        *t.data = *v.data;
        out.params_.emplace(k, std::move(t));
    }
    return out;
}

Tensor build_causal_mask(int length) {
    if (length < 1) throw ContractError("build_causal_mask: length must be >= 1");
    Tensor m = Tensor::zeros({length, length});
    for (int i = 0; i < length; ++i)
        for (int j = i + 1; j < length; ++j)
            (*m.data)[static_cast<size_t>(i) * length + j] = kernels::kMaskedSentinel;
    return m;
}

Tensor zero_mask(int length) {
    if (length < 1) throw ContractError("zero_mask: length must be >= 1");
    return Tensor::zeros({length, length});
}

ScaleViews multi_scale_project(Graph& g, const Tensor& x, const ModelConfig& cfg,
                               const ParameterStore& params) {
    if (x.rank() != 3) throw ShapeError("multi_scale_project: input must be [B, N, L], got " + shape_str(x.shape));
    if (x.shape[1] != cfg.n_channels)
        throw ConfigError("multi_scale_project: input has " + std::to_string(x.shape[1]) +
                          " channels, config expects " + std::to_string(cfg.n_channels));
    if (x.shape[2] != cfg.length)
        throw ConfigError("multi_scale_project: input length " + std::to_string(x.shape[2]) +
                          " does not match config length " + std::to_string(cfg.length));
    if (cfg.scale_stride(cfg.n_scales) > cfg.length)
        throw ConfigError("multi_scale_project: scale too deep for sequence length");

    ScaleViews out;
    out.views.reserve(static_cast<size_t>(cfg.n_scales));
    for (int s = 1; s <= cfg.n_scales; ++s) {
        const int k = cfg.scale_kernel(s);
        const std::string base = "proj.s" + std::to_string(s);
        // "same-left" padding: L_s = ceil(L / stride) and position t sees x[.. <= t*stride]
        Tensor padded = ops::pad_time(g, x, k - 1, 0);
        Tensor v = ops::relu(g, ops::conv1d(g, padded, params.at(base + ".w"), params.at(base + ".b"),
                                            cfg.scale_stride(s), 1));
        out.views.push_back(std::move(v));
    }
    return out;
}

Tensor causal_conv1d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b,
                     int kernel, int dilation, bool causal_padding) {
    const int pad = (kernel - 1) * dilation;
    Tensor padded = causal_padding ? ops::pad_time(g, x, pad, 0)
                                   : ops::pad_time(g, x, (pad + 1) / 2, pad / 2);
    return ops::conv1d(g, padded, w, b, 1, dilation);
}

Tensor masked_attention(Graph& g, const Tensor& h, const ParameterStore& params, int layer,
                        const ModelConfig& cfg) {
    if (h.rank() != 3) throw ShapeError("masked_attention: input must be [B, D, L], got " + shape_str(h.shape));
    const int l = h.shape[2];
    const int dk = cfg.head_dim();
    const Tensor mask = cfg.causal ? build_causal_mask(l) : zero_mask(l);
    const std::string base = "enc.l" + std::to_string(layer) + ".attn";
    const Tensor& wq = params.at(base + ".wq");
    const Tensor& wk = params.at(base + ".wk");
    const Tensor& wv = params.at(base + ".wv");
    const Tensor& wo = params.at(base + ".wo");

    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(cfg.n_heads));
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
        const int r0 = hd * dk, r1 = (hd + 1) * dk;
        Tensor q = ops::matmul(g, ops::slice_rows(g, wq, r0, r1), h);  // [B, dk, L]
        Tensor kk = ops::matmul(g, ops::slice_rows(g, wk, r0, r1), h);
        Tensor v = ops::matmul(g, ops::slice_rows(g, wv, r0, r1), h);
        Tensor scores = ops::scale(g, ops::matmul(g, ops::transpose(g, q), kk), 1.0 / std::sqrt(dk));
        Tensor probs = ops::masked_softmax(g, scores, mask);           // [B, L, L]
        heads.push_back(ops::matmul(g, v, ops::transpose(g, probs)));  // [B, dk, L]
    }
    Tensor cat = heads.size() == 1 ? heads.front() : ops::concat(g, heads, 1);
    return ops::matmul(g, wo, cat);
}

EncoderOut encoder_forward(Graph& g, const ScaleViews& views, const ParameterStore& params,
                           const ModelConfig& cfg, const RunMode& mode) {
    const bool use_dropout = mode.training && cfg.dropout_p > 0.0;
    if (use_dropout && mode.rng == nullptr)
        throw ContractError("encoder_forward: training mode with dropout requires an rng");

    EncoderOut out;
    for (const Tensor& view : views.views) {
        Tensor h = view;
        for (int l = 1; l <= cfg.encoder_layers; ++l) {
            const std::string base = "enc.l" + std::to_string(l);
            const int dil = 1 << (l - 1);
            Tensor c = causal_conv1d(g, h, params.at(base + ".conv.w"), params.at(base + ".conv.b"), 3,
                                     dil, cfg.causal);
            h = ops::layer_norm(g, ops::add(g, h, c), params.at(base + ".ln1.g"), params.at(base + ".ln1.b"));
            Tensor a = masked_attention(g, h, params, l, cfg);
            if (use_dropout) a = dropout(g, a, cfg.dropout_p, *mode.rng);
            h = ops::layer_norm(g, ops::add(g, h, a), params.at(base + ".ln2.g"), params.at(base + ".ln2.b"));
        }
        out.pre_se.push_back(h);
        auto [ht, sal] = se_recalibrate(g, h, params, cfg);
        out.recalibrated.push_back(std::move(ht));
        out.saliency.push_back(std::move(sal));
    }
    return out;
}

std::pair<Tensor, Tensor> se_recalibrate(Graph& g, const Tensor& h, const ParameterStore& params,
                                         const ModelConfig& cfg) {
    if (h.rank() != 3) throw ShapeError("se_recalibrate: input must be [B, D, L], got " + shape_str(h.shape));
    if (!cfg.se) return {h, Tensor::full({h.shape[0], h.shape[1]}, 1.0)};
    Tensor z = ops::reduce_mean(g, h, 2);  // [B, D]
    Tensor mid = ops::relu(g, ops::matmul(g, z, ops::transpose(g, params.at("se.w1"))));
    Tensor a = ops::sigmoid(g, ops::matmul(g, mid, ops::transpose(g, params.at("se.w2"))));
    return {ops::mul_channelwise(g, h, a), a};
}

DisentangledPair disentangle(Graph& g, const Tensor& h_tilde, const ParameterStore& params) {
    Tensor pre = ops::add_bias(g, ops::matmul(g, params.at("gate.w"), h_tilde), params.at("gate.b"), 1);
    Tensor m = ops::sigmoid(g, pre);
    Tensor ones = Tensor::full(m.shape, 1.0);
    DisentangledPair pair;
    pair.gate = m;
    pair.shared_part = ops::mul(g, m, h_tilde);
    pair.specific_part = ops::mul(g, ops::sub(g, ones, m), h_tilde);
    return pair;
}

namespace {

Tensor mean_over_list(Graph& g, const std::vector<Tensor>& xs) {
    Tensor acc = xs.front();
    for (size_t i = 1; i < xs.size(); ++i) acc = ops::add(g, acc, xs[i]);
    return xs.size() == 1 ? acc : ops::scale(g, acc, 1.0 / static_cast<double>(xs.size()));
}

Tensor mlp_head(Graph& g, const Tensor& fused, const ParameterStore& params) {
    Tensor h1 = ops::relu(
        g, ops::add_bias(g, ops::matmul(g, fused, params.at("head.fc1.w")), params.at("head.fc1.b"), 1));
    return ops::add_bias(g, ops::matmul(g, h1, params.at("head.fc2.w")), params.at("head.fc2.b"), 1);
}

FusionOut gap_head(Graph& g, const std::vector<Tensor>& h_tildes, const ParameterStore& params) {
    std::vector<Tensor> pooled;
    pooled.reserve(h_tildes.size());
    for (const Tensor& h : h_tildes) pooled.push_back(ops::reduce_mean(g, h, 2));
    Tensor gvec = mean_over_list(g, pooled);
    // duplicate so the MLP keeps its [2D -> D -> K] shape; matches the full
    // model's aggregate when the gate sits at m = 1/2 (up to that factor)
    Tensor fused = ops::concat(g, {gvec, gvec}, 1);
    FusionOut out;
    out.fused = fused;
    out.logits = mlp_head(g, fused, params);
    return out;
}

}  // namespace

FusionOut fuse_and_classify(Graph& g, const std::vector<DisentangledPair>& pairs,
                            const ParameterStore& params, const ModelConfig& cfg) {
    if (pairs.empty()) throw ContractError("fuse_and_classify: need at least one scale");
    (void)cfg;
    std::vector<Tensor> sh_pooled, sp_pooled;
    for (const DisentangledPair& p : pairs) {
        sh_pooled.push_back(ops::reduce_mean(g, p.shared_part, 2));
        sp_pooled.push_back(ops::reduce_mean(g, p.specific_part, 2));
    }
    Tensor g_sh = mean_over_list(g, sh_pooled);
    Tensor g_sp = mean_over_list(g, sp_pooled);
    Tensor fused = ops::concat(g, {g_sh, g_sp}, 1);  // [B, 2D]
    FusionOut out;
    out.fused = fused;
    out.logits = mlp_head(g, fused, params);
    return out;
}

ModelOut model_forward(Graph& g, const Tensor& x, const ParameterStore& params, const ModelConfig& cfg,
                       const RunMode& mode) {
    ScaleViews views = multi_scale_project(g, x, cfg, params);
    ModelOut out;
    if (cfg.projection_only) {
        FusionOut f = gap_head(g, views.views, params);
        out.logits = f.logits;
        out.fused = f.fused;
        return out;
    }
    EncoderOut enc = encoder_forward(g, views, params, cfg, mode);
    if (cfg.mlp_head_only) {
        FusionOut f = gap_head(g, enc.recalibrated, params);
        out.logits = f.logits;
        out.fused = f.fused;
        return out;
    }
    std::vector<DisentangledPair> pairs;
    pairs.reserve(enc.recalibrated.size());
    for (const Tensor& ht : enc.recalibrated) pairs.push_back(disentangle(g, ht, params));
    FusionOut f = fuse_and_classify(g, pairs, params, cfg);
    out.logits = f.logits;
    out.fused = f.fused;
    for (DisentangledPair& p : pairs) {
        out.shared.push_back(std::move(p.shared_part));
        out.specific.push_back(std::move(p.specific_part));
    }
    return out;
}

}  // namespace casenet
