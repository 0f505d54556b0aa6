#include "casenet/checkpoint.hpp"

#include <fstream>

#include "casenet/errors.hpp"

namespace casenet {

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"n_channels", cfg.n_channels},
                          {"length", cfg.length},
                          {"n_classes", cfg.n_classes},
                          {"n_scales", cfg.n_scales},
                          {"hidden_dim", cfg.hidden_dim},
                          {"n_heads", cfg.n_heads},
                          {"se_ratio", cfg.se_ratio},
                          {"encoder_layers", cfg.encoder_layers},
                          {"lambda1", cfg.lambda1},
                          {"lambda2", cfg.lambda2},
                          {"dropout_p", cfg.dropout_p},
                          {"causal", cfg.causal},
                          {"se", cfg.se},
                          {"mlp_head_only", cfg.mlp_head_only},
                          {"projection_only", cfg.projection_only}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    try {
        cfg.n_channels = j.at("n_channels").get<int>();
        cfg.length = j.at("length").get<int>();
        cfg.n_classes = j.at("n_classes").get<int>();
        cfg.n_scales = j.at("n_scales").get<int>();
        cfg.hidden_dim = j.at("hidden_dim").get<int>();
        cfg.n_heads = j.at("n_heads").get<int>();
        cfg.se_ratio = j.at("se_ratio").get<int>();
        cfg.encoder_layers = j.at("encoder_layers").get<int>();
        cfg.lambda1 = j.at("lambda1").get<double>();
        cfg.lambda2 = j.at("lambda2").get<double>();
        cfg.dropout_p = j.at("dropout_p").get<double>();
        cfg.causal = j.at("causal").get<bool>();
        cfg.se = j.at("se").get<bool>();
        cfg.mlp_head_only = j.at("mlp_head_only").get<bool>();
        cfg.projection_only = j.at("projection_only").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model config json: ") + e.what());
    }
    return cfg;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out.good()) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const ModelConfig& cfg, const std::optional<ChannelStats>& stats) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    nlohmann::json manifest;
    manifest["format"] = "casenet-checkpoint-v1";
    manifest["config"] = model_config_to_json(cfg);
    if (stats) {
        manifest["channel_stats"] = {{"mean", stats->mean}, {"std", stats->stdev}};
    }
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& [name, t] : params) {
        const std::string fname = name + ".bin";
        std::ofstream out(tmp / fname, std::ios::binary);
        if (!out) throw IoError("save_checkpoint: cannot write " + (tmp / fname).string());
        out.write(reinterpret_cast<const char*>(t.data->data()),
                  static_cast<std::streamsize>(t.data->size() * sizeof(double)));
        if (!out.good()) throw IoError("save_checkpoint: short write to " + (tmp / fname).string());
        plist.push_back({{"name", name}, {"shape", t.shape}, {"file", fname}});
    }
    manifest["params"] = std::move(plist);
    {
        std::ofstream mf(tmp / "manifest.json", std::ios::binary);
        if (!mf) throw IoError("save_checkpoint: cannot write manifest");
        mf << manifest.dump(2) << "\n";
    }
    fs::remove_all(path);
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = path / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("load_checkpoint: cannot open " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_checkpoint: bad manifest: " + std::string(e.what()));
    }

    Checkpoint ck;
    ck.cfg = model_config_from_json(manifest.at("config"));
    if (manifest.contains("channel_stats")) {
        ChannelStats st;
        st.mean = manifest["channel_stats"].at("mean").get<std::vector<double>>();
        st.stdev = manifest["channel_stats"].at("std").get<std::vector<double>>();
        ck.stats = std::move(st);
    }
    for (const auto& entry : manifest.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        const std::string fname = entry.at("file").get<std::string>();
        Tensor t = Tensor::zeros(shape, true);
        std::ifstream bin(path / fname, std::ios::binary);
        if (!bin) throw IoError("load_checkpoint: missing blob " + (path / fname).string());
        bin.read(reinterpret_cast<char*>(t.data->data()),
                 static_cast<std::streamsize>(t.data->size() * sizeof(double)));
        if (bin.gcount() != static_cast<std::streamsize>(t.data->size() * sizeof(double)))
            throw IoError("load_checkpoint: blob " + fname + " shorter than shape " + shape_str(shape));
        ck.params.insert(name, std::move(t));
    }
    return ck;
}

}  // namespace casenet
