#include "casenet/run_config.hpp"

#include <fstream>
#include <set>

#include "casenet/errors.hpp"

namespace casenet {

void RunConfig::validate() const {
    if (dataset.empty()) throw ConfigError("config: 'dataset' is required");
    if (seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("config: patience must be >= 0");
    if (lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("config: beta1/beta2 must be in [0, 1)");
    if (epsilon <= 0.0) throw ConfigError("config: epsilon must be positive");
    const double sum = split_fractions[0] + split_fractions[1] + split_fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("config: split_fractions must sum to 1");
    build_variant(variant, ModelConfig{});  // throws on unknown names
    // model-shape fields are validated against the dataset in model_config()
    if (n_scales < 1 || hidden_dim < 1 || n_heads < 1 || se_ratio < 1 || encoder_layers < 1)
        throw ConfigError("config: model dimensions must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("config: lambda weights must be non-negative");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("config: dropout_p must be in [0, 1)");
}

ModelConfig RunConfig::model_config(int n_channels, int length, int n_classes) const {
    ModelConfig cfg;
    cfg.n_channels = n_channels;
    cfg.length = length;
    cfg.n_classes = n_classes;
    cfg.n_scales = n_scales;
    cfg.hidden_dim = hidden_dim;
    cfg.n_heads = n_heads;
    cfg.se_ratio = se_ratio;
    cfg.encoder_layers = encoder_layers;
    cfg.lambda1 = lambda1;
    cfg.lambda2 = lambda2;
    cfg.dropout_p = dropout_p;
    cfg = build_variant(variant, cfg);
    cfg.validate();
    return cfg;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.adam.lr = lr;
    t.adam.beta1 = beta1;
    t.adam.beta2 = beta2;
    t.adam.eps = epsilon;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.patience = patience;
    return t;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{
        "dataset",    "out_dir",      "seeds",          "variant",    "n_scales",
        "hidden_dim", "n_heads",      "se_ratio",       "encoder_layers",
        "lambda1",    "lambda2",      "dropout_p",      "lr",         "beta1",
        "beta2",      "epsilon",      "batch_size",     "max_epochs", "patience",
        "split_fractions", "split_seed", "normalize"};
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");

    RunConfig rc;
    try {
        if (j.contains("dataset")) rc.dataset = j["dataset"].get<std::string>();
        if (j.contains("out_dir")) rc.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("seeds")) rc.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        if (j.contains("variant")) rc.variant = j["variant"].get<std::string>();
        if (j.contains("n_scales")) rc.n_scales = j["n_scales"].get<int>();
        if (j.contains("hidden_dim")) rc.hidden_dim = j["hidden_dim"].get<int>();
        if (j.contains("n_heads")) rc.n_heads = j["n_heads"].get<int>();
        if (j.contains("se_ratio")) rc.se_ratio = j["se_ratio"].get<int>();
        if (j.contains("encoder_layers")) rc.encoder_layers = j["encoder_layers"].get<int>();
        if (j.contains("lambda1")) rc.lambda1 = j["lambda1"].get<double>();
        if (j.contains("lambda2")) rc.lambda2 = j["lambda2"].get<double>();
        if (j.contains("dropout_p")) rc.dropout_p = j["dropout_p"].get<double>();
        if (j.contains("lr")) rc.lr = j["lr"].get<double>();
        if (j.contains("beta1")) rc.beta1 = j["beta1"].get<double>();
        if (j.contains("beta2")) rc.beta2 = j["beta2"].get<double>();
        if (j.contains("epsilon")) rc.epsilon = j["epsilon"].get<double>();
        if (j.contains("batch_size")) rc.batch_size = j["batch_size"].get<int>();
        if (j.contains("max_epochs")) rc.max_epochs = j["max_epochs"].get<int>();
        if (j.contains("patience")) rc.patience = j["patience"].get<int>();
        if (j.contains("split_fractions")) {
            const auto f = j["split_fractions"].get<std::vector<double>>();
            if (f.size() != 3) throw ConfigError("config: split_fractions must have 3 entries");
            rc.split_fractions = {f[0], f[1], f[2]};
        }
        if (j.contains("split_seed")) rc.split_seed = j["split_seed"].get<std::uint64_t>();
        if (j.contains("normalize")) rc.normalize = j["normalize"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    rc.validate();
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

nlohmann::json run_config_to_json(const RunConfig& rc) {
    return nlohmann::json{{"dataset", rc.dataset},
                          {"out_dir", rc.out_dir},
                          {"seeds", rc.seeds},
                          {"variant", rc.variant},
                          {"n_scales", rc.n_scales},
                          {"hidden_dim", rc.hidden_dim},
                          {"n_heads", rc.n_heads},
                          {"se_ratio", rc.se_ratio},
                          {"encoder_layers", rc.encoder_layers},
                          {"lambda1", rc.lambda1},
                          {"lambda2", rc.lambda2},
                          {"dropout_p", rc.dropout_p},
                          {"lr", rc.lr},
                          {"beta1", rc.beta1},
                          {"beta2", rc.beta2},
                          {"epsilon", rc.epsilon},
                          {"batch_size", rc.batch_size},
                          {"max_epochs", rc.max_epochs},
                          {"patience", rc.patience},
                          {"split_fractions", rc.split_fractions},
                          {"split_seed", rc.split_seed},
                          {"normalize", rc.normalize}};
}

}  // namespace casenet
