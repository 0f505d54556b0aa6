// casenet: data generation, training, evaluation, ablations, gradient
// checking and embedding export for the CASE-NET reference implementation.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure.
#include <sys/wait.h>
#include <unistd.h>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "casenet/checkpoint.hpp"
#include "casenet/data.hpp"
#include "casenet/errors.hpp"
#include "casenet/gradcheck.hpp"
#include "casenet/layers.hpp"
#include "casenet/losses.hpp"
#include "casenet/metrics.hpp"
#include "casenet/run_config.hpp"
#include "casenet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace casenet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

json loss_to_json(const LossBreakdown& l) {
    return json{{"l_cls", l.l_cls}, {"l_sim", l.l_sim}, {"l_diff", l.l_diff}, {"l_total", l.l_total}};
}

json metrics_to_json(const MetricsReport& m) {
    return json{{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"mcc", m.mcc}};
}

json run_record_to_json(const RunRecord& rec) {
    json epochs = json::array();
    for (const EpochRecord& e : rec.epochs)
        epochs.push_back(json{{"train_loss", loss_to_json(e.train_loss)},
                              {"val_loss", loss_to_json(e.val_loss)},
                              {"val_metrics", metrics_to_json(e.val_metrics)},
                              {"seconds", e.seconds}});
    return json{{"seed", rec.seed},
                {"best_epoch", rec.best_epoch},
                {"config", model_config_to_json(rec.cfg)},
                {"epochs", std::move(epochs)}};
}

struct MeanStd {
    double mean = 0.0, stdev = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));  // sample std
    }
    return r;
}

std::uint64_t fnv1a_indices(std::uint64_t h, const std::vector<int>& idx) {
    for (int i : idx) {
        for (int byte = 0; byte < 4; ++byte) {
            h ^= static_cast<std::uint64_t>((i >> (8 * byte)) & 0xff);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string split_hash(const SplitResult& sp) {
    std::uint64_t h = 1469598103934665603ull;
    h = fnv1a_indices(h, sp.train_idx);
    h = fnv1a_indices(h, sp.val_idx);
    h = fnv1a_indices(h, sp.test_idx);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

struct PreparedData {
    SplitResult splits;
    std::optional<ChannelStats> stats;
    Dataset raw;
};

PreparedData prepare_data(const RunConfig& rc) {
    if (rc.dataset.empty()) throw ConfigError("config: 'dataset' is required for this command");
    PreparedData out;
    out.raw = load_dataset(rc.dataset);
    out.splits = split(out.raw, rc.split_fractions, rc.split_seed);
    if (rc.normalize) {
        auto [tr, stats] = zscore_normalize(out.splits.train);
        out.splits.train = std::move(tr);
        if (!out.splits.val.samples.empty())
            out.splits.val = zscore_normalize(out.splits.val, stats).first;
        if (!out.splits.test.samples.empty())
            out.splits.test = zscore_normalize(out.splits.test, stats).first;
        out.stats = std::move(stats);
    }
    return out;
}

EpochCallback progress_printer(const std::string& prefix) {
    return [prefix](int epoch, const EpochRecord& e) {
        std::printf("%s epoch %3d  train %.4f  val %.4f  val_acc %.4f  (%.2fs)\n", prefix.c_str(), epoch,
                    e.train_loss.l_total, e.val_loss.l_total, e.val_metrics.accuracy, e.seconds);
        std::fflush(stdout);
    };
}

int cmd_gen_data(const std::string& kind, int n, std::uint64_t seed, const std::string& out_dir,
                 int channels, int length, int classes) {
    Dataset ds;
    if (kind == "causal-probe") {
        ds = gen_causal_probe(n, channels > 0 ? channels : 3, length > 0 ? length : 64, seed);
    } else if (kind == "regime-switch") {
        ds = gen_regime_switch(n, channels > 0 ? channels : 5, length > 0 ? length : 128,
                               classes > 0 ? classes : 3, seed);
    } else {
        throw ConfigError("gen-data: unknown kind '" + kind + "' (expected causal-probe|regime-switch)");
    }
    const fs::path target(out_dir);
    const fs::path tmp(out_dir + ".tmp");
    fs::remove_all(tmp);
    save_dataset(ds, tmp);
    fs::remove_all(target);
    fs::rename(tmp, target);

    std::vector<int> counts(static_cast<size_t>(ds.n_classes), 0);
    for (const MtsSample& s : ds.samples) counts[static_cast<size_t>(s.label)]++;
    std::printf("wrote %s: %d samples, K=%d, N=%d, L=%d, class counts [", out_dir.c_str(), ds.size(),
                ds.n_classes, ds.n_channels, ds.length);
    for (size_t i = 0; i < counts.size(); ++i) std::printf("%s%d", i ? "," : "", counts[i]);
    std::printf("]\n");
    return kExitOk;
}

/// Trains one seed and writes run_<seed>.json + model_<seed>.ckpt.
MetricsReport train_one_seed(const RunConfig& rc, const PreparedData& data, const ModelConfig& cfg,
                             const TrainConfig& tcfg, std::uint64_t seed, bool quiet) {
    char prefix[64];
    std::snprintf(prefix, sizeof(prefix), "[seed %" PRIu64 "]", seed);
    FitResult res = fit(cfg, data.splits.train, data.splits.val, tcfg, seed,
                        quiet ? EpochCallback{} : progress_printer(prefix));
    auto [test_loss, test_metrics] = evaluate(res.best_params, data.splits.test, cfg, tcfg.batch_size);

    json record = run_record_to_json(res.record);
    record["test_loss"] = loss_to_json(test_loss);
    record["test_metrics"] = metrics_to_json(test_metrics);
    write_text_atomic(fs::path(rc.out_dir) / ("run_" + std::to_string(seed) + ".json"),
                      record.dump(2) + "\n");
    save_checkpoint(fs::path(rc.out_dir) / ("model_" + std::to_string(seed) + ".ckpt"), res.best_params,
                    cfg, data.stats);
    std::printf("%s best epoch %d, test acc %.4f f1 %.4f mcc %.4f\n", prefix, res.record.best_epoch,
                test_metrics.accuracy, test_metrics.macro_f1, test_metrics.mcc);
    std::fflush(stdout);
    return test_metrics;
}

int cmd_train(const RunConfig& rc, bool parallel) {
    PreparedData data = prepare_data(rc);
    const Dataset& raw = data.raw;
    const ModelConfig cfg = rc.model_config(raw.n_channels, raw.length, raw.n_classes);
    const TrainConfig tcfg = rc.train_config();
    fs::create_directories(rc.out_dir);

    std::vector<double> accs, f1s, mccs;
    json per_seed = json::array();
    if (parallel && rc.seeds.size() > 1) {
        // independent replicas, one process per seed, merged through the run files
        std::vector<pid_t> children;
        for (std::uint64_t seed : rc.seeds) {
            const pid_t pid = fork();
            if (pid < 0) throw IoError("train --parallel: fork failed");
            if (pid == 0) {
                int code = kExitOk;
                try {
                    train_one_seed(rc, data, cfg, tcfg, seed, true);
                } catch (const NumericError&) {
                    code = kExitNumerical;
                } catch (const std::exception&) {
                    code = kExitValidation;
                }
                std::fflush(stdout);
                _exit(code);
            }
            children.push_back(pid);
        }
        int worst = kExitOk;
        for (pid_t pid : children) {
            int status = 0;
            waitpid(pid, &status, 0);
            const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitValidation;
            worst = std::max(worst, code);
        }
        if (worst != kExitOk) return worst;
        for (std::uint64_t seed : rc.seeds) {
            const json record =
                json::parse(std::ifstream(fs::path(rc.out_dir) / ("run_" + std::to_string(seed) + ".json")));
            const json& m = record.at("test_metrics");
            accs.push_back(m.at("accuracy").get<double>());
            f1s.push_back(m.at("macro_f1").get<double>());
            mccs.push_back(m.at("mcc").get<double>());
            per_seed.push_back(json{{"seed", seed}, {"test_metrics", m}});
        }
    } else {
        for (std::uint64_t seed : rc.seeds) {
            const MetricsReport test_metrics = train_one_seed(rc, data, cfg, tcfg, seed, false);
            accs.push_back(test_metrics.accuracy);
            f1s.push_back(test_metrics.macro_f1);
            mccs.push_back(test_metrics.mcc);
            per_seed.push_back(json{{"seed", seed}, {"test_metrics", metrics_to_json(test_metrics)}});
        }
    }

    const MeanStd acc = mean_std(accs), f1 = mean_std(f1s), mcc = mean_std(mccs);
    json summary{{"config", run_config_to_json(rc)},
                 {"per_seed", std::move(per_seed)},
                 {"accuracy", {{"mean", acc.mean}, {"std", acc.stdev}}},
                 {"macro_f1", {{"mean", f1.mean}, {"std", f1.stdev}}},
                 {"mcc", {{"mean", mcc.mean}, {"std", mcc.stdev}}}};
    write_text_atomic(fs::path(rc.out_dir) / "summary.json", summary.dump(2) + "\n");
    std::printf("summary: acc %.4f +/- %.4f, f1 %.4f +/- %.4f, mcc %.4f +/- %.4f -> %s/summary.json\n",
                acc.mean, acc.stdev, f1.mean, f1.stdev, mcc.mean, mcc.stdev, rc.out_dir.c_str());
    return kExitOk;
}

int cmd_ablate(const RunConfig& rc) {
    PreparedData data = prepare_data(rc);
    const Dataset& raw = data.raw;
    const TrainConfig tcfg = rc.train_config();
    fs::create_directories(rc.out_dir);
    const std::string hash = split_hash(data.splits);
    std::printf("split hash %s (identical for every variant)\n", hash.c_str());

    struct Row {
        std::string variant;
        MeanStd acc, f1, mcc;
    };
    std::vector<Row> rows;
    json detail = json::array();
    for (const std::string& variant : variant_names()) {
        const ModelConfig cfg =
            build_variant(variant, rc.model_config(raw.n_channels, raw.length, raw.n_classes));
        std::vector<double> accs, f1s, mccs;
        for (std::uint64_t seed : rc.seeds) {
            char prefix[96];
            std::snprintf(prefix, sizeof(prefix), "[%s seed %" PRIu64 "]", variant.c_str(), seed);
            FitResult res = fit(cfg, data.splits.train, data.splits.val, tcfg, seed);
            auto [test_loss, m] = evaluate(res.best_params, data.splits.test, cfg, tcfg.batch_size);
            (void)test_loss;
            std::printf("%s best epoch %d, %zu epochs, test acc %.4f\n", prefix, res.record.best_epoch,
                        res.record.epochs.size(), m.accuracy);
            std::fflush(stdout);
            accs.push_back(m.accuracy);
            f1s.push_back(m.macro_f1);
            mccs.push_back(m.mcc);
            detail.push_back(json{{"variant", variant},
                                  {"seed", seed},
                                  {"test_metrics", metrics_to_json(m)}});
        }
        rows.push_back(Row{variant, mean_std(accs), mean_std(f1s), mean_std(mccs)});
    }

    std::ostringstream md, csv;
    md << "| Model Variant | Acc (%) | F1 (%) | MCC |\n|---|---|---|---|\n";
    csv << "variant,acc_mean,acc_std,f1_mean,f1_std,mcc_mean,mcc_std\n";
    char line[256];
    for (const Row& r : rows) {
        std::snprintf(line, sizeof(line), "| %s | %.2f ± %.2f | %.2f ± %.2f | %.3f ± %.3f |\n",
                      r.variant.c_str(), 100.0 * r.acc.mean, 100.0 * r.acc.stdev, 100.0 * r.f1.mean,
                      100.0 * r.f1.stdev, r.mcc.mean, r.mcc.stdev);
        md << line;
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.variant.c_str(),
                      r.acc.mean, r.acc.stdev, r.f1.mean, r.f1.stdev, r.mcc.mean, r.mcc.stdev);
        csv << line;
    }
    md << "\nsplit hash: " << hash << "\n";

    write_text_atomic(fs::path(rc.out_dir) / "ablation.md", md.str());
    write_text_atomic(fs::path(rc.out_dir) / "ablation.csv", csv.str());
    json jout{{"config", run_config_to_json(rc)}, {"split_hash", hash}, {"runs", std::move(detail)}};
    write_text_atomic(fs::path(rc.out_dir) / "ablation.json", jout.dump(2) + "\n");
    std::printf("%s", md.str().c_str());
    return kExitOk;
}

int cmd_grad_check(const RunConfig& rc, std::uint64_t seed) {
    // forced tiny geometry so the probe finishes quickly
    ModelConfig cfg;
    cfg.n_channels = 3;
    cfg.length = 16;
    cfg.n_classes = 2;
    cfg.n_scales = 2;
    cfg.hidden_dim = 8;
    cfg.n_heads = 4;
    cfg.se_ratio = 4;
    cfg.encoder_layers = 2;
    cfg.lambda1 = rc.lambda1;
    cfg.lambda2 = rc.lambda2;
    cfg.dropout_p = 0.0;
    cfg = build_variant(rc.variant, cfg);
    cfg.validate();

    const int batch = 2;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor x = Tensor::zeros({batch, cfg.n_channels, cfg.length});
    for (double& v : *x.data) v = dist(rng);
    std::vector<int> labels(batch);
    for (int i = 0; i < batch; ++i) labels[i] = i % cfg.n_classes;

    ParameterStore params = ParameterStore::init(cfg, seed);
    const ScalarFn loss_fn = [&](Graph& g, const Tensor&) {
        ModelOut out = model_forward(g, x, params, cfg);
        return total_loss(g, out.logits, labels, out.shared, out.specific, cfg.lambda1, cfg.lambda2).total;
    };

    double worst = 0.0;
    std::string worst_name;
    bool pass = true;
    for (const std::string& name : params.names()) {
        Tensor probe = params.at(name);  // shares buffers: probing mutates the live parameter
        const double err = finite_diff_check(loss_fn, probe);
        const bool ok = err < 1e-4;
        pass = pass && ok;
        std::printf("%-18s max_rel_err %.3e  %s\n", name.c_str(), err, ok ? "PASS" : "FAIL");
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    }
    std::printf("worst: %s (%.3e) -> %s\n", worst_name.c_str(), worst, pass ? "PASS" : "FAIL");
    return pass ? kExitOk : kExitNumerical;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, int batch_size) {
    Checkpoint ck = load_checkpoint(checkpoint);
    Dataset ds = load_dataset(data_path);
    if (ds.n_channels != ck.cfg.n_channels || ds.length != ck.cfg.length ||
        ds.n_classes != ck.cfg.n_classes)
        throw ConfigError("eval: dataset geometry (N=" + std::to_string(ds.n_channels) + ", L=" +
                          std::to_string(ds.length) + ", K=" + std::to_string(ds.n_classes) +
                          ") does not match checkpoint config");
    if (ck.stats) ds = zscore_normalize(ds, ck.stats).first;
    auto [loss, metrics] = evaluate(ck.params, ds, ck.cfg, batch_size);
    json out{{"loss", loss_to_json(loss)}, {"metrics", metrics_to_json(metrics)}, {"n", ds.size()}};
    std::printf("%s\n", out.dump(2).c_str());
    return kExitOk;
}

int cmd_export_embeddings(const std::string& checkpoint, const std::string& data_path,
                          const std::string& out_csv) {
    Checkpoint ck = load_checkpoint(checkpoint);
    Dataset ds = load_dataset(data_path);
    if (ds.n_channels != ck.cfg.n_channels || ds.length != ck.cfg.length)
        throw ConfigError("export-embeddings: dataset geometry does not match checkpoint config");
    if (ck.stats) ds = zscore_normalize(ds, ck.stats).first;

    const int d = ck.cfg.hidden_dim;
    std::ostringstream csv;
    for (int j = 0; j < d; ++j) csv << "g_sh_" << j << ",";
    for (int j = 0; j < d; ++j) csv << "g_sp_" << j << ",";
    csv << "label\n";

    std::mt19937_64 unused(0);
    char buf[64];
    for (const auto& batch : batch_indices(ds.size(), 32, false, unused)) {
        Tensor x = batch_to_tensor(ds, batch);
        Graph g;
        g.recording = false;
        ModelOut out = model_forward(g, x, ck.params, ck.cfg);
        const int b = static_cast<int>(batch.size());
        const int width = out.fused.shape[1];
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < width; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g",
                              (*out.fused.data)[static_cast<size_t>(i) * width + j]);
                csv << buf << ",";
            }
            csv << ds.samples[static_cast<size_t>(batch[static_cast<size_t>(i)])].label << "\n";
        }
    }
    write_text_atomic(out_csv, csv.str());
    std::printf("wrote %d rows to %s\n", ds.size(), out_csv.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CASE-NET: causal channel-recalibrated multi-scale encoder for MTS classification"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset in the canonical format");
    std::string gen_kind;
    int gen_n = 0, gen_channels = 0, gen_length = 0, gen_classes = 0;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--kind", gen_kind, "causal-probe | regime-switch")->required();
    gen->add_option("--n", gen_n, "number of samples")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed")->default_val(0);
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--channels", gen_channels, "override channel count");
    gen->add_option("--length", gen_length, "override window length");
    gen->add_option("--classes", gen_classes, "override class count (regime-switch only)");

    // train / ablate / grad-check share --config
    std::string cfg_path, out_override;
    std::vector<std::uint64_t> seed_override;
    auto add_config_opts = [&](CLI::App* cmd, bool config_required) {
        cmd->add_option("--config", cfg_path, "run config JSON")->required(config_required);
        cmd->add_option("--seed", seed_override, "override the config seed list");
        cmd->add_option("--out", out_override, "override the config output directory");
    };
    auto* train = app.add_subcommand("train", "train across seeds; writes run records, checkpoints, summary");
    add_config_opts(train, true);
    bool train_parallel = false;
    train->add_flag("--parallel", train_parallel, "one process per seed instead of a sequential loop");
    auto* ablate = app.add_subcommand("ablate", "run the variant table on identical splits");
    add_config_opts(ablate, true);
    auto* gradcheck = app.add_subcommand("grad-check", "finite-difference check of every parameter (tiny model)");
    add_config_opts(gradcheck, false);

    // eval / export-embeddings
    std::string ck_path, data_path, emb_out;
    int eval_batch = 32;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", ck_path, "checkpoint directory")->required();
    eval_cmd->add_option("--data", data_path, "dataset directory")->required();
    eval_cmd->add_option("--batch-size", eval_batch)->default_val(32);
    auto* exp = app.add_subcommand("export-embeddings", "write pooled fused vectors + labels as CSV");
    exp->add_option("--checkpoint", ck_path, "checkpoint directory")->required();
    exp->add_option("--data", data_path, "dataset directory")->required();
    exp->add_option("--out", emb_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_kind, gen_n, gen_seed, gen_out, gen_channels, gen_length, gen_classes);

        RunConfig rc;
        if (!cfg_path.empty()) rc = load_run_config(cfg_path);
        if (!seed_override.empty()) rc.seeds = seed_override;
        if (!out_override.empty()) rc.out_dir = out_override;

        if (train->parsed()) return cmd_train(rc, train_parallel);
        if (ablate->parsed()) return cmd_ablate(rc);
        if (gradcheck->parsed())
            return cmd_grad_check(rc, seed_override.empty() ? rc.seeds.front() : seed_override.front());
        if (eval_cmd->parsed()) return cmd_eval(ck_path, data_path, eval_batch);
        if (exp->parsed()) return cmd_export_embeddings(ck_path, data_path, emb_out);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ConfigError& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}
