#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "casenet/checkpoint.hpp"
#include "casenet/data.hpp"
#include "casenet/errors.hpp"
#include "casenet/run_config.hpp"

using namespace casenet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
    static const fs::path p = [] {
        fs::path d = fs::temp_directory_path() / ("casenet_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CASENET_BIN) + " " + args + " >> " +
                            (work_dir() / "cli.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("run config: defaults, unknown keys, bad values") {
    const json good{{"dataset", "somewhere"}, {"seeds", {1, 2}}, {"hidden_dim", 16}};
    RunConfig rc = run_config_from_json(good);
    CHECK(rc.hidden_dim == 16);
    CHECK(rc.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(rc.batch_size == 32);  // default preserved

    json unknown = good;
    unknown["hidden_dims"] = 8;
    CHECK_THROWS_WITH_AS(run_config_from_json(unknown), doctest::Contains("hidden_dims"), ConfigError);

    json bad = good;
    bad["variant"] = "gru";
    CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
    bad = good;
    bad["split_fractions"] = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
    bad = good;
    bad["dropout_p"] = 1.5;
    CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);

    // round trip
    RunConfig back = run_config_from_json(run_config_to_json(rc));
    CHECK(back.hidden_dim == rc.hidden_dim);
    CHECK(back.seeds == rc.seeds);
    CHECK(back.split_fractions == rc.split_fractions);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    ModelConfig cfg;
    cfg.n_channels = 3;
    cfg.length = 16;
    cfg.n_classes = 2;
    cfg.n_scales = 2;
    cfg.hidden_dim = 8;
    cfg.n_heads = 2;
    cfg.se_ratio = 4;
    ParameterStore params = ParameterStore::init(cfg, 99);
    ChannelStats stats;
    stats.mean = {0.25, -1.5, 3.0};
    stats.stdev = {1.0, 2.0, 0.5};

    const fs::path ck = work_dir() / "model.ckpt";
    save_checkpoint(ck, params, cfg, stats);
    Checkpoint back = load_checkpoint(ck);
    CHECK(back.cfg.hidden_dim == cfg.hidden_dim);
    CHECK(back.cfg.causal == cfg.causal);
    REQUIRE(back.stats.has_value());
    CHECK(back.stats->mean == stats.mean);
    CHECK(back.stats->stdev == stats.stdev);
    CHECK(back.params.size() == params.size());
    for (const auto& [name, t] : params) {
        const Tensor& r = back.params.at(name);
        CHECK(r.shape == t.shape);
        CHECK(*r.data == *t.data);  // bit-exact via the raw f64 blobs
        CHECK(r.requires_grad);
    }
    CHECK_THROWS_AS(load_checkpoint(work_dir() / "missing.ckpt"), IoError);
}

TEST_CASE("atomic text writes leave no temp residue") {
    const fs::path target = work_dir() / "atomic" / "file.json";
    write_text_atomic(target, "{\"ok\": true}\n");
    CHECK(read_file(target) == "{\"ok\": true}\n");
    CHECK_FALSE(fs::exists(target.string() + ".tmp"));
}

TEST_CASE("cli: usage errors") {
    CHECK(run_cli("") == 1);
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("gen-data --kind causal-probe --n 0 --out " + (work_dir() / "d0").string()) == 1);
    CHECK(run_cli("train --config " + (work_dir() / "cfg.json").string() + " --bogus-flag") == 1);
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli: gen-data is reproducible and loadable") {
    const fs::path d1 = work_dir() / "probe1";
    const fs::path d2 = work_dir() / "probe2";
    CHECK(run_cli("gen-data --kind causal-probe --n 12 --seed 7 --length 16 --out " + d1.string()) == 0);
    CHECK(run_cli("gen-data --kind causal-probe --n 12 --seed 7 --length 16 --out " + d2.string()) == 0);
    CHECK(read_file(d1 / "manifest.json") == read_file(d2 / "manifest.json"));
    CHECK(read_file(d1 / "sample_00003.csv") == read_file(d2 / "sample_00003.csv"));
    Dataset ds = load_dataset(d1);
    CHECK(ds.size() == 12);
    CHECK(ds.length == 16);
    CHECK(run_cli("gen-data --kind nope --n 4 --out " + (work_dir() / "dx").string()) == 2);
}

TEST_CASE("cli: train -> summary/checkpoints, then eval and export") {
    const fs::path data_dir = work_dir() / "train_data";
    REQUIRE(run_cli("gen-data --kind regime-switch --n 36 --seed 3 --length 16 --out " + data_dir.string()) == 0);

    const fs::path out_dir = work_dir() / "run_out";
    const json cfg{{"dataset", data_dir.string()},
                   {"out_dir", out_dir.string()},
                   {"seeds", {1, 2}},
                   {"n_scales", 2},
                   {"hidden_dim", 8},
                   {"n_heads", 2},
                   {"se_ratio", 4},
                   {"batch_size", 8},
                   {"max_epochs", 2},
                   {"patience", 2}};
    const fs::path cfg_path = work_dir() / "train_cfg.json";
    std::ofstream(cfg_path) << cfg.dump(2);

    REQUIRE(run_cli("train --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out_dir / "run_1.json"));
    CHECK(fs::exists(out_dir / "run_2.json"));
    CHECK(fs::exists(out_dir / "model_1.ckpt" / "manifest.json"));
    CHECK(fs::exists(out_dir / "model_2.ckpt" / "manifest.json"));

    const json summary = json::parse(read_file(out_dir / "summary.json"));
    const json r1 = json::parse(read_file(out_dir / "run_1.json"));
    const json r2 = json::parse(read_file(out_dir / "run_2.json"));
    const double mean_acc = (r1["test_metrics"]["accuracy"].get<double>() +
                             r2["test_metrics"]["accuracy"].get<double>()) /
                            2.0;
    CHECK(summary["accuracy"]["mean"].get<double>() == doctest::Approx(mean_acc).epsilon(1e-12));
    CHECK(r1["epochs"].size() <= 2);
    CHECK(r1["config"]["hidden_dim"].get<int>() == 8);

    // eval on the generating dataset
    CHECK(run_cli("eval --checkpoint " + (out_dir / "model_1.ckpt").string() + " --data " +
                  data_dir.string()) == 0);

    // geometry mismatch is a validation failure
    const fs::path other = work_dir() / "other_geom";
    REQUIRE(run_cli("gen-data --kind regime-switch --n 12 --seed 3 --length 32 --out " + other.string()) == 0);
    CHECK(run_cli("eval --checkpoint " + (out_dir / "model_1.ckpt").string() + " --data " +
                  other.string()) == 2);

    // embeddings: header + one row per sample, 2D+1 columns
    const fs::path emb = work_dir() / "emb.csv";
    CHECK(run_cli("export-embeddings --checkpoint " + (out_dir / "model_1.ckpt").string() + " --data " +
                  data_dir.string() + " --out " + emb.string()) == 0);
    std::ifstream in(emb);
    std::string header;
    std::getline(in, header);
    int commas = 0;
    for (char ch : header) commas += ch == ',' ? 1 : 0;
    CHECK(commas == 2 * 8);  // 2D feature columns then the label
    CHECK(header.substr(0, 7) == "g_sh_0,");
    CHECK(header.find("label") != std::string::npos);
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 36);
    const std::string first_export = read_file(emb);
    REQUIRE(run_cli("export-embeddings --checkpoint " + (out_dir / "model_1.ckpt").string() + " --data " +
                    data_dir.string() + " --out " + emb.string()) == 0);
    CHECK(read_file(emb) == first_export);  // deterministic across invocations

    // unknown key in the config file is rejected with the validation code
    json bad = cfg;
    bad["learning_rate"] = 0.1;
    const fs::path bad_path = work_dir() / "bad_cfg.json";
    std::ofstream(bad_path) << bad.dump(2);
    CHECK(run_cli("train --config " + bad_path.string()) == 2);

    // --parallel runs one replica per seed and merges the same summary
    const fs::path par_out = work_dir() / "run_out_par";
    json par_cfg = cfg;
    par_cfg["out_dir"] = par_out.string();
    const fs::path par_path = work_dir() / "train_cfg_par.json";
    std::ofstream(par_path) << par_cfg.dump(2);
    REQUIRE(run_cli("train --config " + par_path.string() + " --parallel") == 0);
    const json par_summary = json::parse(read_file(par_out / "summary.json"));
    CHECK(par_summary["accuracy"]["mean"].get<double>() ==
          doctest::Approx(summary["accuracy"]["mean"].get<double>()).epsilon(1e-15));
    CHECK(fs::exists(par_out / "model_2.ckpt" / "manifest.json"));
}

TEST_CASE("cli: grad-check passes and reports every parameter once") {
    const fs::path log = work_dir() / "gradcheck.log";
    const std::string cmd = std::string(CASENET_BIN) + " grad-check --seed 5 > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 0);
    const std::string text = read_file(log);
    for (const std::string name : {"proj.s1.w", "enc.l1.attn.wq", "enc.l2.conv.w", "se.w1", "gate.w",
                                   "head.fc2.b"}) {
        int report_lines = 0;
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line)) report_lines += line.rfind(name + " ", 0) == 0 ? 1 : 0;
        CHECK_MESSAGE(report_lines == 1, name);  // exactly one report line per parameter
    }
    CHECK(text.find("FAIL") == std::string::npos);
}

TEST_CASE("cli: ablate emits the five-variant table on identical splits") {
    const fs::path data_dir = work_dir() / "ablate_data";
    REQUIRE(run_cli("gen-data --kind causal-probe --n 40 --seed 9 --length 16 --out " + data_dir.string()) == 0);

    const fs::path out_dir = work_dir() / "ablate_out";
    const json cfg{{"dataset", data_dir.string()},
                   {"out_dir", out_dir.string()},
                   {"seeds", {1}},
                   {"n_scales", 2},
                   {"hidden_dim", 8},
                   {"n_heads", 2},
                   {"se_ratio", 4},
                   {"batch_size", 8},
                   {"max_epochs", 1},
                   {"patience", 1}};
    const fs::path cfg_path = work_dir() / "ablate_cfg.json";
    std::ofstream(cfg_path) << cfg.dump(2);
    REQUIRE(run_cli("ablate --config " + cfg_path.string()) == 0);

    const std::string csv = read_file(out_dir / "ablation.csv");
    int rows = -1;  // don't count the header
    std::istringstream lines(csv);
    std::string line;
    std::set<std::string> variants;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        ++rows;
        variants.insert(line.substr(0, line.find(',')));
    }
    CHECK(rows == 5);
    CHECK(variants.count("full") == 1);  // the full row is always reported
    CHECK(variants.count("baseline") == 1);

    const json detail = json::parse(read_file(out_dir / "ablation.json"));
    CHECK(detail["split_hash"].get<std::string>().size() == 16);  // logged hash
    CHECK(detail["runs"].size() == 5);  // 5 variants x 1 seed

    const std::string md = read_file(out_dir / "ablation.md");
    CHECK(md.find("| full |") != std::string::npos);
    CHECK(md.find("split hash") != std::string::npos);
}
