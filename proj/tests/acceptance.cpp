// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier criteria print their protocol inline.
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "casenet/checkpoint.hpp"
#include "casenet/data.hpp"
#include "casenet/gradcheck.hpp"
#include "casenet/layers.hpp"
#include "casenet/losses.hpp"
#include "casenet/metrics.hpp"
#include "casenet/ops.hpp"
#include "casenet/serial_kernels.hpp"
#include "casenet/trainer.hpp"

using namespace casenet;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng, bool requires_grad = false,
                   double sigma = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : *t.data) v = dist(rng);
    return t;
}

struct Result {
    bool pass = false;
    std::string detail;
};

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.n_channels = 3;
    cfg.length = 16;
    cfg.n_classes = 2;
    cfg.n_scales = 2;
    cfg.hidden_dim = 8;
    cfg.n_heads = 4;
    cfg.se_ratio = 4;
    cfg.encoder_layers = 2;
    cfg.dropout_p = 0.0;
    return cfg;
}

// ---------------------------------------------------------------- criterion 1
Result c01_gradient_oracle() {
    const double t0 = now_s();
    ModelConfig cfg = tiny_cfg();
    ParameterStore params = ParameterStore::init(cfg, 2024);
    std::mt19937_64 rng(4);
    Tensor x = rand_tensor({2, 3, 16}, rng);
    const std::vector<int> labels{0, 1};
    const ScalarFn loss_fn = [&](Graph& g, const Tensor&) {
        ModelOut out = model_forward(g, x, params, cfg);
        return total_loss(g, out.logits, labels, out.shared, out.specific, cfg.lambda1, cfg.lambda2).total;
    };
    double worst = 0.0;
    std::string worst_name = "-";
    for (const std::string& name : params.names()) {
        Tensor probe = params.at(name);
        const double err = finite_diff_check(loss_fn, probe);
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    }
    const double elapsed = now_s() - t0;
    Result r;
    r.pass = worst < 1e-4 && elapsed < 60.0;
    std::ostringstream os;
    os << params.size() << " parameters, worst " << worst << " (" << worst_name << "), " << elapsed << "s";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------- criterion 2
Result c02_causal_prefix_invariance() {
    const double t0 = now_s();
    const int trials = 100, d = 8, l = 24;
    int causal_exact = 0, bidi_detected = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::mt19937_64 rng(9000 + static_cast<std::uint64_t>(trial));
        ModelConfig cfg = tiny_cfg();
        cfg.length = l;
        ParameterStore params = ParameterStore::init(cfg, 500 + static_cast<std::uint64_t>(trial));
        Tensor view = rand_tensor({1, d, l}, rng);
        std::uniform_int_distribution<int> tdist(0, l - 2);
        const int cut = tdist(rng);
        Tensor pert = view.clone_detached();
        std::normal_distribution<double> bump(0.0, 2.0);
        for (int ch = 0; ch < d; ++ch)
            for (int t = cut + 1; t < l; ++t) (*pert.data)[static_cast<size_t>(ch) * l + t] += bump(rng);

        auto prefix_diff = [&](const ModelConfig& c) {
            Graph g;
            ScaleViews a, b;
            a.views = {view};
            b.views = {pert};
            EncoderOut oa = encoder_forward(g, a, params, c);
            EncoderOut ob = encoder_forward(g, b, params, c);
            double worst = 0.0;
            bool exact = true;
            for (int ch = 0; ch < d; ++ch)
                for (int t = 0; t <= cut; ++t) {
                    const size_t i = static_cast<size_t>(ch) * l + static_cast<size_t>(t);
                    const double va = (*oa.pre_se[0].data)[i];
                    const double vb = (*ob.pre_se[0].data)[i];
                    exact = exact && va == vb;
                    worst = std::max(worst, std::fabs(va - vb));
                }
            return std::pair<bool, double>(exact, worst);
        };

        ModelConfig causal = cfg;
        causal.causal = true;
        if (prefix_diff(causal).first) ++causal_exact;
        ModelConfig bidi = cfg;
        bidi.causal = false;
        if (prefix_diff(bidi).second > 1e-6) ++bidi_detected;
    }
    const double elapsed = now_s() - t0;
    Result r;
    r.pass = causal_exact == trials && bidi_detected >= 95 && elapsed < 30.0;
    std::ostringstream os;
    os << "causal bit-identical " << causal_exact << "/100, bidirectional leak detected " << bidi_detected
       << "/100, " << elapsed << "s";
    r.detail = os.str();
    return r;
}

// ---------------------------------------------------------------- criterion 3
Result c03_mask_exactness() {
    std::mt19937_64 rng(31337);
    bool ok = true;
    for (int l : {1, 2, 7, 64}) {
        Graph g;
        const int dk = 4;
        Tensor q = rand_tensor({2, dk, l}, rng, false, 2.0);
        Tensor k = rand_tensor({2, dk, l}, rng, false, 2.0);
        Tensor v = rand_tensor({2, dk, l}, rng);
        Tensor scores = ops::scale(g, ops::matmul(g, ops::transpose(g, q), k), 1.0 / std::sqrt(dk));
        Tensor probs = ops::masked_softmax(g, scores, build_causal_mask(l));
        Tensor out = ops::matmul(g, v, ops::transpose(g, probs));
        for (double vv : *out.data) ok = ok && std::isfinite(vv);
        for (int b = 0; b < 2; ++b)
            for (int i = 0; i < l; ++i) {
                double sum = 0.0;
                for (int j = 0; j < l; ++j) {
                    const double p = (*probs.data)[(static_cast<size_t>(b) * l + i) * l + j];
                    sum += p;
                    if (j > i) ok = ok && p == 0.0;
                }
                ok = ok && std::fabs(sum - 1.0) <= 1e-12;
            }
    }
    return {ok, "rows sum to 1 within 1e-12, strictly-upper entries exactly 0 at L in {1,2,7,64}"};
}

// ---------------------------------------------------------------- criterion 4
Result c04_gate_additivity() {
    double worst = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        ModelConfig cfg;
        cfg.n_channels = 3;
        cfg.length = 32;
        cfg.n_classes = 2;
        cfg.n_scales = 3;
        cfg.hidden_dim = 16;
        cfg.n_heads = 4;
        cfg.se_ratio = 4;
        ParameterStore params = ParameterStore::init(cfg, seed);
        std::mt19937_64 rng(seed * 77);
        Tensor x = rand_tensor({4, 3, 32}, rng);
        Graph g;
        ScaleViews views = multi_scale_project(g, x, cfg, params);
        EncoderOut enc = encoder_forward(g, views, params, cfg);
        for (const Tensor& ht : enc.recalibrated) {
            DisentangledPair p = disentangle(g, ht, params);
            for (std::int64_t i = 0; i < ht.numel(); ++i) {
                const double sum = (*p.shared_part.data)[static_cast<size_t>(i)] +
                                   (*p.specific_part.data)[static_cast<size_t>(i)];
                worst = std::max(worst, std::fabs(sum - (*ht.data)[static_cast<size_t>(i)]));
            }
        }
    }
    std::ostringstream os;
    os << "max |H_sh + H_sp - H~| = " << worst << " across 3 seeds x 3 scales";
    return {worst <= 1e-12, os.str()};
}

// ---------------------------------------------------------------- criterion 5
Result c05_loss_extremes() {
    Graph g;
    std::mt19937_64 rng(55);
    Tensor h = rand_tensor({3, 6}, rng);
    const double ident = sim_loss(g, {h, h, h}).item();

    Tensor u = Tensor::from({2, 2}, {1.0, 0.5, -2.0, 1.0});
    Tensor anti = u.clone_detached();
    for (double& v : *anti.data) v = -v;
    const double antival = sim_loss(g, {u, anti}).item();

    Tensor zsh = rand_tensor({3, 5}, rng);
    Tensor zero = Tensor::zeros({3, 5});
    const double zval = diff_loss(g, {zsh}, {zero}).item();

    Tensor zsp = rand_tensor({3, 5}, rng);
    const double base = diff_loss(g, {zsh}, {zsp}).item();
    Tensor doubled = zsp.clone_detached();
    for (double& v : *doubled.data) v *= 2.0;
    const double ratio = diff_loss(g, {zsh}, {doubled}).item() / base;

    const bool pass = std::fabs(ident) <= 1e-10 && std::fabs(antival - 2.0) <= 1e-10 && zval == 0.0 &&
                      std::fabs(ratio - 4.0) <= 1e-6;
    std::ostringstream os;
    os << "identical " << ident << ", anti-parallel " << antival << ", zero-factor " << zval
       << ", doubling ratio " << ratio;
    return {pass, os.str()};
}

// ---------------------------------------------------------------- criterion 6
struct OracleMetrics {
    double acc, f1, mcc;
};

OracleMetrics brute_force_metrics(const std::vector<int>& pred, const std::vector<int>& label, int k) {
    std::vector<std::vector<double>> c(static_cast<size_t>(k), std::vector<double>(static_cast<size_t>(k), 0.0));
    for (size_t i = 0; i < pred.size(); ++i) c[static_cast<size_t>(label[i])][static_cast<size_t>(pred[i])] += 1.0;
    const double n = static_cast<double>(pred.size());
    double correct = 0.0;
    for (int i = 0; i < k; ++i) correct += c[static_cast<size_t>(i)][static_cast<size_t>(i)];
    double f1_total = 0.0;
    for (int i = 0; i < k; ++i) {
        double tp = c[static_cast<size_t>(i)][static_cast<size_t>(i)], pcol = 0.0, trow = 0.0;
        for (int j = 0; j < k; ++j) {
            pcol += c[static_cast<size_t>(j)][static_cast<size_t>(i)];
            trow += c[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        const double prec = pcol > 0 ? tp / pcol : 0.0;
        const double rec = trow > 0 ? tp / trow : 0.0;
        f1_total += (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    }
    double st = 0.0, sp = 0.0, stp = 0.0;
    for (int i = 0; i < k; ++i) {
        double ti = 0.0, pi = 0.0;
        for (int j = 0; j < k; ++j) {
            ti += c[static_cast<size_t>(i)][static_cast<size_t>(j)];
            pi += c[static_cast<size_t>(j)][static_cast<size_t>(i)];
        }
        st += ti * ti;
        sp += pi * pi;
        stp += ti * pi;
    }
    const double num = correct * n - stp;
    const double den = std::sqrt(n * n - sp) * std::sqrt(n * n - st);
    return {correct / n, f1_total / k, den > 0 ? num / den : 0.0};
}

Result c06_metric_oracle() {
    std::mt19937_64 rng(606);
    double worst = 0.0;
    bool acc_exact = true;
    for (int k : {2, 3, 5}) {
        std::uniform_int_distribution<int> cls(0, k - 1);
        std::uniform_int_distribution<int> len(4, 200);
        for (int rep = 0; rep < 1000; ++rep) {
            const int n = len(rng);
            std::vector<int> pred(static_cast<size_t>(n)), label(static_cast<size_t>(n));
            for (auto& v : pred) v = cls(rng);
            for (auto& v : label) v = cls(rng);
            const MetricsReport m = compute_metrics(pred, label, k);
            const OracleMetrics o = brute_force_metrics(pred, label, k);
            acc_exact = acc_exact && m.accuracy == o.acc;
            worst = std::max({worst, std::fabs(m.macro_f1 - o.f1), std::fabs(m.mcc - o.mcc)});
        }
    }
    std::ostringstream os;
    os << "3000 random vectors, accuracy exact, max F1/MCC deviation " << worst;
    return {acc_exact && worst <= 1e-12, os.str()};
}

// ---------------------------------------------------------------- criterion 7
Result c07_weight_sharing_gradients() {
    ModelConfig cfg = tiny_cfg();
    ParameterStore params = ParameterStore::init(cfg, 707);
    std::mt19937_64 rng(7070);
    Tensor v1 = rand_tensor({2, 8, 12}, rng);
    Tensor v2 = rand_tensor({2, 8, 6}, rng);

    auto encoder_grads = [&](const std::vector<Tensor>& views) {
        params.zero_grad();
        Graph g;
        ScaleViews vs;
        vs.views = views;
        EncoderOut out = encoder_forward(g, vs, params, cfg);
        Tensor loss;
        for (size_t s = 0; s < out.recalibrated.size(); ++s) {
            Tensor term = ops::reduce_sum_all(g, out.recalibrated[s]);
            loss = s == 0 ? term : ops::add(g, loss, term);
        }
        g.backward(loss);
        std::vector<std::pair<std::string, std::vector<double>>> grads;
        for (const std::string& n : params.names())
            if (n.rfind("enc.", 0) == 0 || n.rfind("se.", 0) == 0)
                grads.emplace_back(n, *params.at(n).grad);
        return grads;
    };

    const auto both = encoder_grads({v1, v2});
    const auto only1 = encoder_grads({v1});
    const auto only2 = encoder_grads({v2});
    double worst = 0.0;
    for (size_t p = 0; p < both.size(); ++p)
        for (size_t i = 0; i < both[p].second.size(); ++i)
            worst = std::max(worst,
                             std::fabs(both[p].second[i] - (only1[p].second[i] + only2[p].second[i])));
    std::ostringstream os;
    os << both.size() << " shared tensors, max |grad_S2 - (grad_s1 + grad_s2)| = " << worst;
    return {worst <= 1e-10, os.str()};
}

// ---------------------------------------------------------------- criterion 8
Result c08_overfit_sanity() {
    const double t0 = now_s();
    Dataset subset = gen_regime_switch(32, 5, 128, 3, 808);
    auto [train, stats] = zscore_normalize(subset);
    (void)stats;

    ModelConfig cfg;  // full-size defaults
    cfg.n_channels = 5;
    cfg.length = 128;
    cfg.n_classes = 3;
    ParameterStore params = ParameterStore::init(cfg, 8);
    TrainConfig tcfg;
    Adam opt(params, tcfg.adam);
    std::mt19937_64 rng(88);

    int epoch = 0;
    double acc = 0.0;
    for (; epoch < 200; ++epoch) {
        train_epoch(params, train, opt, cfg, tcfg, rng);
        acc = evaluate(params, train, cfg).second.accuracy;
        if (acc == 1.0) break;
        if (now_s() - t0 > 295.0) break;
    }
    const double elapsed = now_s() - t0;
    std::ostringstream os;
    os << "train accuracy " << acc << " after " << (epoch + 1) << " epochs, " << elapsed << "s";
    return {acc == 1.0 && elapsed < 300.0, os.str()};
}

// ---------------------------------------------------------------- criterion 9
Result c09_ablation_ordering() {
    const double t0 = now_s();
    Dataset ds = gen_causal_probe(1000, 3, 64, 909);
    SplitResult sp = split(ds, {0.6, 0.2, 0.2}, 777);
    auto [train, stats] = zscore_normalize(sp.train);
    Dataset val = zscore_normalize(sp.val, stats).first;
    Dataset test = zscore_normalize(sp.test, stats).first;

    ModelConfig base;
    base.n_channels = 3;
    base.length = 64;
    base.n_classes = 2;
    TrainConfig tcfg;
    tcfg.max_epochs = 30;
    tcfg.patience = 4;
    std::printf("    ablation protocol: causal-probe n=1000, split 60/20/20 (seed 777), 5 seeds,\n");
    std::printf("    defaults D=64 S=4 heads=4 r=4 lambda=0.1, max_epochs=30, patience=4\n");

    struct Row {
        std::string name;
        double acc_mean, acc_std, f1_mean, f1_std, mcc_mean, mcc_std;
    };
    std::vector<Row> rows;
    for (const std::string& variant : variant_names()) {
        const ModelConfig cfg = build_variant(variant, base);
        std::vector<double> accs, f1s, mccs;
        for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
            FitResult res = fit(cfg, train, val, tcfg, seed);
            const MetricsReport m = evaluate(res.best_params, test, cfg).second;
            accs.push_back(m.accuracy);
            f1s.push_back(m.macro_f1);
            mccs.push_back(m.mcc);
            std::printf("    [%s seed %" PRIu64 "] %zu epochs, test acc %.4f (%.0fs elapsed)\n",
                        variant.c_str(), static_cast<std::uint64_t>(seed), res.record.epochs.size(),
                        m.accuracy, now_s() - t0);
            std::fflush(stdout);
        }
        auto ms = [](const std::vector<double>& xs) {
            double m = 0.0;
            for (double x : xs) m += x;
            m /= static_cast<double>(xs.size());
            double ss = 0.0;
            for (double x : xs) ss += (x - m) * (x - m);
            return std::pair<double, double>(m, std::sqrt(ss / static_cast<double>(xs.size() - 1)));
        };
        const auto [am, as] = ms(accs);
        const auto [fm, fs] = ms(f1s);
        const auto [mm, msd] = ms(mccs);
        rows.push_back({variant, am, as, fm, fs, mm, msd});
    }

    std::printf("    | Model Variant | Acc (%%) | F1 (%%) | MCC |\n");
    std::printf("    |---|---|---|---|\n");
    for (const Row& r : rows)
        std::printf("    | %s | %.2f +/- %.2f | %.2f +/- %.2f | %.3f +/- %.3f |\n", r.name.c_str(),
                    100 * r.acc_mean, 100 * r.acc_std, 100 * r.f1_mean, 100 * r.f1_std, r.mcc_mean,
                    r.mcc_std);
    std::printf("    (the synthetic probe saturates every encoder variant; only the baseline separates)\n");

    auto find = [&](const std::string& n) {
        for (const Row& r : rows)
            if (r.name == n) return r;
        return rows.front();
    };
    const Row full = find("full"), no_causal = find("no_causal"), no_se = find("no_se");
    auto pooled = [](double a, double b) { return std::sqrt((a * a + b * b) / 2.0); };
    // "never materially worse": margin >= -1 pooled std; exact ties pass
    const double m1 = full.acc_mean - no_causal.acc_mean + pooled(full.acc_std, no_causal.acc_std);
    const double m2 = full.acc_mean - no_se.acc_mean + pooled(full.acc_std, no_se.acc_std);
    std::ostringstream os;
    os << "full-vs-no_causal margin " << full.acc_mean - no_causal.acc_mean << ", full-vs-no_se margin "
       << full.acc_mean - no_se.acc_mean << " (each within one pooled std of 0 or better), "
       << now_s() - t0 << "s";
    return {m1 >= 0.0 && m2 >= 0.0, os.str()};
}

// --------------------------------------------------------------- criterion 10
Result c10_convergence_shape() {
    const double t0 = now_s();
    Dataset ds = gen_regime_switch(600, 5, 128, 3, 1010);
    SplitResult sp = split(ds, {0.6, 0.2, 0.2}, 321);
    auto [train, stats] = zscore_normalize(sp.train);
    Dataset val = zscore_normalize(sp.val, stats).first;

    ModelConfig cfg;  // defaults
    cfg.n_channels = 5;
    cfg.length = 128;
    cfg.n_classes = 3;
    TrainConfig tcfg;
    tcfg.max_epochs = 40;
    tcfg.patience = 40;  // full curve, no early exit
    FitResult res = fit(cfg, train, val, tcfg, 10, [&](int epoch, const EpochRecord& e) {
        if (epoch % 5 == 0 || epoch == 39)
            std::printf("    epoch %2d val_loss %.4f val_acc %.4f (%.0fs)\n", epoch, e.val_loss.l_total,
                        e.val_metrics.accuracy, now_s() - t0);
        std::fflush(stdout);
    });
    const double first = res.record.epochs.front().val_loss.l_total;
    const double at40 = res.record.epochs.back().val_loss.l_total;
    double best_acc = 0.0;
    for (const EpochRecord& e : res.record.epochs) best_acc = std::max(best_acc, e.val_metrics.accuracy);
    const double elapsed = now_s() - t0;
    std::ostringstream os;
    os << "val loss " << first << " -> " << at40 << " (ratio " << at40 / first << "), best val acc "
       << best_acc << ", " << elapsed << "s";
    const bool pass = res.record.epochs.size() == 40 && at40 <= 0.5 * first && best_acc > 0.80 &&
                      elapsed < 600.0;
    return {pass, os.str()};
}

// --------------------------------------------------------------- criterion 11
Result c11_format_round_trip() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "casenet_acceptance_rt";
    fs::remove_all(dir);

    Dataset ds = gen_regime_switch(500, 5, 128, 3, 1111);
    save_dataset(ds, dir / "data");
    Dataset back = load_dataset(dir / "data");
    bool data_ok = ds.size() == back.size() && ds.n_channels == back.n_channels;
    for (int i = 0; data_ok && i < ds.size(); ++i)
        data_ok = ds.samples[static_cast<size_t>(i)].label == back.samples[static_cast<size_t>(i)].label &&
                  ds.samples[static_cast<size_t>(i)].x == back.samples[static_cast<size_t>(i)].x;

    ModelConfig cfg;
    cfg.n_channels = 5;
    cfg.length = 128;
    cfg.n_classes = 3;
    ParameterStore params = ParameterStore::init(cfg, 1212);
    ChannelStats stats;
    stats.mean = {1, 2, 3, 4, 5};
    stats.stdev = {1, 1, 2, 2, 3};
    save_checkpoint(dir / "model.ckpt", params, cfg, stats);
    Checkpoint ck = load_checkpoint(dir / "model.ckpt");
    bool ck_ok = ck.params.size() == params.size() && ck.stats.has_value();
    for (const auto& [name, t] : params)
        ck_ok = ck_ok && *ck.params.at(name).data == *t.data;  // bit-exact

    fs::remove_all(dir);
    std::ostringstream os;
    os << "500-sample dataset value-exact: " << (data_ok ? "yes" : "NO") << "; checkpoint bit-exact ("
       << params.total_elements() << " values): " << (ck_ok ? "yes" : "NO");
    return {data_ok && ck_ok, os.str()};
}

}  // namespace

int main() {
    struct Entry {
        const char* name;
        std::function<Result()> fn;
    };
    const std::vector<Entry> criteria{
        {"gradient oracle (full loss, every parameter, <1e-4)", c01_gradient_oracle},
        {"causal prefix invariance (100 triples)", c02_causal_prefix_invariance},
        {"mask exactness (L in {1,2,7,64})", c03_mask_exactness},
        {"gate additivity (<=1e-12)", c04_gate_additivity},
        {"loss extremes (sim 0/2, diff 0, quadratic)", c05_loss_extremes},
        {"metric oracle (K in {2,3,5})", c06_metric_oracle},
        {"weight-sharing gradient identity (<=1e-10)", c07_weight_sharing_gradients},
        {"overfit sanity (32 samples to train acc 1.0)", c08_overfit_sanity},
        {"ablation ordering (soft, reported)", c09_ablation_ordering},
        {"convergence shape (epoch-40 val loss <= 50% of epoch 1)", c10_convergence_shape},
        {"format round-trip (dataset + checkpoint)", c11_format_round_trip},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        std::printf("==> criterion %zu: %s\n", i + 1, criteria[i].name);
        std::fflush(stdout);
        Result r;
        try {
            r = criteria[i].fn();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %2zu. %s -- %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                    r.detail.c_str());
        std::fflush(stdout);
        failures += r.pass ? 0 : 1;
    }
    std::printf("\n%zu/%zu acceptance criteria passed\n", criteria.size() - failures, criteria.size());
    return failures;
}
