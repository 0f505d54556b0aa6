#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "casenet/data.hpp"
#include "casenet/errors.hpp"

using namespace casenet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("casenet_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.name != b.name || a.n_channels != b.n_channels || a.length != b.length ||
        a.n_classes != b.n_classes || a.samples.size() != b.samples.size())
        return false;
    for (size_t i = 0; i < a.samples.size(); ++i)
        if (a.samples[i].label != b.samples[i].label || a.samples[i].x != b.samples[i].x) return false;
    return true;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("causal probe: determinism and balanced classes") {
    Dataset a = gen_causal_probe(100, 3, 64, 42);
    Dataset b = gen_causal_probe(100, 3, 64, 42);
    CHECK(datasets_equal(a, b));
    Dataset c = gen_causal_probe(100, 3, 64, 43);
    CHECK_FALSE(datasets_equal(a, c));

    int counts[2] = {0, 0};
    for (const auto& s : a.samples) counts[s.label]++;
    CHECK(std::abs(counts[0] - counts[1]) <= 1);
    CHECK(a.n_classes == 2);
    CHECK_THROWS_AS(gen_causal_probe(1), ContractError);
}

TEST_CASE("causal probe: tail is label-independent noise, prefix is discriminative") {
    const int n = 10000, N = 3, L = 64;
    Dataset ds = gen_causal_probe(n, N, L, 7);
    const int half = L / 2;

    std::vector<double> tail_mean(static_cast<size_t>(n)), label(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < N; ++c)
            for (int t = half; t < L; ++t) acc += ds.samples[static_cast<size_t>(i)].x[static_cast<size_t>(c) * L + t];
        tail_mean[static_cast<size_t>(i)] = acc / (N * half);
        label[static_cast<size_t>(i)] = ds.samples[static_cast<size_t>(i)].label;
    }
    CHECK(std::fabs(pearson(tail_mean, label)) < 0.05);

    // amplitude-1 sinusoid prefix; the spectral peak at the class frequency
    // classifies perfectly (noise-free prefix by construction)
    int correct = 0;
    const double two_pi = 6.283185307179586;
    for (int i = 0; i < 500; ++i) {
        const auto& s = ds.samples[static_cast<size_t>(i)];
        double energy[2] = {0.0, 0.0};
        for (int fi = 0; fi < 2; ++fi) {
            const double cycles = fi == 0 ? 2.0 : 4.0;
            for (int c = 0; c < N; ++c) {
                double re = 0, im = 0;
                for (int t = 0; t < half; ++t) {
                    const double v = s.x[static_cast<size_t>(c) * L + t];
                    CHECK(std::fabs(v) <= 1.0 + 1e-12);
                    re += v * std::cos(two_pi * cycles * t / half);
                    im += v * std::sin(two_pi * cycles * t / half);
                }
                energy[fi] += re * re + im * im;
            }
        }
        correct += (energy[1] > energy[0] ? 1 : 0) == s.label ? 1 : 0;
    }
    CHECK(correct == 500);
}

TEST_CASE("regime switch: determinism, balance, volatility ordering") {
    Dataset a = gen_regime_switch(99, 5, 128, 3, 11);
    Dataset b = gen_regime_switch(99, 5, 128, 3, 11);
    CHECK(datasets_equal(a, b));

    int counts[3] = {0, 0, 0};
    for (const auto& s : a.samples) counts[s.label]++;
    CHECK(std::abs(counts[0] - counts[2]) <= 1);

    Dataset big = gen_regime_switch(1000, 5, 128, 3, 13);
    double var[3] = {0, 0, 0};
    int nper[3] = {0, 0, 0};
    for (const auto& s : big.samples) {
        double m = 0;
        for (double v : s.x) m += v;
        m /= static_cast<double>(s.x.size());
        double ss = 0;
        for (double v : s.x) ss += (v - m) * (v - m);
        var[s.label] += ss / static_cast<double>(s.x.size());
        nper[s.label]++;
    }
    for (int k = 0; k < 3; ++k) var[k] /= nper[k];
    CHECK(var[2] > var[1]);
    CHECK(var[1] > var[0]);

    CHECK_THROWS_AS(gen_regime_switch(2, 5, 128, 3, 0), ContractError);
    CHECK_THROWS_AS(gen_regime_switch(10, 5, 128, 4, 0), ContractError);
}

TEST_CASE("save/load round trip is lossless") {
    const fs::path dir = fresh_dir("roundtrip");
    Dataset ds = gen_regime_switch(25, 4, 32, 3, 5);
    save_dataset(ds, dir);
    Dataset back = load_dataset(dir);
    CHECK(datasets_equal(ds, back));
    Dataset back2 = load_dataset(dir / "manifest.json");
    CHECK(datasets_equal(ds, back2));
    fs::remove_all(dir);
}

TEST_CASE("load errors: missing file, label range, truncated row") {
    const fs::path dir = fresh_dir("loaderr");
    Dataset ds = gen_causal_probe(4, 2, 8, 1);
    save_dataset(ds, dir);

    CHECK_THROWS_AS(load_dataset(dir / "nope"), IoError);

    {
        // out-of-range label in the manifest
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const auto pos = text.find("\"label\": 1");
        REQUIRE(pos != std::string::npos);
        std::string bad = text;
        bad.replace(pos, 10, "\"label\": 2");
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << bad;
        out.close();
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("label 2"), IoError);
        std::ofstream restore(dir / "manifest.json", std::ios::trunc);
        restore << text;
    }
    {
        // drop the last value of row 2 in one sample
        std::ifstream in(dir / "sample_00001.csv");
        std::string row1, row2;
        std::getline(in, row1);
        std::getline(in, row2);
        in.close();
        row2 = row2.substr(0, row2.rfind(','));
        std::ofstream out(dir / "sample_00001.csv", std::ios::trunc);
        out << row1 << "\n" << row2 << "\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("row 2"), IoError);
    }
    fs::remove_all(dir);
}

TEST_CASE("zscore_normalize: moments, reuse, zero-variance error") {
    Dataset ds = gen_regime_switch(60, 3, 32, 3, 21);
    auto [norm, stats] = zscore_normalize(ds);
    REQUIRE(static_cast<int>(stats.mean.size()) == 3);

    for (int c = 0; c < 3; ++c) {
        double m = 0;
        const double count = static_cast<double>(norm.samples.size()) * norm.length;
        for (const auto& s : norm.samples)
            for (int t = 0; t < norm.length; ++t) m += s.x[static_cast<size_t>(c) * norm.length + t];
        m /= count;
        double ss = 0;
        for (const auto& s : norm.samples)
            for (int t = 0; t < norm.length; ++t) {
                const double d = s.x[static_cast<size_t>(c) * norm.length + t] - m;
                ss += d * d;
            }
        const double sd = std::sqrt(ss / count);
        CHECK(std::fabs(m) < 1e-10);
        CHECK(std::fabs(sd - 1.0) < 1e-10);
    }

    // applying the returned stats to val/test reuses them (no recompute)
    auto [norm2, stats2] = zscore_normalize(ds, stats);
    CHECK(stats2.mean == stats.mean);
    CHECK(datasets_equal(norm, norm2));

    // normalize is idempotent only under identity stats
    ChannelStats identity;
    identity.mean.assign(3, 0.0);
    identity.stdev.assign(3, 1.0);
    auto [same, s3] = zscore_normalize(norm, identity);
    (void)s3;
    CHECK(datasets_equal(same, norm));
    auto [renorm, s4] = zscore_normalize(norm);
    (void)s4;
    CHECK_FALSE(datasets_equal(renorm, norm));  // second standardization re-centers

    // constant channel
    Dataset flat = ds;
    for (auto& s : flat.samples)
        for (int t = 0; t < flat.length; ++t) s.x[static_cast<size_t>(0) * flat.length + t] = 5.0;
    CHECK_THROWS_WITH_AS(zscore_normalize(flat), doctest::Contains("channel 0"), ConfigError);
}

TEST_CASE("split: stratification, partition, determinism, edge cases") {
    Dataset ds = gen_regime_switch(100, 2, 16, 3, 31);
    {
        SplitResult sp = split(ds, {1.0, 0.0, 0.0}, 9);
        CHECK(sp.train.size() == 100);
        CHECK(sp.val.size() == 0);
        CHECK(sp.test.size() == 0);
    }
    {
        SplitResult sp = split(ds, {0.6, 0.2, 0.2}, 9);
        SplitResult sp2 = split(ds, {0.6, 0.2, 0.2}, 9);
        CHECK(sp.train_idx == sp2.train_idx);
        CHECK(sp.test_idx == sp2.test_idx);

        // partition of the index set
        std::set<int> all;
        for (const auto* v : {&sp.train_idx, &sp.val_idx, &sp.test_idx})
            for (int i : *v) CHECK(all.insert(i).second);
        CHECK(static_cast<int>(all.size()) == ds.size());

        // per-class proportions within one sample of target
        for (int k = 0; k < 3; ++k) {
            int nc = 0;
            for (const auto& s : ds.samples) nc += s.label == k ? 1 : 0;
            int in_train = 0;
            for (const auto& s : sp.train.samples) in_train += s.label == k ? 1 : 0;
            CHECK(std::fabs(in_train - 0.6 * nc) <= 1.0);
        }
    }
    CHECK_THROWS_AS(split(ds, {0.5, 0.2, 0.2}, 9), ContractError);
    Dataset tiny = gen_regime_switch(3, 2, 16, 3, 1);  // one sample per class
    CHECK_THROWS_AS(split(tiny, {0.6, 0.2, 0.2}, 9), ContractError);
    CHECK_NOTHROW(split(tiny, {1.0, 0.0, 0.0}, 9));
}

TEST_CASE("batch iteration covers each sample exactly once") {
    std::mt19937_64 rng(3);
    for (int n : {7, 32, 33}) {
        auto batches = batch_indices(n, 8, true, rng);
        std::set<int> seen;
        int total = 0;
        for (const auto& b : batches) {
            CHECK(static_cast<int>(b.size()) <= 8);
            for (int i : b) CHECK(seen.insert(i).second);
            total += static_cast<int>(b.size());
        }
        CHECK(total == n);
    }
    Dataset ds = gen_causal_probe(6, 2, 8, 3);
    auto batches = batch_indices(ds.size(), 4, false, rng);
    Tensor x = batch_to_tensor(ds, batches[0]);
    CHECK(x.shape == std::vector<int>{4, 2, 8});
    CHECK(batch_labels(ds, batches[0]) == std::vector<int>{0, 1, 0, 1});
}
