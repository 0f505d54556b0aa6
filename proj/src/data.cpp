#include "casenet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "casenet/errors.hpp"

namespace casenet {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void Dataset::validate() const {
    if (n_channels < 1 || length < 1 || n_classes < 1)
        throw IoError("dataset '" + name + "': invalid metadata (N=" + std::to_string(n_channels) +
                      ", L=" + std::to_string(length) + ", K=" + std::to_string(n_classes) + ")");
    for (size_t i = 0; i < samples.size(); ++i) {
        const MtsSample& s = samples[i];
        if (s.label < 0 || s.label >= n_classes)
            throw IoError("dataset '" + name + "': sample " + std::to_string(i) + " label " +
                          std::to_string(s.label) + " out of range [0," + std::to_string(n_classes) + ")");
        if (static_cast<int>(s.x.size()) != n_channels * length)
            throw IoError("dataset '" + name + "': sample " + std::to_string(i) + " has " +
                          std::to_string(s.x.size()) + " values, expected " +
                          std::to_string(n_channels * length));
        for (double v : s.x)
            if (!std::isfinite(v))
                throw IoError("dataset '" + name + "': sample " + std::to_string(i) + " contains a non-finite value");
    }
    if (channel_stats) {
        for (double sd : channel_stats->stdev)
            if (!(sd > 0.0)) throw IoError("dataset '" + name + "': channel stats contain non-positive std");
    }
}

Dataset gen_causal_probe(int n, int n_channels, int length, std::uint64_t seed) {
    if (n < 2) throw ContractError("gen_causal_probe: need n >= 2");
    Dataset ds;
    ds.name = "causal-probe";
    ds.n_channels = n_channels;
    ds.length = length;
    ds.n_classes = 2;
    ds.samples.reserve(static_cast<size_t>(n));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase_dist(0.0, kTwoPi);
    std::normal_distribution<double> noise(0.0, 3.0);
    const int prefix = length / 2;
    for (int i = 0; i < n; ++i) {
        MtsSample s;
        s.label = i % 2;
        const double cycles = s.label == 0 ? 2.0 : 4.0;
        s.x.resize(static_cast<size_t>(n_channels) * length);
        for (int c = 0; c < n_channels; ++c) {
            const double phase = phase_dist(rng);
            for (int t = 0; t < prefix; ++t)
                s.x[static_cast<size_t>(c) * length + t] = std::sin(kTwoPi * cycles * t / prefix + phase);
            for (int t = prefix; t < length; ++t)
                s.x[static_cast<size_t>(c) * length + t] = noise(rng);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

Dataset gen_regime_switch(int n, int n_channels, int length, int n_classes, std::uint64_t seed) {
    if (n_classes < 1 || n_classes > 3)
        throw ContractError("gen_regime_switch: generator defines classes 0..2, got K=" +
                            std::to_string(n_classes));
    if (n < n_classes) throw ContractError("gen_regime_switch: need n >= n_classes");
    static constexpr double kCoef[3] = {0.9, 0.5, 0.2};
    static constexpr double kDrift[3] = {0.0, 0.05, -0.05};
    static constexpr double kVol[3] = {0.5, 1.0, 2.0};

    Dataset ds;
    ds.name = "regime-switch";
    ds.n_channels = n_channels;
    ds.length = length;
    ds.n_classes = n_classes;
    ds.samples.reserve(static_cast<size_t>(n));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> eps(0.0, 1.0);
    std::uniform_int_distribution<int> switch_dist(1, length - 1);
    for (int i = 0; i < n; ++i) {
        MtsSample s;
        s.label = i % n_classes;
        const double a = kCoef[s.label], drift = kDrift[s.label], vol = kVol[s.label];
        const int sw = switch_dist(rng);
        s.x.resize(static_cast<size_t>(n_channels) * length);
        for (int c = 0; c < n_channels; ++c) {
            double* row = s.x.data() + static_cast<size_t>(c) * length;
            row[0] = drift + vol * eps(rng);
            for (int t = 1; t < length; ++t) {
                const double v = (t >= sw ? 2.0 : 1.0) * vol;
                row[t] = a * row[t - 1] + drift + v * eps(rng);
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace {

std::string sample_filename(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05zu.csv", i);
    return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["name"] = ds.name;
    manifest["n_channels"] = ds.n_channels;
    manifest["length"] = ds.length;
    manifest["n_classes"] = ds.n_classes;
    nlohmann::json samples = nlohmann::json::array();

    char buf[64];
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const std::string fname = sample_filename(i);
        std::ofstream out(dir / fname, std::ios::binary);
        if (!out) throw IoError("save_dataset: cannot write " + (dir / fname).string());
        const MtsSample& s = ds.samples[i];
        for (int c = 0; c < ds.n_channels; ++c) {
            for (int t = 0; t < ds.length; ++t) {
                std::snprintf(buf, sizeof(buf), "%.17g", s.x[static_cast<size_t>(c) * ds.length + t]);
                out << (t ? "," : "") << buf;
            }
            out << "\n";
        }
        samples.push_back({{"path", fname}, {"label", s.label}});
    }
    manifest["samples"] = std::move(samples);

    std::ofstream mf(dir / "manifest.json", std::ios::binary);
    if (!mf) throw IoError("save_dataset: cannot write " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& manifest_or_dir) {
    namespace fs = std::filesystem;
    fs::path manifest_path = manifest_or_dir;
    if (fs::is_directory(manifest_path)) manifest_path /= "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("load_dataset: cannot open manifest " + manifest_path.string());

    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_dataset: bad manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset ds;
    try {
        ds.name = manifest.at("name").get<std::string>();
        ds.n_channels = manifest.at("n_channels").get<int>();
        ds.length = manifest.at("length").get<int>();
        ds.n_classes = manifest.at("n_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_dataset: manifest " + manifest_path.string() + " missing fields: " + e.what());
    }
    if (ds.n_channels < 1 || ds.length < 1 || ds.n_classes < 1)
        throw IoError("load_dataset: manifest " + manifest_path.string() + " has invalid metadata");

    const fs::path base = manifest_path.parent_path();
    for (const auto& entry : manifest.at("samples")) {
        const std::string rel = entry.at("path").get<std::string>();
        MtsSample s;
        s.label = entry.at("label").get<int>();
        if (s.label < 0 || s.label >= ds.n_classes)
            throw IoError("load_dataset: sample " + rel + ": label " + std::to_string(s.label) +
                          " out of range [0," + std::to_string(ds.n_classes) + ")");
        std::ifstream csv(base / rel);
        if (!csv) throw IoError("load_dataset: missing sample file " + (base / rel).string());
        s.x.reserve(static_cast<size_t>(ds.n_channels) * ds.length);
        std::string line;
        int rows = 0;
        while (std::getline(csv, line)) {
            if (line.empty() && csv.eof()) break;
            ++rows;
            if (rows > ds.n_channels)
                throw IoError("load_dataset: sample " + rel + ": has more than " +
                              std::to_string(ds.n_channels) + " rows");
            int cols = 0;
            const char* p = line.c_str();
            while (true) {
                char* end = nullptr;
                const double v = std::strtod(p, &end);
                if (end == p)
                    throw IoError("load_dataset: sample " + rel + ": row " + std::to_string(rows) +
                                  " has a malformed number");
                if (!std::isfinite(v))
                    throw IoError("load_dataset: sample " + rel + ": row " + std::to_string(rows) +
                                  " contains a non-finite value");
                s.x.push_back(v);
                ++cols;
                p = end;
                if (*p == ',') {
                    ++p;
                    continue;
                }
                while (*p == ' ' || *p == '\r') ++p;
                if (*p == '\0') break;
                throw IoError("load_dataset: sample " + rel + ": row " + std::to_string(rows) +
                              " has trailing garbage");
            }
            if (cols != ds.length)
                throw IoError("load_dataset: sample " + rel + ": row " + std::to_string(rows) + " has " +
                              std::to_string(cols) + " values, expected " + std::to_string(ds.length));
        }
        if (rows != ds.n_channels)
            throw IoError("load_dataset: sample " + rel + ": has " + std::to_string(rows) +
                          " rows, expected " + std::to_string(ds.n_channels));
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

std::pair<Dataset, ChannelStats> zscore_normalize(const Dataset& ds,
                                                  const std::optional<ChannelStats>& stats) {
    if (ds.samples.empty()) throw ContractError("zscore_normalize: empty dataset");
    ChannelStats st;
    if (stats) {
        st = *stats;
        if (static_cast<int>(st.mean.size()) != ds.n_channels ||
            static_cast<int>(st.stdev.size()) != ds.n_channels)
            throw ContractError("zscore_normalize: stats channel count does not match dataset");
    } else {
        st.mean.assign(static_cast<size_t>(ds.n_channels), 0.0);
        st.stdev.assign(static_cast<size_t>(ds.n_channels), 0.0);
        const double count = static_cast<double>(ds.samples.size()) * ds.length;
        for (const MtsSample& s : ds.samples)
            for (int c = 0; c < ds.n_channels; ++c)
                for (int t = 0; t < ds.length; ++t)
                    st.mean[static_cast<size_t>(c)] += s.x[static_cast<size_t>(c) * ds.length + t];
        for (int c = 0; c < ds.n_channels; ++c) st.mean[static_cast<size_t>(c)] /= count;
        for (const MtsSample& s : ds.samples)
            for (int c = 0; c < ds.n_channels; ++c)
                for (int t = 0; t < ds.length; ++t) {
                    const double d = s.x[static_cast<size_t>(c) * ds.length + t] - st.mean[static_cast<size_t>(c)];
                    st.stdev[static_cast<size_t>(c)] += d * d;
                }
        for (int c = 0; c < ds.n_channels; ++c) {
            st.stdev[static_cast<size_t>(c)] = std::sqrt(st.stdev[static_cast<size_t>(c)] / count);
            if (st.stdev[static_cast<size_t>(c)] <= 1e-8)
                throw ConfigError("zscore_normalize: channel " + std::to_string(c) +
                                  " has (near-)zero variance");
        }
    }
    Dataset out = ds;
    for (MtsSample& s : out.samples)
        for (int c = 0; c < ds.n_channels; ++c)
            for (int t = 0; t < ds.length; ++t) {
                double& v = s.x[static_cast<size_t>(c) * ds.length + t];
                v = (v - st.mean[static_cast<size_t>(c)]) / st.stdev[static_cast<size_t>(c)];
            }
    out.channel_stats = st;
    return {std::move(out), std::move(st)};
}

SplitResult split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    if (std::fabs(sum - 1.0) > 1e-9)
        throw ContractError("split: fractions must sum to 1, got " + std::to_string(sum));
    for (double f : fractions)
        if (f < 0.0) throw ContractError("split: fractions must be non-negative");
    int positive = 0;
    for (double f : fractions) positive += f > 0.0 ? 1 : 0;

    std::vector<std::vector<int>> by_class(static_cast<size_t>(ds.n_classes));
    for (int i = 0; i < ds.size(); ++i) by_class[static_cast<size_t>(ds.samples[static_cast<size_t>(i)].label)].push_back(i);

    std::mt19937_64 rng(seed);
    SplitResult out;
    out.train.name = ds.name + "/train";
    out.val.name = ds.name + "/val";
    out.test.name = ds.name + "/test";
    for (Dataset* d : {&out.train, &out.val, &out.test}) {
        d->n_channels = ds.n_channels;
        d->length = ds.length;
        d->n_classes = ds.n_classes;
    }

    for (int c = 0; c < ds.n_classes; ++c) {
        auto& idx = by_class[static_cast<size_t>(c)];
        if (!idx.empty() && static_cast<int>(idx.size()) < positive)
            throw ContractError("split: class " + std::to_string(c) + " has " +
                                std::to_string(idx.size()) + " samples, fewer than " +
                                std::to_string(positive) + " requested splits");
        std::shuffle(idx.begin(), idx.end(), rng);
        const int nc = static_cast<int>(idx.size());
        std::array<int, 3> counts;
        std::array<double, 3> rema;
        int assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double target = fractions[static_cast<size_t>(p)] * nc;
            counts[static_cast<size_t>(p)] = static_cast<int>(std::floor(target));
            rema[static_cast<size_t>(p)] = target - counts[static_cast<size_t>(p)];
            assigned += counts[static_cast<size_t>(p)];
        }
        for (int left = nc - assigned; left > 0; --left) {
            int best = 0;
            for (int p = 1; p < 3; ++p)
                if (rema[static_cast<size_t>(p)] > rema[static_cast<size_t>(best)]) best = p;
            counts[static_cast<size_t>(best)]++;
            rema[static_cast<size_t>(best)] = -1.0;
        }
        int cursor = 0;
        const std::array<Dataset*, 3> targets{&out.train, &out.val, &out.test};
        const std::array<std::vector<int>*, 3> tidx{&out.train_idx, &out.val_idx, &out.test_idx};
        for (int p = 0; p < 3; ++p) {
            for (int j = 0; j < counts[static_cast<size_t>(p)]; ++j, ++cursor) {
                targets[static_cast<size_t>(p)]->samples.push_back(ds.samples[static_cast<size_t>(idx[static_cast<size_t>(cursor)])]);
                tidx[static_cast<size_t>(p)]->push_back(idx[static_cast<size_t>(cursor)]);
            }
        }
    }
    return out;
}

std::vector<std::vector<int>> batch_indices(int n, int batch_size, bool shuffle, std::mt19937_64& rng) {
    if (n < 1) throw ContractError("batch_indices: empty dataset");
    if (batch_size < 1) throw ContractError("batch_indices: batch_size must be >= 1");
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + start, order.begin() + end);
    }
    return out;
}

Tensor batch_to_tensor(const Dataset& ds, const std::vector<int>& idx) {
    if (idx.empty()) throw ContractError("batch_to_tensor: empty batch");
    const int b = static_cast<int>(idx.size());
    Tensor t = Tensor::zeros({b, ds.n_channels, ds.length});
    const size_t per = static_cast<size_t>(ds.n_channels) * ds.length;
    for (int i = 0; i < b; ++i) {
        const MtsSample& s = ds.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])];
        std::copy(s.x.begin(), s.x.end(), t.data->begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return t;
}

std::vector<int> batch_labels(const Dataset& ds, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(ds.samples[static_cast<size_t>(i)].label);
    return out;
}

}  // namespace casenet
