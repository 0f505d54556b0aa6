// Compares the OpenMP kernels against the serial reference implementations:
// verifies bit-identical results, then reports timings and speedup.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include <omp.h>

#include "casenet/kernels.hpp"
#include "casenet/layers.hpp"
#include "casenet/serial_kernels.hpp"

using namespace casenet;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

template <class F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_seconds();
        fn();
        best = std::min(best, now_seconds() - t0);
    }
    return best;
}

std::vector<double> random_vec(size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

void report(const char* name, double serial_s, double parallel_s, bool equal) {
    std::printf("%-26s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
                equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("threads: %d\n\n", omp_get_max_threads());
    std::mt19937_64 rng(42);
    int failures = 0;

    {
        const int m = 384, k = 384, n = 384;
        const auto a = random_vec(static_cast<size_t>(m) * k, rng);
        const auto b = random_vec(static_cast<size_t>(k) * n, rng);
        std::vector<double> c_ser(static_cast<size_t>(m) * n), c_par(c_ser.size());
        const double ts = time_best_of(3, [&] { serial::matmul(a.data(), b.data(), c_ser.data(), m, k, n); });
        const double tp = time_best_of(3, [&] {
            kernels::gemm(false, false, 1, m, k, n, a.data(), 0, b.data(), 0, c_par.data(),
                          static_cast<std::int64_t>(m) * n, false);
        });
        const bool ok = bit_equal(c_ser, c_par);
        failures += ok ? 0 : 1;
        report("matmul 384x384x384", ts, tp, ok);
    }

    {
        const int c_in = 64, l = 4096, c_out = 64, k = 5, stride = 1, dil = 2;
        const auto x = random_vec(static_cast<size_t>(c_in) * l, rng);
        const auto w = random_vec(static_cast<size_t>(c_out) * c_in * k, rng);
        const auto bias = random_vec(static_cast<size_t>(c_out), rng);
        const int l_out = kernels::conv1d_out_len(l, k, stride, dil);
        std::vector<double> y_ser, y_par(static_cast<size_t>(c_out) * l_out);
        const double ts =
            time_best_of(3, [&] { y_ser = serial::conv1d(x, c_in, l, w, c_out, k, bias.data(), stride, dil); });
        const double tp = time_best_of(3, [&] {
            kernels::conv1d_forward(1, c_in, l, c_out, k, stride, dil, x.data(), w.data(), bias.data(),
                                    y_par.data());
        });
        const bool ok = bit_equal(y_ser, y_par);
        failures += ok ? 0 : 1;
        report("conv1d 64ch L=4096 k=5", ts, tp, ok);
    }

    {
        const int l = 256, batch_rows = 64 * l;
        const auto scores = random_vec(static_cast<size_t>(batch_rows) * l, rng);
        const Tensor mask = build_causal_mask(l);
        std::vector<double> p_ser(scores.size()), p_par(scores.size());
        const double ts = time_best_of(
            3, [&] { serial::masked_softmax(batch_rows, l, scores.data(), mask.data->data(), p_ser.data()); });
        const double tp = time_best_of(3, [&] {
            kernels::masked_softmax_forward(batch_rows, l, scores.data(), mask.data->data(), p_par.data());
        });
        const bool ok = bit_equal(p_ser, p_par);
        failures += ok ? 0 : 1;
        report("masked softmax L=256", ts, tp, ok);
    }

    if (failures) {
        std::printf("\n%d kernel(s) diverged from the serial reference\n", failures);
        return 1;
    }
    std::printf("\nall kernels match the serial reference\n");
    return 0;
}
