#include "casenet/serial_kernels.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "casenet/errors.hpp"
#include "casenet/kernels.hpp"

namespace casenet::serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int t = 0; t < k; ++t) s += a[static_cast<std::int64_t>(i) * k + t] * b[static_cast<std::int64_t>(t) * n + j];
            c[static_cast<std::int64_t>(i) * n + j] = s;
        }
    }
}

std::vector<double> conv1d(const std::vector<double>& x, int c_in, int l_in,
                           const std::vector<double>& w, int c_out, int k,
                           const double* bias, int stride, int dil) {
    const int l_out = (l_in - (k - 1) * dil - 1) / stride + 1;
    std::vector<double> y(static_cast<size_t>(c_out) * l_out, 0.0);
    for (int co = 0; co < c_out; ++co)
        for (int t = 0; t < l_out; ++t) {
            double s = bias ? bias[co] : 0.0;
            for (int ci = 0; ci < c_in; ++ci)
                for (int i = 0; i < k; ++i)
                    s += w[(static_cast<size_t>(co) * c_in + ci) * k + i] *
                         x[static_cast<size_t>(ci) * l_in + t * stride + i * dil];
            y[static_cast<size_t>(co) * l_out + t] = s;
        }
    return y;
}

void masked_softmax(int rows, int l, const double* scores, const double* mask, double* probs) {
    for (int r = 0; r < rows; ++r) {
        const double* mrow = mask + static_cast<std::int64_t>(r % l) * l;
        const double* srow = scores + static_cast<std::int64_t>(r) * l;
        double* prow = probs + static_cast<std::int64_t>(r) * l;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < l; ++j)
            if (mrow[j] > kernels::kMaskedThreshold && srow[j] > mx) mx = srow[j];
        if (mx == -std::numeric_limits<double>::infinity())
            throw NumericError("serial masked_softmax: fully masked row");
        double sum = 0.0;
        for (int j = 0; j < l; ++j) {
            const double p = (mrow[j] > kernels::kMaskedThreshold) ? std::exp(srow[j] - mx) : 0.0;
            prow[j] = p;
            sum += p;
        }
        for (int j = 0; j < l; ++j) prow[j] = (mrow[j] > kernels::kMaskedThreshold) ? prow[j] / sum : 0.0;
    }
}

}  // namespace casenet::serial
