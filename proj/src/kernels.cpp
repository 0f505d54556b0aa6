#include "casenet/kernels.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "casenet/errors.hpp"

namespace casenet::kernels {

namespace {
inline double elem_a(const double* a, bool trans, int m, int k, int i, int t) {
    return trans ? a[static_cast<std::int64_t>(t) * m + i] : a[static_cast<std::int64_t>(i) * k + t];
}
inline double elem_b(const double* b, bool trans, int k, int n, int t, int j) {
    return trans ? b[static_cast<std::int64_t>(j) * k + t] : b[static_cast<std::int64_t>(t) * n + j];
}
}  // namespace

void gemm(bool trans_a, bool trans_b, int nb, int m, int k, int n,
          const double* a, std::int64_t stride_a,
          const double* b, std::int64_t stride_b,
          double* c, std::int64_t stride_c, bool accumulate) {
    const std::int64_t work = static_cast<std::int64_t>(nb) * m * n * k;
    if (stride_c == 0 && nb > 1) {
        // reduction over batches: each (i, j) owned by one thread, batches inner
#pragma omp parallel for schedule(static) if (work > 16384)
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                double acc = accumulate ? c[static_cast<std::int64_t>(i) * n + j] : 0.0;
                for (int bb = 0; bb < nb; ++bb) {
                    const double* ab = a + stride_a * bb;
                    const double* bbp = b + stride_b * bb;
                    double s = 0.0;
                    for (int t = 0; t < k; ++t) s += elem_a(ab, trans_a, m, k, i, t) * elem_b(bbp, trans_b, k, n, t, j);
                    acc += s;
                }
                c[static_cast<std::int64_t>(i) * n + j] = acc;
            }
        }
        return;
    }
    // Each (batch, row) is owned by one thread and every output element
    // accumulates over t in ascending order, so all layouts produce bits
    // identical to the naive serial loop.
    if (!trans_a && !trans_b) {
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
        for (int bb = 0; bb < nb; ++bb) {
            for (int i = 0; i < m; ++i) {
                const double* arow = a + stride_a * bb + static_cast<std::int64_t>(i) * k;
                const double* bbase = b + stride_b * bb;
                double* crow = c + stride_c * bb + static_cast<std::int64_t>(i) * n;
                if (!accumulate)
                    for (int j = 0; j < n; ++j) crow[j] = 0.0;
                for (int t = 0; t < k; ++t) {
                    const double av = arow[t];
                    const double* brow = bbase + static_cast<std::int64_t>(t) * n;
                    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        }
        return;
    }
    if (!trans_a && trans_b) {
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
        for (int bb = 0; bb < nb; ++bb) {
            for (int i = 0; i < m; ++i) {
                const double* arow = a + stride_a * bb + static_cast<std::int64_t>(i) * k;
                const double* bbase = b + stride_b * bb;
                double* crow = c + stride_c * bb + static_cast<std::int64_t>(i) * n;
                for (int j = 0; j < n; ++j) {
                    const double* brow = bbase + static_cast<std::int64_t>(j) * k;
                    double s = 0.0;
                    for (int t = 0; t < k; ++t) s += arow[t] * brow[t];
                    crow[j] = accumulate ? crow[j] + s : s;
                }
            }
        }
        return;
    }
    if (trans_a && !trans_b) {
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
        for (int bb = 0; bb < nb; ++bb) {
            for (int i = 0; i < m; ++i) {
                const double* abase = a + stride_a * bb;
                const double* bbase = b + stride_b * bb;
                double* crow = c + stride_c * bb + static_cast<std::int64_t>(i) * n;
                if (!accumulate)
                    for (int j = 0; j < n; ++j) crow[j] = 0.0;
                for (int t = 0; t < k; ++t) {
                    const double av = abase[static_cast<std::int64_t>(t) * m + i];
                    const double* brow = bbase + static_cast<std::int64_t>(t) * n;
                    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
                }
            }
        }
        return;
    }
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
    for (int bb = 0; bb < nb; ++bb) {
        for (int i = 0; i < m; ++i) {
            const double* ab = a + stride_a * bb;
            const double* bbp = b + stride_b * bb;
            double* cb = c + stride_c * bb;
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int t = 0; t < k; ++t) s += elem_a(ab, trans_a, m, k, i, t) * elem_b(bbp, trans_b, k, n, t, j);
                double* out = &cb[static_cast<std::int64_t>(i) * n + j];
                *out = accumulate ? *out + s : s;
            }
        }
    }
}

int conv1d_out_len(int l_in, int k, int stride, int dil) {
    return (l_in - (k - 1) * dil - 1) / stride + 1;
}

void conv1d_forward(int nb, int c_in, int l_in, int c_out, int k, int stride, int dil,
                    const double* x, const double* w, const double* bias, double* y) {
    const int l_out = conv1d_out_len(l_in, k, stride, dil);
    const std::int64_t work = static_cast<std::int64_t>(nb) * c_out * l_out * c_in * k;
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
    for (int bb = 0; bb < nb; ++bb) {
        for (int co = 0; co < c_out; ++co) {
            const double* xb = x + static_cast<std::int64_t>(bb) * c_in * l_in;
            double* yb = y + static_cast<std::int64_t>(bb) * c_out * l_out;
            for (int t = 0; t < l_out; ++t) {
                double s = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < c_in; ++ci) {
                    const double* xrow = xb + static_cast<std::int64_t>(ci) * l_in + static_cast<std::int64_t>(t) * stride;
                    const double* wrow = w + (static_cast<std::int64_t>(co) * c_in + ci) * k;
                    for (int i = 0; i < k; ++i) s += wrow[i] * xrow[static_cast<std::int64_t>(i) * dil];
                }
                yb[static_cast<std::int64_t>(co) * l_out + t] = s;
            }
        }
    }
}

void conv1d_grad_x(int nb, int c_in, int l_in, int c_out, int k, int stride, int dil,
                   const double* dy, const double* w, double* dx) {
    const int l_out = conv1d_out_len(l_in, k, stride, dil);
    const std::int64_t work = static_cast<std::int64_t>(nb) * c_in * l_in * c_out * k;
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
    for (int bb = 0; bb < nb; ++bb) {
        for (int ci = 0; ci < c_in; ++ci) {
            const double* dyb = dy + static_cast<std::int64_t>(bb) * c_out * l_out;
            double* dxb = dx + static_cast<std::int64_t>(bb) * c_in * l_in;
            for (int s = 0; s < l_in; ++s) {
                double acc = 0.0;
                for (int i = 0; i < k; ++i) {
                    const int rel = s - i * dil;
                    if (rel < 0 || rel % stride != 0) continue;
                    const int t = rel / stride;
                    if (t >= l_out) continue;
                    for (int co = 0; co < c_out; ++co)
                        acc += w[(static_cast<std::int64_t>(co) * c_in + ci) * k + i] *
                               dyb[static_cast<std::int64_t>(co) * l_out + t];
                }
                dxb[static_cast<std::int64_t>(ci) * l_in + s] += acc;
            }
        }
    }
}

void conv1d_grad_w(int nb, int c_in, int l_in, int c_out, int k, int stride, int dil,
                   const double* dy, const double* x, double* dw) {
    const int l_out = conv1d_out_len(l_in, k, stride, dil);
    const std::int64_t work = static_cast<std::int64_t>(nb) * c_out * c_in * k * l_out;
#pragma omp parallel for collapse(2) schedule(static) if (work > 16384)
    for (int co = 0; co < c_out; ++co) {
        for (int ci = 0; ci < c_in; ++ci) {
            for (int i = 0; i < k; ++i) {
                double acc = 0.0;
                for (int bb = 0; bb < nb; ++bb) {
                    const double* dyrow = dy + (static_cast<std::int64_t>(bb) * c_out + co) * l_out;
                    const double* xrow = x + (static_cast<std::int64_t>(bb) * c_in + ci) * l_in + static_cast<std::int64_t>(i) * dil;
                    for (int t = 0; t < l_out; ++t) acc += dyrow[t] * xrow[static_cast<std::int64_t>(t) * stride];
                }
                dw[(static_cast<std::int64_t>(co) * c_in + ci) * k + i] += acc;
            }
        }
    }
}

void conv1d_grad_b(int nb, int c_out, int l_out, const double* dy, double* db) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(nb) * c_out * l_out > 16384)
    for (int co = 0; co < c_out; ++co) {
        double acc = 0.0;
        for (int bb = 0; bb < nb; ++bb) {
            const double* row = dy + (static_cast<std::int64_t>(bb) * c_out + co) * l_out;
            for (int t = 0; t < l_out; ++t) acc += row[t];
        }
        db[co] += acc;
    }
}

void masked_softmax_forward(int rows, int l, const double* scores, const double* mask, double* probs) {
    bool dead_row = false;
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(rows) * l > 8192)
    for (int r = 0; r < rows; ++r) {
        const double* mrow = mask + static_cast<std::int64_t>(r % l) * l;
        const double* srow = scores + static_cast<std::int64_t>(r) * l;
        double* prow = probs + static_cast<std::int64_t>(r) * l;
        // max over unmasked entries only, so masked inputs cannot perturb the row
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < l; ++j)
            if (mrow[j] > kMaskedThreshold && srow[j] > mx) mx = srow[j];
        if (mx == -std::numeric_limits<double>::infinity()) {
#pragma omp atomic write
            dead_row = true;
            continue;
        }
        double sum = 0.0;
        for (int j = 0; j < l; ++j) {
            const double p = (mrow[j] > kMaskedThreshold) ? std::exp(srow[j] - mx) : 0.0;
            prow[j] = p;
            sum += p;
        }
        for (int j = 0; j < l; ++j) prow[j] = (mrow[j] > kMaskedThreshold) ? prow[j] / sum : 0.0;
    }
    if (dead_row) throw NumericError("masked_softmax: fully masked row encountered");
}

void masked_softmax_backward(int rows, int l, const double* probs, const double* dprobs, double* dscores) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(rows) * l > 8192)
    for (int r = 0; r < rows; ++r) {
        const double* prow = probs + static_cast<std::int64_t>(r) * l;
        const double* drow = dprobs + static_cast<std::int64_t>(r) * l;
        double* out = dscores + static_cast<std::int64_t>(r) * l;
        double dot = 0.0;
        for (int j = 0; j < l; ++j) dot += prow[j] * drow[j];
        for (int j = 0; j < l; ++j) out[j] += prow[j] * (drow[j] - dot);
    }
}

void layer_norm_forward(int nb, int c, int l, double eps, const double* x,
                        const double* gain, const double* bias, double* y,
                        double* mean, double* rstd) {
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<std::int64_t>(nb) * c * l > 8192)
    for (int bb = 0; bb < nb; ++bb) {
        for (int t = 0; t < l; ++t) {
            const double* xb = x + static_cast<std::int64_t>(bb) * c * l;
            double* yb = y + static_cast<std::int64_t>(bb) * c * l;
            double mu = 0.0;
            for (int ch = 0; ch < c; ++ch) mu += xb[static_cast<std::int64_t>(ch) * l + t];
            mu /= c;
            double var = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double d = xb[static_cast<std::int64_t>(ch) * l + t] - mu;
                var += d * d;
            }
            var /= c;
            const double rs = 1.0 / std::sqrt(var + eps);
            mean[static_cast<std::int64_t>(bb) * l + t] = mu;
            rstd[static_cast<std::int64_t>(bb) * l + t] = rs;
            for (int ch = 0; ch < c; ++ch) {
                const double xhat = (xb[static_cast<std::int64_t>(ch) * l + t] - mu) * rs;
                yb[static_cast<std::int64_t>(ch) * l + t] = xhat * gain[ch] + bias[ch];
            }
        }
    }
}

void layer_norm_backward(int nb, int c, int l, const double* x, const double* gain,
                         const double* mean, const double* rstd, const double* dy,
                         double* dx, double* dgain, double* dbias) {
#pragma omp parallel for collapse(2) schedule(static) if (static_cast<std::int64_t>(nb) * c * l > 8192)
    for (int bb = 0; bb < nb; ++bb) {
        for (int t = 0; t < l; ++t) {
            const double* xb = x + static_cast<std::int64_t>(bb) * c * l;
            const double* dyb = dy + static_cast<std::int64_t>(bb) * c * l;
            double* dxb = dx + static_cast<std::int64_t>(bb) * c * l;
            const double mu = mean[static_cast<std::int64_t>(bb) * l + t];
            const double rs = rstd[static_cast<std::int64_t>(bb) * l + t];
            double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const std::int64_t idx = static_cast<std::int64_t>(ch) * l + t;
                const double xhat = (xb[idx] - mu) * rs;
                const double dyg = dyb[idx] * gain[ch];
                sum_dyg += dyg;
                sum_dyg_xhat += dyg * xhat;
            }
            for (int ch = 0; ch < c; ++ch) {
                const std::int64_t idx = static_cast<std::int64_t>(ch) * l + t;
                const double xhat = (xb[idx] - mu) * rs;
                const double dyg = dyb[idx] * gain[ch];
                dxb[idx] += rs * (dyg - sum_dyg / c - xhat * sum_dyg_xhat / c);
            }
        }
    }
    // gain/bias grads: each channel owned by one thread
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(nb) * c * l > 8192)
    for (int ch = 0; ch < c; ++ch) {
        double dg = 0.0, db = 0.0;
        for (int bb = 0; bb < nb; ++bb) {
            const double* xb = x + static_cast<std::int64_t>(bb) * c * l;
            const double* dyb = dy + static_cast<std::int64_t>(bb) * c * l;
            for (int t = 0; t < l; ++t) {
                const std::int64_t idx = static_cast<std::int64_t>(ch) * l + t;
                const double xhat = (xb[idx] - mean[static_cast<std::int64_t>(bb) * l + t]) *
                                    rstd[static_cast<std::int64_t>(bb) * l + t];
                dg += dyb[idx] * xhat;
                db += dyb[idx];
            }
        }
        dgain[ch] += dg;
        dbias[ch] += db;
    }
}

}  // namespace casenet::kernels
