#include "casenet/ops.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "casenet/errors.hpp"
#include "casenet/kernels.hpp"

namespace casenet::ops {

namespace {

template <class F>
inline void par_for(std::int64_t n, F&& f) {
#pragma omp parallel for schedule(static) if (n > 32768)
    for (std::int64_t i = 0; i < n; ++i) f(i);
}

struct AxisSplit {
    std::int64_t outer, mid, inner;
};

AxisSplit split_axis(const std::vector<int>& shape, int axis) {
    AxisSplit s{1, shape[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

void check_axis(const Tensor& x, int axis, const char* op) {
    if (axis < 0 || axis >= x.rank())
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(x.shape));
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

inline double stable_sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    const int m = a.shape[static_cast<size_t>(a.rank() - 2)];
    const int k = a.shape[static_cast<size_t>(a.rank() - 1)];
    const int kb = b.shape[static_cast<size_t>(b.rank() - 2)];
    const int n = b.shape[static_cast<size_t>(b.rank() - 1)];
    if (k != kb)
        throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    std::vector<int> la(a.shape.begin(), a.shape.end() - 2);
    std::vector<int> lb(b.shape.begin(), b.shape.end() - 2);
    if (!la.empty() && !lb.empty() && la != lb)
        throw ShapeError("matmul: batch extents not broadcastable, " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    const std::vector<int>& lead = la.empty() ? lb : la;
    std::int64_t nb = 1;
    for (int e : lead) nb *= e;
    std::vector<int> oshape = lead;
    oshape.push_back(m);
    oshape.push_back(n);

    const std::int64_t sa = la.empty() ? 0 : static_cast<std::int64_t>(m) * k;
    const std::int64_t sb = lb.empty() ? 0 : static_cast<std::int64_t>(k) * n;
    const bool rg = g.wants_grad(a, b);
    Tensor out = Tensor::zeros(std::move(oshape), rg);
    kernels::gemm(false, false, static_cast<int>(nb), m, k, n, a.data->data(), sa, b.data->data(), sb,
                  out.data->data(), static_cast<std::int64_t>(m) * n, false);
    if (rg) {
        g.push("matmul", {&a, &b}, out, [a, b, out, nb, m, k, n, sa, sb]() {
            const std::int64_t sc = static_cast<std::int64_t>(m) * n;
            if (a.requires_grad)
                kernels::gemm(false, true, static_cast<int>(nb), m, n, k, out.grad->data(), sc, b.data->data(),
                              sb, a.grad->data(), sa, true);
            if (b.requires_grad)
                kernels::gemm(true, false, static_cast<int>(nb), k, m, n, a.data->data(), sa, out.grad->data(),
                              sc, b.grad->data(), sb, true);
        });
    }
    return out;
}

Tensor conv1d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int dilation) {
    if (stride < 1 || dilation < 1) throw ContractError("conv1d: stride and dilation must be >= 1");
    if (w.rank() != 3) throw ShapeError("conv1d: weight must be [c_out, c_in, k], got " + shape_str(w.shape));
    if (x.rank() != 2 && x.rank() != 3)
        throw ShapeError("conv1d: input must be [c_in, L] or [B, c_in, L], got " + shape_str(x.shape));
    const int c_out = w.shape[0], c_in = w.shape[1], k = w.shape[2];
    const int xc = x.shape[static_cast<size_t>(x.rank() - 2)];
    const int l_in = x.shape[static_cast<size_t>(x.rank() - 1)];
    const int nb = x.rank() == 3 ? x.shape[0] : 1;
    if (xc != c_in)
        throw ShapeError("conv1d: channel mismatch, input " + shape_str(x.shape) + " vs weight " +
                         shape_str(w.shape));
    if (bias.rank() != 1 || bias.shape[0] != c_out)
        throw ShapeError("conv1d: bias must be [c_out], got " + shape_str(bias.shape));
    const int span = (k - 1) * dilation + 1;
    if (l_in < span)
        throw ShapeError("conv1d: input length " + std::to_string(l_in) + " too short for kernel " +
                         std::to_string(k) + " with dilation " + std::to_string(dilation) + " (needs >= " +
                         std::to_string(span) + ")");
    const int l_out = kernels::conv1d_out_len(l_in, k, stride, dilation);
    std::vector<int> oshape =
        x.rank() == 3 ? std::vector<int>{nb, c_out, l_out} : std::vector<int>{c_out, l_out};
    const bool rg = g.wants_grad({&x, &w, &bias});
    Tensor out = Tensor::zeros(std::move(oshape), rg);
    kernels::conv1d_forward(nb, c_in, l_in, c_out, k, stride, dilation, x.data->data(), w.data->data(),
                            bias.data->data(), out.data->data());
    if (rg) {
        g.push("conv1d", {&x, &w, &bias}, out, [x, w, bias, out, nb, c_in, l_in, c_out, k, stride, dilation,
                                                l_out]() {
            if (x.requires_grad)
                kernels::conv1d_grad_x(nb, c_in, l_in, c_out, k, stride, dilation, out.grad->data(),
                                       w.data->data(), x.grad->data());
            if (w.requires_grad)
                kernels::conv1d_grad_w(nb, c_in, l_in, c_out, k, stride, dilation, out.grad->data(),
                                       x.data->data(), w.grad->data());
            if (bias.requires_grad) kernels::conv1d_grad_b(nb, c_out, l_out, out.grad->data(), bias.grad->data());
        });
    }
    return out;
}

Tensor masked_softmax(Graph& g, const Tensor& scores, const Tensor& mask) {
    if (scores.rank() < 2)
        throw ShapeError("masked_softmax: scores must have rank >= 2, got " + shape_str(scores.shape));
    const int l = scores.shape.back();
    if (scores.shape[static_cast<size_t>(scores.rank() - 2)] != l)
        throw ShapeError("masked_softmax: trailing extents must be [L, L], got " + shape_str(scores.shape));
    if (mask.shape != std::vector<int>{l, l})
        throw ShapeError("masked_softmax: mask must be [" + std::to_string(l) + "," + std::to_string(l) +
                         "], got " + shape_str(mask.shape));
    for (double v : *mask.data)
        if (v != 0.0 && v > kernels::kMaskedThreshold)
            throw ContractError("masked_softmax: mask entries must be 0 or the -inf sentinel");
    const std::int64_t rows = scores.numel() / l;
    const bool rg = g.wants_grad(scores);
    Tensor out = Tensor::zeros(scores.shape, rg);
    kernels::masked_softmax_forward(static_cast<int>(rows), l, scores.data->data(), mask.data->data(),
                                    out.data->data());
    if (rg) {
        g.push("masked_softmax", {&scores}, out, [scores, out, rows, l]() {
            kernels::masked_softmax_backward(static_cast<int>(rows), l, out.data->data(), out.grad->data(),
                                             scores.grad->data());
        });
    }
    return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    check_same(a, b, "add");
    const bool rg = g.wants_grad(a, b);
    Tensor out = Tensor::zeros(a.shape, rg);
    const std::int64_t n = out.numel();
    const double* pa = a.data->data();
    const double* pb = b.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = pa[i] + pb[i]; });
    if (rg) {
        g.push("add", {&a, &b}, out, [a, b, out, n]() {
            const double* dy = out.grad->data();
            if (a.requires_grad) {
                double* da = a.grad->data();
                par_for(n, [&](std::int64_t i) { da[i] += dy[i]; });
            }
            if (b.requires_grad) {
                double* db = b.grad->data();
                par_for(n, [&](std::int64_t i) { db[i] += dy[i]; });
            }
        });
    }
    return out;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
    check_same(a, b, "sub");
    const bool rg = g.wants_grad(a, b);
    Tensor out = Tensor::zeros(a.shape, rg);
    const std::int64_t n = out.numel();
    const double* pa = a.data->data();
    const double* pb = b.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = pa[i] - pb[i]; });
    if (rg) {
        g.push("sub", {&a, &b}, out, [a, b, out, n]() {
            const double* dy = out.grad->data();
            if (a.requires_grad) {
                double* da = a.grad->data();
                par_for(n, [&](std::int64_t i) { da[i] += dy[i]; });
            }
            if (b.requires_grad) {
                double* db = b.grad->data();
                par_for(n, [&](std::int64_t i) { db[i] -= dy[i]; });
            }
        });
    }
    return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    check_same(a, b, "mul");
    const bool rg = g.wants_grad(a, b);
    Tensor out = Tensor::zeros(a.shape, rg);
    const std::int64_t n = out.numel();
    const double* pa = a.data->data();
    const double* pb = b.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = pa[i] * pb[i]; });
    if (rg) {
        g.push("mul", {&a, &b}, out, [a, b, out, n]() {
            const double* dy = out.grad->data();
            if (a.requires_grad) {
                double* da = a.grad->data();
                const double* pb2 = b.data->data();
                par_for(n, [&](std::int64_t i) { da[i] += dy[i] * pb2[i]; });
            }
            if (b.requires_grad) {
                double* db = b.grad->data();
                const double* pa2 = a.data->data();
                par_for(n, [&](std::int64_t i) { db[i] += dy[i] * pa2[i]; });
            }
        });
    }
    return out;
}

Tensor div(Graph& g, const Tensor& a, const Tensor& b) {
    check_same(a, b, "div");
    const bool rg = g.wants_grad(a, b);
    Tensor out = Tensor::zeros(a.shape, rg);
    const std::int64_t n = out.numel();
    const double* pa = a.data->data();
    const double* pb = b.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = pa[i] / pb[i]; });
    if (rg) {
        g.push("div", {&a, &b}, out, [a, b, out, n]() {
            const double* dy = out.grad->data();
            const double* pa2 = a.data->data();
            const double* pb2 = b.data->data();
            if (a.requires_grad) {
                double* da = a.grad->data();
                par_for(n, [&](std::int64_t i) { da[i] += dy[i] / pb2[i]; });
            }
            if (b.requires_grad) {
                double* db = b.grad->data();
                par_for(n, [&](std::int64_t i) { db[i] -= dy[i] * pa2[i] / (pb2[i] * pb2[i]); });
            }
        });
    }
    return out;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(x.shape, rg);
    const std::int64_t n = out.numel();
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = stable_sigmoid(px[i]); });
    if (rg) {
        g.push("sigmoid", {&x}, out, [x, out, n]() {
            const double* dy = out.grad->data();
            const double* y = out.data->data();
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += dy[i] * y[i] * (1.0 - y[i]); });
        });
    }
    return out;
}

Tensor relu(Graph& g, const Tensor& x) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(x.shape, rg);
    const std::int64_t n = out.numel();
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = px[i] > 0.0 ? px[i] : 0.0; });
    if (rg) {
        g.push("relu", {&x}, out, [x, out, n]() {
            const double* dy = out.grad->data();
            const double* px2 = x.data->data();
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += px2[i] > 0.0 ? dy[i] : 0.0; });
        });
    }
    return out;
}

Tensor sqrt(Graph& g, const Tensor& x) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(x.shape, rg);
    const std::int64_t n = out.numel();
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = std::sqrt(px[i]); });
    if (rg) {
        g.push("sqrt", {&x}, out, [x, out, n]() {
            const double* dy = out.grad->data();
            const double* y = out.data->data();
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += dy[i] * 0.5 / y[i]; });
        });
    }
    return out;
}

Tensor scale(Graph& g, const Tensor& x, double c) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(x.shape, rg);
    const std::int64_t n = out.numel();
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = px[i] * c; });
    if (rg) {
        g.push("scale", {&x}, out, [x, out, n, c]() {
            const double* dy = out.grad->data();
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += dy[i] * c; });
        });
    }
    return out;
}

Tensor add_scalar(Graph& g, const Tensor& x, double c) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(x.shape, rg);
    const std::int64_t n = out.numel();
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = px[i] + c; });
    if (rg) {
        g.push("add_scalar", {&x}, out, [x, out, n]() {
            const double* dy = out.grad->data();
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += dy[i]; });
        });
    }
    return out;
}

Tensor clamp_min(Graph& g, const Tensor& x, double floor) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(x.shape, rg);
    const std::int64_t n = out.numel();
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(n, [&](std::int64_t i) { po[i] = px[i] > floor ? px[i] : floor; });
    if (rg) {
        g.push("clamp_min", {&x}, out, [x, out, n, floor]() {
            const double* dy = out.grad->data();
            const double* px2 = x.data->data();
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += px2[i] > floor ? dy[i] : 0.0; });
        });
    }
    return out;
}

Tensor mul_channelwise(Graph& g, const Tensor& h, const Tensor& a) {
    if (h.rank() != 3 || a.rank() != 2 || h.shape[0] != a.shape[0] || h.shape[1] != a.shape[1])
        throw ShapeError("mul_channelwise: expected [B, D, L] and [B, D], got " + shape_str(h.shape) +
                         " and " + shape_str(a.shape));
    const int nb = h.shape[0], d = h.shape[1], l = h.shape[2];
    const bool rg = g.wants_grad(h, a);
    Tensor out = Tensor::zeros(h.shape, rg);
    const double* ph = h.data->data();
    const double* pa = a.data->data();
    double* po = out.data->data();
    par_for(static_cast<std::int64_t>(nb) * d, [&](std::int64_t bd) {
        const double s = pa[bd];
        const double* hr = ph + bd * l;
        double* orow = po + bd * l;
        for (int t = 0; t < l; ++t) orow[t] = hr[t] * s;
    });
    if (rg) {
        g.push("mul_channelwise", {&h, &a}, out, [h, a, out, nb, d, l]() {
            const double* dy = out.grad->data();
            if (h.requires_grad) {
                double* dh = h.grad->data();
                const double* pa2 = a.data->data();
                par_for(static_cast<std::int64_t>(nb) * d, [&](std::int64_t bd) {
                    const double s = pa2[bd];
                    for (int t = 0; t < l; ++t) dh[bd * l + t] += dy[bd * l + t] * s;
                });
            }
            if (a.requires_grad) {
                double* da = a.grad->data();
                const double* ph2 = h.data->data();
                par_for(static_cast<std::int64_t>(nb) * d, [&](std::int64_t bd) {
                    double acc = 0.0;
                    for (int t = 0; t < l; ++t) acc += dy[bd * l + t] * ph2[bd * l + t];
                    da[bd] += acc;
                });
            }
        });
    }
    return out;
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias, int axis) {
    check_axis(x, axis, "add_bias");
    if (bias.rank() != 1 || bias.shape[0] != x.shape[static_cast<size_t>(axis)])
        throw ShapeError("add_bias: bias " + shape_str(bias.shape) + " does not match axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape));
    const AxisSplit s = split_axis(x.shape, axis);
    const bool rg = g.wants_grad(x, bias);
    Tensor out = Tensor::zeros(x.shape, rg);
    const double* px = x.data->data();
    const double* pb = bias.data->data();
    double* po = out.data->data();
    par_for(x.numel(), [&](std::int64_t i) { po[i] = px[i] + pb[(i / s.inner) % s.mid]; });
    if (rg) {
        g.push("add_bias", {&x, &bias}, out, [x, bias, out, s]() {
            const double* dy = out.grad->data();
            if (x.requires_grad) {
                double* dx = x.grad->data();
                par_for(x.numel(), [&](std::int64_t i) { dx[i] += dy[i]; });
            }
            if (bias.requires_grad) {
                double* db = bias.grad->data();
                par_for(s.mid, [&](std::int64_t m) {
                    double acc = 0.0;
                    for (std::int64_t o = 0; o < s.outer; ++o) {
                        const double* row = dy + (o * s.mid + m) * s.inner;
                        for (std::int64_t i = 0; i < s.inner; ++i) acc += row[i];
                    }
                    db[m] += acc;
                });
            }
        });
    }
    return out;
}

namespace {
Tensor reduce_axis(Graph& g, const Tensor& x, int axis, bool mean, const char* tag) {
    check_axis(x, axis, tag);
    const AxisSplit s = split_axis(x.shape, axis);
    std::vector<int> oshape = x.shape;
    oshape.erase(oshape.begin() + axis);
    const double w = mean ? 1.0 / static_cast<double>(s.mid) : 1.0;
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(std::move(oshape), rg);
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(s.outer * s.inner, [&](std::int64_t oi) {
        const std::int64_t o = oi / s.inner, i = oi % s.inner;
        double acc = 0.0;
        for (std::int64_t m = 0; m < s.mid; ++m) acc += px[(o * s.mid + m) * s.inner + i];
        po[oi] = acc * w;
    });
    if (rg) {
        g.push(tag, {&x}, out, [x, out, s, w]() {
            const double* dy = out.grad->data();
            double* dx = x.grad->data();
            par_for(x.numel(), [&](std::int64_t idx) {
                const std::int64_t o = idx / (s.mid * s.inner);
                const std::int64_t i = idx % s.inner;
                dx[idx] += dy[o * s.inner + i] * w;
            });
        });
    }
    return out;
}
}  // namespace

Tensor reduce_mean(Graph& g, const Tensor& x, int axis) { return reduce_axis(g, x, axis, true, "reduce_mean"); }
Tensor reduce_sum(Graph& g, const Tensor& x, int axis) { return reduce_axis(g, x, axis, false, "reduce_sum"); }

Tensor reduce_sum_all(Graph& g, const Tensor& x) {
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros({}, rg);
    double acc = 0.0;
    const double* px = x.data->data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) acc += px[i];
    (*out.data)[0] = acc;
    if (rg) {
        g.push("reduce_sum_all", {&x}, out, [x, out, n]() {
            const double dy = (*out.grad)[0];
            double* dx = x.grad->data();
            par_for(n, [&](std::int64_t i) { dx[i] += dy; });
        });
    }
    return out;
}

Tensor transpose(Graph& g, const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("transpose: rank must be >= 2, got " + shape_str(x.shape));
    const int r = x.shape[static_cast<size_t>(x.rank() - 2)];
    const int c = x.shape[static_cast<size_t>(x.rank() - 1)];
    const std::int64_t nb = x.numel() / (static_cast<std::int64_t>(r) * c);
    std::vector<int> oshape = x.shape;
    std::swap(oshape[oshape.size() - 2], oshape[oshape.size() - 1]);
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(std::move(oshape), rg);
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(nb * r, [&](std::int64_t bi) {
        const std::int64_t b = bi / r, i = bi % r;
        const double* xb = px + b * r * c;
        double* ob = po + b * r * c;
        for (int j = 0; j < c; ++j) ob[static_cast<std::int64_t>(j) * r + i] = xb[i * c + j];
    });
    if (rg) {
        g.push("transpose", {&x}, out, [x, out, nb, r, c]() {
            const double* dy = out.grad->data();
            double* dx = x.grad->data();
            par_for(nb * r, [&](std::int64_t bi) {
                const std::int64_t b = bi / r, i = bi % r;
                const double* db = dy + b * r * c;
                double* xb = dx + b * r * c;
                for (int j = 0; j < c; ++j) xb[i * c + j] += db[static_cast<std::int64_t>(j) * r + i];
            });
        });
    }
    return out;
}

Tensor slice_rows(Graph& g, const Tensor& x, int row_begin, int row_end) {
    if (x.rank() != 2) throw ShapeError("slice_rows: expects a 2-D tensor, got " + shape_str(x.shape));
    if (row_begin < 0 || row_end > x.shape[0] || row_begin >= row_end)
        throw ShapeError("slice_rows: invalid range [" + std::to_string(row_begin) + "," +
                         std::to_string(row_end) + ") for shape " + shape_str(x.shape));
    const int c = x.shape[1];
    const int rows = row_end - row_begin;
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros({rows, c}, rg);
    const double* src = x.data->data() + static_cast<std::int64_t>(row_begin) * c;
    std::copy(src, src + static_cast<std::int64_t>(rows) * c, out.data->data());
    if (rg) {
        g.push("slice_rows", {&x}, out, [x, out, row_begin, rows, c]() {
            const double* dy = out.grad->data();
            double* dx = x.grad->data() + static_cast<std::int64_t>(row_begin) * c;
            par_for(static_cast<std::int64_t>(rows) * c, [&](std::int64_t i) { dx[i] += dy[i]; });
        });
    }
    return out;
}

Tensor concat(Graph& g, const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Tensor& first = parts.front();
    check_axis(first, axis, "concat");
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < first.rank(); ++i)
            if (i != axis && p.shape[static_cast<size_t>(i)] != first.shape[static_cast<size_t>(i)])
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape) + " vs " +
                                 shape_str(first.shape) + " on axis " + std::to_string(axis));
        total += p.shape[static_cast<size_t>(axis)];
    }
    std::vector<int> oshape = first.shape;
    oshape[static_cast<size_t>(axis)] = total;
    bool rg = false;
    for (const Tensor& p : parts) rg = rg || g.wants_grad(p);
    Tensor out = Tensor::zeros(std::move(oshape), rg);
    const AxisSplit so = split_axis(out.shape, axis);
    std::int64_t offset = 0;
    for (const Tensor& p : parts) {
        const std::int64_t pm = p.shape[static_cast<size_t>(axis)];
        const double* src = p.data->data();
        double* dst = out.data->data();
        par_for(so.outer * pm, [&](std::int64_t om) {
            const std::int64_t o = om / pm, m = om % pm;
            const double* srow = src + (o * pm + m) * so.inner;
            double* drow = dst + (o * so.mid + offset + m) * so.inner;
            for (std::int64_t i = 0; i < so.inner; ++i) drow[i] = srow[i];
        });
        offset += pm;
    }
    if (rg) {
        std::vector<const Tensor*> refs;
        refs.reserve(parts.size());
        for (const Tensor& p : parts) refs.push_back(&p);
        g.push("concat", refs, out, [parts, out, so, axis]() {
            const double* dy = out.grad->data();
            std::int64_t off = 0;
            for (const Tensor& p : parts) {
                const std::int64_t pm = p.shape[static_cast<size_t>(axis)];
                if (p.requires_grad) {
                    double* dp = p.grad->data();
                    par_for(so.outer * pm, [&](std::int64_t om) {
                        const std::int64_t o = om / pm, m = om % pm;
                        const double* drow = dy + (o * so.mid + off + m) * so.inner;
                        double* prow = dp + (o * pm + m) * so.inner;
                        for (std::int64_t i = 0; i < so.inner; ++i) prow[i] += drow[i];
                    });
                }
                off += pm;
            }
        });
    }
    return out;
}

Tensor pad_time(Graph& g, const Tensor& x, int left, int right) {
    if (left < 0 || right < 0) throw ContractError("pad_time: negative padding");
    if (x.rank() < 1) throw ShapeError("pad_time: rank must be >= 1");
    const int l = x.shape.back();
    const std::int64_t outer = x.numel() / l;
    std::vector<int> oshape = x.shape;
    oshape.back() = l + left + right;
    const bool rg = g.wants_grad(x);
    Tensor out = Tensor::zeros(std::move(oshape), rg);
    const int lo = l + left + right;
    const double* px = x.data->data();
    double* po = out.data->data();
    par_for(outer, [&](std::int64_t o) {
        const double* srow = px + o * l;
        double* drow = po + o * lo;
        for (int t = 0; t < l; ++t) drow[left + t] = srow[t];
    });
    if (rg) {
        g.push("pad_time", {&x}, out, [x, out, outer, l, lo, left]() {
            const double* dy = out.grad->data();
            double* dx = x.grad->data();
            par_for(outer, [&](std::int64_t o) {
                const double* drow = dy + o * lo;
                double* xrow = dx + o * l;
                for (int t = 0; t < l; ++t) xrow[t] += drow[left + t];
            });
        });
    }
    return out;
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() != 3) throw ShapeError("layer_norm: expects [B, D, L], got " + shape_str(x.shape));
    const int nb = x.shape[0], d = x.shape[1], l = x.shape[2];
    if (gain.shape != std::vector<int>{d} || bias.shape != std::vector<int>{d})
        throw ShapeError("layer_norm: gain/bias must be [D]=" + std::to_string(d) + ", got " +
                         shape_str(gain.shape) + " and " + shape_str(bias.shape));
    const bool rg = g.wants_grad({&x, &gain, &bias});
    Tensor out = Tensor::zeros(x.shape, rg);
    auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(nb) * l);
    auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(nb) * l);
    kernels::layer_norm_forward(nb, d, l, eps, x.data->data(), gain.data->data(), bias.data->data(),
                                out.data->data(), mean->data(), rstd->data());
    if (rg) {
        g.push("layer_norm", {&x, &gain, &bias}, out, [x, gain, bias, out, mean, rstd, nb, d, l]() {
            // the kernel writes all three grads; discard the ones nobody tracks
            std::vector<double> dx_sink, dg_sink, db_sink;
            double* dx = x.grad ? x.grad->data() : nullptr;
            double* dg = gain.grad ? gain.grad->data() : nullptr;
            double* db = bias.grad ? bias.grad->data() : nullptr;
            if (!dx) { dx_sink.assign(static_cast<size_t>(nb) * d * l, 0.0); dx = dx_sink.data(); }
            if (!dg) { dg_sink.assign(static_cast<size_t>(d), 0.0); dg = dg_sink.data(); }
            if (!db) { db_sink.assign(static_cast<size_t>(d), 0.0); db = db_sink.data(); }
            kernels::layer_norm_backward(nb, d, l, x.data->data(), gain.data->data(), mean->data(),
                                         rstd->data(), out.grad->data(), dx, dg, db);
        });
    }
    return out;
}

}  // namespace casenet::ops
