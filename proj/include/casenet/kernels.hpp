#pragma once
#include <cstdint>

namespace casenet::kernels {

// Every kernel assigns each output element to exactly one thread and keeps the
// inner summation order fixed, so results are bit-identical across thread
// counts (and identical to the serial reference).

inline constexpr double kMaskedSentinel = -1e30;
inline constexpr double kMaskedThreshold = -1e29;

/// C[b] = (or +=) opA(A[b]) * opB(B[b]) over nb batches of m*k by k*n blocks.
/// A stride of 0 broadcasts that operand across batches; stride_c == 0 reduces
/// all batch products into a single m*n block.
void gemm(bool trans_a, bool trans_b, int nb, int m, int k, int n,
          const double* a, std::int64_t stride_a,
          const double* b, std::int64_t stride_b,
          double* c, std::int64_t stride_c, bool accumulate);

int conv1d_out_len(int l_in, int k, int stride, int dil);

/// x: [nb, c_in, l_in], w: [c_out, c_in, k], bias: [c_out] or null, y: [nb, c_out, l_out]
void conv1d_forward(int nb, int c_in, int l_in, int c_out, int k, int stride, int dil,
                    const double* x, const double* w, const double* bias, double* y);
void conv1d_grad_x(int nb, int c_in, int l_in, int c_out, int k, int stride, int dil,
                   const double* dy, const double* w, double* dx);
void conv1d_grad_w(int nb, int c_in, int l_in, int c_out, int k, int stride, int dil,
                   const double* dy, const double* x, double* dw);
void conv1d_grad_b(int nb, int c_out, int l_out, const double* dy, double* db);

/// Row-wise softmax over `rows` rows of length l. mask is [l, l]; row r uses
/// mask row r % l. Masked positions get probability exactly 0. Throws
/// NumericError if a row is entirely masked.
void masked_softmax_forward(int rows, int l, const double* scores, const double* mask, double* probs);
void masked_softmax_backward(int rows, int l, const double* probs, const double* dprobs, double* dscores);

/// Normalizes over the channel axis of [nb, c, l] at each (b, t).
/// mean/rstd are [nb*l] buffers saved for the backward pass.
void layer_norm_forward(int nb, int c, int l, double eps, const double* x,
                        const double* gain, const double* bias, double* y,
                        double* mean, double* rstd);
void layer_norm_backward(int nb, int c, int l, const double* x, const double* gain,
                         const double* mean, const double* rstd, const double* dy,
                         double* dx, double* dgain, double* dbias);

}  // namespace casenet::kernels
