#pragma once
#include <vector>

namespace casenet::serial {

// Straight-line single-threaded reference implementations. These stay
// independent of the graph/ops path: tests compare the parallel kernels
// against them (bit-for-bit where the summation order matches) and the
// benchmark tool measures the speedup.

/// c[m,n] = a[m,k] * b[k,n], naive triple loop.
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

/// Single sample: x [c_in, l_in], w [c_out, c_in, k], bias [c_out] or null.
/// Naive quadruple loop. Returns y [c_out, l_out].
std::vector<double> conv1d(const std::vector<double>& x, int c_in, int l_in,
                           const std::vector<double>& w, int c_out, int k,
                           const double* bias, int stride, int dil);

/// Row-wise masked softmax, mask row r % l applies to row r.
void masked_softmax(int rows, int l, const double* scores, const double* mask, double* probs);

}  // namespace casenet::serial
