#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

// Row-major dense kernels shared by training and sampling.
//
// Every output row accumulates its terms in ascending k order starting from
// the bias, independent of how many rows are processed together. That makes
// a row's result bitwise identical whether it is evaluated alone or inside a
// batch, and lets callers split the k range across calls.

namespace hlab::dense {

inline constexpr int kRowTile = 8;

template <class S>
inline void axpy(S a, const S* x, S* y, int n) {
    for (int j = 0; j < n; ++j) y[j] += a * x[j];
}

/// out[r, :] += sum_{k in [k0,k1)} in[r, k - k0 + in_offset] * W[k, :]
/// `in` rows have stride `in_stride`; column `in_offset` corresponds to k0.
template <class S>
void accumulate(const S* in, int rows, int in_stride, int in_offset, const S* W, int k0, int k1,
                int out_dim, S* out) {
    for (int r0 = 0; r0 < rows; r0 += kRowTile) {
        const int r1 = std::min(rows, r0 + kRowTile);
        for (int k = k0; k < k1; ++k) {
            const S* wk = W + static_cast<std::size_t>(k) * out_dim;
            for (int r = r0; r < r1; ++r) {
                const S a = in[static_cast<std::size_t>(r) * in_stride + in_offset + (k - k0)];
                axpy(a, wk, out + static_cast<std::size_t>(r) * out_dim, out_dim);
            }
        }
    }
}

/// out[r, :] = b + in[r, :] W
template <class S>
void affine(const S* in, int rows, int in_dim, const S* W, const S* b, int out_dim, S* out) {
    for (int r = 0; r < rows; ++r) std::copy(b, b + out_dim, out + static_cast<std::size_t>(r) * out_dim);
    accumulate(in, rows, in_dim, 0, W, 0, in_dim, out_dim, out);
}

/// dW += in^T dout, db += column sums of dout.
template <class S>
void grad_weights(const S* in, int rows, int in_dim, const S* dout, int out_dim, S* dW, S* db) {
    for (int k = 0; k < in_dim; ++k) {
        S* dwk = dW + static_cast<std::size_t>(k) * out_dim;
        for (int r = 0; r < rows; ++r) {
            axpy(in[static_cast<std::size_t>(r) * in_dim + k], dout + static_cast<std::size_t>(r) * out_dim,
                 dwk, out_dim);
        }
    }
    if (db) {
        for (int r = 0; r < rows; ++r) {
            axpy(S(1), dout + static_cast<std::size_t>(r) * out_dim, db, out_dim);
        }
    }
}

/// din[r, :] = dout[r, :] W^T, using the transposed weights Wt (out_dim x in_dim).
template <class S>
void grad_input(const S* dout, int rows, int out_dim, const S* Wt, int in_dim, S* din) {
    std::fill(din, din + static_cast<std::size_t>(rows) * in_dim, S(0));
    accumulate(dout, rows, out_dim, 0, Wt, 0, out_dim, in_dim, din);
}

template <class S>
void transpose(const S* W, int rows, int cols, S* Wt) {
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            Wt[static_cast<std::size_t>(j) * rows + i] = W[static_cast<std::size_t>(i) * cols + j];
        }
    }
}

template <class S>
inline S silu(S z) {
    return z / (S(1) + std::exp(-z));
}

template <class S>
inline S silu_grad(S z) {
    const S sig = S(1) / (S(1) + std::exp(-z));
    return sig * (S(1) + z * (S(1) - sig));
}

}  // namespace hlab::dense
