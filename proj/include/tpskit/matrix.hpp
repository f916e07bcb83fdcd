// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tpskit/errors.hpp"

namespace tps {

// Row-major float32 matrix. Batch dimensions fold into `rows`.
// Storage is 32-bit; reductions (matmul inner products, row statistics)
// accumulate in 64-bit.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(int r, int c, float fill = 0.0f)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::span<float> row(int r) {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    std::span<const float> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0f;
        return m;
    }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dims differ (" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols);
    std::vector<double> acc(static_cast<std::size_t>(b.cols));
    for (int i = 0; i < a.rows; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* ar = a.data.data() + static_cast<std::size_t>(i) * a.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double aik = ar[k];
            const float* br = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) acc[j] += aik * br[j];
        }
        float* orow = out.data.data() + static_cast<std::size_t>(i) * b.cols;
        for (int j = 0; j < b.cols; ++j) orow[j] = static_cast<float>(acc[j]);
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// Row-wise softmax of (scale * a), stabilized by row-max subtraction.
inline Matrix softmax_rows(const Matrix& a, float scale = 1.0f) {
    Matrix out(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        double mx = -INFINITY;
        for (int j = 0; j < a.cols; ++j) mx = std::max(mx, static_cast<double>(scale) * a.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            const double e = std::exp(static_cast<double>(scale) * a.at(i, j) - mx);
            out.at(i, j) = static_cast<float>(e);
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < a.cols; ++j) out.at(i, j) = static_cast<float>(out.at(i, j) * inv);
    }
    return out;
}

// Per-row normalization to mean 0 / variance 1 (population variance),
// then affine gamma * x + beta.
inline Matrix layernorm(const Matrix& x, std::span<const float> gamma, std::span<const float> beta,
                        float eps) {
    if (static_cast<int>(gamma.size()) != x.cols || static_cast<int>(beta.size()) != x.cols) {
        throw ShapeError("layernorm: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " vs cols " + std::to_string(x.cols));
    }
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += x.at(i, j);
        mean /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= x.cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < x.cols; ++j) {
            const double n = (x.at(i, j) - mean) * inv;
            out.at(i, j) = static_cast<float>(n * gamma[j] + beta[j]);
        }
    }
    return out;
}

// Exact GELU, x/2 * (1 + erf(x / sqrt(2))).
inline Matrix gelu(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = x.data[i];
        out.data[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)));
    }
    return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
    return out;
}

// x + bias broadcast over rows.
inline Matrix add_bias(const Matrix& x, std::span<const float> bias) {
    if (static_cast<int>(bias.size()) != x.cols)
        throw ShapeError("add_bias: bias length " + std::to_string(bias.size()) + " vs cols " +
                         std::to_string(x.cols));
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) + bias[j];
    return out;
}

// Rows of x selected by idx, in idx order. Values copied bit-exactly.
inline Matrix gather_rows(const Matrix& x, const std::vector<int>& idx) {
    Matrix out(static_cast<int>(idx.size()), x.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x.rows)
            throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of " +
                             std::to_string(x.rows) + " rows");
        auto src = x.row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
    }
    return out;
}

// Writes src row i into dst row idx[i].
inline void scatter_rows(Matrix& dst, const std::vector<int>& idx, const Matrix& src) {
    if (src.cols != dst.cols || static_cast<int>(idx.size()) != src.rows)
        throw ShapeError("scatter_rows: src shape inconsistent with index list");
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= dst.rows)
            throw ShapeError("scatter_rows: index " + std::to_string(idx[i]) + " out of " +
                             std::to_string(dst.rows) + " rows");
        auto s = src.row(static_cast<int>(i));
        std::copy(s.begin(), s.end(), dst.row(idx[i]).begin());
    }
}

// Columns [c0, c0+n) of x as a new matrix.
inline Matrix slice_cols(const Matrix& x, int c0, int n) {
    if (c0 < 0 || n < 0 || c0 + n > x.cols) throw ShapeError("slice_cols: range out of bounds");
    Matrix out(x.rows, n);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, c0 + j);
    return out;
}

inline bool all_finite(const Matrix& x) {
    for (float v : x.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline float max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    float m = 0.0f;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace tps
