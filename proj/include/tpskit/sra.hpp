// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tpskit/matrix.hpp"
#include "tpskit/policy.hpp"

namespace tps {

// Token grid of a hybrid-ViT stage, row-major, no class token.
struct SpatialGrid {
    int height = 0;
    int width = 0;
    int reduction_ratio = 1;

    int tokens() const { return height * width; }

    void validate() const {
        if (height <= 0 || width <= 0 || reduction_ratio <= 0)
            throw ConfigError("grid: dims and reduction ratio must be positive");
        if (height % reduction_ratio != 0 || width % reduction_ratio != 0)
            throw ConfigError("grid: " + std::to_string(height) + "x" + std::to_string(width) +
                              " not divisible by reduction ratio " +
                              std::to_string(reduction_ratio));
    }
};

// Spatial reduction: non-overlapping r x r neighborhoods averaged (divide
// by r^2, zeros included), then linearly projected d -> d'.
inline Matrix spatial_reduce(const Matrix& x, const SpatialGrid& grid, const Matrix& proj) {
    grid.validate();
    if (x.rows != grid.tokens())
        throw ShapeError("spatial_reduce: " + std::to_string(x.rows) + " tokens vs grid " +
                         std::to_string(grid.tokens()));
    if (proj.rows != x.cols) throw ShapeError("spatial_reduce: projection dim mismatch");
    const int r = grid.reduction_ratio;
    const int rh = grid.height / r;
    const int rw = grid.width / r;
    Matrix pooled(rh * rw, x.cols);
    const float inv = 1.0f / static_cast<float>(r * r);
    for (int by = 0; by < rh; ++by) {
        for (int bx = 0; bx < rw; ++bx) {
            auto out = pooled.row(by * rw + bx);
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    auto src = x.row((by * r + dy) * grid.width + (bx * r + dx));
                    for (int k = 0; k < x.cols; ++k) out[k] += src[k];
                }
            }
            for (int k = 0; k < x.cols; ++k) out[k] *= inv;
        }
    }
    return matmul(pooled, proj);
}

namespace detail {

// Per-head attention of full queries against spatially reduced keys/values.
inline Matrix sra_attend(const Matrix& q, const Matrix& k_red, const Matrix& v_red,
                         int num_heads) {
    const int d = q.cols;
    if (k_red.cols != d || v_red.cols != d)
        throw ShapeError("sra: reduced K/V dim must match Q dim");
    if (num_heads <= 0 || d % num_heads != 0)
        throw ShapeError("sra: dim not divisible by heads");
    const int dh = d / num_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Matrix out(q.rows, d);
    for (int h = 0; h < num_heads; ++h) {
        const Matrix qh = slice_cols(q, h * dh, dh);
        const Matrix kh = slice_cols(k_red, h * dh, dh);
        const Matrix vh = slice_cols(v_red, h * dh, dh);
        const Matrix ah = softmax_rows(matmul(qh, transpose(kh)), scale);
        const Matrix oh = matmul(ah, vh);
        for (int i = 0; i < q.rows; ++i)
            for (int j = 0; j < dh; ++j) out.at(i, h * dh + j) = oh.at(i, j);
    }
    return out;
}

}  // namespace detail

// Training-style masked path: K and V rows of dropped tokens are zeroed
// before the spatial reduction, queries stay full length. The output keeps
// all H*W rows; only the kept rows are meaningful downstream.
inline Matrix sra_masked(const Matrix& q, const Matrix& k, const Matrix& v,
                         const DecisionMask& mask, const SpatialGrid& grid, const Matrix& proj,
                         int num_heads) {
    grid.validate();
    if (static_cast<int>(mask.size()) != grid.tokens())
        throw ShapeError("sra_masked: mask length " + std::to_string(mask.size()) + " vs grid " +
                         std::to_string(grid.tokens()));
    if (q.rows != grid.tokens() || k.rows != grid.tokens() || v.rows != grid.tokens())
        throw ShapeError("sra_masked: Q/K/V must cover the full grid");
    Matrix km = k, vm = v;
    for (int t = 0; t < grid.tokens(); ++t) {
        if (mask[t]) continue;
        std::fill(km.row(t).begin(), km.row(t).end(), 0.0f);
        std::fill(vm.row(t).begin(), vm.row(t).end(), 0.0f);
    }
    return detail::sra_attend(q, spatial_reduce(km, grid, proj), spatial_reduce(vm, grid, proj),
                              num_heads);
}

// Inference-style path: kept K/V rows are re-inserted into a zero grid
// (Pad), reduced, and attended by the kept queries only. Output has
// exactly |I^r| rows, fixed by the policy cardinality.
inline Matrix sra_padded(const Matrix& q_kept, const Matrix& k_kept, const Matrix& v_kept,
                         const TokenPartition& partition, const SpatialGrid& grid,
                         const Matrix& proj, int num_heads) {
    grid.validate();
    const std::vector<int>& kept = partition.reserved;
    if (static_cast<int>(kept.size()) != q_kept.rows || k_kept.rows != q_kept.rows ||
        v_kept.rows != q_kept.rows)
        throw ShapeError("sra_padded: kept rows must match the partition");
    for (int t : kept)
        if (t < 0 || t >= grid.tokens())
            throw ShapeError("sra_padded: kept index " + std::to_string(t) + " outside grid");
    Matrix k_pad(grid.tokens(), k_kept.cols);
    Matrix v_pad(grid.tokens(), v_kept.cols);
    scatter_rows(k_pad, kept, k_kept);
    scatter_rows(v_pad, kept, v_kept);
    return detail::sra_attend(q_kept, spatial_reduce(k_pad, grid, proj),
                              spatial_reduce(v_pad, grid, proj), num_heads);
}

}  // namespace tps
