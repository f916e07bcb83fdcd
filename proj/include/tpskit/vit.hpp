// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "tpskit/matrix.hpp"
#include "tpskit/rng.hpp"

namespace tps {

struct ModelConfig {
    int image_size = 224;
    int patch_size = 16;
    int embed_dim = 384;
    int depth = 12;
    int num_heads = 6;
    float mlp_ratio = 4.0f;
    int num_classes = 1000;
    bool has_class_token = true;  // always true in this toolkit

    int grid_size() const { return image_size / patch_size; }
    int num_patches() const { return grid_size() * grid_size(); }
    int num_tokens() const { return num_patches() + 1; }
    int head_dim() const { return embed_dim / num_heads; }
    int mlp_hidden() const { return static_cast<int>(mlp_ratio * embed_dim); }

    void validate() const {
        if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
            throw ConfigError("model: image_size must be a positive multiple of patch_size");
        if (num_heads <= 0 || embed_dim % num_heads != 0)
            throw ConfigError("model: embed_dim must be divisible by num_heads");
        if (embed_dim % 2 != 0)
            throw ConfigError("model: embed_dim must be even");
        if (depth < 1) throw ConfigError("model: depth must be >= 1");
        if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
        if (!has_class_token) throw ConfigError("model: class token is required");
    }
};

// Batch of per-token features. Token 0 is the class token. `positional`
// is the stored copy of the additive positional embedding, kept aligned
// with the surviving tokens (same gather indices at every reduction).
struct TokenTensor {
    int batch = 0;
    int tokens = 0;
    int dim = 0;
    std::vector<float> values;  // [batch, tokens, dim]
    Matrix positional;          // [tokens, dim]; empty when absent

    Matrix item(int b) const {
        Matrix m(tokens, dim);
        const std::size_t stride = static_cast<std::size_t>(tokens) * dim;
        std::copy(values.begin() + b * stride, values.begin() + (b + 1) * stride, m.data.begin());
        return m;
    }

    void set_item(int b, const Matrix& m) {
        const std::size_t stride = static_cast<std::size_t>(tokens) * dim;
        std::copy(m.data.begin(), m.data.end(), values.begin() + b * stride);
    }

    static TokenTensor from_items(const std::vector<Matrix>& items, Matrix positional = {}) {
        TokenTensor t;
        t.batch = static_cast<int>(items.size());
        t.tokens = items.empty() ? 0 : items[0].rows;
        t.dim = items.empty() ? 0 : items[0].cols;
        t.values.reserve(static_cast<std::size_t>(t.batch) * t.tokens * t.dim);
        for (const Matrix& m : items) t.values.insert(t.values.end(), m.data.begin(), m.data.end());
        t.positional = std::move(positional);
        return t;
    }
};

// Per-head attention probabilities and projections from one block's MHA.
struct AttentionRecord {
    std::vector<Matrix> attn;  // per head, [N, N], rows sum to 1
    std::vector<Matrix> q;     // per head, [N, head_dim]
    std::vector<Matrix> k;
    std::vector<Matrix> v;

    int heads() const { return static_cast<int>(attn.size()); }
    int tokens() const { return attn.empty() ? 0 : attn[0].rows; }
};

struct BlockWeights {
    std::vector<float> ln1_gamma, ln1_beta;
    Matrix w_qkv;  // [d, 3d]
    std::vector<float> b_qkv;
    Matrix w_proj;  // [d, d]
    std::vector<float> b_proj;
    std::vector<float> ln2_gamma, ln2_beta;
    Matrix w_fc1;  // [d, hidden]
    std::vector<float> b_fc1;
    Matrix w_fc2;  // [hidden, d]
    std::vector<float> b_fc2;
};

// dTPS learnable token-score head: local projection d -> d/2, masked mean
// of the same projection as the global branch, concat -> MLP d -> d/2 -> 2.
struct ScoreHeadWeights {
    Matrix w_local;  // [d, d/2]
    std::vector<float> b_local;
    Matrix w_fc1;  // [d, d/2]
    std::vector<float> b_fc1;
    Matrix w_fc2;  // [d/2, 2] -> (keep, drop) logits
    std::vector<float> b_fc2;
};

struct ModelWeights {
    Matrix patch_w;  // [3 * patch^2, d]
    std::vector<float> patch_b;
    std::vector<float> cls_token;  // [d]
    Matrix pos_embed;              // [num_tokens, d]
    std::vector<BlockWeights> blocks;
    std::vector<float> norm_gamma, norm_beta;  // final LayerNorm
    Matrix head_w;  // [d, num_classes]
    std::vector<float> head_b;
    std::vector<ScoreHeadWeights> score_heads;  // one per dTPS stage; may be empty
    float ln_eps = 1e-6f;
};

struct ImageBatch {
    int batch = 0;
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<float> data;  // [batch, H, W, C]

    float at(int b, int y, int x, int c) const {
        return data[((static_cast<std::size_t>(b) * height + y) * width + x) * channels + c];
    }
};

namespace detail {

inline Matrix random_matrix(Rng& rng, int rows, int cols, float scale) {
    Matrix m(rows, cols);
    for (float& v : m.data) v = static_cast<float>(rng.normal()) * scale;
    return m;
}

inline std::vector<float> random_vector(Rng& rng, int n, float scale, float shift = 0.0f) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (float& x : v) x = static_cast<float>(rng.normal()) * scale + shift;
    return v;
}

}  // namespace detail

// Deterministic weight fixture: seeded normal init (std 0.02, LayerNorm
// affine near identity). `num_score_heads` > 0 attaches dTPS heads.
inline ModelWeights fixture_weights(const ModelConfig& cfg, int num_score_heads,
                                    std::uint64_t seed) {
    cfg.validate();
    const int d = cfg.embed_dim;
    const int hidden = cfg.mlp_hidden();
    constexpr float kStd = 0.02f;
    Rng rng(mix64(seed));
    ModelWeights w;
    w.patch_w = detail::random_matrix(rng, 3 * cfg.patch_size * cfg.patch_size, d, kStd);
    w.patch_b = detail::random_vector(rng, d, kStd);
    w.cls_token = detail::random_vector(rng, d, kStd);
    w.pos_embed = detail::random_matrix(rng, cfg.num_tokens(), d, kStd);
    for (int i = 0; i < cfg.depth; ++i) {
        BlockWeights b;
        b.ln1_gamma = detail::random_vector(rng, d, kStd, 1.0f);
        b.ln1_beta = detail::random_vector(rng, d, kStd);
        b.w_qkv = detail::random_matrix(rng, d, 3 * d, kStd);
        b.b_qkv = detail::random_vector(rng, 3 * d, kStd);
        b.w_proj = detail::random_matrix(rng, d, d, kStd);
        b.b_proj = detail::random_vector(rng, d, kStd);
        b.ln2_gamma = detail::random_vector(rng, d, kStd, 1.0f);
        b.ln2_beta = detail::random_vector(rng, d, kStd);
        b.w_fc1 = detail::random_matrix(rng, d, hidden, kStd);
        b.b_fc1 = detail::random_vector(rng, hidden, kStd);
        b.w_fc2 = detail::random_matrix(rng, hidden, d, kStd);
        b.b_fc2 = detail::random_vector(rng, d, kStd);
        w.blocks.push_back(std::move(b));
    }
    w.norm_gamma = detail::random_vector(rng, d, kStd, 1.0f);
    w.norm_beta = detail::random_vector(rng, d, kStd);
    w.head_w = detail::random_matrix(rng, d, cfg.num_classes, kStd);
    w.head_b = detail::random_vector(rng, cfg.num_classes, kStd);
    for (int s = 0; s < num_score_heads; ++s) {
        ScoreHeadWeights h;
        h.w_local = detail::random_matrix(rng, d, d / 2, kStd);
        h.b_local = detail::random_vector(rng, d / 2, kStd);
        h.w_fc1 = detail::random_matrix(rng, d, d / 2, kStd);
        h.b_fc1 = detail::random_vector(rng, d / 2, kStd);
        h.w_fc2 = detail::random_matrix(rng, d / 2, 2, kStd);
        h.b_fc2 = detail::random_vector(rng, 2, kStd);
        w.score_heads.push_back(std::move(h));
    }
    return w;
}

// Seeded standard-normal image batch.
inline ImageBatch fixture_images(int batch, int height, int width, std::uint64_t seed) {
    ImageBatch img;
    img.batch = batch;
    img.height = height;
    img.width = width;
    img.channels = 3;
    img.data.resize(static_cast<std::size_t>(batch) * height * width * 3);
    Rng rng(mix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL));
    for (float& v : img.data) v = static_cast<float>(rng.normal());
    return img;
}

// Patch embedding: non-overlapping patch_size^2 patches flattened in
// (y, x, channel) order, linearly projected, class token prepended,
// positional embedding added and its copy stored on the result.
inline TokenTensor patch_embed(const ImageBatch& image, const ModelConfig& cfg,
                               const ModelWeights& w) {
    cfg.validate();
    if (image.height != cfg.image_size || image.width != cfg.image_size || image.channels != 3)
        throw ShapeError("patch_embed: image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " does not match configured size " +
                         std::to_string(cfg.image_size));
    const int g = cfg.grid_size();
    const int p = cfg.patch_size;
    const int d = cfg.embed_dim;
    const int n = cfg.num_tokens();
    if (w.patch_w.rows != 3 * p * p || w.patch_w.cols != d)
        throw ShapeError("patch_embed: patch projection weight shape mismatch");
    if (w.pos_embed.rows != n || w.pos_embed.cols != d)
        throw ShapeError("patch_embed: positional embedding shape mismatch");

    std::vector<Matrix> items;
    items.reserve(static_cast<std::size_t>(image.batch));
    for (int b = 0; b < image.batch; ++b) {
        Matrix patches(cfg.num_patches(), 3 * p * p);
        for (int gy = 0; gy < g; ++gy) {
            for (int gx = 0; gx < g; ++gx) {
                auto row = patches.row(gy * g + gx);
                int k = 0;
                for (int py = 0; py < p; ++py)
                    for (int px = 0; px < p; ++px)
                        for (int c = 0; c < 3; ++c)
                            row[k++] = image.at(b, gy * p + py, gx * p + px, c);
            }
        }
        Matrix proj = add_bias(matmul(patches, w.patch_w), w.patch_b);
        Matrix tokens(n, d);
        for (int j = 0; j < d; ++j) tokens.at(0, j) = w.cls_token[j];
        for (int t = 0; t < cfg.num_patches(); ++t)
            for (int j = 0; j < d; ++j) tokens.at(t + 1, j) = proj.at(t, j);
        items.push_back(add(tokens, w.pos_embed));
    }
    return TokenTensor::from_items(items, w.pos_embed);
}

// Pre-norm multi-head attention with residual: x + proj(attend(LN1(x))).
// Returns the per-head attention record for downstream token scoring.
inline std::pair<Matrix, AttentionRecord> mha_forward(const Matrix& x, const BlockWeights& w,
                                                      int num_heads, float ln_eps) {
    const int d = x.cols;
    if (w.w_qkv.rows != d || w.w_qkv.cols != 3 * d)
        throw ShapeError("mha_forward: qkv weight shape mismatch");
    if (num_heads <= 0 || d % num_heads != 0)
        throw ShapeError("mha_forward: dim not divisible by heads");
    const int dh = d / num_heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    const Matrix ln = layernorm(x, w.ln1_gamma, w.ln1_beta, ln_eps);
    const Matrix qkv = add_bias(matmul(ln, w.w_qkv), w.b_qkv);

    AttentionRecord rec;
    Matrix concat(x.rows, d);
    for (int h = 0; h < num_heads; ++h) {
        Matrix qh = slice_cols(qkv, h * dh, dh);
        Matrix kh = slice_cols(qkv, d + h * dh, dh);
        Matrix vh = slice_cols(qkv, 2 * d + h * dh, dh);
        Matrix ah = softmax_rows(matmul(qh, transpose(kh)), scale);
        Matrix oh = matmul(ah, vh);
        for (int i = 0; i < x.rows; ++i)
            for (int j = 0; j < dh; ++j) concat.at(i, h * dh + j) = oh.at(i, j);
        rec.attn.push_back(std::move(ah));
        rec.q.push_back(std::move(qh));
        rec.k.push_back(std::move(kh));
        rec.v.push_back(std::move(vh));
    }
    Matrix out = add(x, add_bias(matmul(concat, w.w_proj), w.b_proj));
    return {std::move(out), std::move(rec)};
}

// MLP half of a block: x + fc2(gelu(fc1(LN2(x)))).
inline Matrix mlp_forward(const Matrix& x, const BlockWeights& w, float ln_eps) {
    const Matrix ln = layernorm(x, w.ln2_gamma, w.ln2_beta, ln_eps);
    const Matrix h = gelu(add_bias(matmul(ln, w.w_fc1), w.b_fc1));
    return add(x, add_bias(matmul(h, w.w_fc2), w.b_fc2));
}

inline Matrix block_forward(const Matrix& x, const BlockWeights& w, int num_heads, float ln_eps) {
    return mlp_forward(mha_forward(x, w, num_heads, ln_eps).first, w, ln_eps);
}

// Batched wrappers over the per-item kernels; shapes are preserved.
inline std::pair<TokenTensor, std::vector<AttentionRecord>> mha_forward(
    const TokenTensor& x, const BlockWeights& w, int num_heads, float ln_eps) {
    TokenTensor out = x;
    std::vector<AttentionRecord> recs;
    recs.reserve(static_cast<std::size_t>(x.batch));
    for (int b = 0; b < x.batch; ++b) {
        auto [m, rec] = mha_forward(x.item(b), w, num_heads, ln_eps);
        out.set_item(b, m);
        recs.push_back(std::move(rec));
    }
    return {std::move(out), std::move(recs)};
}

inline TokenTensor block_forward(const TokenTensor& x, const BlockWeights& w, int num_heads,
                                 float ln_eps) {
    TokenTensor out = x;
    for (int b = 0; b < x.batch; ++b) out.set_item(b, block_forward(x.item(b), w, num_heads, ln_eps));
    return out;
}

// Final LayerNorm, class-token readout, classifier head.
inline Matrix classify(const std::vector<Matrix>& items, const ModelWeights& w) {
    const int classes = w.head_w.cols;
    Matrix logits(static_cast<int>(items.size()), classes);
    for (std::size_t b = 0; b < items.size(); ++b) {
        const Matrix normed = layernorm(items[b], w.norm_gamma, w.norm_beta, w.ln_eps);
        Matrix cls(1, normed.cols);
        std::copy(normed.row(0).begin(), normed.row(0).end(), cls.data.begin());
        const Matrix out = add_bias(matmul(cls, w.head_w), w.head_b);
        std::copy(out.data.begin(), out.data.end(), logits.row(static_cast<int>(b)).begin());
    }
    return logits;
}

}  // namespace tps
