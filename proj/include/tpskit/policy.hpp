// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <tuple>
#include <vector>

#include "tpskit/rng.hpp"
#include "tpskit/vit.hpp"

namespace tps {

// Importance score per live patch token (class token excluded).
using ScoreVector = std::vector<float>;

// Binary keep indicator per token, for masked (training-style) paths and
// the hybrid spatial-reduction attention.
using DecisionMask = std::vector<std::uint8_t>;

// Complementary index sets over the live tokens of one stage. Indices are
// in token space: 0 is the class token and is always reserved; patch token
// p lives at index p + 1. Both lists are sorted ascending.
struct TokenPartition {
    std::vector<int> reserved;
    std::vector<int> pruned;
    int stage_id = 0;

    int live_tokens() const {
        return static_cast<int>(reserved.size() + pruned.size());
    }
};

enum class Variant { dtps, etps };
enum class SimilaritySource { cosine, previous_attention };
enum class FeatureType { full, content, position };

struct PruneSchedule {
    std::vector<int> locations;  // 1-based block indices, strictly increasing
    float keep_ratio = 1.0f;     // rho in (0, 1]
    Variant variant = Variant::etps;
    SimilaritySource similarity_source = SimilaritySource::cosine;
    FeatureType feature_type = FeatureType::full;
    std::uint64_t rng_seed = 0;

    int stages() const { return static_cast<int>(locations.size()); }

    void validate(int depth) const {
        for (std::size_t i = 0; i < locations.size(); ++i) {
            if (locations[i] < 1 || locations[i] > depth)
                throw ConfigError("schedule: location " + std::to_string(locations[i]) +
                                  " outside [1, " + std::to_string(depth) + "]");
            if (i > 0 && locations[i] <= locations[i - 1])
                throw ConfigError("schedule: locations must be strictly increasing");
        }
        if (!(keep_ratio > 0.0f && keep_ratio <= 1.0f))
            throw ConfigError("schedule: keep_ratio must be in (0, 1]");
        if (variant == Variant::dtps && similarity_source == SimilaritySource::previous_attention &&
            !locations.empty() && locations.front() < 2)
            throw ConfigError(
                "schedule: previous_attention similarity needs a block before the first dTPS stage");
    }
};

// Patch tokens kept by one stage: floor(rho * live patches), minimum 1
// (an already-empty patch set stays empty).
inline int reserved_patch_count(int live_patches, float rho) {
    if (live_patches < 1) return 0;
    const int k = static_cast<int>(std::floor(static_cast<double>(rho) * live_patches));
    return std::max(1, std::min(k, live_patches));
}

// eTPS scoring: mean over heads of the class-token attention row, one
// value per patch token.
inline ScoreVector score_etps(const AttentionRecord& rec) {
    const int n = rec.tokens();
    const int heads = rec.heads();
    ScoreVector scores(static_cast<std::size_t>(n - 1), 0.0f);
    for (int h = 0; h < heads; ++h)
        for (int t = 1; t < n; ++t) scores[t - 1] += rec.attn[h].at(0, t);
    for (float& s : scores) s /= static_cast<float>(heads);
    return scores;
}

// dTPS scoring: per patch token, keep probability from a two-branch head.
// Local branch projects the token; global branch is the live-masked mean
// of the same projections; concat feeds an MLP to (keep, drop) logits.
// `x` includes the class token at row 0; `live_mask` covers patch rows.
inline ScoreVector score_dtps(const Matrix& x, const DecisionMask& live_mask,
                              const ScoreHeadWeights& w) {
    const int patches = x.rows - 1;
    if (static_cast<int>(live_mask.size()) != patches)
        throw ShapeError("score_dtps: live_mask length " + std::to_string(live_mask.size()) +
                         " vs patch count " + std::to_string(patches));
    if (w.w_local.rows != x.cols) throw ShapeError("score_dtps: head dim mismatch");
    if (patches == 0) return {};
    const int half = w.w_local.cols;

    Matrix patch_feats(patches, x.cols);
    for (int t = 0; t < patches; ++t)
        std::copy(x.row(t + 1).begin(), x.row(t + 1).end(), patch_feats.row(t).begin());
    const Matrix local = add_bias(matmul(patch_feats, w.w_local), w.b_local);

    std::vector<double> global(static_cast<std::size_t>(half), 0.0);
    int live = 0;
    for (int t = 0; t < patches; ++t) {
        if (!live_mask[t]) continue;
        ++live;
        for (int j = 0; j < half; ++j) global[j] += local.at(t, j);
    }
    if (live == 0) throw ShapeError("score_dtps: no live patch tokens");
    for (double& g : global) g /= live;

    Matrix feat(patches, 2 * half);
    for (int t = 0; t < patches; ++t) {
        for (int j = 0; j < half; ++j) feat.at(t, j) = local.at(t, j);
        for (int j = 0; j < half; ++j) feat.at(t, half + j) = static_cast<float>(global[j]);
    }
    const Matrix h = gelu(add_bias(matmul(feat, w.w_fc1), w.b_fc1));
    const Matrix logits = add_bias(matmul(h, w.w_fc2), w.b_fc2);
    const Matrix probs = softmax_rows(logits);
    ScoreVector scores(static_cast<std::size_t>(patches));
    for (int t = 0; t < patches; ++t) scores[t] = probs.at(t, 0);  // column 0 = keep
    return scores;
}

// Straight-Through Gumbel-Softmax forward pass with caller-supplied noise:
// relaxed softmax((logit + g) / temperature) over {keep, drop}, hard mask
// by argmax. `noise[t]` holds the (keep, drop) Gumbel pair for token t.
inline DecisionMask gumbel_sample_with_noise(const ScoreVector& scores, float temperature,
                                             const std::vector<std::pair<double, double>>& noise) {
    if (noise.size() != scores.size())
        throw ShapeError("gumbel_sample: noise length mismatch");
    if (!(temperature > 0.0f)) throw ConfigError("gumbel_sample: temperature must be > 0");
    DecisionMask mask(scores.size(), 0);
    for (std::size_t t = 0; t < scores.size(); ++t) {
        const double p = std::min(1.0 - 1e-7, std::max(1e-7, static_cast<double>(scores[t])));
        const double zk = (std::log(p) + noise[t].first) / temperature;
        const double zd = (std::log1p(-p) + noise[t].second) / temperature;
        // softmax over two relaxed logits; argmax reduces to a comparison
        mask[t] = zk > zd ? 1 : 0;
    }
    return mask;
}

// Seeded variant: deterministic per (seed); callers derive per-stage seeds
// with derive_seed(seed, stage).
inline DecisionMask gumbel_sample(const ScoreVector& scores, float temperature,
                                  std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<double, double>> noise(scores.size());
    for (auto& n : noise) {
        n.first = rng.gumbel();
        n.second = rng.gumbel();
    }
    return gumbel_sample_with_noise(scores, temperature, noise);
}

// Top-k selection with a fixed keep ratio. `scores` covers the live patch
// tokens; the returned partition is in token space (class token index 0
// reserved unconditionally). Ties break toward the lower index.
inline TokenPartition topk_partition(const ScoreVector& scores, float rho, int stage_id = 0) {
    const int patches = static_cast<int>(scores.size());
    const int keep = reserved_patch_count(patches, rho);
    std::vector<int> order(static_cast<std::size_t>(patches));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    TokenPartition part;
    part.stage_id = stage_id;
    part.reserved.push_back(0);
    for (int i = 0; i < keep; ++i) part.reserved.push_back(order[i] + 1);
    for (int i = keep; i < patches; ++i) part.pruned.push_back(order[i] + 1);
    std::sort(part.reserved.begin(), part.reserved.end());
    std::sort(part.pruned.begin(), part.pruned.end());
    return part;
}

// Reversed policy: reserved and pruned patch tokens exchanged; the class
// token stays reserved.
inline TokenPartition reverse_policy(const TokenPartition& p) {
    TokenPartition out;
    out.stage_id = p.stage_id;
    out.reserved.push_back(0);
    for (int t : p.pruned) out.reserved.push_back(t);
    for (int t : p.reserved)
        if (t != 0) out.pruned.push_back(t);
    std::sort(out.reserved.begin(), out.reserved.end());
    std::sort(out.pruned.begin(), out.pruned.end());
    return out;
}

// Uniformly random reserved subset of the same cardinality the scored
// policy would produce. `live_tokens` counts the class token.
inline TokenPartition random_policy(int live_tokens, float rho, std::uint64_t seed,
                                    int stage_id = 0) {
    const int patches = live_tokens - 1;
    const int keep = reserved_patch_count(patches, rho);
    std::vector<int> order(static_cast<std::size_t>(patches));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < keep; ++i) {  // partial Fisher-Yates
        const int j = i + rng.uniform_int(patches - i);
        std::swap(order[i], order[j]);
    }
    TokenPartition part;
    part.stage_id = stage_id;
    part.reserved.push_back(0);
    for (int i = 0; i < keep; ++i) part.reserved.push_back(order[i] + 1);
    for (int i = keep; i < patches; ++i) part.pruned.push_back(order[i] + 1);
    std::sort(part.reserved.begin(), part.reserved.end());
    std::sort(part.pruned.begin(), part.pruned.end());
    return part;
}

// DecisionMask consistent with a partition, over `live_tokens` entries.
inline DecisionMask mask_from_partition(const TokenPartition& p) {
    DecisionMask mask(static_cast<std::size_t>(p.live_tokens()), 0);
    for (int t : p.reserved) mask[t] = 1;
    return mask;
}

// Fraction of samples where only the reversed policy predicts correctly.
inline std::tuple<double, double, double> bonus_accuracy(const std::vector<int>& original_preds,
                                                         const std::vector<int>& reversed_preds,
                                                         const std::vector<int>& labels) {
    if (original_preds.size() != labels.size() || reversed_preds.size() != labels.size())
        throw ShapeError("bonus_accuracy: prediction/label lengths differ");
    if (labels.empty()) throw ShapeError("bonus_accuracy: empty inputs");
    int orig = 0, rev = 0, bonus = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool o = original_preds[i] == labels[i];
        const bool r = reversed_preds[i] == labels[i];
        orig += o;
        rev += r;
        bonus += (r && !o);
    }
    const double n = static_cast<double>(labels.size());
    return {orig / n, rev / n, bonus / n};
}

}  // namespace tps
