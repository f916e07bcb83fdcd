// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "tpskit/policy.hpp"
#include "tpskit/vit.hpp"

namespace tps {

// Pairwise similarity from each pruned token (row) to each reserved
// candidate (column). `zero_norm_rows`/`zero_norm_cols` flag tokens whose
// selected feature had zero norm under the cosine source.
struct SimilarityMatrix {
    Matrix c;  // [N^p, N^r]
    std::vector<int> zero_norm_rows;
    std::vector<int> zero_norm_cols;
};

// Unidirectional N:1 match: each pruned token names one reserved host.
// Many pruned tokens may share a host; some hosts receive none.
struct MatchResult {
    std::vector<int> host;   // host[i] indexes the reserved list
    int reserved_count = 0;

    // Binary mask matrix view: mask[i][j] = 1 iff host[i] == j. Each row
    // sums to exactly 1.
    Matrix dense_mask() const {
        Matrix m(static_cast<int>(host.size()), reserved_count);
        for (std::size_t i = 0; i < host.size(); ++i) m.at(static_cast<int>(i), host[i]) = 1.0f;
        return m;
    }
};

namespace detail {

// Applies the matching-feature ablation: full embedding, content
// (embedding minus positional), or positional only.
inline Matrix select_features(const Matrix& x, const Matrix* positional, FeatureType type) {
    switch (type) {
        case FeatureType::full:
            return x;
        case FeatureType::content:
            if (positional == nullptr) throw ShapeError("similarity: content features need positional");
            return sub(x, *positional);
        case FeatureType::position:
            if (positional == nullptr) throw ShapeError("similarity: position features need positional");
            return *positional;
    }
    throw ShapeError("similarity: unknown feature type");
}

}  // namespace detail

struct SimilarityInputs {
    const Matrix* pruned_positional = nullptr;    // required unless feature_type == full
    const Matrix* reserved_positional = nullptr;
    const AttentionRecord* attention = nullptr;   // required for previous_attention
    const std::vector<int>* pruned_tokens = nullptr;    // record indices of pruned rows
    const std::vector<int>* reserved_tokens = nullptr;  // record indices of reserved cols
};

// Cosine similarity of the selected features, or the head-mean of the
// previous block's attention from pruned rows to reserved columns.
// A zero-norm token under cosine gets similarity 0 to everything.
inline SimilarityMatrix similarity(const Matrix& pruned, const Matrix& reserved,
                                   SimilaritySource source,
                                   FeatureType feature_type = FeatureType::full,
                                   const SimilarityInputs& aux = {}) {
    SimilarityMatrix out;
    if (source == SimilaritySource::previous_attention) {
        if (aux.attention == nullptr || aux.pruned_tokens == nullptr || aux.reserved_tokens == nullptr)
            throw ShapeError("similarity: previous_attention needs a record and token index maps");
        const AttentionRecord& rec = *aux.attention;
        out.c = Matrix(static_cast<int>(aux.pruned_tokens->size()),
                       static_cast<int>(aux.reserved_tokens->size()));
        for (std::size_t i = 0; i < aux.pruned_tokens->size(); ++i) {
            for (std::size_t j = 0; j < aux.reserved_tokens->size(); ++j) {
                double s = 0.0;
                for (int h = 0; h < rec.heads(); ++h)
                    s += rec.attn[h].at((*aux.pruned_tokens)[i], (*aux.reserved_tokens)[j]);
                out.c.at(static_cast<int>(i), static_cast<int>(j)) =
                    static_cast<float>(s / rec.heads());
            }
        }
        return out;
    }

    const Matrix pf = detail::select_features(pruned, aux.pruned_positional, feature_type);
    const Matrix rf = detail::select_features(reserved, aux.reserved_positional, feature_type);
    if (pf.cols != rf.cols) throw ShapeError("similarity: feature dims differ");

    auto norms = [](const Matrix& m, std::vector<int>& zero_flags) {
        std::vector<double> n(static_cast<std::size_t>(m.rows));
        for (int i = 0; i < m.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < m.cols; ++j) s += static_cast<double>(m.at(i, j)) * m.at(i, j);
            n[i] = std::sqrt(s);
            if (n[i] == 0.0) zero_flags.push_back(i);
        }
        return n;
    };
    const std::vector<double> pn = norms(pf, out.zero_norm_rows);
    const std::vector<double> rn = norms(rf, out.zero_norm_cols);

    out.c = Matrix(pf.rows, rf.rows);
    for (int i = 0; i < pf.rows; ++i) {
        for (int j = 0; j < rf.rows; ++j) {
            if (pn[i] == 0.0 || rn[j] == 0.0) {
                out.c.at(i, j) = 0.0f;
                continue;
            }
            double dot = 0.0;
            for (int k = 0; k < pf.cols; ++k)
                dot += static_cast<double>(pf.at(i, k)) * rf.at(j, k);
            out.c.at(i, j) = static_cast<float>(dot / (pn[i] * rn[j]));
        }
    }
    return out;
}

// Nearest reserved token per pruned row, argmax over similarities with
// ties broken toward the lower reserved index.
inline MatchResult match(const SimilarityMatrix& sim) {
    const Matrix& c = sim.c;
    if (c.rows > 0 && c.cols < 1) throw ShapeError("match: no reserved candidates");
    MatchResult m;
    m.reserved_count = c.cols;
    m.host.resize(static_cast<std::size_t>(c.rows));
    for (int i = 0; i < c.rows; ++i) {
        int best = 0;
        for (int j = 1; j < c.cols; ++j)
            if (c.at(i, j) > c.at(i, best)) best = j;
        m.host[i] = best;
    }
    return m;
}

// Similarity-weighted fusing. For host j with matched set S_j:
//   denom  = sum_{i in S_j} exp(c_ij) + e        (e = exp of self-similarity 1)
//   w_i    = exp(c_ij) / denom,  w_j = e / denom
//   y_j    = w_j x_j + sum w_i x_i
// Hosts with no matched token are returned bit-identical.
inline Matrix fuse(const Matrix& reserved, const Matrix& pruned, const SimilarityMatrix& sim,
                   const MatchResult& m) {
    if (pruned.rows != sim.c.rows || reserved.rows != sim.c.cols)
        throw ShapeError("fuse: similarity shape inconsistent with token sets");
    if (static_cast<int>(m.host.size()) != pruned.rows)
        throw ShapeError("fuse: match result inconsistent with pruned set");
    static const double kSelfWeight = std::exp(1.0);

    Matrix out = reserved;  // unmatched rows keep their exact bits
    std::vector<std::vector<int>> matched(static_cast<std::size_t>(reserved.rows));
    for (int i = 0; i < pruned.rows; ++i) matched[m.host[i]].push_back(i);

    std::vector<double> acc(static_cast<std::size_t>(reserved.cols));
    for (int j = 0; j < reserved.rows; ++j) {
        if (matched[j].empty()) continue;
        double denom = kSelfWeight;
        for (int i : matched[j]) denom += std::exp(static_cast<double>(sim.c.at(i, j)));
        const double wj = kSelfWeight / denom;
        for (int k = 0; k < reserved.cols; ++k) acc[k] = wj * reserved.at(j, k);
        for (int i : matched[j]) {
            const double wi = std::exp(static_cast<double>(sim.c.at(i, j))) / denom;
            for (int k = 0; k < reserved.cols; ++k) acc[k] += wi * pruned.at(i, k);
        }
        for (int k = 0; k < reserved.cols; ++k) out.at(j, k) = static_cast<float>(acc[k]);
    }
    return out;
}

// Token-pruning baseline: keep exactly the reserved rows, order-preserving.
inline Matrix baseline_drop(const Matrix& tokens, const TokenPartition& p) {
    return gather_rows(tokens, p.reserved);
}

struct ReorganizeResult {
    Matrix tokens;
    bool zero_score_mass = false;
};

// Token-reorganization baseline: reserved rows plus one extra token, the
// score-weighted mean of the pruned rows. An empty pruned set appends
// nothing; zero score mass falls back to the plain mean and is flagged.
inline ReorganizeResult baseline_reorganize(const Matrix& tokens, const TokenPartition& p,
                                            const ScoreVector& pruned_scores) {
    if (pruned_scores.size() != p.pruned.size())
        throw ShapeError("baseline_reorganize: scores must cover the pruned tokens");
    ReorganizeResult res;
    const Matrix kept = gather_rows(tokens, p.reserved);
    if (p.pruned.empty()) {
        res.tokens = kept;
        return res;
    }
    double mass = 0.0;
    for (float s : pruned_scores) mass += s;
    std::vector<double> w(pruned_scores.size());
    if (mass == 0.0) {
        res.zero_score_mass = true;
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(pruned_scores.size()));
    } else {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = pruned_scores[i] / mass;
    }
    res.tokens = Matrix(kept.rows + 1, tokens.cols);
    std::copy(kept.data.begin(), kept.data.end(), res.tokens.data.begin());
    for (int k = 0; k < tokens.cols; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.pruned.size(); ++i)
            acc += w[i] * tokens.at(p.pruned[i], k);
        res.tokens.at(kept.rows, k) = static_cast<float>(acc);
    }
    return res;
}

}  // namespace tps
