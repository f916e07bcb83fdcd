// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tpskit/policy.hpp"
#include "tpskit/squeeze.hpp"
#include "tpskit/vit.hpp"

namespace tps {

enum class Mode { vanilla, prune, reorganize, tps };

// Where stage partitions come from: the variant's scoring, or seeded
// uniform random selection of the same cardinality.
enum class PolicyKind { scored, random };

struct ForwardOptions {
    Mode mode = Mode::vanilla;
    PolicyKind policy = PolicyKind::scored;
    std::uint64_t random_policy_seed = 0;  // base for PolicyKind::random
    bool reverse_first_stage = false;      // swap reserved/pruned at stage 0
};

struct StageItemRecord {
    TokenPartition partition;
    std::vector<int> host_histogram;  // matches per reserved patch token (tps mode)
    int zero_norm_tokens = 0;
    bool empty_score_mass = false;
};

struct StageRecord {
    int stage_id = 0;
    int location = 0;  // 1-based block index
    int tokens_before = 0;
    int tokens_after = 0;  // identical for every batch item (constant shape)
    std::vector<StageItemRecord> items;
};

struct PolicyTrace {
    std::vector<StageRecord> stages;

    std::vector<int> token_counts_after() const {
        std::vector<int> out;
        out.reserve(stages.size());
        for (const StageRecord& s : stages) out.push_back(s.tokens_after);
        return out;
    }
};

struct ForwardResult {
    Matrix logits;  // [batch, num_classes]
    PolicyTrace trace;
};

inline int argmax_row(const Matrix& m, int row) {
    int best = 0;
    for (int j = 1; j < m.cols; ++j)
        if (m.at(row, j) > m.at(row, best)) best = j;
    return best;
}

inline std::vector<int> predictions(const Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows));
    for (int i = 0; i < logits.rows; ++i) out[i] = argmax_row(logits, i);
    return out;
}

namespace detail {

inline void verify_partition(const TokenPartition& p, int live) {
    if (p.live_tokens() != live)
        throw InvariantError("partition: |reserved| + |pruned| != live token count");
    std::vector<char> seen(static_cast<std::size_t>(live), 0);
    for (int t : p.reserved) {
        if (t < 0 || t >= live || seen[t]) throw InvariantError("partition: bad reserved index");
        seen[t] = 1;
    }
    for (int t : p.pruned) {
        if (t < 0 || t >= live || seen[t]) throw InvariantError("partition: bad pruned index");
        seen[t] = 1;
    }
    if (p.reserved.empty() || p.reserved.front() != 0)
        throw InvariantError("partition: class token not reserved");
}

struct StageOutcome {
    Matrix x;
    Matrix pos;
    StageItemRecord record;
};

// One reduction stage on one batch item. `rec` is the attention record the
// stage may score from (eTPS) or reuse for similarity; may be null when the
// configuration does not need it.
inline StageOutcome apply_stage(const Matrix& x, const Matrix& pos, const AttentionRecord* rec,
                                const ModelWeights& weights, const PruneSchedule& schedule,
                                const ForwardOptions& opt, int stage_index) {
    StageOutcome out;
    const int live = x.rows;

    const bool needs_scores = opt.policy == PolicyKind::scored || opt.mode == Mode::reorganize;
    ScoreVector scores;
    if (needs_scores) {
        if (schedule.variant == Variant::etps) {
            if (rec == nullptr) throw ConfigError("stage: eTPS scoring needs an attention record");
            scores = score_etps(*rec);
        } else {
            if (stage_index >= static_cast<int>(weights.score_heads.size()))
                throw ConfigError("stage: missing dTPS score head for stage " +
                                  std::to_string(stage_index));
            scores = score_dtps(x, DecisionMask(static_cast<std::size_t>(live - 1), 1),
                                weights.score_heads[stage_index]);
        }
    }

    TokenPartition part;
    if (opt.policy == PolicyKind::random) {
        part = random_policy(live, schedule.keep_ratio,
                             derive_seed(opt.random_policy_seed, static_cast<std::uint64_t>(stage_index)),
                             stage_index);
    } else {
        part = topk_partition(scores, schedule.keep_ratio, stage_index);
    }
    if (opt.reverse_first_stage && stage_index == 0) part = reverse_policy(part);
    verify_partition(part, live);
    out.record.partition = part;

    switch (opt.mode) {
        case Mode::vanilla:
            throw ConfigError("stage: vanilla mode has no reduction stages");
        case Mode::prune: {
            out.x = gather_rows(x, part.reserved);
            out.pos = gather_rows(pos, part.reserved);
            break;
        }
        case Mode::reorganize: {
            ScoreVector pruned_scores;
            pruned_scores.reserve(part.pruned.size());
            for (int t : part.pruned) pruned_scores.push_back(scores[t - 1]);
            const ReorganizeResult res = baseline_reorganize(x, part, pruned_scores);
            out.record.empty_score_mass = res.zero_score_mass;
            out.x = res.tokens;
            // the aggregate token carries the same weighted mean of the
            // pruned positional rows
            const ReorganizeResult pos_res = baseline_reorganize(pos, part, pruned_scores);
            out.pos = pos_res.tokens;
            break;
        }
        case Mode::tps: {
            std::vector<int> reserved_patch(part.reserved.begin() + 1, part.reserved.end());
            const Matrix pruned_feats = gather_rows(x, part.pruned);
            const Matrix reserved_feats = gather_rows(x, reserved_patch);
            std::optional<Matrix> pruned_pos, reserved_pos;
            SimilarityInputs aux;
            if (schedule.feature_type != FeatureType::full) {
                pruned_pos = gather_rows(pos, part.pruned);
                reserved_pos = gather_rows(pos, reserved_patch);
                aux.pruned_positional = &*pruned_pos;
                aux.reserved_positional = &*reserved_pos;
            }
            if (schedule.similarity_source == SimilaritySource::previous_attention) {
                if (rec == nullptr)
                    throw ConfigError("stage: previous_attention similarity needs a record");
                aux.attention = rec;
                aux.pruned_tokens = &part.pruned;
                aux.reserved_tokens = &reserved_patch;
            }
            const SimilarityMatrix sim = similarity(pruned_feats, reserved_feats,
                                                    schedule.similarity_source,
                                                    schedule.feature_type, aux);
            out.record.zero_norm_tokens = static_cast<int>(sim.zero_norm_rows.size() +
                                                           sim.zero_norm_cols.size());
            const MatchResult mr = match(sim);
            const Matrix fused = fuse(reserved_feats, pruned_feats, sim, mr);

            out.x = Matrix(1 + fused.rows, x.cols);
            std::copy(x.row(0).begin(), x.row(0).end(), out.x.row(0).begin());
            for (int i = 0; i < fused.rows; ++i)
                std::copy(fused.row(i).begin(), fused.row(i).end(), out.x.row(i + 1).begin());
            out.pos = gather_rows(pos, part.reserved);

            out.record.host_histogram.assign(reserved_patch.size(), 0);
            for (int h : mr.host) ++out.record.host_histogram[h];
            break;
        }
    }
    return out;
}

}  // namespace detail

// Full forward pass with reduction stages attached per the schedule.
// dTPS stages run before their block; eTPS stages run inside it, between
// the attention and MLP halves. In vanilla mode the stages record trivial
// all-reserved partitions and the pass equals a schedule-free forward.
inline ForwardResult model_forward(const ImageBatch& image, const ModelConfig& cfg,
                                   const ModelWeights& weights, const PruneSchedule& schedule,
                                   const ForwardOptions& opt = {}) {
    cfg.validate();
    schedule.validate(cfg.depth);
    if (opt.mode != Mode::vanilla && schedule.variant == Variant::dtps &&
        (opt.policy == PolicyKind::scored || opt.mode == Mode::reorganize) &&
        static_cast<int>(weights.score_heads.size()) < schedule.stages())
        throw ConfigError("model_forward: weights carry " +
                          std::to_string(weights.score_heads.size()) +
                          " dTPS score heads, schedule needs " + std::to_string(schedule.stages()));

    const TokenTensor embedded = patch_embed(image, cfg, weights);
    const bool keep_prev_record = schedule.variant == Variant::dtps &&
                                  schedule.similarity_source == SimilaritySource::previous_attention &&
                                  opt.mode == Mode::tps;

    ForwardResult result;
    result.trace.stages.resize(static_cast<std::size_t>(schedule.stages()));
    for (int s = 0; s < schedule.stages(); ++s) {
        result.trace.stages[s].stage_id = s;
        result.trace.stages[s].location = schedule.locations[s];
        result.trace.stages[s].items.resize(static_cast<std::size_t>(image.batch));
    }

    std::vector<Matrix> finals(static_cast<std::size_t>(image.batch));
    for (int b = 0; b < image.batch; ++b) {
        Matrix x = embedded.item(b);
        Matrix pos = embedded.positional;
        std::optional<AttentionRecord> prev_record;
        int next_stage = 0;
        for (int block = 1; block <= cfg.depth; ++block) {
            const BlockWeights& bw = weights.blocks[static_cast<std::size_t>(block - 1)];
            const bool is_stage = next_stage < schedule.stages() &&
                                  schedule.locations[next_stage] == block &&
                                  opt.mode != Mode::vanilla;
            const bool is_trivial_stage = next_stage < schedule.stages() &&
                                          schedule.locations[next_stage] == block &&
                                          opt.mode == Mode::vanilla;

            if (is_stage && schedule.variant == Variant::dtps) {
                StageRecord& sr = result.trace.stages[next_stage];
                sr.tokens_before = x.rows;
                auto outcome = detail::apply_stage(x, pos, prev_record ? &*prev_record : nullptr,
                                                   weights, schedule, opt, next_stage);
                x = std::move(outcome.x);
                pos = std::move(outcome.pos);
                sr.items[b] = std::move(outcome.record);
                if (b == 0)
                    sr.tokens_after = x.rows;
                else if (sr.tokens_after != x.rows)
                    throw InvariantError("model_forward: token count differs across batch items");
                ++next_stage;
                if (keep_prev_record) {
                    auto [y, rec] = mha_forward(x, bw, cfg.num_heads, weights.ln_eps);
                    prev_record = std::move(rec);
                    x = mlp_forward(y, bw, weights.ln_eps);
                } else {
                    x = block_forward(x, bw, cfg.num_heads, weights.ln_eps);
                }
            } else if (is_stage && schedule.variant == Variant::etps) {
                auto [y, rec] = mha_forward(x, bw, cfg.num_heads, weights.ln_eps);
                StageRecord& sr = result.trace.stages[next_stage];
                sr.tokens_before = y.rows;
                auto outcome =
                    detail::apply_stage(y, pos, &rec, weights, schedule, opt, next_stage);
                x = std::move(outcome.x);
                pos = std::move(outcome.pos);
                sr.items[b] = std::move(outcome.record);
                if (b == 0)
                    sr.tokens_after = x.rows;
                else if (sr.tokens_after != x.rows)
                    throw InvariantError("model_forward: token count differs across batch items");
                ++next_stage;
                x = mlp_forward(x, bw, weights.ln_eps);
            } else {
                if (is_trivial_stage) {
                    StageRecord& sr = result.trace.stages[next_stage];
                    sr.tokens_before = sr.tokens_after = x.rows;
                    StageItemRecord rec;
                    rec.partition.stage_id = next_stage;
                    rec.partition.reserved.resize(static_cast<std::size_t>(x.rows));
                    std::iota(rec.partition.reserved.begin(), rec.partition.reserved.end(), 0);
                    sr.items[b] = std::move(rec);
                    ++next_stage;
                }
                if (keep_prev_record) {
                    auto [y, rec] = mha_forward(x, bw, cfg.num_heads, weights.ln_eps);
                    prev_record = std::move(rec);
                    x = mlp_forward(y, bw, weights.ln_eps);
                } else {
                    x = block_forward(x, bw, cfg.num_heads, weights.ln_eps);
                }
            }
        }
        finals[b] = std::move(x);
    }
    result.logits = classify(finals, weights);
    if (!all_finite(result.logits))
        throw InvariantError("model_forward: non-finite logits");
    return result;
}

}  // namespace tps
