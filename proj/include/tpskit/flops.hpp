// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tpskit/policy.hpp"
#include "tpskit/vit.hpp"

namespace tps {

// One multiply-accumulate counts as one FLOP (the convention under which
// DeiT-S totals 4.6 G). Element-wise LayerNorm/softmax/GELU costs are
// excluded; they are below the reported precision.
using MacCount = std::uint64_t;

struct BlockCost {
    int block = 0;   // 1-based
    int tokens = 0;  // live token count leaving the block (post-reduction)
    MacCount macs = 0;
};

struct FlopsReport {
    std::vector<BlockCost> per_block;
    MacCount stem_macs = 0;
    MacCount head_macs = 0;
    MacCount tps_overhead_macs = 0;
    MacCount total_macs = 0;

    double total_gmacs() const { return static_cast<double>(total_macs) * 1e-9; }
};

// QKV + output projection + the two attention matmuls.
inline MacCount attn_macs(int tokens, int dim) {
    const MacCount n = tokens, d = dim;
    return 4 * n * d * d + 2 * n * n * d;
}

inline MacCount mlp_macs(int tokens, int dim, double mlp_ratio) {
    const MacCount hidden = static_cast<MacCount>(mlp_ratio * dim);
    return 2 * static_cast<MacCount>(tokens) * dim * hidden;
}

// (4 + 2*mlp_ratio) * N * d^2 + 2 * N^2 * d
inline MacCount block_macs(int tokens, int dim, double mlp_ratio) {
    return attn_macs(tokens, dim) + mlp_macs(tokens, dim, mlp_ratio);
}

// Matching + fusing cost of one stage: pairwise dot products, the two norm
// passes, and the weighted recombination.
inline MacCount stage_overhead_macs(int pruned, int reserved, int dim) {
    const MacCount np = pruned, nr = reserved, d = dim;
    return np * nr * d + (np + nr) * d + (np + nr) * d;
}

// Analytical cost of the configured model. Token counts follow the same
// floor recurrence the policy module applies; dTPS stages shrink the whole
// block, eTPS stages shrink only its MLP half.
inline FlopsReport model_macs(const ModelConfig& cfg, const PruneSchedule& schedule) {
    cfg.validate();
    schedule.validate(cfg.depth);
    const int d = cfg.embed_dim;
    FlopsReport report;
    report.stem_macs = static_cast<MacCount>(cfg.num_patches()) * d *
                       (3ull * cfg.patch_size * cfg.patch_size);
    report.head_macs = static_cast<MacCount>(d) * cfg.num_classes;

    int live = cfg.num_tokens();
    std::size_t next_stage = 0;
    for (int block = 1; block <= cfg.depth; ++block) {
        const bool is_stage =
            next_stage < schedule.locations.size() && schedule.locations[next_stage] == block;
        BlockCost cost;
        cost.block = block;
        if (is_stage) {
            const int patches = live - 1;
            const int kept = reserved_patch_count(patches, schedule.keep_ratio);
            const int reduced = kept + 1;
            report.tps_overhead_macs += stage_overhead_macs(patches - kept, kept, d);
            if (schedule.variant == Variant::dtps) {
                cost.macs = block_macs(reduced, d, cfg.mlp_ratio);
            } else {
                cost.macs = attn_macs(live, d) + mlp_macs(reduced, d, cfg.mlp_ratio);
            }
            live = reduced;
            ++next_stage;
        } else {
            cost.macs = block_macs(live, d, cfg.mlp_ratio);
        }
        cost.tokens = live;
        report.per_block.push_back(cost);
    }

    report.total_macs = report.stem_macs + report.head_macs + report.tps_overhead_macs;
    for (const BlockCost& c : report.per_block) report.total_macs += c.macs;
    return report;
}

}  // namespace tps
