// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpskit/config.hpp"
#include "tpskit/fixture.hpp"
#include "tpskit/flops.hpp"
#include "tpskit/model.hpp"
#include "tpskit/report.hpp"

namespace tps {

namespace detail {

inline ModelWeights resolve_weights(const RunConfig& cfg) {
    if (!cfg.weights_path.empty()) {
        ModelWeights w = load_weights(cfg.weights_path, cfg.model);
        if (cfg.mode != Mode::vanilla && cfg.schedule.variant == Variant::dtps &&
            static_cast<int>(w.score_heads.size()) < cfg.schedule.stages())
            throw ConfigError("weights: fixture " + cfg.weights_path + " carries " +
                              std::to_string(w.score_heads.size()) +
                              " dTPS score heads, schedule needs " +
                              std::to_string(cfg.schedule.stages()));
        return w;
    }
    return fixture_weights(cfg.model, cfg.schedule.stages(), cfg.weights_seed);
}

inline InputFixture resolve_input(const RunConfig& cfg) {
    if (cfg.input.kind == InputSpec::Kind::fixture) return load_input(cfg.input.path);
    InputFixture fx;
    fx.images = fixture_images(cfg.input.batch, cfg.model.image_size, cfg.model.image_size,
                               cfg.input.seed);
    return fx;
}

inline nlohmann::json logits_to_json(const Matrix& logits) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < logits.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < logits.cols; ++j) row.push_back(logits.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<double> l2_per_item(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvariantError("report: logit shapes differ across runs");
    std::vector<double> out(static_cast<std::size_t>(a.rows));
    for (int i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) {
            const double d = static_cast<double>(a.at(i, j)) - b.at(i, j);
            s += d * d;
        }
        out[i] = std::sqrt(s);
    }
    return out;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double agreement(const std::vector<int>& a, const std::vector<int>& b) {
    int eq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) eq += a[i] == b[i];
    return a.empty() ? 0.0 : static_cast<double>(eq) / static_cast<double>(a.size());
}

}  // namespace detail

struct ForwardExtras {
    std::string save_weights_path;  // optional: dump the resolved weights fixture
    std::string save_input_path;    // optional: dump the resolved input fixture
};

inline nlohmann::json cmd_forward(const RunConfig& cfg, const ForwardExtras& extras = {}) {
    const ModelWeights weights = detail::resolve_weights(cfg);
    const InputFixture input = detail::resolve_input(cfg);
    if (!extras.save_weights_path.empty()) save_weights(extras.save_weights_path, weights);
    if (!extras.save_input_path.empty())
        save_input(extras.save_input_path, input.images, input.labels);

    ForwardOptions opt;
    opt.mode = cfg.mode;
    const ForwardResult res = model_forward(input.images, cfg.model, weights, cfg.schedule, opt);

    nlohmann::json report = report_envelope("forward", cfg);
    report["result"] = {{"logits", detail::logits_to_json(res.logits)},
                        {"predictions", predictions(res.logits)},
                        {"token_counts", res.trace.token_counts_after()},
                        {"trace", trace_to_json(res.trace)}};
    return report;
}

inline nlohmann::json cmd_flops(const RunConfig& cfg) {
    PruneSchedule schedule = cfg.schedule;
    if (cfg.mode == Mode::vanilla) schedule.locations.clear();  // vanilla runs unreduced
    const FlopsReport rep = model_macs(cfg.model, schedule);

    nlohmann::json blocks = nlohmann::json::array();
    for (const BlockCost& c : rep.per_block)
        blocks.push_back({{"block", c.block}, {"tokens", c.tokens}, {"macs", c.macs}});
    nlohmann::json report = report_envelope("flops", cfg);
    report["result"] = {{"total_gmacs", rep.total_gmacs()},
                        {"total_macs", rep.total_macs},
                        {"stem_macs", rep.stem_macs},
                        {"head_macs", rep.head_macs},
                        {"tps_overhead_macs", rep.tps_overhead_macs},
                        {"per_block", std::move(blocks)}};
    return report;
}

inline nlohmann::json cmd_compare(const RunConfig& cfg) {
    const ModelWeights weights = detail::resolve_weights(cfg);
    const InputFixture input = detail::resolve_input(cfg);

    const std::vector<Mode> modes = {Mode::vanilla, Mode::prune, Mode::reorganize, Mode::tps};
    std::vector<ForwardResult> results;
    for (Mode m : modes) {
        ForwardOptions opt;
        opt.mode = m;
        results.push_back(model_forward(input.images, cfg.model, weights, cfg.schedule, opt));
    }

    nlohmann::json per_mode;
    const std::vector<int> vanilla_preds = predictions(results[0].logits);
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const std::vector<double> l2 = detail::l2_per_item(results[0].logits, results[i].logits);
        per_mode[to_string(modes[i])] = {
            {"token_counts", results[i].trace.token_counts_after()},
            {"predictions", predictions(results[i].logits)},
            {"l2_vs_vanilla_per_item", l2},
            {"l2_vs_vanilla_mean", detail::mean(l2)},
            {"top1_agreement_vs_vanilla",
             detail::agreement(vanilla_preds, predictions(results[i].logits))}};
    }
    nlohmann::json pairwise;
    for (std::size_t i = 0; i < modes.size(); ++i)
        for (std::size_t j = i + 1; j < modes.size(); ++j)
            pairwise[to_string(modes[i]) + "_vs_" + to_string(modes[j])] =
                detail::mean(detail::l2_per_item(results[i].logits, results[j].logits));

    nlohmann::json report = report_envelope("compare", cfg);
    report["result"] = {{"modes", std::move(per_mode)}, {"pairwise_l2_mean", std::move(pairwise)}};
    return report;
}

inline nlohmann::json cmd_reverse(const RunConfig& cfg) {
    if (cfg.schedule.stages() < 1)
        throw ConfigError("reverse: schedule needs at least one pruning stage");
    if (cfg.mode == Mode::vanilla)
        throw ConfigError("reverse: mode must be prune, reorganize or tps");
    const ModelWeights weights = detail::resolve_weights(cfg);
    const InputFixture input = detail::resolve_input(cfg);

    ForwardOptions opt;
    opt.mode = cfg.mode;
    const ForwardResult original = model_forward(input.images, cfg.model, weights, cfg.schedule, opt);
    opt.reverse_first_stage = true;
    const ForwardResult reversed = model_forward(input.images, cfg.model, weights, cfg.schedule, opt);

    const std::vector<int> orig_preds = predictions(original.logits);
    const std::vector<int> rev_preds = predictions(reversed.logits);

    nlohmann::json report = report_envelope("reverse", cfg);
    report["result"] = {{"original",
                         {{"predictions", orig_preds},
                          {"token_counts", original.trace.token_counts_after()}}},
                        {"reversed",
                         {{"predictions", rev_preds},
                          {"token_counts", reversed.trace.token_counts_after()}}}};
    if (input.labels) {
        const auto [acc_orig, acc_rev, bonus] = bonus_accuracy(orig_preds, rev_preds, *input.labels);
        report["result"]["accuracy"] = {{"original", acc_orig},
                                        {"reversed", acc_rev},
                                        {"bonus", bonus}};
    } else {
        std::cerr << "reverse: no labels in input, bonus accuracy omitted\n";
    }
    return report;
}

inline nlohmann::json cmd_robustness(const RunConfig& cfg) {
    const ModelWeights weights = detail::resolve_weights(cfg);
    const InputFixture input = detail::resolve_input(cfg);
    const std::vector<Mode> modes = {Mode::prune, Mode::reorganize, Mode::tps};

    std::vector<Matrix> original_logits;
    for (Mode m : modes) {
        ForwardOptions opt;
        opt.mode = m;
        original_logits.push_back(
            model_forward(input.images, cfg.model, weights, cfg.schedule, opt).logits);
    }

    struct TrialRow {
        double l2 = 0.0;
        double agree = 0.0;
    };
    std::vector<std::vector<TrialRow>> rows(modes.size(),
                                            std::vector<TrialRow>(static_cast<std::size_t>(cfg.trials)));

    auto run_trial = [&](int trial) {
        for (std::size_t mi = 0; mi < modes.size(); ++mi) {
            ForwardOptions opt;
            opt.mode = modes[mi];
            opt.policy = PolicyKind::random;
            opt.random_policy_seed = cfg.robustness_seed + static_cast<std::uint64_t>(trial);
            const ForwardResult res =
                model_forward(input.images, cfg.model, weights, cfg.schedule, opt);
            rows[mi][trial].l2 =
                detail::mean(detail::l2_per_item(original_logits[mi], res.logits));
            rows[mi][trial].agree =
                detail::agreement(predictions(original_logits[mi]), predictions(res.logits));
        }
    };

    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        for (int t = 0; t < cfg.trials; ++t) run_trial(t);
    } else {
        // trials write disjoint slots; aggregation below is order-fixed
        std::vector<std::future<void>> futures;
        for (int w = 0; w < threads; ++w) {
            futures.push_back(std::async(std::launch::async, [&, w] {
                for (int t = w; t < cfg.trials; t += threads) run_trial(t);
            }));
        }
        for (auto& f : futures) f.get();
    }

    nlohmann::json per_mode;
    for (std::size_t mi = 0; mi < modes.size(); ++mi) {
        double l2_mean = 0.0, agree_mean = 0.0;
        for (const TrialRow& r : rows[mi]) {
            l2_mean += r.l2;
            agree_mean += r.agree;
        }
        l2_mean /= cfg.trials;
        agree_mean /= cfg.trials;
        double var = 0.0;
        for (const TrialRow& r : rows[mi]) var += (r.l2 - l2_mean) * (r.l2 - l2_mean);
        var /= cfg.trials;
        per_mode[to_string(modes[mi])] = {{"l2_mean", l2_mean},
                                          {"l2_stddev", std::sqrt(var)},
                                          {"top1_agreement_mean", agree_mean}};
    }

    nlohmann::json report = report_envelope("robustness", cfg);
    report["result"] = {{"trials", cfg.trials}, {"modes", std::move(per_mode)}};
    return report;
}

// Dispatch used by both the CLI binary and the in-process test drivers.
inline nlohmann::json run_command(const std::string& name, const RunConfig& cfg,
                                  const ForwardExtras& extras = {}) {
    if (name == "forward") return cmd_forward(cfg, extras);
    if (name == "flops") return cmd_flops(cfg);
    if (name == "compare") return cmd_compare(cfg);
    if (name == "reverse") return cmd_reverse(cfg);
    if (name == "robustness") return cmd_robustness(cfg);
    throw ConfigError("unknown command '" + name + "'");
}

}  // namespace tps
