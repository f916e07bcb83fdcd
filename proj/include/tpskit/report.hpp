// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpskit/config.hpp"
#include "tpskit/fixture.hpp"
#include "tpskit/model.hpp"
#include "tpskit/version.hpp"

namespace tps {

// Semantic view of a run: everything that determines the numbers, nothing
// that only affects where/how they are written.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    if (!cfg.model_preset.empty()) j["model_preset"] = cfg.model_preset;
    j["model"] = {{"image_size", cfg.model.image_size},
                  {"patch_size", cfg.model.patch_size},
                  {"embed_dim", cfg.model.embed_dim},
                  {"depth", cfg.model.depth},
                  {"num_heads", cfg.model.num_heads},
                  {"mlp_ratio", cfg.model.mlp_ratio},
                  {"num_classes", cfg.model.num_classes}};
    j["schedule"] = {{"locations", cfg.schedule.locations},
                     {"keep_ratio", cfg.schedule.keep_ratio},
                     {"variant", to_string(cfg.schedule.variant)},
                     {"similarity_source", to_string(cfg.schedule.similarity_source)},
                     {"feature_type", to_string(cfg.schedule.feature_type)}};
    j["mode"] = to_string(cfg.mode);
    if (cfg.input.kind == InputSpec::Kind::random) {
        j["input"] = {{"kind", "random"}, {"batch", cfg.input.batch}};
    } else {
        j["input"] = {{"kind", "fixture"}, {"path", cfg.input.path}};
    }
    if (!cfg.weights_path.empty()) j["weights"] = cfg.weights_path;
    return j;
}

inline nlohmann::json seeds_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["base"] = cfg.base_seed;
    if (cfg.input.kind == InputSpec::Kind::random) j["input"] = cfg.input.seed;
    if (cfg.weights_path.empty()) j["weights"] = cfg.weights_seed;
    j["schedule"] = cfg.schedule.rng_seed;
    j["robustness"] = cfg.robustness_seed;
    return j;
}

inline std::string config_hash(const RunConfig& cfg) {
    const std::string dump = config_to_json(cfg).dump();
    return hex64(fnv1a64(dump.data(), dump.size()));
}

inline nlohmann::json report_envelope(const std::string& command, const RunConfig& cfg) {
    nlohmann::json j;
    j["tool"] = "tpskit";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config_to_json(cfg);
    j["config_hash"] = config_hash(cfg);
    j["seeds"] = seeds_to_json(cfg);
    return j;
}

inline nlohmann::json trace_to_json(const PolicyTrace& trace) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageRecord& s : trace.stages) {
        nlohmann::json items = nlohmann::json::array();
        for (const StageItemRecord& it : s.items) {
            nlohmann::json item;
            item["reserved"] = it.partition.reserved;
            item["pruned"] = it.partition.pruned;
            if (!it.host_histogram.empty()) item["host_histogram"] = it.host_histogram;
            item["zero_norm_tokens"] = it.zero_norm_tokens;
            item["empty_score_mass"] = it.empty_score_mass;
            items.push_back(std::move(item));
        }
        stages.push_back({{"stage", s.stage_id},
                          {"location", s.location},
                          {"tokens_before", s.tokens_before},
                          {"tokens_after", s.tokens_after},
                          {"items", std::move(items)}});
    }
    return {{"stages", std::move(stages)}};
}

namespace detail {

inline void flatten_json(const nlohmann::json& j, const std::string& prefix,
                         std::vector<std::pair<std::string, std::string>>& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten_json(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i)
            flatten_json(j[i], prefix + "." + std::to_string(i), out);
    } else if (j.is_string()) {
        out.emplace_back(prefix, j.get<std::string>());
    } else {
        out.emplace_back(prefix, j.dump());
    }
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

}  // namespace detail

// Flat key,value rendering of the same report. Field-for-field equal to
// the JSON form by construction.
inline std::string to_csv(const nlohmann::json& report) {
    std::vector<std::pair<std::string, std::string>> kv;
    detail::flatten_json(report, "", kv);
    std::string out = "key,value\n";
    for (const auto& [k, v] : kv) out += detail::csv_escape(k) + "," + detail::csv_escape(v) + "\n";
    return out;
}

inline std::string render_report(const nlohmann::json& report, ReportFormat format) {
    if (format == ReportFormat::csv) return to_csv(report);
    return report.dump(2) + "\n";
}

inline void write_report(const std::string& path, const nlohmann::json& report,
                         ReportFormat format) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("report: cannot write " + path);
    const std::string body = render_report(report, format);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
}

}  // namespace tps
