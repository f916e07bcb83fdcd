// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tpskit/model.hpp"
#include "tpskit/policy.hpp"
#include "tpskit/vit.hpp"

namespace tps {

enum class ReportFormat { json, csv };

struct InputSpec {
    enum class Kind { random, fixture };
    Kind kind = Kind::random;
    int batch = 2;
    std::uint64_t seed = 0;  // random kind
    std::string path;        // fixture kind
};

// One CLI run: model geometry, schedule, mode, input source, seeds, output.
struct RunConfig {
    ModelConfig model;
    std::string model_preset;  // empty when the geometry is custom
    PruneSchedule schedule;
    Mode mode = Mode::tps;
    InputSpec input;
    std::uint64_t base_seed = 0;
    std::uint64_t weights_seed = 0;
    std::uint64_t robustness_seed = 0;
    std::string weights_path;  // empty: deterministic seeded fixture
    std::string out_path = "report.json";
    ReportFormat format = ReportFormat::json;
    int trials = 100;  // robustness
    int threads = 1;   // robustness trial parallelism; not part of the config hash
};

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::vanilla: return "vanilla";
        case Mode::prune: return "prune";
        case Mode::reorganize: return "reorganize";
        case Mode::tps: return "tps";
    }
    return "?";
}

inline std::string to_string(Variant v) { return v == Variant::dtps ? "dtps" : "etps"; }

inline std::string to_string(SimilaritySource s) {
    return s == SimilaritySource::cosine ? "cosine" : "previous_attention";
}

inline std::string to_string(FeatureType f) {
    switch (f) {
        case FeatureType::full: return "full";
        case FeatureType::content: return "content";
        case FeatureType::position: return "position";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "vanilla") return Mode::vanilla;
    if (s == "prune") return Mode::prune;
    if (s == "reorganize") return Mode::reorganize;
    if (s == "tps") return Mode::tps;
    throw ConfigError("config: unknown mode '" + s + "'");
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "dtps") return Variant::dtps;
    if (s == "etps") return Variant::etps;
    throw ConfigError("config: unknown variant '" + s + "'");
}

inline SimilaritySource similarity_source_from_string(const std::string& s) {
    if (s == "cosine") return SimilaritySource::cosine;
    if (s == "previous_attention") return SimilaritySource::previous_attention;
    throw ConfigError("config: unknown similarity_source '" + s + "'");
}

inline FeatureType feature_type_from_string(const std::string& s) {
    if (s == "full") return FeatureType::full;
    if (s == "content") return FeatureType::content;
    if (s == "position") return FeatureType::position;
    throw ConfigError("config: unknown feature_type '" + s + "'");
}

// Published DeiT geometries, 224x224 input, patch 16.
inline ModelConfig model_preset(const std::string& name) {
    ModelConfig cfg;
    if (name == "deit-small") {
        cfg.embed_dim = 384;
        cfg.num_heads = 6;
    } else if (name == "deit-tiny") {
        cfg.embed_dim = 192;
        cfg.num_heads = 3;
    } else {
        throw ConfigError("config: unknown model preset '" + name + "'");
    }
    return cfg;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("model")) {
        if (j["model"].is_string()) {
            cfg.model_preset = j["model"].get<std::string>();
            cfg.model = model_preset(cfg.model_preset);
        } else {
            const nlohmann::json& m = j["model"];
            cfg.model.image_size = m.value("image_size", cfg.model.image_size);
            cfg.model.patch_size = m.value("patch_size", cfg.model.patch_size);
            cfg.model.embed_dim = m.value("embed_dim", cfg.model.embed_dim);
            cfg.model.depth = m.value("depth", cfg.model.depth);
            cfg.model.num_heads = m.value("num_heads", cfg.model.num_heads);
            cfg.model.mlp_ratio = m.value("mlp_ratio", cfg.model.mlp_ratio);
            cfg.model.num_classes = m.value("num_classes", cfg.model.num_classes);
        }
    }
    cfg.model.validate();

    cfg.base_seed = j.value("seed", 0ull);
    if (j.contains("schedule") && j["schedule"].is_string()) {
        // compact preset: "4-7-10@0.7" = locations {4,7,10}, keep ratio 0.7
        const std::string text = j["schedule"].get<std::string>();
        const auto at = text.find('@');
        if (at == std::string::npos)
            throw ConfigError("config: schedule preset '" + text + "' needs <locs>@<ratio>");
        std::istringstream locs(text.substr(0, at));
        std::string part;
        while (std::getline(locs, part, '-')) {
            try {
                cfg.schedule.locations.push_back(std::stoi(part));
            } catch (const std::exception&) {
                throw ConfigError("config: bad location '" + part + "' in schedule preset");
            }
        }
        try {
            cfg.schedule.keep_ratio = std::stof(text.substr(at + 1));
        } catch (const std::exception&) {
            throw ConfigError("config: bad keep ratio in schedule preset '" + text + "'");
        }
        cfg.schedule.rng_seed = derive_seed(cfg.base_seed, 3);
    } else if (j.contains("schedule")) {
        const nlohmann::json& s = j["schedule"];
        cfg.schedule.locations = s.value("locations", std::vector<int>{});
        cfg.schedule.keep_ratio = s.value("keep_ratio", 1.0f);
        cfg.schedule.variant = variant_from_string(s.value("variant", std::string("etps")));
        cfg.schedule.similarity_source =
            similarity_source_from_string(s.value("similarity_source", std::string("cosine")));
        cfg.schedule.feature_type =
            feature_type_from_string(s.value("feature_type", std::string("full")));
        cfg.schedule.rng_seed = s.contains("rng_seed") ? s["rng_seed"].get<std::uint64_t>()
                                                       : derive_seed(cfg.base_seed, 3);
    } else {
        cfg.schedule.rng_seed = derive_seed(cfg.base_seed, 3);
    }
    cfg.schedule.validate(cfg.model.depth);

    cfg.mode = mode_from_string(j.value("mode", std::string("tps")));

    if (j.contains("input")) {
        const nlohmann::json& in = j["input"];
        const std::string kind = in.value("kind", std::string("random"));
        if (kind == "random") {
            cfg.input.kind = InputSpec::Kind::random;
            cfg.input.batch = in.value("batch", 2);
            cfg.input.seed =
                in.contains("seed") ? in["seed"].get<std::uint64_t>() : derive_seed(cfg.base_seed, 1);
        } else if (kind == "fixture") {
            cfg.input.kind = InputSpec::Kind::fixture;
            if (!in.contains("path")) throw ConfigError("config: input fixture needs 'path'");
            cfg.input.path = in["path"].get<std::string>();
        } else {
            throw ConfigError("config: unknown input kind '" + kind + "'");
        }
    } else {
        cfg.input.seed = derive_seed(cfg.base_seed, 1);
    }
    if (cfg.input.kind == InputSpec::Kind::random && cfg.input.batch < 1)
        throw ConfigError("config: input batch must be >= 1");

    cfg.weights_seed = j.contains("weights_seed") ? j["weights_seed"].get<std::uint64_t>()
                                                  : derive_seed(cfg.base_seed, 2);
    cfg.robustness_seed = j.contains("robustness_seed")
                              ? j["robustness_seed"].get<std::uint64_t>()
                              : derive_seed(cfg.base_seed, 4);
    cfg.weights_path = j.value("weights", std::string());
    const std::string fmt = j.value("format", std::string("json"));
    if (fmt == "json")
        cfg.format = ReportFormat::json;
    else if (fmt == "csv")
        cfg.format = ReportFormat::csv;
    else
        throw ConfigError("config: unknown format '" + fmt + "'");
    cfg.out_path = j.value("out", "report." + fmt);
    cfg.trials = j.value("trials", 100);
    if (cfg.trials < 1) throw ConfigError("config: trials must be >= 1");
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    try {
        return parse_run_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
}

}  // namespace tps
