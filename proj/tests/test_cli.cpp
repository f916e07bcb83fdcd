// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tpskit/commands.hpp"
#include "tpskit/report.hpp"

using namespace tps;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("tpskit_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TPSKIT_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream f(p);
    f << body;
}

nlohmann::json toy_config_json() {
    return nlohmann::json{
        {"model",
         {{"image_size", 32}, {"patch_size", 8}, {"embed_dim", 16}, {"depth", 4},
          {"num_heads", 2}, {"num_classes", 7}}},
        {"schedule", {{"locations", {2, 4}}, {"keep_ratio", 0.5}, {"variant", "etps"}}},
        {"mode", "tps"},
        {"input", {{"kind", "random"}, {"batch", 2}}},
        {"seed", 11}};
}

RunConfig toy_config() { return parse_run_config(toy_config_json()); }

}  // namespace

TEST(CliBinary, ForwardReportIsByteIdenticalAcrossRuns) {
    const fs::path dir = scratch_dir("fwd_det");
    write_file(dir / "cfg.json", toy_config_json().dump());
    const std::string base = " forward --config " + (dir / "cfg.json").string();
    ASSERT_EQ(run_cli(base + " --out " + (dir / "a.json").string()), 0);
    ASSERT_EQ(run_cli(base + " --out " + (dir / "b.json").string()), 0);
    const std::string a = slurp(dir / "a.json");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "b.json"));
}

TEST(CliBinary, MissingWeightsFileExitsTwo) {
    const fs::path dir = scratch_dir("missing_w");
    write_file(dir / "cfg.json", toy_config_json().dump());
    EXPECT_EQ(run_cli("forward --config " + (dir / "cfg.json").string() +
                      " --weights /no/such/weights.json --out " + (dir / "r.json").string()),
              2);
}

TEST(CliBinary, InvalidConfigExitsTwo) {
    const fs::path dir = scratch_dir("bad_cfg");
    write_file(dir / "cfg.json", "{ not json");
    EXPECT_EQ(run_cli("forward --config " + (dir / "cfg.json").string()), 2);
    write_file(dir / "cfg2.json", R"({"mode": "warp"})");
    EXPECT_EQ(run_cli("forward --config " + (dir / "cfg2.json").string()), 2);
    EXPECT_EQ(run_cli("forward"), 2);  // --config required
}

TEST(CliBinary, SeedFlagControlsRun) {
    const fs::path dir = scratch_dir("seed_flag");
    write_file(dir / "cfg.json", toy_config_json().dump());
    const std::string base = " forward --config " + (dir / "cfg.json").string();
    ASSERT_EQ(run_cli(base + " --seed 5 --out " + (dir / "s5a.json").string()), 0);
    ASSERT_EQ(run_cli(base + " --seed 5 --out " + (dir / "s5b.json").string()), 0);
    ASSERT_EQ(run_cli(base + " --seed 6 --out " + (dir / "s6.json").string()), 0);
    EXPECT_EQ(slurp(dir / "s5a.json"), slurp(dir / "s5b.json"));
    EXPECT_NE(slurp(dir / "s5a.json"), slurp(dir / "s6.json"));
}

TEST(CliBinary, FlopsPresetMatchesPublishedTotal) {
    const fs::path dir = scratch_dir("flops");
    write_file(dir / "cfg.json",
               R"({"model": "deit-small", "mode": "vanilla", "seed": 1})");
    ASSERT_EQ(run_cli("flops --config " + (dir / "cfg.json").string() + " --out " +
                      (dir / "r.json").string()),
              0);
    const nlohmann::json r = nlohmann::json::parse(slurp(dir / "r.json"));
    EXPECT_NEAR(r["result"]["total_gmacs"].get<double>(), 4.6, 4.6 * 0.02);
}

TEST(CliBinary, SaveWeightsRoundTripsThroughLoad) {
    const fs::path dir = scratch_dir("save_w");
    write_file(dir / "cfg.json", toy_config_json().dump());
    const std::string wpath = (dir / "weights.json").string();
    ASSERT_EQ(run_cli("forward --config " + (dir / "cfg.json").string() + " --save-weights " +
                      wpath + " --out " + (dir / "a.json").string()),
              0);
    // a rerun loading the saved fixture reproduces the generated-weights run
    ASSERT_EQ(run_cli("forward --config " + (dir / "cfg.json").string() + " --weights " + wpath +
                      " --out " + (dir / "b.json").string()),
              0);
    const nlohmann::json a = nlohmann::json::parse(slurp(dir / "a.json"));
    const nlohmann::json b = nlohmann::json::parse(slurp(dir / "b.json"));
    EXPECT_EQ(a["result"]["logits"], b["result"]["logits"]);
}

TEST(Report, CsvAndJsonAgreeFieldForField) {
    RunConfig cfg = toy_config();
    const nlohmann::json report = cmd_flops(cfg);
    const std::string csv = to_csv(report);

    std::vector<std::pair<std::string, std::string>> flat;
    tps::detail::flatten_json(report, "", flat);
    ASSERT_FALSE(flat.empty());

    std::map<std::string, std::string> from_csv;
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "key,value");
    while (std::getline(lines, line)) {
        const auto comma = line.find(',');
        ASSERT_NE(comma, std::string::npos);
        from_csv[line.substr(0, comma)] = line.substr(comma + 1);
    }
    EXPECT_EQ(from_csv.size(), flat.size());
    for (const auto& [k, v] : flat) {
        ASSERT_TRUE(from_csv.count(k)) << "missing key " << k;
        EXPECT_EQ(from_csv[k], v) << "key " << k;
    }
}

TEST(Commands, ReportEnvelopeCarriesHashSeedsVersion) {
    const RunConfig cfg = toy_config();
    const nlohmann::json r = cmd_flops(cfg);
    EXPECT_EQ(r["tool"], "tpskit");
    EXPECT_EQ(r["version"], kVersion);
    EXPECT_TRUE(r.contains("config_hash"));
    EXPECT_TRUE(r["seeds"].contains("base"));
    EXPECT_TRUE(r["seeds"].contains("weights"));
    EXPECT_TRUE(r["seeds"].contains("schedule"));
}

TEST(Commands, CompareFullKeepAgreesAcrossModes) {
    RunConfig cfg = toy_config();
    cfg.schedule.keep_ratio = 1.0f;
    const nlohmann::json r = cmd_compare(cfg);
    for (const char* mode : {"prune", "reorganize", "tps"}) {
        EXPECT_LE(r["result"]["modes"][mode]["l2_vs_vanilla_mean"].get<double>(), 1e-6);
        EXPECT_EQ(r["result"]["modes"][mode]["top1_agreement_vs_vanilla"].get<double>(), 1.0);
    }
}

TEST(Commands, CompareModesDivergeWhenPruningIsReal) {
    RunConfig cfg = toy_config();
    const nlohmann::json r = cmd_compare(cfg);
    // with a nonempty pruned set the squeeze path and the drop path differ
    EXPECT_GT(r["result"]["pairwise_l2_mean"]["prune_vs_tps"].get<double>(), 0.0);
    EXPECT_GT(r["result"]["modes"]["prune"]["l2_vs_vanilla_mean"].get<double>(), 0.0);
    // token bookkeeping: reorganize carries one extra aggregate token
    const auto tps_counts = r["result"]["modes"]["tps"]["token_counts"].get<std::vector<int>>();
    const auto reorg_counts =
        r["result"]["modes"]["reorganize"]["token_counts"].get<std::vector<int>>();
    EXPECT_EQ(tps_counts[0] + 1, reorg_counts[0]);
}

TEST(Commands, ReverseEmitsBonusWithLabels) {
    const fs::path dir = scratch_dir("reverse");
    RunConfig cfg = toy_config();
    const ImageBatch img = fixture_images(4, 32, 32, 55);
    save_input((dir / "in.json").string(), img, std::vector<int>{0, 1, 2, 3});
    cfg.input.kind = InputSpec::Kind::fixture;
    cfg.input.path = (dir / "in.json").string();

    const nlohmann::json r = cmd_reverse(cfg);
    ASSERT_TRUE(r["result"].contains("accuracy"));
    const auto orig = r["result"]["original"]["predictions"].get<std::vector<int>>();
    const auto rev = r["result"]["reversed"]["predictions"].get<std::vector<int>>();
    const std::vector<int> labels = {0, 1, 2, 3};
    const auto [ao, ar, bonus] = bonus_accuracy(orig, rev, labels);
    EXPECT_DOUBLE_EQ(r["result"]["accuracy"]["original"].get<double>(), ao);
    EXPECT_DOUBLE_EQ(r["result"]["accuracy"]["reversed"].get<double>(), ar);
    EXPECT_DOUBLE_EQ(r["result"]["accuracy"]["bonus"].get<double>(), bonus);
}

TEST(Commands, ReverseWithoutLabelsOmitsBonus) {
    RunConfig cfg = toy_config();
    const nlohmann::json r = cmd_reverse(cfg);
    EXPECT_FALSE(r["result"].contains("accuracy"));
}

TEST(Commands, ReverseRequiresStages) {
    RunConfig cfg = toy_config();
    cfg.schedule.locations.clear();
    EXPECT_THROW(cmd_reverse(cfg), ConfigError);
}

TEST(Commands, RobustnessFullKeepHasZeroDivergence) {
    RunConfig cfg = toy_config();
    cfg.schedule.keep_ratio = 1.0f;
    cfg.trials = 2;
    const nlohmann::json r = cmd_robustness(cfg);
    for (const char* mode : {"prune", "reorganize", "tps"}) {
        EXPECT_EQ(r["result"]["modes"][mode]["l2_mean"].get<double>(), 0.0);
        EXPECT_EQ(r["result"]["modes"][mode]["top1_agreement_mean"].get<double>(), 1.0);
    }
}

TEST(Commands, RobustnessZeroDivergenceWhenRandomPolicyMatchesScored) {
    // single stage over 16 patches, keep 12; hunt for a trial seed whose
    // random partition coincides with the scored one, then divergence is 0
    RunConfig cfg = toy_config();
    cfg.schedule.locations = {2};
    cfg.schedule.keep_ratio = 0.75f;
    cfg.mode = Mode::prune;
    cfg.trials = 1;

    const ModelWeights w = fixture_weights(cfg.model, 1, cfg.weights_seed);
    const ImageBatch img =
        fixture_images(cfg.input.batch, cfg.model.image_size, cfg.model.image_size, cfg.input.seed);
    ForwardOptions opt;
    opt.mode = Mode::prune;
    const TokenPartition scored =
        model_forward(img, cfg.model, w, cfg.schedule, opt).trace.stages[0].items[0].partition;

    bool found = false;
    for (std::uint64_t seed = 0; seed < 20000 && !found; ++seed) {
        const TokenPartition candidate =
            random_policy(17, cfg.schedule.keep_ratio, derive_seed(seed, 0), 0);
        if (candidate.reserved == scored.reserved) {
            cfg.robustness_seed = seed;  // trial 0 uses exactly this seed
            found = true;
        }
    }
    ASSERT_TRUE(found) << "no coinciding seed in search budget";
    // batch items share the partition only if their scored policies agree;
    // use batch 1 to pin it
    cfg.input.batch = 1;
    const nlohmann::json r = cmd_robustness(cfg);
    EXPECT_EQ(r["result"]["modes"]["prune"]["l2_mean"].get<double>(), 0.0);
}

TEST(Commands, RobustnessReportInvariantToThreadCount) {
    RunConfig cfg = toy_config();
    cfg.trials = 5;
    cfg.threads = 1;
    const std::string serial = render_report(cmd_robustness(cfg), ReportFormat::json);
    cfg.threads = 4;
    const std::string parallel = render_report(cmd_robustness(cfg), ReportFormat::json);
    EXPECT_EQ(serial, parallel);
}

TEST(Commands, ForwardTraceReportsFloorScheduleCounts) {
    // DeiT token geometry at narrow width: 196 patches at rho=0.7 give
    // 137 -> 95 -> 66 kept patches, so the trace shows 138, 96, 67 tokens
    nlohmann::json j = {
        {"model",
         {{"image_size", 224}, {"patch_size", 16}, {"embed_dim", 16}, {"depth", 12},
          {"num_heads", 2}, {"num_classes", 5}}},
        {"schedule", "4-7-10@0.7"},
        {"mode", "tps"},
        {"input", {{"kind", "random"}, {"batch", 1}}},
        {"seed", 17}};
    const nlohmann::json r = cmd_forward(parse_run_config(j));
    EXPECT_EQ(r["result"]["token_counts"].get<std::vector<int>>(),
              (std::vector<int>{138, 96, 67}));
    const auto& stages = r["result"]["trace"]["stages"];
    ASSERT_EQ(stages.size(), 3u);
    EXPECT_EQ(stages[0]["tokens_before"].get<int>(), 197);
    EXPECT_EQ(stages[2]["tokens_after"].get<int>(), 67);
}

TEST(Config, SchedulePresetString) {
    nlohmann::json j = toy_config_json();
    j["schedule"] = "2-4@0.5";
    const RunConfig cfg = parse_run_config(j);
    EXPECT_EQ(cfg.schedule.locations, (std::vector<int>{2, 4}));
    EXPECT_FLOAT_EQ(cfg.schedule.keep_ratio, 0.5f);
    EXPECT_EQ(cfg.schedule.variant, Variant::etps);

    j["schedule"] = "4-7-10";
    EXPECT_THROW(parse_run_config(j), ConfigError);
    j["schedule"] = "4-x@0.5";
    EXPECT_THROW(parse_run_config(j), ConfigError);
}

TEST(Config, DefaultOutPathFollowsFormat) {
    nlohmann::json j = toy_config_json();
    EXPECT_EQ(parse_run_config(j).out_path, "report.json");
    j["format"] = "csv";
    EXPECT_EQ(parse_run_config(j).out_path, "report.csv");
}

TEST(Commands, CorruptPartitionTripsInvariantCheck) {
    TokenPartition bad;
    bad.reserved = {0, 1, 1};  // duplicate index
    bad.pruned = {2};
    EXPECT_THROW(tps::detail::verify_partition(bad, 4), InvariantError);
    TokenPartition no_class;
    no_class.reserved = {1, 2};
    no_class.pruned = {0, 3};
    EXPECT_THROW(tps::detail::verify_partition(no_class, 4), InvariantError);
    TokenPartition wrong_count;
    wrong_count.reserved = {0, 1};
    wrong_count.pruned = {2};
    EXPECT_THROW(tps::detail::verify_partition(wrong_count, 5), InvariantError);
}

TEST(Commands, FlopsVanillaModeIgnoresSchedule) {
    RunConfig cfg = toy_config();
    cfg.mode = Mode::vanilla;
    const nlohmann::json vanilla = cmd_flops(cfg);
    RunConfig bare = toy_config();
    bare.mode = Mode::vanilla;
    bare.schedule.locations.clear();
    const nlohmann::json no_stages = cmd_flops(bare);
    EXPECT_EQ(vanilla["result"]["total_macs"], no_stages["result"]["total_macs"]);
}
