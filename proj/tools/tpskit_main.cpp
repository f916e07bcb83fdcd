// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
//
// tpskit CLI: forward | flops | compare | reverse | robustness
// Exit codes: 0 success, 1 runtime invariant violation, 2 config/IO error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tpskit/commands.hpp"

namespace {

struct CliOptions {
    std::string config_path;
    std::string weights_path;
    std::string out_path;
    std::string format;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int trials = -1;
    int threads = -1;
    tps::ForwardExtras extras;
};

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_path, "run configuration JSON")->required();
    cmd->add_option("--weights", opt.weights_path, "weight fixture manifest");
    cmd->add_option("--seed", opt.seed, "base seed; re-derives all sub-seeds")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    cmd->add_option("--out", opt.out_path, "report output path");
    cmd->add_option("--format", opt.format, "report format: json|csv")
        ->check(CLI::IsMember({"json", "csv"}));
}

tps::RunConfig resolve_config(const CliOptions& opt) {
    tps::RunConfig cfg = tps::load_run_config(opt.config_path);
    if (!opt.weights_path.empty()) cfg.weights_path = opt.weights_path;
    if (opt.seed_set) {
        cfg.base_seed = opt.seed;
        if (cfg.input.kind == tps::InputSpec::Kind::random)
            cfg.input.seed = tps::derive_seed(cfg.base_seed, 1);
        cfg.weights_seed = tps::derive_seed(cfg.base_seed, 2);
        cfg.schedule.rng_seed = tps::derive_seed(cfg.base_seed, 3);
        cfg.robustness_seed = tps::derive_seed(cfg.base_seed, 4);
    }
    if (!opt.out_path.empty()) cfg.out_path = opt.out_path;
    if (!opt.format.empty())
        cfg.format = opt.format == "csv" ? tps::ReportFormat::csv : tps::ReportFormat::json;
    if (opt.trials > 0) cfg.trials = opt.trials;
    if (opt.threads > 0) cfg.threads = opt.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tpskit: token pruning & squeezing toolkit for vision transformers"};
    app.require_subcommand(1);
    CliOptions opt;

    CLI::App* forward = app.add_subcommand("forward", "run one forward pass, emit logits + trace");
    add_common_flags(forward, opt);
    forward->add_option("--save-weights", opt.extras.save_weights_path,
                        "also write the resolved weight fixture here");
    forward->add_option("--save-input", opt.extras.save_input_path,
                        "also write the resolved input fixture here");

    CLI::App* flops = app.add_subcommand("flops", "analytical MAC cost of the configured model");
    add_common_flags(flops, opt);

    CLI::App* compare =
        app.add_subcommand("compare", "vanilla/prune/reorganize/tps on identical inputs");
    add_common_flags(compare, opt);

    CLI::App* reverse = app.add_subcommand("reverse", "original vs reversed first-stage policy");
    add_common_flags(reverse, opt);

    CLI::App* robustness = app.add_subcommand("robustness", "random-policy divergence over trials");
    add_common_flags(robustness, opt);
    robustness->add_option("--trials", opt.trials, "number of random-policy trials");
    robustness->add_option("--threads", opt.threads, "trial parallelism (report-invariant)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const tps::RunConfig cfg = resolve_config(opt);
        const nlohmann::json report = tps::run_command(command, cfg, opt.extras);
        tps::write_report(cfg.out_path, report, cfg.format);
        std::cout << command << ": report written to " << cfg.out_path << "\n";
        return 0;
    } catch (const tps::InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return 1;
    } catch (const tps::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const tps::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const tps::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
