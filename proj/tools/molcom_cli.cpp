// molcom: batch experiments for the mobile molecular channel.
//
//   molcom <cir|received-signal|distance-pdf|ber|selftest> [--config FILE]
//          [--seed N] [--output DIR] [--workers N] [--set section.key=value ...]
//
// Exit status: 0 success, 1 invalid configuration or arguments, 2 numerical failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "molcom/harness/commands.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_numerical = 2;

int run(molcom::harness::Command cmd, const std::string& config_path, const std::vector<std::string>& overrides,
        std::optional<std::uint64_t> seed, std::optional<std::string> output, std::optional<int> workers, bool quiet)
{
    using namespace molcom::harness;
    const auto started = std::chrono::steady_clock::now();
    RunInfo info;
    info.command = to_string(cmd);
    info.started_utc = utc_now();
    info.overrides = overrides;

    ExperimentConfig cfg;
    if (!config_path.empty()) {
        const std::string bytes = read_file_bytes(config_path);
        info.config_path = config_path;
        info.config_sha256 = sha256_hex(bytes);
        cfg = parse_config_text(bytes, config_path, overrides);
    } else if (cmd != Command::selftest) {
        throw ConfigError("--config is required for " + info.command);
    } else if (!overrides.empty()) {
        throw ConfigError("--set needs --config");
    }
    if (seed) cfg.seed = *seed;
    if (output) cfg.output_dir = *output;

    RunContext ctx;
    ctx.workers = workers ? *workers : molcom::default_workers(cfg.workers);
    if (!quiet) ctx.progress = [](std::string_view msg) { std::cerr << "molcom: " << msg << '\n'; };
    info.seed = cfg.seed;
    info.workers = ctx.workers;
    validate_for(cmd, cfg, ctx);

    ArtifactSet set;
    bool ok = true;
    switch (cmd) {
    case Command::cir: set = cmd_cir(cfg, ctx); break;
    case Command::received_signal: set = cmd_received_signal(cfg, ctx); break;
    case Command::distance_pdf: set = cmd_distance_pdf(cfg, ctx); break;
    case Command::ber: set = cmd_ber(cfg, ctx); break;
    case Command::selftest: {
        const auto checks = run_selftest(ctx);
        for (const auto& c : checks) {
            std::printf("%s %s: %.17g (reference %.17g, tolerance %.3g)\n", c.pass() ? "PASS" : "FAIL",
                        c.name.c_str(), c.value, c.reference, c.tolerance);
            ok = ok && c.pass();
        }
        // Without an explicit destination selftest only prints.
        if (!output && config_path.empty()) return ok ? exit_ok : exit_numerical;
        set = cmd_selftest(checks);
        break;
    }
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    for (const auto& a : set.commit(cfg.output_dir, info, elapsed))
        if (!quiet) std::cerr << "molcom: wrote " << (cfg.output_dir / a.file).string() << " (" << a.rows << " rows)\n";
    return ok ? exit_ok : exit_numerical;
}

}  // namespace

int main(int argc, char** argv)
{
    using molcom::harness::Command;
    CLI::App app{"Mobile molecular communication channel experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
    std::optional<int> workers;
    bool quiet = false;
    app.add_option("-c,--config", config_path, "YAML experiment config")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override a config key, e.g. --set physical.num_molecules=1000");
    app.add_option("--seed", seed, "Master seed (overrides the config)");
    app.add_option("-o,--output", output, "Output directory (overrides the config)");
    app.add_option("-w,--workers", workers, "Worker threads (overrides MOLCOM_WORKERS and the config)")
        ->check(CLI::Range(1, 4096));
    app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

    const std::vector<std::pair<Command, const char*>> commands{
        {Command::cir, "Channel impulse response per mobility case"},
        {Command::received_signal, "Analytical and simulated received signal"},
        {Command::distance_pdf, "Distance law against a reflected-walk histogram"},
        {Command::ber, "Expected bit error probability against the detection threshold"},
        {Command::selftest, "Built-in reference checks"}};
    std::vector<CLI::App*> subs;
    for (const auto& [cmd, help] : commands) {
        auto* sub = app.add_subcommand(molcom::harness::to_string(cmd), help);
        sub->fallthrough();
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }

    Command cmd = Command::selftest;
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed()) cmd = commands[i].first;

    try {
        return run(cmd, config_path, overrides, seed, output, workers, quiet);
    } catch (const molcom::InvalidConfiguration& e) {
        std::cerr << "molcom: invalid configuration: " << e.what() << '\n';
        return exit_invalid;
    } catch (const molcom::InvalidArgument& e) {
        std::cerr << "molcom: invalid argument: " << e.what() << '\n';
        return exit_invalid;
    } catch (const molcom::DegenerateLaw& e) {
        std::cerr << "molcom: invalid configuration: " << e.what() << '\n';
        return exit_invalid;
    } catch (const molcom::harness::ArtifactError& e) {
        std::cerr << "molcom: cannot write artifacts: " << e.what() << '\n';
        return exit_invalid;
    } catch (const molcom::NumericalFailure& e) {
        std::cerr << "molcom: numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "molcom: error: " << e.what() << '\n';
        return exit_numerical;
    }
}
