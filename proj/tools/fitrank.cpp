#include "fitrank/errors.hpp"
#include "fitrank/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

// exit codes: 0 ok, 1 data error, 2 convergence/verification, 3 config
int run(int argc, char** argv) {
    CLI::App app{"University competitiveness rankings and funding-shock analysis"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string period;
    std::string funder;
    std::string level;
    app.add_option("--config", config_path, "Run configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--out", out_override, "Override the configured output directory");

    CLI::App* ingest = app.add_subcommand("ingest", "Load grants, allocate, write rejects");
    CLI::App* rank = app.add_subcommand("rank", "Matrices, fitness scores and rankings");
    rank->add_option("--period", period, "Only this named period");
    rank->add_option("--level", level, "overall or council (default both)");
    rank->add_option("--funder", funder, "Only this funder at council level");
    CLI::App* dynamics =
        app.add_subcommand("dynamics", "Kendall tau and rank deltas across periods");
    CLI::App* panel = app.add_subcommand("panel", "Balanced regression panel + descriptives");
    CLI::App* regress = app.add_subcommand("regress", "Fit the configured models");
    CLI::App* report = app.add_subcommand("report", "Plot-ready figure data");
    CLI::App* synthcmd = app.add_subcommand("synth", "Emit a synthetic grants fixture");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    try {
        fitrank::RunConfig config = fitrank::load_config(config_path);
        if (!out_override.empty()) config.output_dir = out_override;

        if (ingest->parsed()) fitrank::cmd_ingest(config);
        else if (rank->parsed()) fitrank::cmd_rank(config, period, level, funder);
        else if (dynamics->parsed()) fitrank::cmd_dynamics(config);
        else if (panel->parsed()) fitrank::cmd_panel(config);
        else if (regress->parsed()) fitrank::cmd_regress(config);
        else if (report->parsed()) fitrank::cmd_report(config);
        else if (synthcmd->parsed()) fitrank::cmd_synth(config);
        return 0;
    } catch (const fitrank::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 3;
    } catch (const fitrank::ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << '\n';
        return 2;
    } catch (const fitrank::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) { return run(argc, argv); }
