#include "mtlab/labcli/cli.hpp"

#include "mtlab/labcli/runner.hpp"
#include "mtlab/mtlnet/serialize.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>

namespace mtlab::labcli {

namespace {

void print_error(const std::string& stage, const std::string& what) {
    nlohmann::json err = {{"error", what}, {"stage", stage}};
    std::cerr << err.dump() << "\n";
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"desk-scale laboratory for attacks on branched multi-task models"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    int jobs = 1;
    app.add_option("--config", config_path, "experiment config file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    CLI::Option* seed_opt =
        app.add_option("--seed", seed_override, "override: use this single training seed");
    app.add_option("--out", out_override, "override the output directory");
    app.add_option("--jobs", jobs, "worker threads for grid cells")
        ->check(CLI::PositiveNumber);

    CLI::App* cmd_train = app.add_subcommand("train", "train the model grid");
    CLI::App* cmd_attack = app.add_subcommand("attack", "run the attack grid");
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "budget sweep tables and plots");
    CLI::App* cmd_diagnose =
        app.add_subcommand("diagnose", "transferability and gradient diagnostics");
    CLI::App* cmd_advtrain =
        app.add_subcommand("advtrain", "adversarial training and robustness matrix");
    CLI::App* cmd_report = app.add_subcommand("report", "verify records and write a summary");
    for (CLI::App* sub :
         {cmd_train, cmd_attack, cmd_sweep, cmd_diagnose, cmd_advtrain, cmd_report})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        print_error("command line", e.what());
        return e.get_exit_code();
    }

    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_json(mtlnet::load_json_file(config_path));
        if (*seed_opt) {
            cfg.dataset.seed = seed_override;
            cfg.train_seeds = {seed_override};
        }
        if (!out_override.empty())
            cfg.out_dir = out_override;
        cfg.validate();
    } catch (const std::exception& e) {
        print_error("config", e.what());
        return 1;
    }

    try {
        if (cmd_train->parsed())
            return run_train(cfg, &std::cout);
        if (cmd_attack->parsed())
            return run_attack(cfg, &std::cout, jobs);
        if (cmd_sweep->parsed())
            return run_sweep(cfg, &std::cout, jobs);
        if (cmd_diagnose->parsed())
            return run_diagnose(cfg, &std::cout, jobs);
        if (cmd_advtrain->parsed())
            return run_advtrain(cfg, &std::cout);
        if (cmd_report->parsed())
            return run_report(cfg, &std::cout);
    } catch (const std::exception& e) {
        print_error("run", e.what());
        return 1;
    }
    print_error("command line", "no subcommand selected");
    return 1;
}

} // namespace mtlab::labcli
