#pragma once

#include "mtlab/labcli/config.hpp"
#include "mtlab/labcli/records.hpp"

#include <filesystem>
#include <string>

namespace mtlab::labcli {

// Layout of one run directory: everything lives under <out>/<config hash>.
struct RunPaths {
    std::filesystem::path root;

    static RunPaths for_config(const ExperimentConfig& cfg);

    std::filesystem::path models_dir() const { return root / "models"; }
    std::filesystem::path tables_dir() const { return root / "tables"; }
    std::filesystem::path plots_dir() const { return root / "plots"; }
    std::filesystem::path records_file() const { return root / "records.json"; }
    std::filesystem::path model_file(const std::string& name, std::uint64_t seed) const;
    std::filesystem::path robust_model_file(const std::string& combiner,
                                            std::uint64_t seed) const;
};

// Subcommand bodies. Each validates the config, works under the run
// directory, writes its outputs, and reports progress on `log` when given.
// All of them are deterministic functions of the config.

// Trains every layout x seed model and writes one checkpoint each.
// Existing checkpoints are kept (resume), so reruns are idempotent.
int run_train(const ExperimentConfig& cfg, std::ostream* log);

// Evaluates the attack grid against the trained checkpoints; fills
// records.json and tables/attack_arp.csv. Fails if a checkpoint is missing.
int run_attack(const ExperimentConfig& cfg, std::ostream* log, int jobs);

// Aggregates the grid into budget-vs-damage curves: one table and one plot
// per driver, one curve per combiner.
int run_sweep(const ExperimentConfig& cfg, std::ostream* log, int jobs);

// Sharing-level diagnosis: transferability per single-task attack with rank
// correlations, plus gradient-dominance and perturbation-alignment tables.
int run_diagnose(const ExperimentConfig& cfg, std::ostream* log, int jobs);

// Adversarial training over the defense grid plus the defense-by-attack
// robustness matrix, per training seed and averaged.
int run_advtrain(const ExperimentConfig& cfg, std::ostream* log);

// Re-reads records.json and the emitted tables, checks that every stored
// cell is internally consistent, and writes tables/report.md.
int run_report(const ExperimentConfig& cfg, std::ostream* log);

} // namespace mtlab::labcli
