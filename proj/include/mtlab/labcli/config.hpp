#pragma once

#include "mtlab/attackkit/attack.hpp"
#include "mtlab/mtlnet/dataset.hpp"
#include "mtlab/mtlnet/layout.hpp"
#include "mtlab/mtlnet/train.hpp"

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

namespace mtlab::labcli {

inline constexpr const char* kToolVersion = "0.1.0";

// A perturbation bound with the spelling it had in the config ("8/255" or a
// plain number); the text names the budget in ids, tables, and plots.
struct EpsilonSpec {
    double value = 0.0;
    std::string text;

    static EpsilonSpec parse(const nlohmann::json& j); // number or "k/255" string
    nlohmann::json to_json() const;                    // the text form
};

// Optional adversarial-training stage: which combiners to defend against and
// how the robust models are trained.
struct FatSpec {
    bool enabled = false;
    std::vector<attackkit::GradientCombiner> defenses; // one robust model each
    int inner_steps = 10;
    EpsilonSpec epsilon;    // training and evaluation budget
    int eval_iters = 10;    // evaluation attack steps
    int epochs = 40;        // robust training epochs (lr etc. from train spec)
    std::string model_name; // which grid layout to harden; empty = most shared
};

// Attack settings for the sharing/transferability diagnosis.
struct DiagnoseSpec {
    attackkit::Driver driver = attackkit::Driver::Pgd;
    EpsilonSpec epsilon;
    int n_iter = 20;
};

// Everything one experiment run depends on. A config file plus the seeds in
// it fully determine every byte of output.
struct ExperimentConfig {
    mtlnet::DatasetConfig dataset;

    std::vector<mtlnet::Layout> layouts;
    std::vector<std::string> layout_names; // parallel to layouts, unique
    std::vector<int> widths;

    mtlnet::TrainConfig train;              // seed field unused; see train_seeds
    std::vector<std::uint64_t> train_seeds; // one trained model per layout x seed

    std::vector<attackkit::Driver> drivers;
    std::vector<attackkit::GradientCombiner> combiners;
    std::vector<EpsilonSpec> epsilons; // non-negative, strictly increasing
    int attack_iters = 20;

    DiagnoseSpec diagnose;
    FatSpec fat;

    std::string out_dir = "runs";

    void validate() const;

    // Canonical form: defaults filled in, keys sorted by the writer. The
    // config hash is computed over this dump, so key order in the source
    // file cannot change it.
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    std::string hash() const; // 16 hex digits of the canonical dump
};

std::uint64_t fnv1a64(std::string_view bytes);

} // namespace mtlab::labcli
