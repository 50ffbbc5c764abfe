#pragma once

#include "mtlab/attackkit/attack.hpp"
#include "mtlab/mtlnet/train.hpp"

#include <span>
#include <string>
#include <vector>

namespace mtlab::advtrain {

// Adversarial training: each mini-batch is replaced by inner-attack examples
// before the gradient step.
struct FatConfig {
    // Inner attack; must use the plain iterative driver. n_iter is the step
    // cap K; K = 0 degenerates to clean training.
    attackkit::AttackConfig inner;

    // Optional friendliness rule: once the summed relative loss change first
    // exceeds `crossing`, run `tau` more steps and stop early.
    bool early_stop = false;
    int tau = 0;            // 1..K when early_stop is set
    double crossing = 0.0;  // loss-change level that counts as crossed

    mtlnet::TrainConfig train;

    void validate(int n_tasks) const;
};

// Inner loop of the adversarial trainer, exposed for direct testing: the
// perturbed inputs for one mini-batch under `cfg`. Reports the number of
// attack steps actually taken through `steps_taken` when given.
diffcore::Tensor friendly_adversarial_inputs(const mtlnet::BranchedModel& model,
                                             const mtlnet::LabeledBatch& chunk,
                                             const FatConfig& cfg, int* steps_taken = nullptr);

// Mini-batch SGD where every batch is first perturbed by the inner attack.
// Deterministic in cfg.train.seed; divergence is reported with the epoch.
mtlnet::TrainTrace fat_train(mtlnet::BranchedModel& model, const mtlnet::LabeledBatch& train,
                             const FatConfig& cfg);

// One cell of the defense-by-attack grid.
struct RobustnessRecord {
    std::string defense; // model label: "clean" or the combiner it trained against
    std::string attack;  // combiner label of the evaluation attack
    double arp = 0.0;    // relative performance drop under this attack, own-clean baseline
    double clean_cost = 0.0; // clean-performance drop vs the reference model (row constant)
};

struct DefenseEntry {
    std::string label;
    const mtlnet::BranchedModel* model = nullptr;
};

struct RobustnessMatrix {
    std::vector<std::string> defenses; // row order
    std::vector<std::string> attacks;  // column order
    std::vector<RobustnessRecord> records; // row-major, defenses x attacks

    const RobustnessRecord& at(std::size_t row, std::size_t col) const;
    std::string to_csv() const; // defense,clean_cost,<attack columns...>
};

// Attacks every defense model with every attack config on the same test set.
// defenses[0] is the reference model whose clean metrics define clean_cost.
// Attack columns are labeled by combiner; labels must end up distinct.
RobustnessMatrix robust_eval(std::span<const DefenseEntry> defenses,
                             const mtlnet::LabeledBatch& test,
                             std::span<const attackkit::AttackConfig> attacks);

} // namespace mtlab::advtrain
