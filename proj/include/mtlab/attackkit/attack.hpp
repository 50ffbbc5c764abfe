#pragma once

#include "mtlab/attackkit/combiner.hpp"
#include "mtlab/mtlnet/model.hpp"

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <vector>

namespace mtlab::attackkit {

// An l_inf ball of radius epsilon around the clean input, intersected with
// the valid data range [lo, hi]. Epsilon is measured in raw input units.
struct PerturbationBudget {
    double epsilon = 0.0;
    double lo = 0.0;
    double hi = 1.0;

    void validate() const;
};

// Componentwise clamp of `candidate` into the budget around `origin`.
// Idempotent; the result always satisfies both constraints exactly.
diffcore::Tensor project(const diffcore::Tensor& candidate, const diffcore::Tensor& origin,
                         const PerturbationBudget& budget);

double max_abs_deviation(const diffcore::Tensor& a, const diffcore::Tensor& b);

enum class Driver { Fgsm, Pgd, Apgd };
const char* driver_name(Driver d);
Driver parse_driver(const std::string& s);

struct AttackConfig {
    Driver driver = Driver::Pgd;
    GradientCombiner combiner = GradientCombiner::total();
    PerturbationBudget budget;
    int n_iter = 20;
    double step_size = 0.0;       // 0 = driver default: fgsm eps, pgd eps/4, apgd 2*eps
    double momentum_alpha = 0.75; // apgd iterate mixing
    std::vector<int> checkpoints; // apgd step-size checks; empty = standard schedule
    bool random_start = false;    // pgd: start from a uniform point in the ball
    std::uint64_t seed = 0;       // random-start draws only

    static AttackConfig fgsm(GradientCombiner c, PerturbationBudget b);
    static AttackConfig pgd(GradientCombiner c, PerturbationBudget b, int n_iter = 20);
    static AttackConfig apgd(GradientCombiner c, PerturbationBudget b, int n_iter = 20);

    void validate(int n_tasks) const;
    double resolved_step() const;
    std::vector<int> resolved_checkpoints() const; // sorted, within [2, n_iter-1]
};

// Growth-capped checkpoint spacing for the step-size controller.
std::vector<int> apgd_checkpoint_schedule(int n_iter);

struct AttackStep {
    int index = 0;                  // 0 is the starting point
    std::vector<double> task_losses; // floored, at this iterate
    double objective = 0.0;          // sum of relative loss changes vs the start
    double step_size = 0.0;          // eta used to reach this iterate
    double dominance = 0.0;          // largest task share of total gradient mass
    double best_objective = 0.0;     // running maximum
    double max_deviation = 0.0;      // ||x - x_clean||_inf
    bool within_budget = true;
    bool halved = false;    // apgd: controller halved eta at this step
    bool restarted = false; // apgd: iterate was reset to the best point
};

struct AttackTrace {
    std::vector<AttackStep> steps;
    diffcore::Tensor x_adv;
    std::vector<double> initial_losses; // floored, clean point
    std::vector<double> final_losses;   // floored, at x_adv
    double final_objective = 0.0;       // sum form at x_adv
    double best_objective = 0.0;

    nlohmann::json to_json() const;
};

// Runs config.driver against one labeled batch. Losses are means over the
// batch; the perturbation is still per-example since gradients are.
AttackTrace run_attack(const mtlnet::BranchedModel& model, const mtlnet::LabeledBatch& batch,
                       const AttackConfig& config);

// The step-size controller behind the adaptive driver, separated for direct
// testing. Feed one objective comparison per step; ask at checkpoints.
class StepSizeController {
public:
    StepSizeController(double eta0, std::vector<int> checkpoints);

    void observe_step(int index, bool objective_increased);

    struct Decision {
        bool halve = false;
        bool low_success = false;   // under 75% of steps improved
        bool stagnated = false;     // no new best since last checkpoint, no halving then
    };
    // Call when `index` is a checkpoint, passing the best objective so far.
    Decision at_checkpoint(int index, double best_objective);

    double eta() const { return eta_; }
    bool is_checkpoint(int index) const;

private:
    double eta_;
    std::vector<int> checkpoints_;
    int successes_ = 0;
    int steps_ = 0;
    bool halved_at_last_ = true; // treat the start like a fresh halving
    double best_at_last_ = 0.0;
    bool first_ = true;
};

} // namespace mtlab::attackkit
