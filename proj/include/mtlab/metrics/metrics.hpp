#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mtlab::metrics {

struct MetricValue {
    std::string name;
    bool higher_better = false;
    double value = 0.0;
};

struct TaskMetrics {
    int task_id = 0;
    std::vector<MetricValue> values;
};

// Per-task metric values for one model on one batch.
using MetricSnapshot = std::vector<TaskMetrics>;

nlohmann::json snapshot_to_json(const MetricSnapshot&);
MetricSnapshot snapshot_from_json(const nlohmann::json&);

// Mean relative accuracy change of an attacked model against a baseline:
// (1/N) sum_i (attacked_i - baseline_i) / baseline_i. Negative means the
// attacked model lost accuracy. Throws if any baseline entry is zero.
double adversarial_relative_accuracy(std::span<const double> attacked,
                                     std::span<const double> baseline);

struct ArpResult {
    double overall = 0.0;          // mean of per-task values
    std::vector<double> per_task;  // percent degradation per task, sign-adjusted
};

// Percent performance degradation from `clean` to `attacked`, averaged first
// over each task's metrics (sign-flipped so that "worse" is always positive),
// then over tasks. Both snapshots must list the same tasks and metrics.
// Throws if a clean metric value is zero (named in the message).
ArpResult adversarial_relative_performance(const MetricSnapshot& clean,
                                           const MetricSnapshot& attacked);

// sum_i (current_i - initial_i) / initial_i  -- the attack objective used
// inside iterative drivers (initial values must be positive; callers floor
// losses before passing them here).
double relative_loss_change_sum(std::span<const double> initial,
                                std::span<const double> current);

// Same quantity averaged over tasks, as reported in result tables.
double relative_loss_change_mean(std::span<const double> initial,
                                 std::span<const double> current);

struct TransferabilityReport {
    int attacked_task = -1;
    std::vector<double> per_task_arp; // context: the full ARP vector
    double raw = 0.0;                 // mean of off-task / attacked-task ratios
    double value = 0.0;               // raw clamped below at zero
};

// Mean ratio of collateral damage: (1/(n-1)) sum_{j != attacked} arp_j / arp_x.
// Throws std::domain_error when the attacked task's own ARP is zero.
TransferabilityReport transferability(std::span<const double> per_task_arp, int attacked_task);

// Spearman rank correlation with average ranks for ties; nullopt when either
// side is constant (the correlation is undefined there).
std::optional<double> spearman_rank_correlation(std::span<const double> xs,
                                                std::span<const double> ys);

} // namespace mtlab::metrics
