#pragma once

#include "mtlab/attackkit/attack.hpp"
#include "mtlab/diffcore/tensor.hpp"
#include "mtlab/mtlnet/model.hpp"

#include <optional>
#include <vector>

namespace mtlab::attackkit {

// Per-task input-gradient mass and how lopsided it is.
struct GradientDiagnostics {
    std::vector<double> l1_norms; // one per task, sum_k |g_i[k]|
    double dominance = 0.0;       // max norm / total norm, 0 when all norms vanish
};

GradientDiagnostics gradient_diagnostics(const std::vector<diffcore::Tensor>& per_task_grads);

// Shortcut used by the attack trace: dominance only.
double gradient_dominance_ratio(const std::vector<diffcore::Tensor>& per_task_grads);

// Cosine similarity between the perturbations produced by single-task attacks
// on task_a and task_b (same driver and budget, deltas flattened over the
// whole batch).  Empty when either perturbation is numerically zero.
std::optional<double> perturbation_alignment(const mtlnet::BranchedModel& model,
                                             const mtlnet::LabeledBatch& batch,
                                             const PerturbationBudget& budget, Driver driver,
                                             int task_a, int task_b, int n_iter = 20);

} // namespace mtlab::attackkit
