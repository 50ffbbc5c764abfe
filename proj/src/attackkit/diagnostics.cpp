#include "mtlab/attackkit/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

namespace mtlab::attackkit {

GradientDiagnostics gradient_diagnostics(const std::vector<diffcore::Tensor>& per_task_grads) {
    if (per_task_grads.empty())
        throw std::invalid_argument("gradient diagnostics: no gradients given");
    GradientDiagnostics diag;
    double total = 0.0, biggest = 0.0;
    for (const diffcore::Tensor& g : per_task_grads) {
        double norm = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k)
            norm += std::abs(g[k]);
        diag.l1_norms.push_back(norm);
        total += norm;
        biggest = std::max(biggest, norm);
    }
    diag.dominance = total > 0.0 ? biggest / total : 0.0;
    return diag;
}

double gradient_dominance_ratio(const std::vector<diffcore::Tensor>& per_task_grads) {
    return gradient_diagnostics(per_task_grads).dominance;
}

std::optional<double> perturbation_alignment(const mtlnet::BranchedModel& model,
                                             const mtlnet::LabeledBatch& batch,
                                             const PerturbationBudget& budget, Driver driver,
                                             int task_a, int task_b, int n_iter) {
    auto delta_for = [&](int task) {
        AttackConfig cfg;
        cfg.driver = driver;
        cfg.combiner = GradientCombiner::single(task);
        cfg.budget = budget;
        cfg.n_iter = driver == Driver::Fgsm ? 1 : n_iter;
        AttackTrace trace = run_attack(model, batch, cfg);
        diffcore::Tensor delta(trace.x_adv.shape());
        for (std::size_t k = 0; k < delta.size(); ++k)
            delta[k] = trace.x_adv[k] - batch.inputs[k];
        return delta;
    };
    diffcore::Tensor da = delta_for(task_a);
    diffcore::Tensor db = delta_for(task_b);

    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < da.size(); ++k) {
        dot += da[k] * db[k];
        na += da[k] * da[k];
        nb += db[k] * db[k];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na <= 1e-12 || nb <= 1e-12)
        return std::nullopt;
    return dot / (na * nb);
}

} // namespace mtlab::attackkit
