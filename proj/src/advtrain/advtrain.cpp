#include "mtlab/advtrain/advtrain.hpp"

#include "mtlab/common/numformat.hpp"
#include "mtlab/metrics/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace mtlab::advtrain {

using attackkit::AttackConfig;
using attackkit::Driver;

void FatConfig::validate(int n_tasks) const {
    if (inner.driver != Driver::Pgd)
        throw std::invalid_argument("adversarial training: inner attack must use the plain "
                                    "iterative driver");
    if (inner.random_start)
        throw std::invalid_argument("adversarial training: inner attack starts from the "
                                    "clean batch");
    if (inner.n_iter < 0)
        throw std::invalid_argument("adversarial training: negative inner step cap");
    if (inner.n_iter == 0) {
        inner.budget.validate();
        inner.combiner.validate(n_tasks);
    } else {
        inner.validate(n_tasks);
    }
    if (early_stop) {
        if (inner.n_iter < 1)
            throw std::invalid_argument("adversarial training: early stop needs at least "
                                        "one inner step");
        if (tau < 1 || tau > inner.n_iter)
            throw std::invalid_argument("adversarial training: tau must lie in [1, K]");
    }
}

diffcore::Tensor friendly_adversarial_inputs(const mtlnet::BranchedModel& model,
                                             const mtlnet::LabeledBatch& chunk,
                                             const FatConfig& cfg, int* steps_taken) {
    const int cap = cfg.inner.n_iter;
    if (cap == 0 || cfg.inner.budget.epsilon == 0.0) {
        if (steps_taken)
            *steps_taken = 0;
        return chunk.inputs;
    }

    mtlnet::BatchEvaluator ev(model, chunk);
    const double eta = cfg.inner.resolved_step();
    diffcore::Tensor x = chunk.inputs;
    auto cur = ev.eval(x, true);
    const std::vector<double> initial = cur.losses;

    int crossed_at = -1;
    int k = 1;
    for (; k <= cap; ++k) {
        diffcore::Tensor dir = attackkit::sign_tensor(
            attackkit::combine_gradients(cfg.inner.combiner, cur.input_grads, cur.losses));
        diffcore::Tensor cand(x.shape());
        for (std::size_t i = 0; i < cand.size(); ++i)
            cand[i] = x[i] + eta * dir[i];
        x = attackkit::project(cand, chunk.inputs, cfg.inner.budget);
        if (k == cap)
            break;
        cur = ev.eval(x, true);
        if (cfg.early_stop) {
            double change = metrics::relative_loss_change_sum(initial, cur.losses);
            if (crossed_at < 0 && change > cfg.crossing)
                crossed_at = k;
            if (crossed_at >= 0 && k >= crossed_at + cfg.tau)
                break;
        }
    }
    if (steps_taken)
        *steps_taken = k;
    return x;
}

mtlnet::TrainTrace fat_train(mtlnet::BranchedModel& model, const mtlnet::LabeledBatch& train,
                             const FatConfig& cfg) {
    cfg.validate(model.n_tasks());
    mtlnet::BatchTransform perturb = [&cfg](const mtlnet::BranchedModel& m,
                                            const mtlnet::LabeledBatch& chunk) {
        return friendly_adversarial_inputs(m, chunk, cfg);
    };
    return mtlnet::train_model(model, train, cfg.train, &perturb);
}

const RobustnessRecord& RobustnessMatrix::at(std::size_t row, std::size_t col) const {
    if (row >= defenses.size() || col >= attacks.size())
        throw std::out_of_range("robustness matrix: cell out of range");
    return records[row * attacks.size() + col];
}

std::string RobustnessMatrix::to_csv() const {
    std::string out = "defense,clean_cost";
    for (const std::string& a : attacks)
        out += "," + a;
    out += "\n";
    for (std::size_t r = 0; r < defenses.size(); ++r) {
        out += defenses[r];
        out += "," + format_double(at(r, 0).clean_cost);
        for (std::size_t c = 0; c < attacks.size(); ++c)
            out += "," + format_double(at(r, c).arp);
        out += "\n";
    }
    return out;
}

RobustnessMatrix robust_eval(std::span<const DefenseEntry> defenses,
                             const mtlnet::LabeledBatch& test,
                             std::span<const AttackConfig> attacks) {
    if (defenses.empty())
        throw std::invalid_argument("robust eval: no defense models");
    if (attacks.empty())
        throw std::invalid_argument("robust eval: no attacks");

    RobustnessMatrix matrix;
    for (const DefenseEntry& d : defenses) {
        if (d.model == nullptr)
            throw std::invalid_argument("robust eval: missing model for '" + d.label + "'");
        matrix.defenses.push_back(d.label);
    }
    for (const AttackConfig& a : attacks) {
        std::string label = a.combiner.label();
        if (std::find(matrix.attacks.begin(), matrix.attacks.end(), label) !=
            matrix.attacks.end())
            throw std::invalid_argument("robust eval: duplicate attack column '" + label + "'");
        matrix.attacks.push_back(label);
    }

    // clean metrics per defense; defense 0 is the reference for training cost
    std::vector<mtlnet::BatchEvaluator> evals;
    std::vector<metrics::MetricSnapshot> clean;
    evals.reserve(defenses.size());
    for (const DefenseEntry& d : defenses) {
        evals.emplace_back(*d.model, test);
        clean.push_back(evals.back().metric_snapshot(test.inputs));
    }

    for (std::size_t r = 0; r < defenses.size(); ++r) {
        double cost = metrics::adversarial_relative_performance(clean[0], clean[r]).overall;
        for (std::size_t c = 0; c < attacks.size(); ++c) {
            attackkit::AttackTrace trace = run_attack(*defenses[r].model, test, attacks[c]);
            metrics::MetricSnapshot attacked = evals[r].metric_snapshot(trace.x_adv);
            RobustnessRecord rec;
            rec.defense = matrix.defenses[r];
            rec.attack = matrix.attacks[c];
            rec.arp = metrics::adversarial_relative_performance(clean[r], attacked).overall;
            rec.clean_cost = cost;
            matrix.records.push_back(std::move(rec));
        }
    }
    return matrix;
}

} // namespace mtlab::advtrain
