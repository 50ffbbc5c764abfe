#include "mtlab/attackkit/attack.hpp"

#include "mtlab/attackkit/diagnostics.hpp"
#include "mtlab/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mtlab::attackkit {

void PerturbationBudget::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw std::invalid_argument("budget: epsilon must be finite and >= 0");
    if (!(lo < hi))
        throw std::invalid_argument("budget: need lo < hi");
}

diffcore::Tensor project(const diffcore::Tensor& candidate, const diffcore::Tensor& origin,
                         const PerturbationBudget& budget) {
    if (!candidate.same_shape(origin))
        throw std::invalid_argument("project: candidate shape " + candidate.shape_str() +
                                    " differs from origin " + origin.shape_str());
    diffcore::Tensor out(candidate.shape());
    double eps = budget.epsilon;
    for (std::size_t k = 0; k < out.size(); ++k) {
        double lo = std::max(origin[k] - eps, budget.lo);
        double hi = std::min(origin[k] + eps, budget.hi);
        out[k] = std::min(std::max(candidate[k], lo), hi);
    }
    return out;
}

double max_abs_deviation(const diffcore::Tensor& a, const diffcore::Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_deviation: shape mismatch");
    double dev = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        dev = std::max(dev, std::abs(a[k] - b[k]));
    return dev;
}

const char* driver_name(Driver d) {
    switch (d) {
    case Driver::Fgsm: return "fgsm";
    case Driver::Pgd: return "pgd";
    case Driver::Apgd: return "apgd";
    }
    return "?";
}

Driver parse_driver(const std::string& s) {
    if (s == "fgsm")
        return Driver::Fgsm;
    if (s == "pgd")
        return Driver::Pgd;
    if (s == "apgd")
        return Driver::Apgd;
    throw std::invalid_argument("unknown driver '" + s + "' (expected fgsm, pgd, apgd)");
}

AttackConfig AttackConfig::fgsm(GradientCombiner c, PerturbationBudget b) {
    AttackConfig cfg;
    cfg.driver = Driver::Fgsm;
    cfg.combiner = c;
    cfg.budget = b;
    cfg.n_iter = 1;
    return cfg;
}

AttackConfig AttackConfig::pgd(GradientCombiner c, PerturbationBudget b, int n_iter) {
    AttackConfig cfg;
    cfg.driver = Driver::Pgd;
    cfg.combiner = c;
    cfg.budget = b;
    cfg.n_iter = n_iter;
    return cfg;
}

AttackConfig AttackConfig::apgd(GradientCombiner c, PerturbationBudget b, int n_iter) {
    AttackConfig cfg;
    cfg.driver = Driver::Apgd;
    cfg.combiner = c;
    cfg.budget = b;
    cfg.n_iter = n_iter;
    return cfg;
}

void AttackConfig::validate(int n_tasks) const {
    budget.validate();
    combiner.validate(n_tasks);
    if (n_iter < 1)
        throw std::invalid_argument("attack: n_iter must be >= 1");
    if (driver == Driver::Fgsm && n_iter != 1)
        throw std::invalid_argument("attack: the one-shot driver takes exactly one step");
    if (step_size < 0.0 || !std::isfinite(step_size))
        throw std::invalid_argument("attack: step_size must be finite and >= 0");
    if (!(momentum_alpha >= 0.0 && momentum_alpha <= 1.0))
        throw std::invalid_argument("attack: momentum alpha must lie in [0,1]");
    if (random_start && driver != Driver::Pgd)
        throw std::invalid_argument("attack: random start is a pgd option");
    int prev = 1;
    for (int w : checkpoints) {
        if (w < 2 || w > n_iter - 1)
            throw std::invalid_argument("attack: checkpoint " + std::to_string(w) +
                                        " outside [2, n_iter-1]");
        if (w <= prev)
            throw std::invalid_argument("attack: checkpoints must increase");
        prev = w;
    }
}

double AttackConfig::resolved_step() const {
    if (step_size > 0.0)
        return step_size;
    switch (driver) {
    case Driver::Fgsm: return budget.epsilon;
    case Driver::Pgd: return budget.epsilon / 4.0;
    case Driver::Apgd: return 2.0 * budget.epsilon;
    }
    return budget.epsilon;
}

std::vector<int> AttackConfig::resolved_checkpoints() const {
    if (driver != Driver::Apgd)
        return {};
    if (!checkpoints.empty())
        return checkpoints;
    return apgd_checkpoint_schedule(n_iter);
}

std::vector<int> apgd_checkpoint_schedule(int n_iter) {
    // fractions p_0=0, p_1=0.22, p_{j+1} = p_j + max(p_j - p_{j-1} - 0.03, 0.06),
    // mapped to iterations by ceil(p * n) and kept inside the run.  Every
    // fraction is a whole number of hundredths, so the sequence is computed
    // in integer hundredths to keep ceil() exact.
    std::vector<int> w;
    int p_prev = 0, p_cur = 22;
    while (p_cur <= 100) {
        int step = (p_cur * n_iter + 99) / 100;
        if (step >= 2 && step <= n_iter - 1 && (w.empty() || step > w.back()))
            w.push_back(step);
        int p_next = p_cur + std::max(p_cur - p_prev - 3, 6);
        p_prev = p_cur;
        p_cur = p_next;
    }
    return w;
}

StepSizeController::StepSizeController(double eta0, std::vector<int> checkpoints)
    : eta_(eta0), checkpoints_(std::move(checkpoints)) {}

void StepSizeController::observe_step(int, bool objective_increased) {
    successes_ += objective_increased ? 1 : 0;
    steps_ += 1;
}

bool StepSizeController::is_checkpoint(int index) const {
    return std::find(checkpoints_.begin(), checkpoints_.end(), index) != checkpoints_.end();
}

StepSizeController::Decision StepSizeController::at_checkpoint(int, double best_objective) {
    Decision d;
    // under 75% of the steps since the last checkpoint improved the objective
    d.low_success = 4 * successes_ < 3 * steps_;
    // the best value stalled and the step size was not already cut last time
    d.stagnated = !first_ && !halved_at_last_ && !(best_objective > best_at_last_);
    d.halve = d.low_success || d.stagnated;
    if (d.halve)
        eta_ *= 0.5;
    halved_at_last_ = d.halve;
    best_at_last_ = best_objective;
    successes_ = 0;
    steps_ = 0;
    first_ = false;
    return d;
}

namespace {

diffcore::Tensor signed_step(const diffcore::Tensor& x, const diffcore::Tensor& direction,
                             double eta, const diffcore::Tensor& origin,
                             const PerturbationBudget& budget) {
    diffcore::Tensor cand(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k)
        cand[k] = x[k] + eta * direction[k];
    return project(cand, origin, budget);
}

bool within_budget(const diffcore::Tensor& x, const diffcore::Tensor& origin,
                   const PerturbationBudget& budget) {
    for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k] < budget.lo || x[k] > budget.hi)
            return false;
    return max_abs_deviation(x, origin) <= budget.epsilon + 1e-12;
}

} // namespace

nlohmann::json AttackTrace::to_json() const {
    nlohmann::json steps_json = nlohmann::json::array();
    for (const AttackStep& s : steps) {
        steps_json.push_back({{"index", s.index},
                              {"task_losses", s.task_losses},
                              {"objective", s.objective},
                              {"step_size", s.step_size},
                              {"dominance", s.dominance},
                              {"best_objective", s.best_objective},
                              {"max_deviation", s.max_deviation},
                              {"within_budget", s.within_budget},
                              {"halved", s.halved},
                              {"restarted", s.restarted}});
    }
    return {{"steps", steps_json},
            {"initial_losses", initial_losses},
            {"final_losses", final_losses},
            {"final_objective", final_objective},
            {"best_objective", best_objective}};
}

AttackTrace run_attack(const mtlnet::BranchedModel& model, const mtlnet::LabeledBatch& batch,
                       const AttackConfig& config) {
    config.validate(model.n_tasks());
    mtlnet::BatchEvaluator ev(model, batch);
    const diffcore::Tensor& x0 = batch.inputs;
    const double eps = config.budget.epsilon;

    AttackTrace trace;
    auto objective = [&trace](const std::vector<double>& losses) {
        return metrics::relative_loss_change_sum(trace.initial_losses, losses);
    };

    auto cur = ev.eval(x0, true);
    trace.initial_losses = cur.losses;

    auto record = [&](int index, const mtlnet::BatchEvaluator::Result& r, double eta,
                      double best, const diffcore::Tensor& x) -> AttackStep& {
        AttackStep s;
        s.index = index;
        s.task_losses = r.losses;
        s.objective = objective(r.losses);
        s.step_size = eta;
        s.dominance = r.input_grads.empty() ? 0.0 : gradient_dominance_ratio(r.input_grads);
        s.best_objective = best;
        s.max_deviation = max_abs_deviation(x, x0);
        s.within_budget = within_budget(x, x0, config.budget);
        trace.steps.push_back(std::move(s));
        return trace.steps.back();
    };

    record(0, cur, config.resolved_step(), 0.0, x0);

    if (eps == 0.0) {
        // zero budget: nothing to search, the clean input is the answer
        trace.x_adv = x0;
        trace.final_losses = cur.losses;
        trace.final_objective = 0.0;
        trace.best_objective = 0.0;
        return trace;
    }

    switch (config.driver) {
    case Driver::Fgsm: {
        double eta = config.resolved_step();
        diffcore::Tensor dir = sign_tensor(combine_gradients(config.combiner, cur.input_grads,
                                                             cur.losses));
        diffcore::Tensor x1 = signed_step(x0, dir, eta, x0, config.budget);
        auto e1 = ev.eval(x1, false);
        double f1 = objective(e1.losses);
        record(1, e1, eta, std::max(0.0, f1), x1);
        trace.x_adv = std::move(x1);
        trace.final_losses = e1.losses;
        trace.final_objective = f1;
        trace.best_objective = std::max(0.0, f1);
        break;
    }
    case Driver::Pgd: {
        double eta = config.resolved_step();
        diffcore::Tensor x = x0;
        if (config.random_start) {
            std::mt19937_64 rng(config.seed);
            std::uniform_real_distribution<double> u(-eps, eps);
            diffcore::Tensor cand(x0.shape());
            for (std::size_t k = 0; k < cand.size(); ++k)
                cand[k] = x0[k] + u(rng);
            x = project(cand, x0, config.budget);
            cur = ev.eval(x, true);
        }
        double best = std::max(0.0, objective(cur.losses));
        for (int k = 1; k <= config.n_iter; ++k) {
            diffcore::Tensor dir =
                sign_tensor(combine_gradients(config.combiner, cur.input_grads, cur.losses));
            x = signed_step(x, dir, eta, x0, config.budget);
            bool last = k == config.n_iter;
            cur = ev.eval(x, !last);
            best = std::max(best, objective(cur.losses));
            record(k, cur, eta, best, x);
        }
        trace.x_adv = std::move(x);
        trace.final_losses = cur.losses;
        trace.final_objective = objective(cur.losses);
        trace.best_objective = best;
        break;
    }
    case Driver::Apgd: {
        StepSizeController ctrl(config.resolved_step(), config.resolved_checkpoints());

        // first iterate: one plain signed step at the full starting step size
        diffcore::Tensor dir =
            sign_tensor(combine_gradients(config.combiner, cur.input_grads, cur.losses));
        diffcore::Tensor x_cur = signed_step(x0, dir, ctrl.eta(), x0, config.budget);
        auto e_cur = ev.eval(x_cur, true);
        double f_cur = objective(e_cur.losses);

        double best = std::max(0.0, f_cur);
        diffcore::Tensor x_best = f_cur > 0.0 ? x_cur : x0;
        auto e_best = f_cur > 0.0 ? e_cur : cur;
        ctrl.observe_step(1, f_cur > 0.0);
        record(1, e_cur, ctrl.eta(), best, x_cur);

        diffcore::Tensor x_prev = x0;
        for (int k = 2; k <= config.n_iter; ++k) {
            double eta = ctrl.eta();
            dir = sign_tensor(combine_gradients(config.combiner, e_cur.input_grads,
                                                e_cur.losses));
            diffcore::Tensor z = signed_step(x_cur, dir, eta, x0, config.budget);
            // momentum: mix the gradient move with the previous displacement
            double alpha = config.momentum_alpha;
            diffcore::Tensor cand(x_cur.shape());
            for (std::size_t i = 0; i < cand.size(); ++i)
                cand[i] = x_cur[i] + alpha * (z[i] - x_cur[i]) +
                          (1.0 - alpha) * (x_cur[i] - x_prev[i]);
            diffcore::Tensor x_next = project(cand, x0, config.budget);
            auto e_next = ev.eval(x_next, true);
            double f_next = objective(e_next.losses);

            if (f_next > best) {
                best = f_next;
                x_best = x_next;
                e_best = e_next;
            }
            ctrl.observe_step(k, f_next > f_cur);
            AttackStep& rec = record(k, e_next, eta, best, x_next);

            if (ctrl.is_checkpoint(k)) {
                auto decision = ctrl.at_checkpoint(k, best);
                if (decision.halve) {
                    rec.halved = true;
                    rec.restarted = true;
                    // resume from the best point found so far; the momentum
                    // reference stays at the pre-reset iterate
                    x_next = x_best;
                    e_next = e_best;
                    f_next = objective(e_next.losses);
                }
            }

            x_prev = std::move(x_cur);
            x_cur = std::move(x_next);
            e_cur = std::move(e_next);
            f_cur = f_next;
        }

        trace.x_adv = x_best;
        trace.final_losses = e_best.losses;
        trace.final_objective = objective(e_best.losses);
        trace.best_objective = best;
        break;
    }
    }
    return trace;
}

} // namespace mtlab::attackkit
