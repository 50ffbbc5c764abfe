// End-to-end acceptance gate for the laboratory. Each check prints exactly
// one PASS/FAIL line; the process exits nonzero if any check fails.
//
// The directional checks (7-9) run the shipped reference benchmark and test
// orderings of aggregate results, not absolute values: the balanced attack
// should dominate the naive baselines on clean models, transferability
// should rise with task sharing, and adversarial training should cut damage
// roughly in half or better while the balanced column stays the strongest
// attack against hardened models.

#include "mtlab/attackkit/attack.hpp"
#include "mtlab/attackkit/combiner.hpp"
#include "mtlab/attackkit/oracle.hpp"
#include "mtlab/common/numformat.hpp"
#include "mtlab/diffcore/fdcheck.hpp"
#include "mtlab/labcli/config.hpp"
#include "mtlab/labcli/csv.hpp"
#include "mtlab/labcli/runner.hpp"
#include "mtlab/metrics/metrics.hpp"
#include "mtlab/mtlnet/dataset.hpp"
#include "mtlab/mtlnet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mtlab;
using attackkit::AttackConfig;
using attackkit::GradientCombiner;
using attackkit::PerturbationBudget;
using diffcore::Tensor;
namespace fs = std::filesystem;

namespace {

struct CheckResult {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---- shared fixtures ------------------------------------------------------

std::vector<mtlnet::TaskSpec> three_tasks(int cls_dim = 3) {
    mtlnet::TaskSpec cls{0, mtlnet::HeadKind::Classification, cls_dim, "cls", 30.0};
    mtlnet::TaskSpec reg{1, mtlnet::HeadKind::Regression, 2, "reg", 30.0};
    mtlnet::TaskSpec dir{2, mtlnet::HeadKind::UnitVector, 3, "dir", 30.0};
    return {cls, reg, dir};
}

// A small bank of trained models used by the local checks (3, 5, 6).
struct LocalBank {
    mtlnet::Dataset data;
    std::vector<mtlnet::BranchedModel> models;

    LocalBank() {
        mtlnet::DatasetConfig dc;
        dc.tasks = three_tasks();
        dc.input_dim = 12;
        dc.train_size = 64;
        dc.test_size = 16;
        dc.rho = 0.8;
        dc.latent_dim = 6;
        dc.seed = 11;
        data = mtlnet::generate_dataset(dc);
        mtlnet::TrainConfig tc;
        tc.epochs = 12;
        tc.lr = 0.05;
        tc.batch_size = 32;
        tc.seed = 7;
        for (int level : {0, 1, 2}) {
            models.push_back(mtlnet::build_model(mtlnet::sharing_level_layout(level, 2, 3),
                                                 {10, 10}, dc.tasks, dc.input_dim,
                                                 17 + static_cast<std::uint64_t>(level)));
            mtlnet::train_model(models.back(), data.train, tc);
        }
    }

    mtlnet::LabeledBatch rows(std::size_t start, std::size_t count) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < count; ++i)
            idx.push_back((start + i) % data.test.size());
        return mtlnet::slice_batch(data.test, data.config.tasks, idx);
    }
};

// ---- check 1: reverse-mode gradients vs central finite differences --------

CheckResult check_gradient_oracle() {
    auto t0 = std::chrono::steady_clock::now();
    int confirmed = 0, rejected = 0;
    std::vector<int> dims = {16, 32, 64};
    std::vector<int> widths = {6, 8, 10};
    for (int s = 1; s <= 50; ++s) {
        int depth = 1 + s % 3;
        int level = s % (depth + 1);
        int d = dims[static_cast<std::size_t>(s) % dims.size()];
        int w = widths[static_cast<std::size_t>(s) % widths.size()];
        auto tasks = three_tasks(2 + s % 3);

        mtlnet::DatasetConfig dc;
        dc.tasks = tasks;
        dc.input_dim = d;
        dc.train_size = 3;
        dc.test_size = 3;
        dc.seed = static_cast<std::uint64_t>(100 + s);
        mtlnet::Dataset ds = mtlnet::generate_dataset(dc);

        mtlnet::BranchedModel m = mtlnet::build_model(
            mtlnet::sharing_level_layout(level, depth, 3),
            std::vector<int>(static_cast<std::size_t>(depth), w), tasks, d,
            static_cast<std::uint64_t>(s));

        mtlnet::ModelProgram prog = mtlnet::build_program(m, ds.train.size());
        std::vector<Tensor> binding;
        binding.push_back(ds.train.inputs);
        for (const auto& p : m.params)
            binding.push_back(p);
        for (const auto& lab : ds.train.labels)
            binding.push_back(lab);
        std::vector<diffcore::NodeId> wrt{prog.input};

        for (auto loss : prog.losses) {
            auto rep = diffcore::finite_difference_check(prog.record, loss, wrt, binding,
                                                         {1e-5, 1e-6});
            if (rep.status == diffcore::FdReport::Status::Failed)
                return {false, "gradient mismatch (rel err " +
                                   std::to_string(rep.max_rel_error) + ") on model seed " +
                                   std::to_string(s)};
            rep.passed() ? ++confirmed : ++rejected;
        }
    }
    double dt = seconds_since(t0);
    if (dt >= 10.0)
        return {false, "took " + std::to_string(dt) + " s (limit 10)"};
    if (confirmed < 100)
        return {false, "only " + std::to_string(confirmed) + " of 150 checks confirmed"};
    return {true, "50 models, " + std::to_string(confirmed) + " task losses confirmed, " +
                      std::to_string(rejected) + " rejected near kinks, " +
                      std::to_string(dt).substr(0, 4) + " s"};
}

// ---- check 2: sign rounding attains the exact hypercube maximum -----------

CheckResult check_sign_rounding() {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> gdist(-1.0, 1.0);
    std::uniform_real_distribution<double> ldist(0.2, 3.0);
    const std::size_t d = 10;
    int resampled = 0;
    for (int inst = 0; inst < 1000; ++inst) {
        std::vector<Tensor> grads;
        std::vector<double> losses;
        Tensor c;
        for (;;) {
            grads.clear();
            losses.clear();
            std::size_t n = 2 + static_cast<std::size_t>(rng() % 3);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> g(d);
                for (double& v : g)
                    v = gdist(rng);
                grads.push_back(Tensor::vector1d(std::move(g)));
                losses.push_back(ldist(rng));
            }
            c = attackkit::combine_gradients(GradientCombiner::balanced(), grads, losses);
            bool tie_free = true;
            for (double v : c.values())
                if (std::abs(v) < 1e-9)
                    tie_free = false;
            if (tie_free)
                break;
            ++resampled;
        }
        Tensor beta = attackkit::sign_tensor(c);
        std::vector<double> coeffs(c.values().begin(), c.values().end());
        auto oracle = attackkit::exhaustive_sign_search(coeffs);
        if (oracle.best_patterns.size() != 1)
            return {false, "instance " + std::to_string(inst) + " is not tie-free"};
        for (std::size_t k = 0; k < d; ++k)
            if (oracle.best_patterns[0][k] != beta[k])
                return {false, "sign direction misses the maximum on instance " +
                                   std::to_string(inst)};
        if (!oracle.closed_form_optimal || oracle.closed_form_value != oracle.best_value)
            return {false, "closed-form value diverges from brute force on instance " +
                               std::to_string(inst)};
    }
    double dt = seconds_since(t0);
    if (dt >= 30.0)
        return {false, "took " + std::to_string(dt) + " s (limit 30)"};
    return {true, "1000 instances exact, " + std::to_string(resampled) + " resampled, " +
                      std::to_string(dt).substr(0, 4) + " s"};
}

// ---- check 3: budget safety fuzz ------------------------------------------

CheckResult check_budget_fuzz(const LocalBank& bank) {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> wide(-0.5, 1.5);

    for (int trial = 0; trial < 100000; ++trial) {
        std::size_t d = 1 + rng() % 32;
        PerturbationBudget budget{0.3 * unit(rng)};
        std::vector<double> origin(d), cand(d);
        for (std::size_t i = 0; i < d; ++i) {
            origin[i] = unit(rng);
            cand[i] = wide(rng);
        }
        Tensor o = Tensor::vector1d(origin);
        Tensor x = attackkit::project(Tensor::vector1d(cand), o, budget);
        if (attackkit::max_abs_deviation(x, o) > budget.epsilon + 1e-12)
            return {false, "projection left the ball on trial " + std::to_string(trial)};
        for (std::size_t i = 0; i < d; ++i)
            if (x[i] < budget.lo || x[i] > budget.hi)
                return {false, "projection left the valid range on trial " +
                                   std::to_string(trial)};
        if (!(attackkit::project(x, o, budget) == x))
            return {false, "projection is not idempotent on trial " + std::to_string(trial)};
    }

    const std::vector<GradientCombiner> combiners = {
        GradientCombiner::single(0),   GradientCombiner::single(1),
        GradientCombiner::single(2),   GradientCombiner::total(),
        GradientCombiner::sign_total(), GradientCombiner::balanced()};
    const std::vector<double> epsilons = {0.01, 0.05, 8.0 / 255.0};
    int steps_checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto& model = bank.models[static_cast<std::size_t>(trial) % bank.models.size()];
        const GradientCombiner& comb =
            combiners[static_cast<std::size_t>(trial) % combiners.size()];
        PerturbationBudget budget{epsilons[static_cast<std::size_t>(trial) % epsilons.size()]};
        mtlnet::LabeledBatch batch = bank.rows(static_cast<std::size_t>(trial) % 13, 4);

        AttackConfig atk;
        switch (trial % 3) {
        case 0: atk = AttackConfig::fgsm(comb, budget); break;
        case 1:
            atk = AttackConfig::pgd(comb, budget, 6);
            atk.random_start = trial % 2 == 0;
            atk.seed = static_cast<std::uint64_t>(trial);
            break;
        default: atk = AttackConfig::apgd(comb, budget, 6); break;
        }
        attackkit::AttackTrace trace = attackkit::run_attack(model, batch, atk);
        for (const auto& step : trace.steps) {
            if (!step.within_budget || step.max_deviation > budget.epsilon + 1e-12)
                return {false, "iterate outside the budget on trace " + std::to_string(trial)};
            ++steps_checked;
        }
        if (attackkit::max_abs_deviation(trace.x_adv, batch.inputs) >
            budget.epsilon + 1e-12)
            return {false, "final point outside the budget on trace " + std::to_string(trial)};
    }
    return {true, "100000 projections and 1000 traces (" + std::to_string(steps_checked) +
                      " iterates) stayed inside the ball"};
}

// ---- check 4: loss-rescaling invariance of the balanced direction ---------

CheckResult check_rescaling_invariance() {
    std::mt19937_64 rng(777);
    std::uniform_real_distribution<double> gdist(-1.0, 1.0);
    std::uniform_real_distribution<double> ldist(0.1, 5.0);
    std::uniform_real_distribution<double> adist(-3.0, 3.0); // log10 of the rescale
    const std::size_t d = 12;
    int compared = 0, skipped = 0;
    for (int inst = 0; inst < 500; ++inst) {
        std::size_t n = 2 + static_cast<std::size_t>(rng() % 3);
        std::vector<Tensor> grads, scaled_grads;
        std::vector<double> losses, scaled_losses;
        for (std::size_t i = 0; i < n; ++i) {
            double a = std::pow(10.0, adist(rng));
            std::vector<double> g(d), sg(d);
            for (std::size_t k = 0; k < d; ++k) {
                g[k] = gdist(rng);
                sg[k] = a * g[k];
            }
            grads.push_back(Tensor::vector1d(std::move(g)));
            scaled_grads.push_back(Tensor::vector1d(std::move(sg)));
            losses.push_back(ldist(rng));
            scaled_losses.push_back(a * losses.back());
        }
        Tensor c = attackkit::combine_gradients(GradientCombiner::balanced(), grads, losses);
        Tensor cs = attackkit::combine_gradients(GradientCombiner::balanced(), scaled_grads,
                                                 scaled_losses);
        double scale = 0.0;
        for (double v : c.values())
            scale = std::max(scale, std::abs(v));
        for (std::size_t k = 0; k < d; ++k) {
            if (std::abs(c[k]) <= 1e-9 * scale) { // too close to a tie to judge
                ++skipped;
                continue;
            }
            if (attackkit::sign_of(c[k]) != attackkit::sign_of(cs[k]))
                return {false, "rescaling flipped component " + std::to_string(k) +
                                   " on instance " + std::to_string(inst)};
            ++compared;
        }
    }

    // Constructed dominance case: task 0's gradient dwarfs task 1's, so the
    // plain sum follows task 0 and a x0.01 shrink of that task flips the sum
    // direction; the loss-normalized direction is unchanged by construction.
    std::vector<Tensor> g = {Tensor::vector1d({20, 20, -20, -20}),
                             Tensor::vector1d({-1, 1, -1, 1})};
    std::vector<double> l = {10.0, 1.0};
    std::vector<Tensor> g2 = {Tensor::vector1d({0.2, 0.2, -0.2, -0.2}),
                              Tensor::vector1d({-1, 1, -1, 1})};
    std::vector<double> l2 = {0.1, 1.0};
    Tensor tot_before = attackkit::sign_tensor(
        attackkit::combine_gradients(GradientCombiner::total(), g, l));
    Tensor tot_after = attackkit::sign_tensor(
        attackkit::combine_gradients(GradientCombiner::total(), g2, l2));
    Tensor bal_before = attackkit::sign_tensor(
        attackkit::combine_gradients(GradientCombiner::balanced(), g, l));
    Tensor bal_after = attackkit::sign_tensor(
        attackkit::combine_gradients(GradientCombiner::balanced(), g2, l2));
    if (tot_before == tot_after)
        return {false, "constructed dominance case: plain-sum direction did not change"};
    if (!(bal_before == bal_after))
        return {false, "constructed dominance case: balanced direction changed"};

    return {true, std::to_string(compared) + " tie-free components sign-stable (" +
                      std::to_string(skipped) + " skipped as ties); dominance case holds"};
}

// ---- check 5: degeneracy suite ---------------------------------------------

CheckResult check_degeneracies(const LocalBank& bank) {
    // (a) with one task, every combiner collapses to the same attack
    mtlnet::DatasetConfig dc;
    dc.tasks = {mtlnet::TaskSpec{0, mtlnet::HeadKind::Classification, 3, "only", 30.0}};
    dc.input_dim = 10;
    dc.train_size = 48;
    dc.test_size = 8;
    dc.seed = 29;
    mtlnet::Dataset ds = mtlnet::generate_dataset(dc);
    mtlnet::BranchedModel solo = mtlnet::build_model(
        mtlnet::sharing_level_layout(1, 1, 1), {8}, dc.tasks, dc.input_dim, 3);
    mtlnet::TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 24;
    mtlnet::train_model(solo, ds.train, tc);

    PerturbationBudget budget{8.0 / 255.0};
    for (auto driver : {attackkit::Driver::Fgsm, attackkit::Driver::Pgd,
                        attackkit::Driver::Apgd}) {
        std::vector<Tensor> points;
        for (const auto& comb :
             {GradientCombiner::single(0), GradientCombiner::total(),
              GradientCombiner::sign_total(), GradientCombiner::balanced()}) {
            AttackConfig atk;
            atk.driver = driver;
            atk.combiner = comb;
            atk.budget = budget;
            atk.n_iter = driver == attackkit::Driver::Fgsm ? 1 : 5;
            points.push_back(attackkit::run_attack(solo, ds.test, atk).x_adv);
        }
        for (std::size_t i = 1; i < points.size(); ++i)
            if (!(points[i] == points[0]))
                return {false, "single-task attacks diverge across combiners"};
    }

    // (b) the one-shot driver equals a single full-step iteration
    mtlnet::LabeledBatch batch = bank.rows(2, 6);
    for (const auto& comb : {GradientCombiner::total(), GradientCombiner::balanced()}) {
        AttackConfig one = AttackConfig::fgsm(comb, budget);
        AttackConfig pgd1 = AttackConfig::pgd(comb, budget, 1);
        pgd1.step_size = budget.epsilon;
        Tensor a = attackkit::run_attack(bank.models[1], batch, one).x_adv;
        Tensor b = attackkit::run_attack(bank.models[1], batch, pgd1).x_adv;
        if (!(a == b))
            return {false, "one-shot attack differs from a single full-step iteration"};
    }

    // (c) with mixing weight 1 the adaptive driver's update is exactly the
    // projected step, so its pre-checkpoint iterates match plain descent at
    // the same step size (first halving decision lands at iteration 5 of 20)
    AttackConfig apgd1 = AttackConfig::apgd(GradientCombiner::balanced(), budget, 20);
    apgd1.momentum_alpha = 1.0;
    AttackConfig plain = AttackConfig::pgd(GradientCombiner::balanced(), budget, 5);
    plain.step_size = apgd1.resolved_step();
    attackkit::AttackTrace ta = attackkit::run_attack(bank.models[0], batch, apgd1);
    attackkit::AttackTrace tp = attackkit::run_attack(bank.models[0], batch, plain);
    for (std::size_t k = 1; k <= 5; ++k)
        if (ta.steps[k].task_losses != tp.steps[k].task_losses)
            return {false, "adaptive driver with mixing weight 1 left the projected-step "
                           "path at iteration " +
                               std::to_string(k)};

    // (d) the running best objective never decreases along any trace
    for (int trial = 0; trial < 40; ++trial) {
        AttackConfig atk = trial % 2 == 0
                               ? AttackConfig::apgd(GradientCombiner::balanced(), budget, 12)
                               : AttackConfig::pgd(GradientCombiner::total(), budget, 12);
        attackkit::AttackTrace tr = attackkit::run_attack(
            bank.models[static_cast<std::size_t>(trial) % bank.models.size()],
            bank.rows(static_cast<std::size_t>(trial), 4), atk);
        double best = tr.steps.front().best_objective;
        for (const auto& step : tr.steps) {
            if (step.best_objective + 0.0 < best)
                return {false, "running best objective decreased on trace " +
                                   std::to_string(trial)};
            best = step.best_objective;
        }
    }

    return {true, "single-task equivalence, one-shot equivalence, projected-step "
                  "equivalence, and best-objective monotonicity all hold"};
}

// ---- check 6: first-order consistency of the relative-loss objective ------

CheckResult check_first_order(const LocalBank& bank) {
    const double eta = 1e-5;
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        const auto& model = bank.models[static_cast<std::size_t>(inst) % bank.models.size()];
        mtlnet::LabeledBatch batch = bank.rows(static_cast<std::size_t>(inst), 2);
        mtlnet::BatchEvaluator ev(model, batch);
        auto at0 = ev.eval(batch.inputs, true);
        Tensor c = attackkit::combine_gradients(GradientCombiner::balanced(),
                                                at0.input_grads, at0.losses);
        Tensor beta = attackkit::sign_tensor(c);

        Tensor x1 = batch.inputs;
        double predicted = 0.0;
        for (std::size_t k = 0; k < x1.size(); ++k) {
            x1[k] += eta * beta[k];
            predicted += beta[k] * c[k];
        }
        predicted *= eta;

        auto at1 = ev.eval(x1, false);
        double measured = metrics::relative_loss_change_sum(at0.losses, at1.losses);
        double rel = std::abs(measured - predicted) / std::abs(predicted);
        worst = std::max(worst, rel);
        if (rel > 0.01)
            return {false, "instance " + std::to_string(inst) + ": measured " +
                               std::to_string(measured) + " vs predicted " +
                               std::to_string(predicted)};
    }
    std::ostringstream os;
    os << "100 instances at step 1e-5, worst relative error " << worst;
    return {true, os.str()};
}

// ---- checks 7-9 and 11: the reference benchmark ----------------------------

struct ReferenceRun {
    labcli::ExperimentConfig cfg;
    labcli::RunPaths paths;
    double grid_seconds = 0.0; // train + attack + sweep
};

ReferenceRun run_reference(const fs::path& config_file, const fs::path& out_dir) {
    std::ifstream in(config_file);
    if (!in)
        throw std::runtime_error("missing reference config " + config_file.string());
    labcli::ExperimentConfig cfg =
        labcli::ExperimentConfig::from_json(nlohmann::json::parse(in));
    cfg.out_dir = out_dir.string();

    auto t0 = std::chrono::steady_clock::now();
    labcli::run_train(cfg, nullptr);
    labcli::run_attack(cfg, nullptr, 1);
    labcli::run_sweep(cfg, nullptr, 1);
    double dt = seconds_since(t0);
    return {cfg, labcli::RunPaths::for_config(cfg), dt};
}

// Maps a sweep table to {epsilon value -> {column -> mean damage}}.
std::vector<std::pair<double, std::vector<std::pair<std::string, double>>>>
sweep_rows(const labcli::ExperimentConfig& cfg, const fs::path& table_file) {
    labcli::CsvTable t = labcli::parse_csv(slurp(table_file));
    std::vector<std::pair<double, std::vector<std::pair<std::string, double>>>> rows;
    for (const auto& row : t.rows) {
        double eps = -1.0;
        for (const auto& e : cfg.epsilons)
            if (e.text == row[0])
                eps = e.value;
        std::vector<std::pair<std::string, double>> cells;
        for (std::size_t c = 1; c < row.size(); ++c)
            cells.emplace_back(t.header[c], parse_double(row[c]));
        rows.emplace_back(eps, std::move(cells));
    }
    return rows;
}

CheckResult check_budget_sweep(const ReferenceRun& run) {
    if (run.grid_seconds >= 600.0)
        return {false, "reference grid took " + std::to_string(run.grid_seconds) +
                           " s (limit 600)"};
    // At every budget from 2/255 up, the weaker of the two balanced curves
    // (plain and adaptive driver) must still top the strongest baseline
    // curve at that same budget, across both drivers.
    std::map<double, std::pair<double, double>> by_eps; // eps -> {min bal, max base}
    for (const char* driver : {"pgd", "apgd"}) {
        auto rows = sweep_rows(run.cfg, run.paths.tables_dir() /
                                            ("sweep_" + std::string(driver) + ".csv"));
        for (const auto& [eps, cells] : rows) {
            if (eps < 2.0 / 255.0 - 1e-15)
                continue;
            auto [it, fresh] = by_eps.try_emplace(eps, 1e300, -1e300);
            for (const auto& [label, value] : cells) {
                if (label == "balanced")
                    it->second.first = std::min(it->second.first, value);
                else
                    it->second.second = std::max(it->second.second, value);
            }
        }
    }
    if (by_eps.size() < 4)
        return {false, "expected at least 4 budgets at or above 2/255, saw " +
                           std::to_string(by_eps.size())};
    double margin = 1e300;
    for (const auto& [eps, mm] : by_eps) {
        margin = std::min(margin, mm.first - mm.second);
        if (mm.first < mm.second)
            return {false, "a baseline beats the balanced attack at eps " +
                               std::to_string(eps * 255.0) + "/255: " +
                               std::to_string(mm.second) + " vs " +
                               std::to_string(mm.first)};
    }
    std::ostringstream os;
    os << "balanced >= every baseline at all " << by_eps.size()
       << " budgets >= 2/255, across both drivers (min same-budget margin " << margin
       << " points); grid took " << static_cast<int>(run.grid_seconds) << " s";
    return {true, os.str()};
}

CheckResult check_transfer_vs_sharing(const ReferenceRun& run, const fs::path& rho0_dir) {
    labcli::run_diagnose(run.cfg, nullptr, 1);
    labcli::CsvTable t =
        labcli::parse_csv(slurp(run.paths.tables_dir() / "transferability.csv"));
    const auto& corr = t.rows.back();
    if (corr.front() != "spearman-vs-position")
        return {false, "rank-correlation row missing from the transfer table"};
    std::ostringstream os;
    os << "rank correlations:";
    for (std::size_t c = 1; c < corr.size(); ++c) {
        if (corr[c] == "undefined" || parse_double(corr[c]) <= 0.0)
            return {false, "column " + t.header[c] +
                               " does not gain transferability with sharing (rho=" +
                               corr[c] + ")"};
        os << " " << t.header[c] << "=" << corr[c].substr(0, 5);
    }

    // Unrelated tasks on an unshared model must transfer less than related
    // tasks on a fully shared one.
    labcli::ExperimentConfig rcfg = run.cfg;
    rcfg.dataset.rho = 0.0;
    rcfg.layouts = {mtlnet::sharing_level_layout(
        0, static_cast<int>(rcfg.widths.size()), static_cast<int>(rcfg.dataset.tasks.size()))};
    rcfg.layout_names = {"0L"};
    rcfg.fat.model_name = "0L"; // the canonical form resolved it to the full grid's name
    rcfg.out_dir = rho0_dir.string();
    labcli::run_train(rcfg, nullptr);
    labcli::run_diagnose(rcfg, nullptr, 1);
    labcli::CsvTable ind = labcli::parse_csv(
        slurp(labcli::RunPaths::for_config(rcfg).tables_dir() / "transferability.csv"));

    const auto& shared_row = t.rows[t.rows.size() - 2]; // deepest sharing level
    const auto& ind_row = ind.rows.front();
    if (shared_row.front() != "5L" || ind_row.front() != "0L")
        return {false, "unexpected row layout in the transfer tables"};
    os << "; unrelated-unshared vs related-shared:";
    for (std::size_t c = 1; c < shared_row.size(); ++c) {
        double lo = parse_double(ind_row[c]);
        double hi = parse_double(shared_row[c]);
        if (!(lo < hi))
            return {false, "column " + t.header[c] + ": unrelated-task transfer " +
                               std::to_string(lo) + " is not below related-task transfer " +
                               std::to_string(hi)};
        os << " " << std::round(lo * 1000) / 1000 << "<" << std::round(hi * 1000) / 1000;
    }
    return {true, os.str()};
}

CheckResult check_hardening(const ReferenceRun& run) {
    labcli::run_advtrain(run.cfg, nullptr);

    // (a) averaged over seeds, hardening cuts every attack's damage in half
    labcli::CsvTable mean =
        labcli::parse_csv(slurp(run.paths.tables_dir() / "robustness.csv"));
    const auto& clean = mean.rows.at(0);
    const auto& fat = mean.rows.at(1);
    if (clean.front() != "clean" || fat.front() != "balanced")
        return {false, "unexpected robustness matrix layout"};
    double worst_ratio = 0.0;
    for (std::size_t c = 2; c < clean.size(); ++c) {
        double ratio = parse_double(fat[c]) / parse_double(clean[c]);
        worst_ratio = std::max(worst_ratio, ratio);
        if (!(ratio <= 0.5))
            return {false, "hardened damage under " + mean.header[c] + " is " +
                               std::to_string(ratio * 100) + "% of clean (limit 50%)"};
    }

    // (b) on most seeds the balanced column stays the strongest attack
    // against the hardened model
    int wins = 0, total = 0;
    for (std::uint64_t seed : run.cfg.train_seeds) {
        labcli::CsvTable t = labcli::parse_csv(
            slurp(run.paths.tables_dir() / ("robustness_s" + std::to_string(seed) + ".csv")));
        const auto& row = t.rows.at(1);
        std::size_t best = 2;
        for (std::size_t c = 3; c < row.size(); ++c)
            if (parse_double(row[c]) > parse_double(row[best]))
                best = c;
        ++total;
        if (t.header[best] == "balanced")
            ++wins;
    }
    if (2 * wins <= total)
        return {false, "balanced is the strongest attack on only " + std::to_string(wins) +
                           " of " + std::to_string(total) + " hardened models"};
    std::ostringstream os;
    os << "worst hardened/clean damage ratio " << std::round(worst_ratio * 1000) / 10
       << "% (limit 50%); balanced is the strongest column on " << wins << " of " << total
       << " seeds";
    return {true, os.str()};
}

// ---- check 10: metric arithmetic -------------------------------------------

CheckResult check_metric_arithmetic() {
    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };

    std::vector<double> base = {1.0, 1.0};
    if (!near(metrics::adversarial_relative_accuracy(std::vector<double>{0.5, 0.9}, base),
              -0.3))
        return {false, "relative accuracy of (0.5,0.9) vs (1,1) is not -0.3"};
    if (!near(metrics::adversarial_relative_accuracy(std::vector<double>{0.8},
                                                     std::vector<double>{0.4}),
              1.0))
        return {false, "relative accuracy of a doubled score is not +1"};
    if (!near(metrics::adversarial_relative_accuracy(base, base), 0.0))
        return {false, "relative accuracy of identical scores is not 0"};

    metrics::MetricSnapshot one_low = {{0, {{"err", false, 1.0}}}};
    metrics::MetricSnapshot one_low_after = {{0, {{"err", false, 1.5}}}};
    if (!near(metrics::adversarial_relative_performance(one_low, one_low_after).overall,
              50.0))
        return {false, "lower-better 1.0 -> 1.5 is not +50%"};
    metrics::MetricSnapshot two_high = {{0, {{"a", true, 40.0}, {"b", true, 60.0}}}};
    metrics::MetricSnapshot two_high_after = {{0, {{"a", true, 20.0}, {"b", true, 30.0}}}};
    if (!near(metrics::adversarial_relative_performance(two_high, two_high_after).overall,
              50.0))
        return {false, "two halved higher-better metrics are not +50%"};
    if (!near(metrics::adversarial_relative_performance(one_low, one_low).overall, 0.0))
        return {false, "unchanged metrics are not 0%"};

    std::vector<double> l0 = {1.0, 2.0}, l1 = {2.0, 2.0};
    if (!near(metrics::relative_loss_change_sum(l0, l1), 1.0))
        return {false, "relative loss change of (1,2)->(2,2) is not 1"};
    std::vector<double> l2 = {2.0, 4.0};
    if (!near(metrics::relative_loss_change_sum(l0, l2), 2.0))
        return {false, "doubling every loss does not sum to the task count"};
    if (!near(metrics::relative_loss_change_sum(l0, l0), 0.0))
        return {false, "unchanged losses are not 0"};

    std::vector<double> arp = {50.0, 10.0, 15.0};
    if (!near(metrics::transferability(arp, 0).value, 0.25))
        return {false, "transferability of (50|10,15) is not 0.25"};
    std::vector<double> none = {50.0, 0.0, 0.0};
    if (!near(metrics::transferability(none, 0).value, 0.0))
        return {false, "transferability with no collateral damage is not 0"};

    return {true, "all pinned arithmetic examples reproduce to 1e-12"};
}

// ---- check 11: byte determinism of a full rerun ----------------------------

CheckResult check_determinism(const ReferenceRun& a, const fs::path& out_b) {
    labcli::ExperimentConfig cfg_b = a.cfg;
    cfg_b.out_dir = out_b.string();
    labcli::run_train(cfg_b, nullptr);
    labcli::run_attack(cfg_b, nullptr, 1);
    labcli::run_sweep(cfg_b, nullptr, 1);
    labcli::run_diagnose(cfg_b, nullptr, 1);
    labcli::run_advtrain(cfg_b, nullptr);
    labcli::RunPaths paths_b = labcli::RunPaths::for_config(cfg_b);

    if (slurp(a.paths.records_file()) != slurp(paths_b.records_file()))
        return {false, "records.json differs between runs"};

    int tables = 0;
    for (const auto& entry : fs::directory_iterator(a.paths.tables_dir())) {
        if (entry.path().extension() != ".csv")
            continue;
        fs::path other = paths_b.tables_dir() / entry.path().filename();
        if (!fs::exists(other))
            return {false, entry.path().filename().string() + " missing from the rerun"};
        if (slurp(entry.path()) != slurp(other))
            return {false, entry.path().filename().string() + " differs between runs"};
        ++tables;
    }
    return {true, "records.json and " + std::to_string(tables) +
                      " tables byte-identical across independent runs"};
}

} // namespace

int main(int argc, char** argv) {
    fs::path config_file = argc > 1 ? fs::path(argv[1]) : fs::path(MTLAB_REFERENCE_CONFIG);
    fs::path work = fs::temp_directory_path() / "mtlab-acceptance";
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work);

    int failures = 0;
    int index = 0;
    auto report = [&](const std::string& name, const CheckResult& r, double dt) {
        ++index;
        if (!r.pass)
            ++failures;
        std::printf("[%2d] %s %s: %s [%.1f s]\n", index, r.pass ? "PASS" : "FAIL",
                    name.c_str(), r.detail.c_str(), dt);
        std::fflush(stdout);
    };
    auto timed = [&](const std::string& name, const std::function<CheckResult()>& body) {
        auto t0 = std::chrono::steady_clock::now();
        CheckResult r;
        try {
            r = body();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        report(name, r, seconds_since(t0));
    };

    LocalBank bank;

    timed("gradients match central finite differences", check_gradient_oracle);
    timed("sign rounding attains the hypercube maximum", check_sign_rounding);
    timed("all iterates honor the perturbation budget", [&] { return check_budget_fuzz(bank); });
    timed("balanced direction survives per-task loss rescaling", check_rescaling_invariance);
    timed("degenerate configurations collapse as required", [&] { return check_degeneracies(bank); });
    timed("relative-loss objective is first-order consistent", [&] { return check_first_order(bank); });

    ReferenceRun ref;
    bool ref_ok = true;
    try {
        ref = run_reference(config_file, work / "run-a");
    } catch (const std::exception& e) {
        ref_ok = false;
        CheckResult r{false, std::string("reference benchmark failed: ") + e.what()};
        report("balanced attack dominates the budget sweep", r, 0.0);
        report("transferability rises with task sharing", r, 0.0);
        report("hardening halves damage; balanced stays strongest", r, 0.0);
    }
    if (ref_ok) {
        timed("balanced attack dominates the budget sweep", [&] { return check_budget_sweep(ref); });
        timed("transferability rises with task sharing",
              [&] { return check_transfer_vs_sharing(ref, work / "run-rho0"); });
        timed("hardening halves damage; balanced stays strongest",
              [&] { return check_hardening(ref); });
    }

    timed("metric arithmetic reproduces pinned examples", check_metric_arithmetic);

    if (ref_ok) {
        timed("full rerun is byte-identical", [&] { return check_determinism(ref, work / "run-b"); });
    } else {
        report("full rerun is byte-identical",
               {false, "skipped: reference benchmark failed"}, 0.0);
    }

    std::printf("%d of %d checks pass\n", index - failures, index);
    return failures == 0 ? 0 : 1;
}
