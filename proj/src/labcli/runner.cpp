#include "mtlab/labcli/runner.hpp"

#include "mtlab/advtrain/advtrain.hpp"
#include "mtlab/attackkit/diagnostics.hpp"
#include "mtlab/common/numformat.hpp"
#include "mtlab/labcli/csv.hpp"
#include "mtlab/labcli/svg.hpp"
#include "mtlab/mtlnet/serialize.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

namespace mtlab::labcli {

namespace fs = std::filesystem;
using attackkit::AttackConfig;
using attackkit::GradientCombiner;
using attackkit::PerturbationBudget;

RunPaths RunPaths::for_config(const ExperimentConfig& cfg) {
    return RunPaths{fs::path(cfg.out_dir) / cfg.hash()};
}

fs::path RunPaths::model_file(const std::string& name, std::uint64_t seed) const {
    return models_dir() / (name + "-s" + std::to_string(seed) + ".json");
}

fs::path RunPaths::robust_model_file(const std::string& combiner, std::uint64_t seed) const {
    return models_dir() / ("fat-" + combiner + "-s" + std::to_string(seed) + ".json");
}

namespace {

void say(std::ostream* log, const std::string& line) {
    if (log)
        *log << line << "\n";
}

void write_text_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw std::runtime_error("failed to write " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("failed to read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Keyed, lazily loaded checkpoints plus their clean test metrics.
class ModelBank {
public:
    ModelBank(const ExperimentConfig& cfg, const RunPaths& paths,
              const mtlnet::LabeledBatch& test)
        : cfg_(cfg), paths_(paths), test_(test) {}

    const mtlnet::BranchedModel& model(const std::string& name, std::uint64_t seed) {
        auto key = std::make_pair(name, seed);
        auto it = models_.find(key);
        if (it == models_.end()) {
            fs::path file = paths_.model_file(name, seed);
            if (!fs::exists(file))
                throw std::runtime_error("missing checkpoint " + file.string() +
                                         "; run the train subcommand first");
            it = models_.emplace(key, mtlnet::load_model(file)).first;
        }
        return it->second;
    }

    const metrics::MetricSnapshot& clean_snapshot(const std::string& name,
                                                  std::uint64_t seed) {
        auto key = std::make_pair(name, seed);
        auto it = snapshots_.find(key);
        if (it == snapshots_.end()) {
            mtlnet::BatchEvaluator ev(model(name, seed), test_);
            it = snapshots_.emplace(key, ev.metric_snapshot(test_.inputs)).first;
        }
        return it->second;
    }

private:
    const ExperimentConfig& cfg_;
    const RunPaths& paths_;
    const mtlnet::LabeledBatch& test_;
    std::map<std::pair<std::string, std::uint64_t>, mtlnet::BranchedModel> models_;
    std::map<std::pair<std::string, std::uint64_t>, metrics::MetricSnapshot> snapshots_;
};

struct CellSpec {
    std::string model;
    std::uint64_t seed = 0;
    attackkit::Driver driver;
    GradientCombiner combiner;
    EpsilonSpec epsilon;
    int n_iter = 0;

    std::string id() const {
        return make_cell_id(model, seed, attackkit::driver_name(driver), combiner.label(),
                            epsilon.text, n_iter);
    }
};

// The main attack grid in canonical order: model, seed, driver, combiner, eps.
std::vector<CellSpec> grid_cells(const ExperimentConfig& cfg) {
    std::vector<CellSpec> cells;
    for (const std::string& name : cfg.layout_names)
        for (std::uint64_t seed : cfg.train_seeds)
            for (attackkit::Driver driver : cfg.drivers)
                for (const GradientCombiner& combiner : cfg.combiners)
                    for (const EpsilonSpec& eps : cfg.epsilons)
                        cells.push_back(
                            {name, seed, driver, combiner, eps, cfg.attack_iters});
    return cells;
}

std::vector<CellSpec> diagnose_cells(const ExperimentConfig& cfg) {
    std::vector<CellSpec> cells;
    for (const std::string& name : cfg.layout_names)
        for (std::uint64_t seed : cfg.train_seeds)
            for (int task = 0; task < static_cast<int>(cfg.dataset.tasks.size()); ++task)
                cells.push_back({name, seed, cfg.diagnose.driver,
                                 GradientCombiner::single(task), cfg.diagnose.epsilon,
                                 cfg.diagnose.n_iter});
    return cells;
}

CellResult compute_cell(const CellSpec& spec, const mtlnet::BranchedModel& model,
                        const metrics::MetricSnapshot& before,
                        const mtlnet::LabeledBatch& test) {
    AttackConfig attack;
    attack.driver = spec.driver;
    attack.combiner = spec.combiner;
    attack.budget = PerturbationBudget{spec.epsilon.value};
    attack.n_iter = spec.driver == attackkit::Driver::Fgsm ? 1 : spec.n_iter;

    attackkit::AttackTrace trace = run_attack(model, test, attack);
    mtlnet::BatchEvaluator ev(model, test);

    CellResult cell;
    cell.cell_id = spec.id();
    cell.model = spec.model;
    cell.seed = spec.seed;
    cell.driver = attackkit::driver_name(spec.driver);
    cell.combiner = spec.combiner.label();
    cell.epsilon_text = spec.epsilon.text;
    cell.epsilon = spec.epsilon.value;
    cell.n_iter = attack.n_iter;
    cell.before = before;
    cell.after = ev.metric_snapshot(trace.x_adv);
    cell.arp = metrics::adversarial_relative_performance(cell.before, cell.after).overall;
    cell.final_objective = trace.final_objective;
    cell.best_objective = trace.best_objective;
    cell.steps = static_cast<int>(trace.steps.size()) - 1;
    return cell;
}

// Computes every cell not yet in `records`, saving as it goes so an
// interrupted run resumes where it stopped.
void ensure_cells(const RunPaths& paths, RunRecords& records,
                  const std::vector<CellSpec>& wanted, ModelBank& bank,
                  const mtlnet::LabeledBatch& test, int jobs, std::ostream* log) {
    std::vector<const CellSpec*> missing;
    for (const CellSpec& spec : wanted)
        if (records.find(spec.id()) == nullptr)
            missing.push_back(&spec);
    if (missing.empty())
        return;
    say(log, "computing " + std::to_string(missing.size()) + " of " +
                 std::to_string(wanted.size()) + " grid cells");

    // touch every model and snapshot up front: fail fast on missing
    // checkpoints and keep the parallel section read-only
    for (const CellSpec* spec : missing)
        bank.clean_snapshot(spec->model, spec->seed);

    std::mutex write_lock;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= missing.size() || failure)
                return;
            const CellSpec& spec = *missing[i];
            try {
                CellResult cell = compute_cell(spec, bank.model(spec.model, spec.seed),
                                               bank.clean_snapshot(spec.model, spec.seed),
                                               test);
                std::lock_guard<std::mutex> hold(write_lock);
                records.upsert(std::move(cell));
                std::size_t n = done.fetch_add(1) + 1;
                if (n % 64 == 0)
                    save_records(paths.records_file(), records);
            } catch (...) {
                std::lock_guard<std::mutex> hold(write_lock);
                if (!failure)
                    failure = std::current_exception();
                return;
            }
        }
    };

    int n_threads = std::max(1, jobs);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (std::thread& t : pool)
            t.join();
    }
    if (failure)
        std::rethrow_exception(failure);
    save_records(paths.records_file(), records);
}

const CellResult& cell_or_throw(const RunRecords& records, const CellSpec& spec) {
    const CellResult* cell = records.find(spec.id());
    if (!cell)
        throw std::runtime_error("missing record for cell '" + spec.id() + "'");
    return *cell;
}

} // namespace

int run_train(const ExperimentConfig& cfg, std::ostream* log) {
    cfg.validate();
    RunPaths paths = RunPaths::for_config(cfg);
    fs::create_directories(paths.models_dir());
    mtlnet::save_json_file(paths.root / "config.json", cfg.to_json());

    mtlnet::Dataset data = mtlnet::generate_dataset(cfg.dataset);
    for (std::size_t i = 0; i < cfg.layouts.size(); ++i) {
        for (std::uint64_t seed : cfg.train_seeds) {
            fs::path file = paths.model_file(cfg.layout_names[i], seed);
            if (fs::exists(file)) {
                say(log, "kept " + file.string());
                continue;
            }
            mtlnet::BranchedModel model = mtlnet::build_model(
                cfg.layouts[i], cfg.widths, cfg.dataset.tasks, cfg.dataset.input_dim, seed);
            mtlnet::TrainConfig tc = cfg.train;
            tc.seed = seed;
            mtlnet::TrainTrace trace = mtlnet::train_model(model, data.train, tc);
            mtlnet::save_model(file, model);
            say(log, "trained " + cfg.layout_names[i] + " seed " + std::to_string(seed) +
                         ": loss " + format_double(trace.epoch_loss.back()) + " -> " +
                         file.string());
        }
    }
    return 0;
}

int run_attack(const ExperimentConfig& cfg, std::ostream* log, int jobs) {
    cfg.validate();
    RunPaths paths = RunPaths::for_config(cfg);
    mtlnet::Dataset data = mtlnet::generate_dataset(cfg.dataset);
    ModelBank bank(cfg, paths, data.test);

    RunRecords records = load_records(paths.records_file(), cfg.hash());
    std::vector<CellSpec> cells = grid_cells(cfg);
    ensure_cells(paths, records, cells, bank, data.test, jobs, log);

    // Per-cell table: one row per model/seed/driver/budget, one column per
    // combiner.
    CsvTable table;
    table.header = {"model", "seed", "driver", "epsilon"};
    for (const GradientCombiner& c : cfg.combiners)
        table.header.push_back(c.label());
    for (const std::string& name : cfg.layout_names)
        for (std::uint64_t seed : cfg.train_seeds)
            for (attackkit::Driver driver : cfg.drivers)
                for (const EpsilonSpec& eps : cfg.epsilons) {
                    std::vector<std::string> row = {name, std::to_string(seed),
                                                    attackkit::driver_name(driver), eps.text};
                    for (const GradientCombiner& comb : cfg.combiners) {
                        CellSpec spec{name, seed, driver, comb, eps, cfg.attack_iters};
                        row.push_back(format_double(cell_or_throw(records, spec).arp));
                    }
                    table.add_row(std::move(row));
                }
    write_text_file(paths.tables_dir() / "attack_arp.csv", to_csv(table));
    say(log, "wrote " + (paths.tables_dir() / "attack_arp.csv").string());
    return 0;
}

int run_sweep(const ExperimentConfig& cfg, std::ostream* log, int jobs) {
    cfg.validate();
    RunPaths paths = RunPaths::for_config(cfg);
    mtlnet::Dataset data = mtlnet::generate_dataset(cfg.dataset);
    ModelBank bank(cfg, paths, data.test);

    RunRecords records = load_records(paths.records_file(), cfg.hash());
    ensure_cells(paths, records, grid_cells(cfg), bank, data.test, jobs, log);

    // Mean overall damage over every model and seed, per driver, combiner,
    // and budget: one table and one plot per driver.
    for (attackkit::Driver driver : cfg.drivers) {
        CsvTable table;
        table.header = {"epsilon"};
        for (const GradientCombiner& c : cfg.combiners)
            table.header.push_back(c.label());

        std::vector<Series> curves(cfg.combiners.size());
        for (std::size_t ci = 0; ci < cfg.combiners.size(); ++ci)
            curves[ci].label = cfg.combiners[ci].label();

        for (const EpsilonSpec& eps : cfg.epsilons) {
            std::vector<std::string> row = {eps.text};
            for (std::size_t ci = 0; ci < cfg.combiners.size(); ++ci) {
                double sum = 0.0;
                int count = 0;
                for (const std::string& name : cfg.layout_names)
                    for (std::uint64_t seed : cfg.train_seeds) {
                        CellSpec spec{name, seed, driver, cfg.combiners[ci], eps,
                                      cfg.attack_iters};
                        sum += cell_or_throw(records, spec).arp;
                        ++count;
                    }
                double mean = sum / count;
                row.push_back(format_double(mean));
                curves[ci].x.push_back(eps.value * 255.0);
                curves[ci].y.push_back(mean);
            }
            table.add_row(std::move(row));
        }
        std::string driver_tag = attackkit::driver_name(driver);
        write_text_file(paths.tables_dir() / ("sweep_" + driver_tag + ".csv"),
                        to_csv(table));
        write_text_file(paths.plots_dir() / ("sweep_" + driver_tag + ".svg"),
                        line_plot_svg("mean relative damage vs budget (" + driver_tag + ")",
                                      "epsilon x 255", "overall ARP (%)", curves));
        say(log, "wrote sweep table and plot for " + driver_tag);
    }
    return 0;
}

int run_diagnose(const ExperimentConfig& cfg, std::ostream* log, int jobs) {
    cfg.validate();
    RunPaths paths = RunPaths::for_config(cfg);
    mtlnet::Dataset data = mtlnet::generate_dataset(cfg.dataset);
    ModelBank bank(cfg, paths, data.test);
    const int n_tasks = static_cast<int>(cfg.dataset.tasks.size());

    RunRecords records = load_records(paths.records_file(), cfg.hash());
    ensure_cells(paths, records, diagnose_cells(cfg), bank, data.test, jobs, log);

    // Transferability per model and designated task, averaged over seeds;
    // then the rank correlation of each column against grid position.
    CsvTable table;
    table.header = {"model"};
    for (int task = 0; task < n_tasks; ++task)
        table.header.push_back("single-" + std::to_string(task));

    // A seed where the attacked task itself took no damage has no defined
    // ratio; such seeds are left out of the mean, and a column with no
    // usable seed at all reads "undefined".
    std::vector<std::vector<double>> columns(n_tasks);
    for (const std::string& name : cfg.layout_names) {
        std::vector<std::string> row = {name};
        for (int task = 0; task < n_tasks; ++task) {
            double sum = 0.0;
            std::size_t defined = 0;
            for (std::uint64_t seed : cfg.train_seeds) {
                CellSpec spec{name, seed, cfg.diagnose.driver, GradientCombiner::single(task),
                              cfg.diagnose.epsilon, cfg.diagnose.n_iter};
                const CellResult& cell = cell_or_throw(records, spec);
                metrics::ArpResult arp =
                    metrics::adversarial_relative_performance(cell.before, cell.after);
                if (arp.per_task[static_cast<std::size_t>(task)] == 0.0)
                    continue;
                sum += metrics::transferability(arp.per_task, task).value;
                ++defined;
            }
            if (defined == 0) {
                row.push_back("undefined");
                columns[task].push_back(std::numeric_limits<double>::quiet_NaN());
            } else {
                double mean = sum / static_cast<double>(defined);
                row.push_back(format_double(mean));
                columns[task].push_back(mean);
            }
        }
        table.add_row(std::move(row));
    }
    std::vector<std::string> corr_row = {"spearman-vs-position"};
    for (int task = 0; task < n_tasks; ++task) {
        std::vector<double> positions, values;
        for (std::size_t i = 0; i < columns[task].size(); ++i)
            if (!std::isnan(columns[task][i])) {
                positions.push_back(static_cast<double>(i));
                values.push_back(columns[task][i]);
            }
        std::optional<double> rho;
        if (positions.size() >= 2)
            rho = metrics::spearman_rank_correlation(positions, values);
        corr_row.push_back(rho ? format_double(*rho) : "undefined");
    }
    table.add_row(std::move(corr_row));
    write_text_file(paths.tables_dir() / "transferability.csv", to_csv(table));

    // Gradient-dominance trace of the balanced attack, per model and seed.
    CsvTable dom;
    dom.header = {"model", "seed", "step", "dominance", "objective"};
    for (const std::string& name : cfg.layout_names)
        for (std::uint64_t seed : cfg.train_seeds) {
            AttackConfig attack;
            attack.driver = cfg.diagnose.driver;
            attack.combiner = GradientCombiner::balanced();
            attack.budget = PerturbationBudget{cfg.diagnose.epsilon.value};
            attack.n_iter = cfg.diagnose.n_iter;
            attackkit::AttackTrace trace =
                run_attack(bank.model(name, seed), data.test, attack);
            for (const attackkit::AttackStep& step : trace.steps)
                dom.add_row({name, std::to_string(seed), std::to_string(step.index),
                             format_double(step.dominance), format_double(step.objective)});
        }
    write_text_file(paths.tables_dir() / "dominance.csv", to_csv(dom));

    // Pairwise perturbation alignment between single-task attacks.
    CsvTable align;
    align.header = {"model", "seed", "task_a", "task_b", "cosine"};
    for (const std::string& name : cfg.layout_names)
        for (std::uint64_t seed : cfg.train_seeds)
            for (int a = 0; a < n_tasks; ++a)
                for (int b = a + 1; b < n_tasks; ++b) {
                    auto cosine = attackkit::perturbation_alignment(
                        bank.model(name, seed), data.test,
                        PerturbationBudget{cfg.diagnose.epsilon.value}, cfg.diagnose.driver,
                        a, b, cfg.diagnose.n_iter);
                    align.add_row({name, std::to_string(seed), std::to_string(a),
                                   std::to_string(b),
                                   cosine ? format_double(*cosine) : "undefined"});
                }
    write_text_file(paths.tables_dir() / "alignment.csv", to_csv(align));
    say(log, "wrote transferability, dominance, and alignment tables");
    return 0;
}

int run_advtrain(const ExperimentConfig& cfg, std::ostream* log) {
    cfg.validate();
    if (!cfg.fat.enabled)
        throw std::invalid_argument("adversarial training is not configured; add a 'fat' "
                                    "section to the config");
    RunPaths paths = RunPaths::for_config(cfg);
    mtlnet::Dataset data = mtlnet::generate_dataset(cfg.dataset);
    ModelBank bank(cfg, paths, data.test);

    std::size_t layout_index =
        std::find(cfg.layout_names.begin(), cfg.layout_names.end(), cfg.fat.model_name) -
        cfg.layout_names.begin();

    // The adaptive-step driver copes best with the flattened loss surfaces of
    // hardened models, so the matrix ranks combiners by converged strength.
    std::vector<AttackConfig> attacks;
    for (const GradientCombiner& c : cfg.combiners)
        attacks.push_back(AttackConfig::apgd(c, PerturbationBudget{cfg.fat.epsilon.value},
                                             cfg.fat.eval_iters));

    // one robustness matrix per training seed, then the cell-wise mean
    std::vector<advtrain::RobustnessMatrix> matrices;
    for (std::uint64_t seed : cfg.train_seeds) {
        const mtlnet::BranchedModel& clean = bank.model(cfg.fat.model_name, seed);

        std::vector<mtlnet::BranchedModel> robust;
        std::vector<advtrain::DefenseEntry> defenses = {{"clean", &clean}};
        robust.reserve(cfg.fat.defenses.size());
        for (const GradientCombiner& defense : cfg.fat.defenses) {
            fs::path file = paths.robust_model_file(defense.label(), seed);
            if (fs::exists(file)) {
                robust.push_back(mtlnet::load_model(file));
                say(log, "kept " + file.string());
            } else {
                advtrain::FatConfig fat;
                fat.inner = AttackConfig::pgd(
                    defense, PerturbationBudget{cfg.fat.epsilon.value}, cfg.fat.inner_steps);
                fat.train = cfg.train;
                fat.train.epochs = cfg.fat.epochs;
                fat.train.seed = seed;
                mtlnet::BranchedModel model =
                    mtlnet::build_model(cfg.layouts[layout_index], cfg.widths,
                                        cfg.dataset.tasks, cfg.dataset.input_dim, seed);
                advtrain::fat_train(model, data.train, fat);
                mtlnet::save_model(file, model);
                say(log, "hardened against " + defense.label() + " seed " +
                             std::to_string(seed) + " -> " + file.string());
                robust.push_back(std::move(model));
            }
        }
        for (std::size_t i = 0; i < robust.size(); ++i)
            defenses.push_back({cfg.fat.defenses[i].label(), &robust[i]});

        advtrain::RobustnessMatrix matrix = advtrain::robust_eval(defenses, data.test, attacks);
        write_text_file(paths.tables_dir() /
                            ("robustness_s" + std::to_string(seed) + ".csv"),
                        matrix.to_csv());
        matrices.push_back(std::move(matrix));
    }

    // cell-wise mean across seeds
    advtrain::RobustnessMatrix mean = matrices.front();
    for (std::size_t m = 1; m < matrices.size(); ++m)
        for (std::size_t i = 0; i < mean.records.size(); ++i) {
            mean.records[i].arp += matrices[m].records[i].arp;
            mean.records[i].clean_cost += matrices[m].records[i].clean_cost;
        }
    for (advtrain::RobustnessRecord& rec : mean.records) {
        rec.arp /= static_cast<double>(matrices.size());
        rec.clean_cost /= static_cast<double>(matrices.size());
    }
    write_text_file(paths.tables_dir() / "robustness.csv", mean.to_csv());
    say(log, "wrote robustness matrices for " + std::to_string(matrices.size()) + " seeds");
    return 0;
}

int run_report(const ExperimentConfig& cfg, std::ostream* log) {
    cfg.validate();
    RunPaths paths = RunPaths::for_config(cfg);
    if (!fs::exists(paths.records_file()))
        throw std::runtime_error("no records at " + paths.records_file().string() +
                                 "; run attack/sweep first");
    RunRecords records = load_records(paths.records_file(), cfg.hash());

    // every stored damage number must be recomputable from its snapshots
    std::size_t checked = 0;
    for (const CellResult& cell : records.cells) {
        double recomputed =
            metrics::adversarial_relative_performance(cell.before, cell.after).overall;
        if (recomputed != cell.arp)
            throw std::runtime_error("record '" + cell.cell_id +
                                     "' does not match its snapshots");
        ++checked;
    }

    // every emitted table must survive a parse/emit round trip byte for byte
    std::vector<std::string> table_names;
    if (fs::exists(paths.tables_dir()))
        for (const auto& entry : fs::directory_iterator(paths.tables_dir()))
            if (entry.path().extension() == ".csv")
                table_names.push_back(entry.path().filename().string());
    std::sort(table_names.begin(), table_names.end());
    for (const std::string& name : table_names) {
        std::string text = read_text_file(paths.tables_dir() / name);
        if (to_csv(parse_csv(text)) != text)
            throw std::runtime_error("table " + name + " does not round-trip");
    }

    std::string md;
    md += "# Run report\n\n";
    md += "- config hash: `" + cfg.hash() + "`\n";
    md += "- tool version: " + std::string(kToolVersion) + "\n";
    md += "- records: " + std::to_string(records.cells.size()) + " cells, " +
          std::to_string(checked) + " verified against their snapshots\n";
    md += "- tables checked: " + std::to_string(table_names.size()) + "\n\n";

    if (!records.cells.empty()) {
        md += "## Mean overall ARP by driver and combiner (largest budget)\n\n";
        const std::string& top_eps = cfg.epsilons.back().text;
        md += "| driver | combiner | mean ARP (%) |\n|---|---|---|\n";
        for (attackkit::Driver driver : cfg.drivers) {
            for (const GradientCombiner& comb : cfg.combiners) {
                double sum = 0.0;
                int count = 0;
                for (const CellResult& cell : records.cells)
                    if (cell.driver == attackkit::driver_name(driver) &&
                        cell.combiner == comb.label() && cell.epsilon_text == top_eps &&
                        cell.n_iter == cfg.attack_iters) {
                        sum += cell.arp;
                        ++count;
                    }
                if (count > 0)
                    md += "| " + std::string(attackkit::driver_name(driver)) + " | " +
                          comb.label() + " | " + format_double(sum / count) + " |\n";
            }
        }
        md += "\n";
    }
    for (const std::string& name : table_names)
        md += "- table: " + name + "\n";

    write_text_file(paths.tables_dir() / "report.md", md);
    say(log, "report verified " + std::to_string(checked) + " cells and " +
                 std::to_string(table_names.size()) + " tables");
    return 0;
}

} // namespace mtlab::labcli
