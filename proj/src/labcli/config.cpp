#include "mtlab/labcli/config.hpp"

#include "mtlab/common/numformat.hpp"
#include "mtlab/mtlnet/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace mtlab::labcli {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

EpsilonSpec EpsilonSpec::parse(const nlohmann::json& j) {
    EpsilonSpec e;
    if (j.is_number()) {
        e.value = j.get<double>();
        e.text = format_double(e.value);
    } else if (j.is_string()) {
        std::string s = j.get<std::string>();
        auto slash = s.find('/');
        if (slash == std::string::npos) {
            e.value = parse_double(s);
            e.text = format_double(e.value);
        } else {
            double num = parse_double(s.substr(0, slash));
            double den = parse_double(s.substr(slash + 1));
            if (den == 0.0)
                throw std::invalid_argument("epsilon '" + s + "': zero denominator");
            e.value = num / den;
            e.text = s;
        }
    } else {
        throw std::invalid_argument("epsilon must be a number or a 'k/255' string");
    }
    if (!(e.value >= 0.0) || !std::isfinite(e.value))
        throw std::invalid_argument("epsilon '" + e.text + "' must be finite and >= 0");
    return e;
}

nlohmann::json EpsilonSpec::to_json() const { return text; }

namespace {

nlohmann::json train_to_json(const mtlnet::TrainConfig& t,
                             const std::vector<std::uint64_t>& seeds) {
    return {{"epochs", t.epochs},
            {"lr", t.lr},
            {"batch_size", t.batch_size},
            {"seeds", seeds}};
}

} // namespace

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json layouts_json = nlohmann::json::array();
    for (const mtlnet::Layout& l : layouts)
        layouts_json.push_back(mtlnet::format_layout(l));

    nlohmann::json drivers_json = nlohmann::json::array();
    for (attackkit::Driver d : drivers)
        drivers_json.push_back(attackkit::driver_name(d));

    nlohmann::json combiners_json = nlohmann::json::array();
    for (const attackkit::GradientCombiner& c : combiners)
        combiners_json.push_back(c.label());

    nlohmann::json eps_json = nlohmann::json::array();
    for (const EpsilonSpec& e : epsilons)
        eps_json.push_back(e.to_json());

    nlohmann::json fat_defenses = nlohmann::json::array();
    for (const attackkit::GradientCombiner& c : fat.defenses)
        fat_defenses.push_back(c.label());

    return {{"dataset", mtlnet::dataset_config_to_json(dataset)},
            {"models", {{"layouts", layouts_json}, {"names", layout_names}, {"widths", widths}}},
            {"train", train_to_json(train, train_seeds)},
            {"attack",
             {{"drivers", drivers_json},
              {"combiners", combiners_json},
              {"epsilons", eps_json},
              {"n_iter", attack_iters}}},
            {"diagnose",
             {{"driver", attackkit::driver_name(diagnose.driver)},
              {"epsilon", diagnose.epsilon.to_json()},
              {"n_iter", diagnose.n_iter}}},
            {"fat",
             {{"enabled", fat.enabled},
              {"defenses", fat_defenses},
              {"inner_steps", fat.inner_steps},
              {"epsilon", fat.epsilon.to_json()},
              {"eval_iters", fat.eval_iters},
              {"epochs", fat.epochs},
              {"model", fat.model_name}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.is_object())
        throw std::invalid_argument("config: top level must be an object");
    if (!j.contains("dataset"))
        throw std::invalid_argument("config: missing 'dataset'");
    cfg.dataset = mtlnet::dataset_config_from_json(j.at("dataset"));
    const int n_tasks = static_cast<int>(cfg.dataset.tasks.size());

    if (!j.contains("models"))
        throw std::invalid_argument("config: missing 'models'");
    const nlohmann::json& models = j.at("models");
    cfg.widths = models.at("widths").get<std::vector<int>>();
    const int depth = static_cast<int>(cfg.widths.size());
    if (models.contains("sharing_levels")) {
        for (int level : models.at("sharing_levels").get<std::vector<int>>()) {
            cfg.layouts.push_back(mtlnet::sharing_level_layout(level, depth, n_tasks));
            cfg.layout_names.push_back(std::to_string(level) + "L");
        }
    }
    if (models.contains("layouts")) {
        auto texts = models.at("layouts").get<std::vector<std::string>>();
        std::vector<std::string> names;
        if (models.contains("names"))
            names = models.at("names").get<std::vector<std::string>>();
        if (!names.empty() && names.size() != texts.size())
            throw std::invalid_argument("config: models.names must match models.layouts");
        for (std::size_t i = 0; i < texts.size(); ++i) {
            cfg.layouts.push_back(mtlnet::parse_layout(texts[i]));
            cfg.layout_names.push_back(names.empty() ? "m" + std::to_string(i) : names[i]);
        }
    }

    if (!j.contains("train"))
        throw std::invalid_argument("config: missing 'train'");
    const nlohmann::json& train = j.at("train");
    cfg.train.epochs = train.value("epochs", cfg.train.epochs);
    cfg.train.lr = train.value("lr", cfg.train.lr);
    cfg.train.batch_size = train.value("batch_size", cfg.train.batch_size);
    if (train.contains("seeds"))
        cfg.train_seeds = train.at("seeds").get<std::vector<std::uint64_t>>();
    else if (train.contains("seed"))
        cfg.train_seeds = {train.at("seed").get<std::uint64_t>()};
    else
        cfg.train_seeds = {0};

    if (!j.contains("attack"))
        throw std::invalid_argument("config: missing 'attack'");
    const nlohmann::json& attack = j.at("attack");
    for (const auto& d : attack.at("drivers"))
        cfg.drivers.push_back(attackkit::parse_driver(d.get<std::string>()));
    for (const auto& c : attack.at("combiners"))
        cfg.combiners.push_back(attackkit::GradientCombiner::parse(c.get<std::string>()));
    for (const auto& e : attack.at("epsilons"))
        cfg.epsilons.push_back(EpsilonSpec::parse(e));
    cfg.attack_iters = attack.value("n_iter", cfg.attack_iters);

    // defaults for the optional stages lean on the attack grid
    EpsilonSpec default_eps =
        cfg.epsilons.empty() ? EpsilonSpec::parse("8/255") : cfg.epsilons.back();
    cfg.diagnose.epsilon = default_eps;
    cfg.diagnose.n_iter = cfg.attack_iters;
    if (j.contains("diagnose")) {
        const nlohmann::json& d = j.at("diagnose");
        if (d.contains("driver"))
            cfg.diagnose.driver = attackkit::parse_driver(d.at("driver").get<std::string>());
        if (d.contains("epsilon"))
            cfg.diagnose.epsilon = EpsilonSpec::parse(d.at("epsilon"));
        cfg.diagnose.n_iter = d.value("n_iter", cfg.diagnose.n_iter);
    }

    cfg.fat.epsilon = default_eps;
    cfg.fat.epochs = cfg.train.epochs;
    cfg.fat.model_name = cfg.layout_names.empty() ? "" : cfg.layout_names.back();
    cfg.fat.defenses = {attackkit::GradientCombiner::balanced()};
    if (j.contains("fat")) {
        const nlohmann::json& f = j.at("fat");
        cfg.fat.enabled = f.value("enabled", true);
        if (f.contains("defenses")) {
            cfg.fat.defenses.clear();
            for (const auto& c : f.at("defenses"))
                cfg.fat.defenses.push_back(
                    attackkit::GradientCombiner::parse(c.get<std::string>()));
        }
        cfg.fat.inner_steps = f.value("inner_steps", cfg.fat.inner_steps);
        if (f.contains("epsilon"))
            cfg.fat.epsilon = EpsilonSpec::parse(f.at("epsilon"));
        cfg.fat.eval_iters = f.value("eval_iters", cfg.fat.eval_iters);
        cfg.fat.epochs = f.value("epochs", cfg.fat.epochs);
        cfg.fat.model_name = f.value("model", cfg.fat.model_name);
    }

    cfg.out_dir = j.value("out", cfg.out_dir);
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    const int n_tasks = static_cast<int>(dataset.tasks.size());
    mtlnet::validate_tasks(dataset.tasks);

    if (layouts.empty())
        throw std::invalid_argument("config: no models in the grid");
    if (layouts.size() != layout_names.size())
        throw std::invalid_argument("config: layout names out of step with layouts");
    if (widths.empty())
        throw std::invalid_argument("config: empty widths");
    for (int w : widths)
        if (w < 1)
            throw std::invalid_argument("config: widths must be positive");
    std::set<std::string> names;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
        auto violation = mtlnet::validate_layout(layouts[i]);
        if (violation)
            throw std::invalid_argument("config: layout '" + layout_names[i] +
                                        "': " + *violation);
        if (layouts[i].partitions.size() != widths.size())
            throw std::invalid_argument("config: layout '" + layout_names[i] +
                                        "' depth differs from widths");
        if (static_cast<int>(layouts[i].task_ids().size()) != n_tasks)
            throw std::invalid_argument("config: layout '" + layout_names[i] +
                                        "' does not cover the task set");
        if (layout_names[i].empty() || !names.insert(layout_names[i]).second)
            throw std::invalid_argument("config: duplicate or empty model name '" +
                                        layout_names[i] + "'");
    }

    if (train_seeds.empty())
        throw std::invalid_argument("config: no training seeds");
    if (std::set<std::uint64_t>(train_seeds.begin(), train_seeds.end()).size() !=
        train_seeds.size())
        throw std::invalid_argument("config: duplicate training seeds");
    if (train.epochs < 1 || train.lr <= 0.0 || train.batch_size < 1)
        throw std::invalid_argument("config: bad training settings");

    if (drivers.empty())
        throw std::invalid_argument("config: no attack drivers");
    if (std::set<attackkit::Driver>(drivers.begin(), drivers.end()).size() != drivers.size())
        throw std::invalid_argument("config: duplicate drivers");
    if (combiners.empty())
        throw std::invalid_argument("config: no combiners");
    std::set<std::string> combiner_labels;
    for (const attackkit::GradientCombiner& c : combiners) {
        c.validate(n_tasks);
        if (!combiner_labels.insert(c.label()).second)
            throw std::invalid_argument("config: duplicate combiner " + c.label());
    }
    if (epsilons.empty())
        throw std::invalid_argument("config: no epsilons");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        if (epsilons[i].value < 0.0)
            throw std::invalid_argument("config: negative epsilon");
        if (i > 0 && !(epsilons[i].value > epsilons[i - 1].value))
            throw std::invalid_argument("config: epsilons must increase strictly");
    }
    if (attack_iters < 1 || diagnose.n_iter < 1)
        throw std::invalid_argument("config: attack iteration counts must be >= 1");

    if (fat.enabled) {
        if (fat.defenses.empty())
            throw std::invalid_argument("config: adversarial training without defenses");
        std::set<std::string> defense_labels;
        for (const attackkit::GradientCombiner& c : fat.defenses) {
            c.validate(n_tasks);
            if (!defense_labels.insert(c.label()).second)
                throw std::invalid_argument("config: duplicate defense " + c.label());
        }
        if (fat.inner_steps < 0 || fat.eval_iters < 1 || fat.epochs < 1)
            throw std::invalid_argument("config: bad adversarial-training settings");
        if (std::find(layout_names.begin(), layout_names.end(), fat.model_name) ==
            layout_names.end())
            throw std::invalid_argument("config: unknown hardened model '" + fat.model_name +
                                        "'");
    }
}

std::string ExperimentConfig::hash() const {
    std::uint64_t h = fnv1a64(to_json().dump());
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return buf;
}

} // namespace mtlab::labcli
