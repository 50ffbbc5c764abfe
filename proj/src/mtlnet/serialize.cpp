#include "mtlab/mtlnet/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace mtlab::mtlnet {

nlohmann::json task_to_json(const TaskSpec& t) {
    return {{"id", t.id},
            {"head", head_kind_name(t.head)},
            {"output_dim", t.output_dim},
            {"name", t.name},
            {"angle_threshold_deg", t.angle_threshold_deg}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
    TaskSpec t;
    t.id = j.at("id").get<int>();
    t.head = parse_head_kind(j.at("head").get<std::string>());
    t.output_dim = j.at("output_dim").get<int>();
    t.name = j.value("name", std::string{});
    t.angle_threshold_deg = j.value("angle_threshold_deg", 30.0);
    return t;
}

nlohmann::json model_to_json(const BranchedModel& m) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const TaskSpec& t : m.tasks)
        tasks.push_back(task_to_json(t));
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : m.params) {
        nlohmann::json shape = nlohmann::json::array();
        for (std::size_t e : p.shape())
            shape.push_back(e);
        params.push_back({{"shape", shape}, {"data", p.storage()}});
    }
    return {{"format", "branched-model"},
            {"version", 1},
            {"layout", format_layout(m.layout)},
            {"widths", m.widths},
            {"input_dim", m.input_dim},
            {"init_seed", m.init_seed},
            {"tasks", tasks},
            {"params", params}};
}

BranchedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "branched-model")
        throw std::invalid_argument("not a model file (missing format tag)");
    Layout layout = parse_layout(j.at("layout").get<std::string>());
    std::vector<int> widths = j.at("widths").get<std::vector<int>>();
    std::vector<TaskSpec> tasks;
    for (const auto& tj : j.at("tasks"))
        tasks.push_back(task_from_json(tj));
    BranchedModel m = build_model(layout, widths, tasks, j.at("input_dim").get<int>(),
                                  j.at("init_seed").get<std::uint64_t>());
    const auto& params = j.at("params");
    if (params.size() != m.params.size())
        throw std::invalid_argument("model file has " + std::to_string(params.size()) +
                                    " parameter tensors, expected " +
                                    std::to_string(m.params.size()));
    for (std::size_t i = 0; i < m.params.size(); ++i) {
        auto shape = params[i].at("shape").get<std::vector<std::size_t>>();
        auto data = params[i].at("data").get<std::vector<double>>();
        diffcore::Tensor t(shape, std::move(data));
        if (!t.same_shape(m.params[i]))
            throw std::invalid_argument("parameter " + std::to_string(i) + " has shape " +
                                        t.shape_str() + ", expected " + m.params[i].shape_str());
        m.params[i] = std::move(t);
    }
    return m;
}

nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const TaskSpec& t : c.tasks)
        tasks.push_back(task_to_json(t));
    return {{"tasks", tasks},
            {"input_dim", c.input_dim},
            {"train_size", c.train_size},
            {"test_size", c.test_size},
            {"rho", c.rho},
            {"latent_dim", c.latent_dim},
            {"seed", c.seed}};
}

DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
    DatasetConfig c;
    for (const auto& tj : j.at("tasks"))
        c.tasks.push_back(task_from_json(tj));
    c.input_dim = j.at("input_dim").get<int>();
    c.train_size = j.at("train_size").get<std::size_t>();
    c.test_size = j.at("test_size").get<std::size_t>();
    c.rho = j.at("rho").get<double>();
    c.latent_dim = j.value("latent_dim", 8);
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("failed to parse " + path.string() + ": " + e.what());
    }
}

void save_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << j.dump(1) << "\n";
}

void save_model(const std::filesystem::path& path, const BranchedModel& m) {
    save_json_file(path, model_to_json(m));
}

BranchedModel load_model(const std::filesystem::path& path) {
    return model_from_json(load_json_file(path));
}

} // namespace mtlab::mtlnet
