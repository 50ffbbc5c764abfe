#include "mtlab/labcli/records.hpp"

#include "mtlab/labcli/config.hpp"
#include "mtlab/mtlnet/serialize.hpp"

#include <algorithm>
#include <stdexcept>

namespace mtlab::labcli {

std::string make_cell_id(const std::string& model, std::uint64_t seed,
                         const std::string& driver, const std::string& combiner,
                         const std::string& epsilon_text, int n_iter) {
    return "model=" + model + " seed=" + std::to_string(seed) + " driver=" + driver +
           " combiner=" + combiner + " eps=" + epsilon_text + " iters=" +
           std::to_string(n_iter);
}

nlohmann::json CellResult::to_json() const {
    return {{"cell_id", cell_id},
            {"model", model},
            {"seed", seed},
            {"driver", driver},
            {"combiner", combiner},
            {"epsilon_text", epsilon_text},
            {"epsilon", epsilon},
            {"n_iter", n_iter},
            {"before", metrics::snapshot_to_json(before)},
            {"after", metrics::snapshot_to_json(after)},
            {"arp", arp},
            {"final_objective", final_objective},
            {"best_objective", best_objective},
            {"steps", steps}};
}

CellResult CellResult::from_json(const nlohmann::json& j) {
    CellResult c;
    c.cell_id = j.at("cell_id").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.driver = j.at("driver").get<std::string>();
    c.combiner = j.at("combiner").get<std::string>();
    c.epsilon_text = j.at("epsilon_text").get<std::string>();
    c.epsilon = j.at("epsilon").get<double>();
    c.n_iter = j.at("n_iter").get<int>();
    c.before = metrics::snapshot_from_json(j.at("before"));
    c.after = metrics::snapshot_from_json(j.at("after"));
    c.arp = j.at("arp").get<double>();
    c.final_objective = j.at("final_objective").get<double>();
    c.best_objective = j.at("best_objective").get<double>();
    c.steps = j.at("steps").get<int>();
    return c;
}

const CellResult* RunRecords::find(const std::string& cell_id) const {
    auto it = std::lower_bound(cells.begin(), cells.end(), cell_id,
                               [](const CellResult& c, const std::string& id) {
                                   return c.cell_id < id;
                               });
    if (it != cells.end() && it->cell_id == cell_id)
        return &*it;
    return nullptr;
}

void RunRecords::upsert(CellResult cell) {
    auto it = std::lower_bound(cells.begin(), cells.end(), cell.cell_id,
                               [](const CellResult& c, const std::string& id) {
                                   return c.cell_id < id;
                               });
    if (it != cells.end() && it->cell_id == cell.cell_id) {
        if (it->to_json() != cell.to_json())
            throw std::runtime_error("records: cell '" + cell.cell_id +
                                     "' recomputed with different content");
        return;
    }
    cells.insert(it, std::move(cell));
}

nlohmann::json RunRecords::to_json() const {
    nlohmann::json cells_json = nlohmann::json::array();
    for (const CellResult& c : cells)
        cells_json.push_back(c.to_json());
    return {{"config_hash", config_hash},
            {"tool_version", tool_version},
            {"cells", cells_json}};
}

RunRecords RunRecords::from_json(const nlohmann::json& j) {
    RunRecords r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.tool_version = j.at("tool_version").get<std::string>();
    for (const auto& c : j.at("cells"))
        r.cells.push_back(CellResult::from_json(c));
    if (!std::is_sorted(r.cells.begin(), r.cells.end(),
                        [](const CellResult& a, const CellResult& b) {
                            return a.cell_id < b.cell_id;
                        }))
        throw std::runtime_error("records: cells out of order");
    return r;
}

RunRecords load_records(const std::filesystem::path& path, const std::string& config_hash) {
    RunRecords r;
    r.config_hash = config_hash;
    r.tool_version = kToolVersion;
    if (!std::filesystem::exists(path))
        return r;
    r = RunRecords::from_json(mtlnet::load_json_file(path));
    if (r.config_hash != config_hash)
        throw std::runtime_error("records: " + path.string() + " belongs to config " +
                                 r.config_hash + ", expected " + config_hash);
    return r;
}

void save_records(const std::filesystem::path& path, const RunRecords& records) {
    mtlnet::save_json_file(path, records.to_json());
}

} // namespace mtlab::labcli
