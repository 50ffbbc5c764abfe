#pragma once

#include "mtlab/metrics/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace mtlab::labcli {

// One attack evaluation: a trained model, one attack configuration, one
// budget. Carries the full before/after metric snapshots so every derived
// number can be recomputed from the record alone.
struct CellResult {
    std::string cell_id; // "model=2L seed=1 driver=pgd combiner=total eps=8/255 iters=20"
    std::string model;
    std::uint64_t seed = 0;
    std::string driver;
    std::string combiner;
    std::string epsilon_text;
    double epsilon = 0.0;
    int n_iter = 0;

    metrics::MetricSnapshot before; // clean metrics
    metrics::MetricSnapshot after;  // metrics at the attacked inputs
    double arp = 0.0;               // overall, recomputable from before/after

    // trace summary
    double final_objective = 0.0;
    double best_objective = 0.0;
    int steps = 0;

    nlohmann::json to_json() const;
    static CellResult from_json(const nlohmann::json& j);
};

std::string make_cell_id(const std::string& model, std::uint64_t seed,
                         const std::string& driver, const std::string& combiner,
                         const std::string& epsilon_text, int n_iter);

// The append-only result set of one experiment run. Cells are kept sorted by
// id, so the serialized file is a pure function of the set of finished cells.
struct RunRecords {
    std::string config_hash;
    std::string tool_version;
    std::vector<CellResult> cells;

    const CellResult* find(const std::string& cell_id) const;
    void upsert(CellResult cell); // insert sorted; re-adding an id must match

    nlohmann::json to_json() const;
    static RunRecords from_json(const nlohmann::json& j);
};

// Loads the record file if present; verifies the stored hash matches.
RunRecords load_records(const std::filesystem::path& path, const std::string& config_hash);
void save_records(const std::filesystem::path& path, const RunRecords& records);

} // namespace mtlab::labcli
