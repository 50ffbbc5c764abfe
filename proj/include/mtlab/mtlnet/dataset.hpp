#pragma once

#include "mtlab/mtlnet/task.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mtlab::mtlnet {

struct DatasetConfig {
    std::vector<TaskSpec> tasks;
    int input_dim = 64;
    std::size_t train_size = 384;
    std::size_t test_size = 96;
    double rho = 0.8;    // view overlap in [0,1]: 0 = disjoint tasks, 1 = one shared view
    int latent_dim = 8;  // size of each latent block
    std::uint64_t seed = 1;
};

// Frozen random teacher behind the synthetic benchmark. Inputs map to a
// nonneg latent h = relu(G(x - 1/2) + g) split into one shared block s and one
// private block p_i per task; task i sees u_i = rho*s + (1-rho)*p_i and labels
// are deterministic readouts of u_i.
struct SyntheticTeacher {
    DatasetConfig config;
    std::vector<double> trunk_weight; // ((n+1)*q, d) row-major
    std::vector<double> trunk_bias;   // (n+1)*q

    struct Readout {
        std::vector<double> weight; // (out, q) row-major
        std::vector<double> bias;   // out
    };
    std::vector<Readout> readouts; // per task

    std::vector<double> latent(std::span<const double> x) const;       // h, length (n+1)*q
    std::vector<double> task_view(std::span<const double> h, int task) const; // u_i, length q
    // Raw readout z = A u + c before the head-specific label rule.
    std::vector<double> readout(std::span<const double> u, int task) const;
    // Label for one example: class index (as a 1-vector), tanh regression
    // targets, or the normalized direction.
    std::vector<double> label(std::span<const double> x, int task) const;
};

SyntheticTeacher make_teacher(const DatasetConfig& config);

struct Dataset {
    DatasetConfig config;
    LabeledBatch train;
    LabeledBatch test;
};

// Same config (and seed) always reproduces the same bytes.
Dataset generate_dataset(const DatasetConfig& config);

} // namespace mtlab::mtlnet
