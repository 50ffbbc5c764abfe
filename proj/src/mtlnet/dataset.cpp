#include "mtlab/mtlnet/dataset.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace mtlab::mtlnet {

namespace {

void validate_config(const DatasetConfig& c) {
    validate_tasks(c.tasks);
    if (c.input_dim < 1 || c.latent_dim < 1)
        throw std::invalid_argument("dataset dims must be >= 1");
    if (c.train_size == 0 || c.test_size == 0)
        throw std::invalid_argument("dataset sizes must be positive");
    if (!(c.rho >= 0.0 && c.rho <= 1.0))
        throw std::invalid_argument("rho must lie in [0,1]");
}

} // namespace

std::vector<double> SyntheticTeacher::latent(std::span<const double> x) const {
    auto d = static_cast<std::size_t>(config.input_dim);
    auto q = static_cast<std::size_t>(config.latent_dim);
    std::size_t h_dim = (config.tasks.size() + 1) * q;
    if (x.size() != d)
        throw std::invalid_argument("teacher latent: input size mismatch");
    std::vector<double> h(h_dim, 0.0);
    for (std::size_t r = 0; r < h_dim; ++r) {
        double acc = trunk_bias[r];
        const double* row = trunk_weight.data() + r * d;
        for (std::size_t k = 0; k < d; ++k)
            acc += row[k] * (x[k] - 0.5);
        h[r] = acc > 0.0 ? acc : 0.0;
    }
    return h;
}

std::vector<double> SyntheticTeacher::task_view(std::span<const double> h, int task) const {
    auto q = static_cast<std::size_t>(config.latent_dim);
    auto i = static_cast<std::size_t>(task);
    if (task < 0 || i >= config.tasks.size())
        throw std::invalid_argument("teacher task_view: bad task id");
    std::vector<double> u(q, 0.0);
    double rho = config.rho;
    for (std::size_t j = 0; j < q; ++j)
        u[j] = rho * h[j] + (1.0 - rho) * h[(i + 1) * q + j];
    return u;
}

std::vector<double> SyntheticTeacher::readout(std::span<const double> u, int task) const {
    auto q = static_cast<std::size_t>(config.latent_dim);
    const Readout& r = readouts[static_cast<std::size_t>(task)];
    std::size_t out = r.bias.size();
    std::vector<double> z(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        double acc = r.bias[o];
        const double* row = r.weight.data() + o * q;
        for (std::size_t j = 0; j < q; ++j)
            acc += row[j] * u[j];
        z[o] = acc;
    }
    return z;
}

std::vector<double> SyntheticTeacher::label(std::span<const double> x, int task) const {
    std::vector<double> h = latent(x);
    std::vector<double> u = task_view(h, task);
    std::vector<double> z = readout(u, task);
    const TaskSpec& t = config.tasks[static_cast<std::size_t>(task)];
    switch (t.head) {
    case HeadKind::Classification: {
        std::size_t best = 0;
        for (std::size_t j = 1; j < z.size(); ++j)
            if (z[j] > z[best])
                best = j;
        return {static_cast<double>(best)};
    }
    case HeadKind::Regression: {
        for (double& v : z)
            v = std::tanh(v);
        return z;
    }
    case HeadKind::UnitVector: {
        double nn = 0.0;
        for (double v : z)
            nn += v * v;
        nn = std::sqrt(nn);
        if (nn < 1e-9) {
            std::vector<double> e(z.size(), 0.0);
            e[0] = 1.0;
            return e;
        }
        for (double& v : z)
            v /= nn;
        return z;
    }
    }
    return {};
}

SyntheticTeacher make_teacher(const DatasetConfig& config) {
    validate_config(config);
    SyntheticTeacher t;
    t.config = config;
    auto d = static_cast<std::size_t>(config.input_dim);
    auto q = static_cast<std::size_t>(config.latent_dim);
    std::size_t h_dim = (config.tasks.size() + 1) * q;

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> trunk_dist(0.0, std::sqrt(12.0 / static_cast<double>(d)));
    std::uniform_real_distribution<double> bias_dist(-0.5, 0.5);

    t.trunk_weight.resize(h_dim * d);
    for (double& v : t.trunk_weight)
        v = trunk_dist(rng);
    t.trunk_bias.resize(h_dim);
    for (double& v : t.trunk_bias)
        v = bias_dist(rng);

    std::normal_distribution<double> read_dist(0.0, 1.0 / std::sqrt(static_cast<double>(q)));
    std::uniform_real_distribution<double> read_bias(-0.3, 0.3);
    for (const TaskSpec& task : config.tasks) {
        SyntheticTeacher::Readout r;
        auto out = static_cast<std::size_t>(task.output_dim);
        r.weight.resize(out * q);
        for (double& v : r.weight)
            v = read_dist(rng);
        r.bias.resize(out);
        for (double& v : r.bias)
            v = read_bias(rng);
        t.readouts.push_back(std::move(r));
    }
    return t;
}

Dataset generate_dataset(const DatasetConfig& config) {
    SyntheticTeacher teacher = make_teacher(config);
    auto d = static_cast<std::size_t>(config.input_dim);

    // domain-separated stream so teacher construction stays reusable on its own
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto make_split = [&](std::size_t n) {
        diffcore::Tensor inputs({n, d});
        for (std::size_t i = 0; i < inputs.size(); ++i)
            inputs[i] = unit(rng);
        LabeledBatch batch{std::move(inputs), {}};
        for (const TaskSpec& t : config.tasks) {
            if (t.head == HeadKind::Classification) {
                diffcore::Tensor lab({n});
                for (std::size_t r = 0; r < n; ++r) {
                    std::span<const double> row(batch.inputs.data() + r * d, d);
                    lab[r] = teacher.label(row, t.id)[0];
                }
                batch.labels.push_back(std::move(lab));
            } else {
                auto m = static_cast<std::size_t>(t.output_dim);
                diffcore::Tensor lab({n, m});
                for (std::size_t r = 0; r < n; ++r) {
                    std::span<const double> row(batch.inputs.data() + r * d, d);
                    std::vector<double> y = teacher.label(row, t.id);
                    for (std::size_t j = 0; j < m; ++j)
                        lab.at(r, j) = y[j];
                }
                batch.labels.push_back(std::move(lab));
            }
        }
        return batch;
    };

    Dataset ds;
    ds.config = config;
    ds.train = make_split(config.train_size);
    ds.test = make_split(config.test_size);
    validate_batch(ds.train, config.tasks);
    validate_batch(ds.test, config.tasks);
    return ds;
}

} // namespace mtlab::mtlnet
