#include "mtlab/mtlnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mtlab::mtlnet {

TrainTrace train_model(BranchedModel& model, const LabeledBatch& train,
                       const TrainConfig& config, const BatchTransform* transform) {
    if (config.epochs < 0 || config.lr <= 0.0 || config.batch_size == 0)
        throw std::invalid_argument("train config: epochs >= 0, lr > 0, batch_size >= 1");
    validate_batch(train, model.tasks);

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainTrace trace;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t len = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> rows(order.data() + start, len);
            LabeledBatch chunk = slice_batch(train, model.tasks, rows);
            if (transform && *transform)
                chunk.inputs = (*transform)(model, chunk);

            ModelProgram prog = build_program(model, chunk.size());
            std::vector<diffcore::Tensor> binding;
            binding.reserve(1 + model.params.size() + chunk.labels.size());
            binding.push_back(chunk.inputs);
            for (const auto& p : model.params)
                binding.push_back(p);
            for (const auto& lab : chunk.labels)
                binding.push_back(lab);

            std::vector<double> ones(prog.losses.size(), 1.0);
            diffcore::NodeId total = prog.record.scalar_combine(ones, prog.losses, "total");
            diffcore::Evaluation ev(prog.record, binding);
            auto grads = ev.gradient(total, prog.param_leaves);
            for (std::size_t i = 0; i < model.params.size(); ++i) {
                auto& p = model.params[i];
                const auto& g = grads[i];
                for (std::size_t k = 0; k < p.size(); ++k)
                    p[k] -= config.lr * g[k];
            }
        }

        std::vector<double> losses = task_losses(model, train);
        double total = std::accumulate(losses.begin(), losses.end(), 0.0);
        bool finite = std::isfinite(total);
        for (const auto& p : model.params)
            if (!p.all_finite())
                finite = false;
        if (!finite)
            throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch));
        trace.epoch_loss.push_back(total);
    }
    return trace;
}

} // namespace mtlab::mtlnet
