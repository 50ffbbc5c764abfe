#pragma once

#include "mtlab/mtlnet/model.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace mtlab::mtlnet {

struct TrainConfig {
    int epochs = 60;
    double lr = 0.05;
    std::size_t batch_size = 48;
    std::uint64_t seed = 7;
};

struct TrainTrace {
    // Total train loss (sum of floored task losses on the full train set)
    // after each epoch.
    std::vector<double> epoch_loss;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, const std::string& what)
        : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// Replaces a mini-batch's inputs right before the gradient step; the hook for
// adversarial training. Must return a tensor of the same shape.
using BatchTransform =
    std::function<diffcore::Tensor(const BranchedModel&, const LabeledBatch&)>;

// Mini-batch SGD on the sum of task losses. Shuffling, and therefore the whole
// trajectory, is a pure function of config.seed. Throws DivergenceError when
// the epoch loss or any parameter goes non-finite.
TrainTrace train_model(BranchedModel& model, const LabeledBatch& train,
                       const TrainConfig& config, const BatchTransform* transform = nullptr);

} // namespace mtlab::mtlnet
