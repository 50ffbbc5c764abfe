#pragma once

#include "mtlab/diffcore/record.hpp"
#include "mtlab/metrics/metrics.hpp"
#include "mtlab/mtlnet/layout.hpp"
#include "mtlab/mtlnet/task.hpp"

#include <cstdint>
#include <vector>

namespace mtlab::mtlnet {

// Losses reported to attack objectives are clamped below by this floor so
// relative changes stay finite on (nearly) solved tasks.
inline constexpr double kLossFloor = 1e-8;

double floor_loss(double v);

// One relu block instance inside the trunk.
struct BlockRef {
    int depth = 0;
    std::vector<int> tasks; // sorted ids served by this block
    int weight = -1;        // indices into BranchedModel::params
    int bias = -1;
    int in_dim = 0;
    int out_dim = 0;
};

// Linear head mapping the trunk output to a task's prediction.
struct HeadRef {
    int task = 0;
    int weight = -1;
    int bias = -1;
};

// A branched multi-task net: shared trunk prefix, per-group blocks after the
// split points, one affine head per task. Parameters live in a flat list in a
// canonical order (blocks by depth then group, heads by task; weight before
// bias) so that initialization, serialization, and updates all agree.
struct BranchedModel {
    Layout layout;
    std::vector<int> widths; // one per depth
    std::vector<TaskSpec> tasks;
    int input_dim = 0;
    std::uint64_t init_seed = 0;

    std::vector<diffcore::Tensor> params;
    std::vector<BlockRef> blocks;
    std::vector<HeadRef> heads;

    int n_tasks() const { return static_cast<int>(tasks.size()); }
    std::size_t parameter_count() const; // total scalar parameters
};

BranchedModel build_model(const Layout& layout, std::vector<int> widths,
                          std::vector<TaskSpec> tasks, int input_dim, std::uint64_t seed);

// The model expressed as a diffcore program for one batch size.
struct ModelProgram {
    diffcore::ComputationRecord record;
    diffcore::NodeId input = -1;
    std::vector<diffcore::NodeId> param_leaves; // aligned with model.params
    std::vector<diffcore::NodeId> label_leaves; // per task
    std::vector<diffcore::NodeId> losses;       // per task, raw (no floor)
    std::vector<diffcore::NodeId> predictions;  // per task head output
};

ModelProgram build_program(const BranchedModel& model, std::size_t batch_size);

// Evaluates one model against one batch's labels at varying inputs. Builds
// the program once; every eval is a fresh forward pass.
class BatchEvaluator {
public:
    BatchEvaluator(const BranchedModel& model, const LabeledBatch& batch);

    struct Result {
        std::vector<double> raw_losses;
        std::vector<double> losses;               // floored
        std::vector<diffcore::Tensor> input_grads; // per task, present if requested
    };

    Result eval(const diffcore::Tensor& inputs, bool want_input_grads) const;
    metrics::MetricSnapshot metric_snapshot(const diffcore::Tensor& inputs) const;

    const diffcore::Tensor& clean_inputs() const { return clean_inputs_; }
    const BranchedModel& model() const { return *model_; }

private:
    const BranchedModel* model_;
    ModelProgram prog_;
    std::vector<diffcore::Tensor> binding_; // params and labels prefilled
    std::size_t input_slot_ = 0;
    diffcore::Tensor clean_inputs_;
};

// Convenience wrappers (single forward pass each).
std::vector<double> task_losses(const BranchedModel& model, const LabeledBatch& batch);
std::vector<diffcore::Tensor> input_gradients(const BranchedModel& model,
                                              const LabeledBatch& batch);
metrics::MetricSnapshot evaluate_metrics(const BranchedModel& model, const LabeledBatch& batch);

// Per-task metrics from raw predictions (exposed for tests).
metrics::MetricSnapshot metrics_from_predictions(std::span<const TaskSpec> tasks,
                                                 std::span<const diffcore::Tensor> predictions,
                                                 std::span<const diffcore::Tensor> labels);

} // namespace mtlab::mtlnet
