#pragma once

#include "mtlab/diffcore/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace mtlab::mtlnet {

enum class HeadKind { Classification, Regression, UnitVector };

const char* head_kind_name(HeadKind k);
HeadKind parse_head_kind(const std::string& s);

// A task owns its head type, output dimension, and by construction its loss:
// classification -> softmax cross entropy, regression -> mean absolute error,
// unit-vector -> cosine distance of the normalized prediction.
struct TaskSpec {
    int id = 0;
    HeadKind head = HeadKind::Classification;
    int output_dim = 2; // classes for classification, vector size otherwise
    std::string name;
    double angle_threshold_deg = 30.0; // unit-vector hit threshold

    std::string display_name() const { return name.empty() ? "task" + std::to_string(id) : name; }
};

struct MetricDef {
    std::string name;
    bool higher_better = false;
};

// Every task reports at least one scalar metric on a labeled batch.
std::vector<MetricDef> task_metric_defs(const TaskSpec& t);

// Throws std::invalid_argument when ids are not 0..n-1 in order, a dimension
// is too small, or an angle threshold is out of (0, 180).
void validate_tasks(std::span<const TaskSpec> tasks);

// A batch of inputs in [0,1]^d plus one label tensor per task:
// classification (B) class indices, regression (B,m) targets,
// unit-vector (B,m) unit rows.
struct LabeledBatch {
    diffcore::Tensor inputs;
    std::vector<diffcore::Tensor> labels;

    std::size_t size() const { return inputs.rows(); }
};

// Validates shapes, the [0,1] input range, and unit-norm unit-vector labels.
void validate_batch(const LabeledBatch& batch, std::span<const TaskSpec> tasks);

// Copy of `batch` with the input tensor replaced (labels shared semantics:
// the labels are copied too; batches are small).
LabeledBatch with_inputs(const LabeledBatch& batch, diffcore::Tensor inputs);

// Rows `lo..hi` (exclusive) of a batch, labels included.
LabeledBatch slice_batch(const LabeledBatch& batch, std::span<const TaskSpec> tasks,
                         std::span<const std::size_t> rows);

} // namespace mtlab::mtlnet
