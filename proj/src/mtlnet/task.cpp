#include "mtlab/mtlnet/task.hpp"

#include <cmath>
#include <stdexcept>

namespace mtlab::mtlnet {

const char* head_kind_name(HeadKind k) {
    switch (k) {
    case HeadKind::Classification: return "classification";
    case HeadKind::Regression: return "regression";
    case HeadKind::UnitVector: return "unit_vector";
    }
    return "?";
}

HeadKind parse_head_kind(const std::string& s) {
    if (s == "classification")
        return HeadKind::Classification;
    if (s == "regression")
        return HeadKind::Regression;
    if (s == "unit_vector")
        return HeadKind::UnitVector;
    throw std::invalid_argument("unknown head kind '" + s + "'");
}

std::vector<MetricDef> task_metric_defs(const TaskSpec& t) {
    switch (t.head) {
    case HeadKind::Classification:
        return {{"accuracy", true}};
    case HeadKind::Regression:
        return {{"l1_error", false}};
    case HeadKind::UnitVector: {
        int deg = static_cast<int>(std::lround(t.angle_threshold_deg));
        return {{"angular_error_deg", false}, {"within_" + std::to_string(deg) + "deg", true}};
    }
    }
    return {};
}

void validate_tasks(std::span<const TaskSpec> tasks) {
    if (tasks.empty())
        throw std::invalid_argument("need at least one task");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const TaskSpec& t = tasks[i];
        if (t.id != static_cast<int>(i))
            throw std::invalid_argument("task ids must be 0..n-1 in order; slot " +
                                        std::to_string(i) + " has id " + std::to_string(t.id));
        int min_dim = t.head == HeadKind::Classification ? 2 : 1;
        if (t.output_dim < min_dim)
            throw std::invalid_argument("task " + std::to_string(t.id) + " (" +
                                        head_kind_name(t.head) + ") needs output_dim >= " +
                                        std::to_string(min_dim));
        if (t.head == HeadKind::UnitVector &&
            (t.angle_threshold_deg <= 0.0 || t.angle_threshold_deg >= 180.0))
            throw std::invalid_argument("task " + std::to_string(t.id) +
                                        ": angle threshold must lie in (0, 180) degrees");
    }
}

void validate_batch(const LabeledBatch& batch, std::span<const TaskSpec> tasks) {
    const auto& x = batch.inputs;
    if (x.rank() != 2)
        throw std::invalid_argument("batch inputs must be rank-2, got " + x.shape_str());
    for (double v : x.values())
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("batch inputs must lie in [0,1]");
    if (batch.labels.size() != tasks.size())
        throw std::invalid_argument("batch has " + std::to_string(batch.labels.size()) +
                                    " label tensors for " + std::to_string(tasks.size()) +
                                    " tasks");
    std::size_t b = x.rows();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const TaskSpec& t = tasks[i];
        const auto& lab = batch.labels[i];
        auto dim = static_cast<std::size_t>(t.output_dim);
        switch (t.head) {
        case HeadKind::Classification: {
            if (lab.shape() != std::vector<std::size_t>{b})
                throw std::invalid_argument("task " + std::to_string(t.id) +
                                            ": class labels must have shape (" +
                                            std::to_string(b) + ")");
            for (double v : lab.values()) {
                double r = std::nearbyint(v);
                if (std::abs(v - r) > 1e-9 || r < 0.0 || r >= t.output_dim)
                    throw std::invalid_argument("task " + std::to_string(t.id) +
                                                ": label " + std::to_string(v) +
                                                " is not a class in [0," +
                                                std::to_string(t.output_dim) + ")");
            }
            break;
        }
        case HeadKind::Regression:
            if (lab.shape() != std::vector<std::size_t>{b, dim})
                throw std::invalid_argument("task " + std::to_string(t.id) +
                                            ": regression labels must be (" +
                                            std::to_string(b) + "," + std::to_string(dim) + ")");
            break;
        case HeadKind::UnitVector: {
            if (lab.shape() != std::vector<std::size_t>{b, dim})
                throw std::invalid_argument("task " + std::to_string(t.id) +
                                            ": unit-vector labels must be (" +
                                            std::to_string(b) + "," + std::to_string(dim) + ")");
            for (std::size_t r = 0; r < b; ++r) {
                double nn = 0.0;
                for (std::size_t j = 0; j < dim; ++j)
                    nn += lab.at(r, j) * lab.at(r, j);
                if (std::abs(std::sqrt(nn) - 1.0) > 1e-9)
                    throw std::invalid_argument("task " + std::to_string(t.id) + ": label row " +
                                                std::to_string(r) + " is not unit length");
            }
            break;
        }
        }
    }
}

LabeledBatch with_inputs(const LabeledBatch& batch, diffcore::Tensor inputs) {
    if (!inputs.same_shape(batch.inputs))
        throw std::invalid_argument("with_inputs: shape changed from " +
                                    batch.inputs.shape_str() + " to " + inputs.shape_str());
    return LabeledBatch{std::move(inputs), batch.labels};
}

LabeledBatch slice_batch(const LabeledBatch& batch, std::span<const TaskSpec> tasks,
                         std::span<const std::size_t> rows) {
    if (rows.empty())
        throw std::invalid_argument("slice_batch: empty row selection");
    std::size_t d = batch.inputs.cols();
    diffcore::Tensor x({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < d; ++c)
            x.at(r, c) = batch.inputs.at(rows[r], c);
    LabeledBatch out{std::move(x), {}};
    out.labels.reserve(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& lab = batch.labels[i];
        if (lab.rank() == 1) {
            diffcore::Tensor l({rows.size()});
            for (std::size_t r = 0; r < rows.size(); ++r)
                l[r] = lab[rows[r]];
            out.labels.push_back(std::move(l));
        } else {
            std::size_t m = lab.cols();
            diffcore::Tensor l({rows.size(), m});
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t c = 0; c < m; ++c)
                    l.at(r, c) = lab.at(rows[r], c);
            out.labels.push_back(std::move(l));
        }
    }
    return out;
}

} // namespace mtlab::mtlnet
