#include "mtlab/mtlnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mtlab::mtlnet {

double floor_loss(double v) { return v > kLossFloor ? v : kLossFloor; }

std::size_t BranchedModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params)
        n += p.size();
    return n;
}

namespace {

std::string tasks_str(const std::vector<int>& tasks) {
    std::string s;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(tasks[i]);
    }
    return s;
}

} // namespace

BranchedModel build_model(const Layout& layout, std::vector<int> widths,
                          std::vector<TaskSpec> tasks, int input_dim, std::uint64_t seed) {
    validate_tasks(tasks);
    if (auto bad = validate_layout(layout))
        throw std::invalid_argument("invalid layout: " + *bad);
    if (input_dim < 1)
        throw std::invalid_argument("input_dim must be >= 1");
    if (widths.size() != layout.depth())
        throw std::invalid_argument("got " + std::to_string(widths.size()) + " widths for " +
                                    std::to_string(layout.depth()) + " trunk depths");
    for (int w : widths)
        if (w < 1)
            throw std::invalid_argument("trunk widths must be >= 1");

    std::vector<int> ids = layout.task_ids();
    std::vector<int> expected(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i)
        expected[i] = static_cast<int>(i);
    if (ids != expected)
        throw std::invalid_argument("layout task ids {" + tasks_str(ids) +
                                    "} do not match the " + std::to_string(tasks.size()) +
                                    " declared tasks");

    BranchedModel m;
    m.layout = canonical_layout(layout);
    m.widths = std::move(widths);
    m.tasks = std::move(tasks);
    m.input_dim = input_dim;
    m.init_seed = seed;

    for (std::size_t d = 0; d < m.layout.depth(); ++d) {
        int in = d == 0 ? m.input_dim : m.widths[d - 1];
        int out = m.widths[d];
        for (const auto& group : m.layout.partitions[d]) {
            BlockRef b;
            b.depth = static_cast<int>(d);
            b.tasks = group;
            b.in_dim = in;
            b.out_dim = out;
            m.blocks.push_back(std::move(b));
        }
    }

    std::mt19937_64 rng(seed);
    auto glorot = [&](std::size_t in, std::size_t out) {
        double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        diffcore::Tensor w({in, out});
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = u(rng);
        return w;
    };

    for (auto& b : m.blocks) {
        b.weight = static_cast<int>(m.params.size());
        m.params.push_back(glorot(static_cast<std::size_t>(b.in_dim),
                                  static_cast<std::size_t>(b.out_dim)));
        b.bias = static_cast<int>(m.params.size());
        m.params.push_back(diffcore::Tensor({static_cast<std::size_t>(b.out_dim)}));
    }
    int trunk_out = m.widths.back();
    for (const TaskSpec& t : m.tasks) {
        HeadRef h;
        h.task = t.id;
        h.weight = static_cast<int>(m.params.size());
        m.params.push_back(glorot(static_cast<std::size_t>(trunk_out),
                                  static_cast<std::size_t>(t.output_dim)));
        h.bias = static_cast<int>(m.params.size());
        m.params.push_back(diffcore::Tensor({static_cast<std::size_t>(t.output_dim)}));
        m.heads.push_back(h);
    }
    return m;
}

ModelProgram build_program(const BranchedModel& model, std::size_t batch_size) {
    if (batch_size == 0)
        throw std::invalid_argument("batch_size must be positive");
    ModelProgram p;
    auto& rec = p.record;
    auto b = batch_size;
    auto d = static_cast<std::size_t>(model.input_dim);

    p.input = rec.leaf({b, d}, "inputs");
    p.param_leaves.reserve(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i)
        p.param_leaves.push_back(rec.leaf(model.params[i].shape(), "p" + std::to_string(i)));

    // one stream node per task, refined depth by depth
    std::vector<diffcore::NodeId> stream(model.tasks.size(), p.input);
    for (const BlockRef& blk : model.blocks) {
        diffcore::NodeId parent = stream[static_cast<std::size_t>(blk.tasks.front())];
        for (int t : blk.tasks)
            if (stream[static_cast<std::size_t>(t)] != parent)
                throw std::logic_error("block at depth " + std::to_string(blk.depth) +
                                       " spans tasks with different parents");
        diffcore::NodeId z =
            rec.affine(parent, p.param_leaves[static_cast<std::size_t>(blk.weight)],
                       p.param_leaves[static_cast<std::size_t>(blk.bias)],
                       "block d" + std::to_string(blk.depth) + " {" + tasks_str(blk.tasks) + "}");
        diffcore::NodeId h = rec.relu(z);
        for (int t : blk.tasks)
            stream[static_cast<std::size_t>(t)] = h;
    }

    for (const HeadRef& head : model.heads) {
        const TaskSpec& t = model.tasks[static_cast<std::size_t>(head.task)];
        diffcore::NodeId out =
            rec.affine(stream[static_cast<std::size_t>(head.task)],
                       p.param_leaves[static_cast<std::size_t>(head.weight)],
                       p.param_leaves[static_cast<std::size_t>(head.bias)],
                       "head " + t.display_name());
        if (t.head == HeadKind::UnitVector)
            out = rec.l2_normalize(out);
        p.predictions.push_back(out);
    }

    for (const TaskSpec& t : model.tasks) {
        auto m = static_cast<std::size_t>(t.output_dim);
        diffcore::NodeId lab = t.head == HeadKind::Classification
                                   ? rec.leaf({b}, "labels " + t.display_name())
                                   : rec.leaf({b, m}, "labels " + t.display_name());
        p.label_leaves.push_back(lab);
    }

    for (const TaskSpec& t : model.tasks) {
        auto i = static_cast<std::size_t>(t.id);
        diffcore::NodeId loss = -1;
        switch (t.head) {
        case HeadKind::Classification:
            loss = rec.softmax_cross_entropy(p.predictions[i], p.label_leaves[i],
                                             "loss " + t.display_name());
            break;
        case HeadKind::Regression:
            loss = rec.l1_loss(p.predictions[i], p.label_leaves[i], "loss " + t.display_name());
            break;
        case HeadKind::UnitVector:
            loss = rec.cosine_loss(p.predictions[i], p.label_leaves[i],
                                   "loss " + t.display_name());
            break;
        }
        p.losses.push_back(loss);
    }
    return p;
}

BatchEvaluator::BatchEvaluator(const BranchedModel& model, const LabeledBatch& batch)
    : model_(&model), prog_(build_program(model, batch.size())), clean_inputs_(batch.inputs) {
    validate_batch(batch, model.tasks);
    // leaf order is creation order: input, params, labels
    binding_.push_back(batch.inputs);
    input_slot_ = 0;
    for (const auto& t : model.params)
        binding_.push_back(t);
    for (const auto& lab : batch.labels)
        binding_.push_back(lab);
}

BatchEvaluator::Result BatchEvaluator::eval(const diffcore::Tensor& inputs,
                                            bool want_input_grads) const {
    auto binding = binding_; // cheap relative to the evaluation itself
    binding[input_slot_] = inputs;
    diffcore::Evaluation ev(prog_.record, binding);
    Result r;
    for (std::size_t i = 0; i < prog_.losses.size(); ++i) {
        double raw = ev.value(prog_.losses[i]).item();
        r.raw_losses.push_back(raw);
        r.losses.push_back(floor_loss(raw));
    }
    if (want_input_grads) {
        std::vector<diffcore::NodeId> wrt{prog_.input};
        for (std::size_t i = 0; i < prog_.losses.size(); ++i)
            r.input_grads.push_back(std::move(ev.gradient(prog_.losses[i], wrt)[0]));
    }
    return r;
}

metrics::MetricSnapshot BatchEvaluator::metric_snapshot(const diffcore::Tensor& inputs) const {
    auto binding = binding_;
    binding[input_slot_] = inputs;
    diffcore::Evaluation ev(prog_.record, binding);
    std::vector<diffcore::Tensor> preds;
    std::vector<diffcore::Tensor> labels;
    for (std::size_t i = 0; i < prog_.predictions.size(); ++i) {
        preds.push_back(ev.value(prog_.predictions[i]));
        labels.push_back(binding[input_slot_ + 1 + model_->params.size() + i]);
    }
    return metrics_from_predictions(model_->tasks, preds, labels);
}

metrics::MetricSnapshot metrics_from_predictions(std::span<const TaskSpec> tasks,
                                                 std::span<const diffcore::Tensor> predictions,
                                                 std::span<const diffcore::Tensor> labels) {
    if (predictions.size() != tasks.size() || labels.size() != tasks.size())
        throw std::invalid_argument("metrics_from_predictions: per-task arity mismatch");
    metrics::MetricSnapshot snap;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const TaskSpec& t = tasks[i];
        const auto& pred = predictions[i];
        const auto& lab = labels[i];
        std::size_t bsz = pred.rows();
        metrics::TaskMetrics tm;
        tm.task_id = t.id;
        switch (t.head) {
        case HeadKind::Classification: {
            std::size_t hits = 0;
            std::size_t c = pred.cols();
            for (std::size_t r = 0; r < bsz; ++r) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < c; ++j)
                    if (pred.at(r, j) > pred.at(r, best))
                        best = j;
                if (best == static_cast<std::size_t>(std::llround(lab[r])))
                    ++hits;
            }
            tm.values.push_back(
                {"accuracy", true, static_cast<double>(hits) / static_cast<double>(bsz)});
            break;
        }
        case HeadKind::Regression: {
            double total = 0.0;
            for (std::size_t k = 0; k < pred.size(); ++k)
                total += std::abs(pred[k] - lab[k]);
            tm.values.push_back({"l1_error", false, total / static_cast<double>(pred.size())});
            break;
        }
        case HeadKind::UnitVector: {
            std::size_t m = pred.cols();
            double sum_deg = 0.0;
            std::size_t within = 0;
            for (std::size_t r = 0; r < bsz; ++r) {
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    dot += pred.at(r, j) * lab.at(r, j);
                dot = std::clamp(dot, -1.0, 1.0);
                double deg = std::acos(dot) * 180.0 / std::numbers::pi;
                sum_deg += deg;
                if (deg <= t.angle_threshold_deg)
                    ++within;
            }
            auto defs = task_metric_defs(t);
            tm.values.push_back({defs[0].name, false, sum_deg / static_cast<double>(bsz)});
            tm.values.push_back(
                {defs[1].name, true, static_cast<double>(within) / static_cast<double>(bsz)});
            break;
        }
        }
        snap.push_back(std::move(tm));
    }
    return snap;
}

std::vector<double> task_losses(const BranchedModel& model, const LabeledBatch& batch) {
    BatchEvaluator ev(model, batch);
    return ev.eval(batch.inputs, false).losses;
}

std::vector<diffcore::Tensor> input_gradients(const BranchedModel& model,
                                              const LabeledBatch& batch) {
    BatchEvaluator ev(model, batch);
    return ev.eval(batch.inputs, true).input_grads;
}

metrics::MetricSnapshot evaluate_metrics(const BranchedModel& model, const LabeledBatch& batch) {
    BatchEvaluator ev(model, batch);
    return ev.metric_snapshot(batch.inputs);
}

} // namespace mtlab::mtlnet
