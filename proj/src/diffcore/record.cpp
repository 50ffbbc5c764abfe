#include "mtlab/diffcore/record.hpp"

#include <cmath>
#include <stdexcept>

namespace mtlab::diffcore {

namespace {

constexpr double kNormalizeFloor = 1e-12;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double sign_of(double v) { return (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace

const char* op_name(OpKind op) {
    switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Affine: return "affine";
    case OpKind::Relu: return "relu";
    case OpKind::L2Normalize: return "l2_normalize";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::L1Loss: return "l1_loss";
    case OpKind::CosineLoss: return "cosine_loss";
    case OpKind::ScalarCombine: return "scalar_combine";
    }
    return "?";
}

NodeId ComputationRecord::push(Node n) {
    NodeId id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(n));
    if (nodes_.back().op == OpKind::Leaf)
        leaves_.push_back(id);
    return id;
}

const Node& ComputationRecord::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        fail("unknown tensor id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

const Node& ComputationRecord::arg_node(NodeId id, const char* ctx) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        fail(std::string(ctx) + ": unknown tensor id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

bool ComputationRecord::is_leaf(NodeId id) const { return node(id).op == OpKind::Leaf; }

bool ComputationRecord::is_scalar(NodeId id) const {
    const auto& s = node(id).shape;
    std::size_t n = 1;
    for (std::size_t e : s)
        n *= e;
    return n == 1;
}

std::string ComputationRecord::describe(NodeId id) const {
    const Node& n = node(id);
    std::string s = "node " + std::to_string(id) + " (" + op_name(n.op);
    if (!n.label.empty())
        s += " '" + n.label + "'";
    s += ")";
    return s;
}

std::vector<NodeId> ComputationRecord::terminal_nodes() const {
    std::vector<bool> consumed(nodes_.size(), false);
    for (const Node& n : nodes_)
        for (NodeId a : n.args)
            consumed[static_cast<std::size_t>(a)] = true;
    std::vector<NodeId> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!consumed[i])
            out.push_back(static_cast<NodeId>(i));
    return out;
}

NodeId ComputationRecord::leaf(std::vector<std::size_t> shape, std::string label) {
    if (shape.empty())
        fail("leaf shape must have at least one extent");
    for (std::size_t e : shape)
        if (e == 0)
            fail("leaf extents must be positive, got " + shape_to_string(shape));
    return push({OpKind::Leaf, {}, std::move(shape), {}, std::move(label)});
}

NodeId ComputationRecord::affine(NodeId x, NodeId weight, NodeId bias, std::string label) {
    const Node& nx = arg_node(x, "affine");
    const Node& nw = arg_node(weight, "affine");
    const Node& nb = arg_node(bias, "affine");
    if (nx.shape.size() != 2 || nw.shape.size() != 2 || nb.shape.size() != 1)
        fail("affine expects x:(B,in) W:(in,out) b:(out), got " + shape_to_string(nx.shape) +
             " " + shape_to_string(nw.shape) + " " + shape_to_string(nb.shape));
    if (nx.shape[1] != nw.shape[0] || nb.shape[0] != nw.shape[1])
        fail("affine dimension mismatch: x " + shape_to_string(nx.shape) + ", W " +
             shape_to_string(nw.shape) + ", b " + shape_to_string(nb.shape));
    std::vector<std::size_t> shape{nx.shape[0], nw.shape[1]};
    return push({OpKind::Affine, {x, weight, bias}, std::move(shape), {}, std::move(label)});
}

NodeId ComputationRecord::relu(NodeId x, std::string label) {
    const Node& nx = arg_node(x, "relu");
    return push({OpKind::Relu, {x}, nx.shape, {}, std::move(label)});
}

NodeId ComputationRecord::l2_normalize(NodeId x, std::string label) {
    const Node& nx = arg_node(x, "l2_normalize");
    if (nx.shape.size() != 2)
        fail("l2_normalize expects a rank-2 input, got " + shape_to_string(nx.shape));
    return push({OpKind::L2Normalize, {x}, nx.shape, {}, std::move(label)});
}

NodeId ComputationRecord::softmax_cross_entropy(NodeId logits, NodeId labels, std::string label) {
    const Node& nz = arg_node(logits, "softmax_cross_entropy");
    const Node& ny = arg_node(labels, "softmax_cross_entropy");
    if (nz.shape.size() != 2 || ny.shape.size() != 1 || nz.shape[0] != ny.shape[0])
        fail("softmax_cross_entropy expects logits:(B,C) labels:(B), got " +
             shape_to_string(nz.shape) + " and " + shape_to_string(ny.shape));
    return push({OpKind::SoftmaxCrossEntropy, {logits, labels}, {1}, {}, std::move(label)});
}

NodeId ComputationRecord::l1_loss(NodeId pred, NodeId target, std::string label) {
    const Node& np = arg_node(pred, "l1_loss");
    const Node& nt = arg_node(target, "l1_loss");
    if (np.shape.size() != 2 || np.shape != nt.shape)
        fail("l1_loss expects matching rank-2 tensors, got " + shape_to_string(np.shape) +
             " and " + shape_to_string(nt.shape));
    return push({OpKind::L1Loss, {pred, target}, {1}, {}, std::move(label)});
}

NodeId ComputationRecord::cosine_loss(NodeId pred, NodeId target, std::string label) {
    const Node& np = arg_node(pred, "cosine_loss");
    const Node& nt = arg_node(target, "cosine_loss");
    if (np.shape.size() != 2 || np.shape != nt.shape)
        fail("cosine_loss expects matching rank-2 tensors, got " + shape_to_string(np.shape) +
             " and " + shape_to_string(nt.shape));
    return push({OpKind::CosineLoss, {pred, target}, {1}, {}, std::move(label)});
}

NodeId ComputationRecord::scalar_combine(std::vector<double> coeffs, std::vector<NodeId> terms,
                                         std::string label) {
    if (terms.empty() || coeffs.size() != terms.size())
        fail("scalar_combine needs one coefficient per term (got " +
             std::to_string(coeffs.size()) + " coeffs, " + std::to_string(terms.size()) +
             " terms)");
    for (NodeId t : terms) {
        arg_node(t, "scalar_combine");
        if (!is_scalar(t))
            fail("scalar_combine term " + describe(t) + " is not scalar");
    }
    return push({OpKind::ScalarCombine, std::move(terms), {1}, std::move(coeffs),
                 std::move(label)});
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

void row_softmax(const double* z, std::size_t c, double* out) {
    double m = z[0];
    for (std::size_t j = 1; j < c; ++j)
        m = std::max(m, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        out[j] = std::exp(z[j] - m);
        sum += out[j];
    }
    for (std::size_t j = 0; j < c; ++j)
        out[j] /= sum;
}

std::size_t class_index(double raw, std::size_t c, const std::string& where) {
    double r = std::nearbyint(raw);
    if (std::abs(raw - r) > 1e-9 || r < 0.0 || r >= static_cast<double>(c))
        fail(where + ": label value " + std::to_string(raw) + " is not a class index in [0," +
             std::to_string(c) + ")");
    return static_cast<std::size_t>(r);
}

} // namespace

Evaluation::Evaluation(const ComputationRecord& rec, std::span<const Tensor> leaf_values)
    : rec_(&rec) {
    const auto& leaves = rec.leaves();
    if (leaf_values.size() != leaves.size())
        fail("forward: got " + std::to_string(leaf_values.size()) + " leaf values for " +
             std::to_string(leaves.size()) + " leaves");
    values_.resize(rec.node_count());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const Node& n = rec.node(leaves[i]);
        if (leaf_values[i].shape() != n.shape)
            fail("forward: shape mismatch at " + rec.describe(leaves[i]) + ": declared " +
                 shape_to_string(n.shape) + ", bound " + leaf_values[i].shape_str());
        values_[static_cast<std::size_t>(leaves[i])] = leaf_values[i];
    }

    for (NodeId id = 0; static_cast<std::size_t>(id) < rec.node_count(); ++id) {
        const Node& n = rec.node(id);
        if (n.op == OpKind::Leaf)
            continue;
        Tensor out(n.shape);
        switch (n.op) {
        case OpKind::Affine: {
            const Tensor& x = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& w = values_[static_cast<std::size_t>(n.args[1])];
            const Tensor& b = values_[static_cast<std::size_t>(n.args[2])];
            std::size_t bsz = x.rows(), in = x.cols(), outd = w.cols();
            for (std::size_t r = 0; r < bsz; ++r) {
                double* yr = out.data() + r * outd;
                for (std::size_t j = 0; j < outd; ++j)
                    yr[j] = b[j];
                const double* xr = x.data() + r * in;
                for (std::size_t k = 0; k < in; ++k) {
                    double xv = xr[k];
                    if (xv == 0.0)
                        continue;
                    const double* wk = w.data() + k * outd;
                    for (std::size_t j = 0; j < outd; ++j)
                        yr[j] += xv * wk[j];
                }
            }
            break;
        }
        case OpKind::Relu: {
            const Tensor& x = values_[static_cast<std::size_t>(n.args[0])];
            for (std::size_t i = 0; i < x.size(); ++i)
                out[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        }
        case OpKind::L2Normalize: {
            const Tensor& x = values_[static_cast<std::size_t>(n.args[0])];
            std::size_t bsz = x.rows(), m = x.cols();
            for (std::size_t r = 0; r < bsz; ++r) {
                const double* xr = x.data() + r * m;
                double* yr = out.data() + r * m;
                double nn = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    nn += xr[j] * xr[j];
                nn = std::sqrt(nn);
                if (nn <= kNormalizeFloor) {
                    for (std::size_t j = 0; j < m; ++j)
                        yr[j] = 0.0;
                } else {
                    for (std::size_t j = 0; j < m; ++j)
                        yr[j] = xr[j] / nn;
                }
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            const Tensor& z = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& y = values_[static_cast<std::size_t>(n.args[1])];
            std::size_t bsz = z.rows(), c = z.cols();
            double total = 0.0;
            for (std::size_t r = 0; r < bsz; ++r) {
                const double* zr = z.data() + r * c;
                double m = zr[0];
                for (std::size_t j = 1; j < c; ++j)
                    m = std::max(m, zr[j]);
                double sum = 0.0;
                for (std::size_t j = 0; j < c; ++j)
                    sum += std::exp(zr[j] - m);
                std::size_t cls = class_index(y[r], c, rec.describe(id));
                total += m + std::log(sum) - zr[cls];
            }
            out[0] = total / static_cast<double>(bsz);
            break;
        }
        case OpKind::L1Loss: {
            const Tensor& p = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& t = values_[static_cast<std::size_t>(n.args[1])];
            double total = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i)
                total += std::abs(p[i] - t[i]);
            out[0] = total / static_cast<double>(p.size());
            break;
        }
        case OpKind::CosineLoss: {
            const Tensor& p = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& t = values_[static_cast<std::size_t>(n.args[1])];
            std::size_t bsz = p.rows(), m = p.cols();
            double total = 0.0;
            for (std::size_t r = 0; r < bsz; ++r) {
                const double* pr = p.data() + r * m;
                const double* tr = t.data() + r * m;
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    dot += pr[j] * tr[j];
                total += 1.0 - dot;
            }
            out[0] = total / static_cast<double>(bsz);
            break;
        }
        case OpKind::ScalarCombine: {
            double v = 0.0;
            for (std::size_t k = 0; k < n.args.size(); ++k)
                v += n.coeffs[k] * values_[static_cast<std::size_t>(n.args[k])][0];
            out[0] = v;
            break;
        }
        case OpKind::Leaf:
            break;
        }
        values_[static_cast<std::size_t>(id)] = std::move(out);
    }
}

const Tensor& Evaluation::value(NodeId id) const {
    rec_->node(id); // bounds check
    return values_[static_cast<std::size_t>(id)];
}

std::vector<Tensor> Evaluation::gradient(NodeId output, std::span<const NodeId> wrt) const {
    const ComputationRecord& rec = *rec_;
    if (!rec.is_scalar(output))
        fail("gradient source must be scalar, got " + rec.describe(output) + " of shape " +
             shape_to_string(rec.node(output).shape));
    for (NodeId w : wrt)
        if (!rec.is_leaf(w))
            fail("gradient target " + rec.describe(w) + " is not a leaf");

    std::size_t count = rec.node_count();
    // needed[id]: id depends (transitively) on some requested leaf, so its
    // adjoint must be propagated. Everything else is skipped, including the
    // weight branches of affine nodes when only input gradients are wanted.
    std::vector<char> needed(count, 0);
    for (NodeId w : wrt)
        needed[static_cast<std::size_t>(w)] = 1;
    for (NodeId id = 0; static_cast<std::size_t>(id) < count; ++id)
        for (NodeId a : rec.node(id).args)
            if (needed[static_cast<std::size_t>(a)]) {
                needed[static_cast<std::size_t>(id)] = 1;
                break;
            }

    std::vector<Tensor> adj(count);
    std::vector<char> has_adj(count, 0);
    auto adj_of = [&](NodeId id) -> Tensor& {
        auto i = static_cast<std::size_t>(id);
        if (!has_adj[i]) {
            adj[i] = Tensor(rec.node(id).shape);
            has_adj[i] = 1;
        }
        return adj[i];
    };

    if (needed[static_cast<std::size_t>(output)])
        adj_of(output)[0] = 1.0;

    for (NodeId id = output; id >= 0; --id) {
        auto i = static_cast<std::size_t>(id);
        if (!has_adj[i] || !needed[i])
            continue;
        const Node& n = rec.node(id);
        const Tensor& go = adj[i];
        auto want = [&](std::size_t argpos) {
            return needed[static_cast<std::size_t>(n.args[argpos])] != 0;
        };
        switch (n.op) {
        case OpKind::Leaf:
            break;
        case OpKind::Affine: {
            const Tensor& x = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& w = values_[static_cast<std::size_t>(n.args[1])];
            std::size_t bsz = x.rows(), in = x.cols(), outd = w.cols();
            if (want(0)) {
                Tensor& gx = adj_of(n.args[0]);
                for (std::size_t r = 0; r < bsz; ++r) {
                    const double* gr = go.data() + r * outd;
                    double* gxr = gx.data() + r * in;
                    for (std::size_t k = 0; k < in; ++k) {
                        const double* wk = w.data() + k * outd;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < outd; ++j)
                            acc += gr[j] * wk[j];
                        gxr[k] += acc;
                    }
                }
            }
            if (want(1)) {
                Tensor& gw = adj_of(n.args[1]);
                for (std::size_t r = 0; r < bsz; ++r) {
                    const double* xr = x.data() + r * in;
                    const double* gr = go.data() + r * outd;
                    for (std::size_t k = 0; k < in; ++k) {
                        double xv = xr[k];
                        if (xv == 0.0)
                            continue;
                        double* gwk = gw.data() + k * outd;
                        for (std::size_t j = 0; j < outd; ++j)
                            gwk[j] += xv * gr[j];
                    }
                }
            }
            if (want(2)) {
                Tensor& gb = adj_of(n.args[2]);
                for (std::size_t r = 0; r < bsz; ++r) {
                    const double* gr = go.data() + r * outd;
                    for (std::size_t j = 0; j < outd; ++j)
                        gb[j] += gr[j];
                }
            }
            break;
        }
        case OpKind::Relu: {
            if (!want(0))
                break;
            const Tensor& x = values_[static_cast<std::size_t>(n.args[0])];
            Tensor& gx = adj_of(n.args[0]);
            for (std::size_t k = 0; k < x.size(); ++k)
                if (x[k] > 0.0)
                    gx[k] += go[k];
            break;
        }
        case OpKind::L2Normalize: {
            if (!want(0))
                break;
            const Tensor& x = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& y = values_[i];
            Tensor& gx = adj_of(n.args[0]);
            std::size_t bsz = x.rows(), m = x.cols();
            for (std::size_t r = 0; r < bsz; ++r) {
                const double* xr = x.data() + r * m;
                const double* yr = y.data() + r * m;
                const double* gr = go.data() + r * m;
                double* gxr = gx.data() + r * m;
                double nn = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    nn += xr[j] * xr[j];
                nn = std::sqrt(nn);
                if (nn <= kNormalizeFloor)
                    continue; // flat region, zero gradient
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    dot += gr[j] * yr[j];
                for (std::size_t j = 0; j < m; ++j)
                    gxr[j] += (gr[j] - dot * yr[j]) / nn;
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            if (!want(0))
                break; // labels are constants
            const Tensor& z = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& y = values_[static_cast<std::size_t>(n.args[1])];
            Tensor& gz = adj_of(n.args[0]);
            std::size_t bsz = z.rows(), c = z.cols();
            double scale = go[0] / static_cast<double>(bsz);
            std::vector<double> sm(c);
            for (std::size_t r = 0; r < bsz; ++r) {
                row_softmax(z.data() + r * c, c, sm.data());
                std::size_t cls = class_index(y[r], c, rec.describe(id));
                double* gzr = gz.data() + r * c;
                for (std::size_t j = 0; j < c; ++j)
                    gzr[j] += scale * (sm[j] - (j == cls ? 1.0 : 0.0));
            }
            break;
        }
        case OpKind::L1Loss: {
            const Tensor& p = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& t = values_[static_cast<std::size_t>(n.args[1])];
            double scale = go[0] / static_cast<double>(p.size());
            if (want(0)) {
                Tensor& gp = adj_of(n.args[0]);
                for (std::size_t k = 0; k < p.size(); ++k)
                    gp[k] += scale * sign_of(p[k] - t[k]);
            }
            if (want(1)) {
                Tensor& gt = adj_of(n.args[1]);
                for (std::size_t k = 0; k < p.size(); ++k)
                    gt[k] -= scale * sign_of(p[k] - t[k]);
            }
            break;
        }
        case OpKind::CosineLoss: {
            const Tensor& p = values_[static_cast<std::size_t>(n.args[0])];
            const Tensor& t = values_[static_cast<std::size_t>(n.args[1])];
            double scale = -go[0] / static_cast<double>(p.rows());
            if (want(0)) {
                Tensor& gp = adj_of(n.args[0]);
                for (std::size_t k = 0; k < p.size(); ++k)
                    gp[k] += scale * t[k];
            }
            if (want(1)) {
                Tensor& gt = adj_of(n.args[1]);
                for (std::size_t k = 0; k < p.size(); ++k)
                    gt[k] += scale * p[k];
            }
            break;
        }
        case OpKind::ScalarCombine: {
            for (std::size_t k = 0; k < n.args.size(); ++k)
                if (want(k))
                    adj_of(n.args[k])[0] += n.coeffs[k] * go[0];
            break;
        }
        }
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (NodeId w : wrt) {
        auto wi = static_cast<std::size_t>(w);
        if (has_adj[wi])
            out.push_back(adj[wi]);
        else
            out.push_back(Tensor(rec.node(w).shape)); // independent leaf: zeros
    }
    return out;
}

std::vector<Tensor> forward(const ComputationRecord& rec, std::span<const Tensor> leaf_values) {
    Evaluation ev(rec, leaf_values);
    std::vector<Tensor> out;
    for (NodeId id : rec.terminal_nodes())
        out.push_back(ev.value(id));
    return out;
}

std::vector<Tensor> grad(const ComputationRecord& rec, NodeId output, std::span<const NodeId> wrt,
                         std::span<const Tensor> leaf_values) {
    Evaluation ev(rec, leaf_values);
    return ev.gradient(output, wrt);
}

} // namespace mtlab::diffcore
