#include "mtlab/diffcore/fdcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace mtlab::diffcore {

namespace {

// Scan the forward values feeding `output` for non-differentiable
// neighborhoods. Returns a human-readable description of the first offending
// node, or "" if clean. Nodes outside the output's dependency cone cannot
// move its value and are ignored.
std::string kink_scan(const ComputationRecord& rec, const Evaluation& ev, NodeId output,
                      double step) {
    const double piecewise_margin = 4.0 * step; // relu / l1 kinks are crossed when
                                                // a perturbation flips the sign
    const double norm_margin = std::max(1e-2, 400.0 * step); // curvature ~ 1/norm^2

    std::vector<char> feeds_output(rec.node_count(), 0);
    feeds_output[static_cast<std::size_t>(output)] = 1;
    for (NodeId id = output; id >= 0; --id)
        if (feeds_output[static_cast<std::size_t>(id)])
            for (NodeId a : rec.node(id).args)
                feeds_output[static_cast<std::size_t>(a)] = 1;

    for (NodeId id = 0; static_cast<std::size_t>(id) < rec.node_count(); ++id) {
        if (!feeds_output[static_cast<std::size_t>(id)])
            continue;
        const Node& n = rec.node(id);
        switch (n.op) {
        case OpKind::Relu: {
            const Tensor& x = ev.value(n.args[0]);
            for (std::size_t k = 0; k < x.size(); ++k)
                if (std::abs(x[k]) <= piecewise_margin)
                    return rec.describe(id) + ": input component " + std::to_string(k) +
                           " within " + std::to_string(piecewise_margin) + " of the kink at 0";
            break;
        }
        case OpKind::L1Loss: {
            const Tensor& p = ev.value(n.args[0]);
            const Tensor& t = ev.value(n.args[1]);
            for (std::size_t k = 0; k < p.size(); ++k)
                if (std::abs(p[k] - t[k]) <= piecewise_margin)
                    return rec.describe(id) + ": |pred-target| at component " +
                           std::to_string(k) + " within " + std::to_string(piecewise_margin) +
                           " of the kink at 0";
            break;
        }
        case OpKind::L2Normalize: {
            const Tensor& x = ev.value(n.args[0]);
            std::size_t m = x.cols();
            for (std::size_t r = 0; r < x.rows(); ++r) {
                double nn = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    nn += x.at(r, j) * x.at(r, j);
                if (std::sqrt(nn) <= norm_margin)
                    return rec.describe(id) + ": row " + std::to_string(r) + " has norm " +
                           std::to_string(std::sqrt(nn)) +
                           ", too small for a trustworthy difference quotient";
            }
            break;
        }
        default:
            break;
        }
    }
    return "";
}

} // namespace

FdReport finite_difference_check(const ComputationRecord& rec, NodeId output,
                                 std::span<const NodeId> wrt,
                                 std::span<const Tensor> leaf_values, FdOptions opts) {
    FdReport report;

    Evaluation base(rec, leaf_values);
    if (!base.value(output).all_finite()) {
        report.status = FdReport::Status::Failed;
        report.note = "forward value at " + rec.describe(output) + " is not finite";
        return report;
    }

    std::string kink = kink_scan(rec, base, output, opts.step);
    if (!kink.empty()) {
        report.status = FdReport::Status::RejectedNearKink;
        report.note = kink;
        return report;
    }

    std::vector<Tensor> analytic = base.gradient(output, wrt);

    double gmax = 0.0;
    for (const Tensor& g : analytic)
        for (double v : g.values())
            gmax = std::max(gmax, std::abs(v));
    // Components near zero are judged against a fraction of the gradient's
    // overall scale; comparing two nearly-zero numbers to each other is noise.
    const double floor = std::max(1e-2 * gmax, 1e-12);

    std::vector<Tensor> work(leaf_values.begin(), leaf_values.end());
    const auto& leaves = rec.leaves();

    for (std::size_t wi = 0; wi < wrt.size(); ++wi) {
        std::size_t slot = leaves.size();
        for (std::size_t li = 0; li < leaves.size(); ++li)
            if (leaves[li] == wrt[wi])
                slot = li;
        if (slot == leaves.size())
            throw std::invalid_argument("finite_difference_check: " + rec.describe(wrt[wi]) +
                                        " is not a leaf of the record");
        Tensor& target = work[slot];
        for (std::size_t k = 0; k < target.size(); ++k) {
            double saved = target[k];
            target[k] = saved + opts.step;
            double fplus = Evaluation(rec, work).value(output).item();
            target[k] = saved - opts.step;
            double fminus = Evaluation(rec, work).value(output).item();
            target[k] = saved;

            double numeric = (fplus - fminus) / (2.0 * opts.step);
            double a = analytic[wi][k];
            double denom = std::max({std::abs(a), std::abs(numeric), floor});
            double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst = {wrt[wi], k, a, numeric, rel};
            }
        }
    }

    report.status = report.max_rel_error <= opts.tol ? FdReport::Status::Passed
                                                     : FdReport::Status::Failed;
    if (report.status == FdReport::Status::Failed)
        report.note = "worst component at " + rec.describe(report.worst.leaf) + "[" +
                      std::to_string(report.worst.index) + "]";
    return report;
}

} // namespace mtlab::diffcore
