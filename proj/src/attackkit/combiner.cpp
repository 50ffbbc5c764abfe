#include "mtlab/attackkit/combiner.hpp"

#include <stdexcept>

namespace mtlab::attackkit {

double sign_of(double v) { return (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

diffcore::Tensor sign_tensor(const diffcore::Tensor& t) {
    diffcore::Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i)
        out[i] = sign_of(t[i]);
    return out;
}

std::string GradientCombiner::label() const {
    switch (kind) {
    case Kind::Single: return "single-" + std::to_string(task);
    case Kind::Total: return "total";
    case Kind::SignTotal: return "sign_total";
    case Kind::Balanced: return "balanced";
    }
    return "?";
}

GradientCombiner GradientCombiner::parse(const std::string& s) {
    if (s == "total")
        return total();
    if (s == "sign_total")
        return sign_total();
    if (s == "balanced")
        return balanced();
    if (s.rfind("single-", 0) == 0) {
        std::string digits = s.substr(7);
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos)
            return single(std::stoi(digits));
    }
    throw std::invalid_argument("unknown combiner '" + s +
                                "' (expected single-<task>, total, sign_total, balanced)");
}

void GradientCombiner::validate(int n_tasks) const {
    if (kind == Kind::Single && (task < 0 || task >= n_tasks))
        throw std::invalid_argument("combiner targets task " + std::to_string(task) +
                                    " but the model has " + std::to_string(n_tasks) + " tasks");
}

diffcore::Tensor combine_gradients(const GradientCombiner& c,
                                   std::span<const diffcore::Tensor> grads,
                                   std::span<const double> losses) {
    if (grads.empty())
        throw std::invalid_argument("combine_gradients: no gradients");
    c.validate(static_cast<int>(grads.size()));
    for (const auto& g : grads)
        if (!g.same_shape(grads.front()))
            throw std::invalid_argument("combine_gradients: gradient shapes differ");

    switch (c.kind) {
    case GradientCombiner::Kind::Single:
        return grads[static_cast<std::size_t>(c.task)];
    case GradientCombiner::Kind::Total: {
        diffcore::Tensor out(grads.front().shape());
        for (const auto& g : grads)
            for (std::size_t k = 0; k < out.size(); ++k)
                out[k] += g[k];
        return out;
    }
    case GradientCombiner::Kind::SignTotal: {
        diffcore::Tensor out(grads.front().shape());
        for (const auto& g : grads)
            for (std::size_t k = 0; k < out.size(); ++k)
                out[k] += sign_of(g[k]);
        return out;
    }
    case GradientCombiner::Kind::Balanced: {
        if (losses.size() != grads.size())
            throw std::invalid_argument("combine_gradients: need one loss per gradient");
        for (double l : losses)
            if (!(l > 0.0))
                throw std::invalid_argument(
                    "combine_gradients: balanced rule needs positive (floored) losses");
        diffcore::Tensor out(grads.front().shape());
        for (std::size_t i = 0; i < grads.size(); ++i) {
            double inv = 1.0 / losses[i];
            const auto& g = grads[i];
            for (std::size_t k = 0; k < out.size(); ++k)
                out[k] += g[k] * inv;
        }
        return out;
    }
    }
    throw std::logic_error("unreachable");
}

} // namespace mtlab::attackkit
