#pragma once

#include "mtlab/diffcore/tensor.hpp"

#include <span>
#include <string>

namespace mtlab::attackkit {

// Rule for collapsing per-task input gradients into one attack direction.
// Drivers take the elementwise sign of the combined vector afterwards.
struct GradientCombiner {
    enum class Kind {
        Single,    // one task's gradient, others ignored
        Total,     // plain sum of gradients
        SignTotal, // sum of elementwise gradient signs
        Balanced,  // sum of gradients scaled by inverse current loss
    };

    Kind kind = Kind::Total;
    int task = -1; // Single only

    static GradientCombiner single(int task) { return {Kind::Single, task}; }
    static GradientCombiner total() { return {Kind::Total, -1}; }
    static GradientCombiner sign_total() { return {Kind::SignTotal, -1}; }
    static GradientCombiner balanced() { return {Kind::Balanced, -1}; }

    std::string label() const;                         // "single-2", "total", ...
    static GradientCombiner parse(const std::string&); // inverse of label()
    void validate(int n_tasks) const;

    friend bool operator==(const GradientCombiner& a, const GradientCombiner& b) {
        return a.kind == b.kind && (a.kind != Kind::Single || a.task == b.task);
    }
};

double sign_of(double v); // +1 / -1 / 0
diffcore::Tensor sign_tensor(const diffcore::Tensor& t);

// Collapse `grads` into one direction tensor (pre-sign). `losses` must be the
// current floored task losses; only the balanced rule reads them.
diffcore::Tensor combine_gradients(const GradientCombiner& c,
                                   std::span<const diffcore::Tensor> grads,
                                   std::span<const double> losses);

} // namespace mtlab::attackkit
