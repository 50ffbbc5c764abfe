#pragma once

#include "mtlab/diffcore/record.hpp"

#include <span>
#include <string>
#include <vector>

namespace mtlab::diffcore {

struct FdComponent {
    NodeId leaf = -1;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct FdReport {
    enum class Status { Passed, Failed, RejectedNearKink };

    Status status = Status::Passed;
    double max_rel_error = 0.0;
    FdComponent worst;
    std::string note; // why a check was rejected

    bool passed() const { return status == Status::Passed; }
    bool rejected() const { return status == Status::RejectedNearKink; }
};

struct FdOptions {
    double step = 1e-5;
    double tol = 1e-6;
};

// Central-difference check of reverse-mode gradients. The check refuses to
// judge configurations whose forward pass sits within `step` of a
// non-differentiable kink (relu at 0, l1 at pred==target, a vanishing
// normalization row), where both sides of the comparison are meaningless.
FdReport finite_difference_check(const ComputationRecord& rec, NodeId output,
                                 std::span<const NodeId> wrt,
                                 std::span<const Tensor> leaf_values, FdOptions opts = {});

} // namespace mtlab::diffcore
