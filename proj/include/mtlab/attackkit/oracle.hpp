#pragma once

#include <vector>

namespace mtlab::attackkit {

// Exhaustive search over sign vectors beta in {-1,+1}^d for the pattern that
// maximizes sum_k coeffs[k] * beta[k].  Small d only; used to cross-check the
// closed-form answer sign(coeffs).
struct SignSearchResult {
    double best_value = 0.0;
    // every pattern attaining best_value exactly, each entry -1 or +1
    std::vector<std::vector<int>> best_patterns;
    // sign(coeffs) with zeros kept as 0
    std::vector<int> closed_form;
    // sum_k |coeffs[k]| accumulated left to right, the value the closed form predicts
    double closed_form_value = 0.0;
    // true when the closed form (zeros resolved to +1) attains best_value exactly
    bool closed_form_optimal = false;
};

SignSearchResult exhaustive_sign_search(const std::vector<double>& coeffs);

} // namespace mtlab::attackkit
