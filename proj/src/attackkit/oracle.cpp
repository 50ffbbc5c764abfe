#include "mtlab/attackkit/oracle.hpp"

#include "mtlab/attackkit/combiner.hpp"

#include <cmath>
#include <stdexcept>

namespace mtlab::attackkit {

SignSearchResult exhaustive_sign_search(const std::vector<double>& coeffs) {
    const std::size_t d = coeffs.size();
    if (d == 0)
        throw std::invalid_argument("sign search: empty coefficient vector");
    if (d > 20)
        throw std::invalid_argument("sign search: dimension too large for enumeration");

    SignSearchResult res;
    res.closed_form.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        res.closed_form[k] = sign_of(coeffs[k]);
        res.closed_form_value += std::abs(coeffs[k]);
    }

    std::vector<int> beta(d);
    bool have_best = false;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
        double value = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            beta[k] = (mask >> k) & 1 ? 1 : -1;
            value += coeffs[k] * beta[k];
        }
        if (!have_best || value > res.best_value) {
            have_best = true;
            res.best_value = value;
            res.best_patterns.clear();
            res.best_patterns.push_back(beta);
        } else if (value == res.best_value) {
            res.best_patterns.push_back(beta);
        }
    }

    // evaluate the closed form with ties broken toward +1, in the same
    // summation order the enumeration used
    double closed_value = 0.0;
    for (std::size_t k = 0; k < d; ++k)
        closed_value += coeffs[k] * (res.closed_form[k] == 0 ? 1 : res.closed_form[k]);
    res.closed_form_optimal = closed_value == res.best_value;
    return res;
}

} // namespace mtlab::attackkit
