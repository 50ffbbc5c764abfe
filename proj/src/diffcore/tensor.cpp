#include "mtlab/diffcore/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mtlab::diffcore {

namespace {

std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty())
        throw std::invalid_argument("tensor shape must have at least one extent");
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0)
            throw std::invalid_argument("tensor extents must be positive, got shape " +
                                        shape_to_string(shape));
        n *= e;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size())
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::vector1d(std::vector<double> data) {
    std::size_t n = data.size();
    return Tensor({n}, std::move(data));
}

std::size_t Tensor::rows() const { return rank() >= 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const { return rank() >= 2 ? shape_[1] : shape_[0]; }

double Tensor::item() const {
    if (size() != 1)
        throw std::logic_error("item() on tensor of shape " + shape_str());
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(std::span<const std::size_t> shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

} // namespace mtlab::diffcore
