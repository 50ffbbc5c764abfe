#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mtlab::diffcore {

// Dense row-major tensor of doubles. Rank 0 is not used; scalars are shape {1}.
class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor vector1d(std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    // Rank-2 accessors (rank-1 tensors behave as a single row).
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    // Value of a one-element tensor.
    double item() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_to_string(std::span<const std::size_t> shape);

} // namespace mtlab::diffcore
