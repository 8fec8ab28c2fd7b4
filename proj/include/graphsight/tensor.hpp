#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphsight/error.hpp"

namespace graphsight {

/// Dense row-major array of doubles with rank 2. Vectors are 1×n or n×1,
/// scalars are 1×1.
class tensor {
public:
    tensor() = default;
    tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw shape_error("tensor data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_string(rows, cols));
    }

    static tensor scalar(double v) { return tensor(1, 1, v); }
    static tensor row_vector(std::vector<double> v) {
        const auto n = v.size();
        return tensor(1, n, std::move(v));
    }
    static tensor column_vector(std::vector<double> v) {
        const auto n = v.size();
        return tensor(n, 1, std::move(v));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
    bool same_shape(const tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    /// Scalar value of a 1×1 tensor.
    double item() const {
        if (size() != 1) throw shape_error("item() on tensor of shape " + shape_string());
        return data_[0];
    }

    std::string shape_string() const { return shape_string(rows_, cols_); }
    static std::string shape_string(std::size_t r, std::size_t c) {
        return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
    }

    bool operator==(const tensor&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace graphsight
