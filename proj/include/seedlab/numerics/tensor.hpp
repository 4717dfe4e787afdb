#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace seedlab::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. Value semantics; most arithmetic treats
// it as a matrix (rank 1 tensors are viewed as a single row).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }
    static Tensor row(std::vector<double> values);
    static Tensor column(std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Matrix view: a rank-1 tensor is one row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& vec() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    // Value of a one-element tensor.
    double item() const;

    std::span<const double> row_span(std::size_t r) const;
    std::span<double> row_span(std::size_t r);
    Tensor row_copy(std::size_t r) const;

    Tensor reshaped(Shape shape) const;
    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Bit-level equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace seedlab::num
