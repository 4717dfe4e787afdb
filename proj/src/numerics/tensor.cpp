#include "seedlab/numerics/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "seedlab/error.hpp"

namespace seedlab::num {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t d : shape_) {
        if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " elements");
    }
}

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n, 1}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? shape_[0] : data_.size() / shape_[0];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

std::span<const double> Tensor::row_span(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row_span(std::size_t r) {
    const std::size_t c = cols();
    return std::span<double>(data_).subspan(r * c, c);
}

Tensor Tensor::row_copy(std::size_t r) const {
    auto s = row_span(r);
    return Tensor::row(std::vector<double>(s.begin(), s.end()));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return a.numel() == 0 || std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("max_abs_diff size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace seedlab::num
