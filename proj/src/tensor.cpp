#include "unicon/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace unicon {

namespace {
std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw Error(ErrorCode::ShapeError, "negative tensor dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw Error(ErrorCode::ShapeError, "value count does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != data_.size())
        throw Error(ErrorCode::ShapeError, "reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::add_(const Tensor& other) {
    if (!same_shape(other)) throw Error(ErrorCode::ShapeError, "add_ shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::scale_(double s) {
    for (double& v : data_) v *= s;
}

double Tensor::sum() const {
    double acc = 0.0;
    for (double v : data_) acc += v;
    return acc;
}

double Tensor::abs_max() const {
    double acc = 0.0;
    for (double v : data_) acc = std::max(acc, std::fabs(v));
    return acc;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace unicon
