#include "semformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace semformer {

namespace {
std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {
    update_cache();
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw std::invalid_argument("Tensor: data size does not match shape " + shape_str());
    }
    update_cache();
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

void Tensor::update_cache() {
    cols_cache_ = shape_.empty() ? 1 : shape_.back();
}

std::int64_t Tensor::rows() const {
    if (shape_.size() != 2) throw std::invalid_argument("Tensor::rows: rank != 2, shape " + shape_str());
    return shape_[0];
}

std::int64_t Tensor::cols() const {
    if (shape_.size() != 2) throw std::invalid_argument("Tensor::cols: rank != 2, shape " + shape_str());
    return shape_[1];
}

double& Tensor::at3(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

double Tensor::at3(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

Tensor Tensor::reshaped(std::vector<std::int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw std::invalid_argument("Tensor::reshaped: numel mismatch " + shape_str());
    }
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

double Tensor::min_value() const {
    return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Tensor::max_value() const {
    return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const {
    return std::accumulate(data_.begin(), data_.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

void Tensor::add_scaled(const Tensor& other, double scale) {
    check_same_shape(*this, other, "Tensor::add_scaled");
    const double* src = other.data();
    double* dst = data();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += scale * src[i];
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(context) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

}  // namespace semformer
