#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace semformer {

// Dense row-major double tensor with value semantics. All numeric state in
// the project (weights, activations, images, gradients) lives in these.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2-D convenience accessors; fail on other ranks.
    std::int64_t rows() const;
    std::int64_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator()(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * cols_cache_ + j)]; }
    double operator()(std::int64_t i, std::int64_t j) const { return data_[static_cast<std::size_t>(i * cols_cache_ + j)]; }
    double& at3(std::int64_t i, std::int64_t j, std::int64_t k);
    double at3(std::int64_t i, std::int64_t j, std::int64_t k) const;

    // Same data, new shape (numel must match).
    Tensor reshaped(std::vector<std::int64_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    double min_value() const;
    double max_value() const;
    double sum() const;
    bool all_finite() const;

    void fill(double value);
    void add_scaled(const Tensor& other, double scale);  // *this += scale * other

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
    std::int64_t cols_cache_ = 0;  // last-dim stride for operator()

    void update_cache();
};

// Throws std::invalid_argument with the given context on shape mismatch.
void check_same_shape(const Tensor& a, const Tensor& b, const char* context);

}  // namespace semformer
