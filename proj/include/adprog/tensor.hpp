#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace adprog::num {

// Dense row-major tensor of doubles. All arithmetic in this project runs at
// 64-bit precision; checkpoints store 32-bit payloads (see checkpoint.hpp).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

}  // namespace adprog::num
