#include "adprog/tensor.hpp"

#include "adprog/errors.hpp"

namespace adprog::num {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 1) throw NumericalError("tensor dimension must be >= 1");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw NumericalError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
    }
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = v;
    return t;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    s += "]";
    return s;
}

}  // namespace adprog::num
