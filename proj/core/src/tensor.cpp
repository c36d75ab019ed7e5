#include "sensemap/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace sensemap {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("Tensor: non-positive dimension in " +
                                     Tensor::shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(shape_size(shape_), fill);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::assert_finite(const std::string& what) const {
    for (double v : data_)
        if (!std::isfinite(v))
            throw NumericError("non-finite value in " + what);
}

std::string Tensor::shape_string(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace sensemap
