#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sensemap/errors.hpp"

namespace sensemap {

/// Dense row-major tensor of 64-bit reals.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    void fill(double v);
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Throws NumericError mentioning `what` if any entry is not finite.
    void assert_finite(const std::string& what) const;

    static std::string shape_string(const std::vector<int>& shape);
    std::string shape_string() const { return shape_string(shape_); }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

/// Number of elements implied by a shape.
std::size_t shape_size(const std::vector<int>& shape);

} // namespace sensemap
