#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dat {

// Dense row-major array of 64-bit floats. Tensors are plain values: cheap to
// copy at the scales used here, immutable by convention once handed to a
// Graph.
class Tensor {
public:
    Tensor() = default;

    // Validating constructor for externally supplied data: rejects
    // shape/data length mismatch and non-finite elements.
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    // Skips the finiteness scan; for internally computed values.
    static Tensor unchecked(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return unchecked({1}, {v}); }
    static Tensor vector(std::vector<double> data);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    bool is_scalar() const { return data_.size() == 1; }
    // Matrix accessors; rank must be 2.
    std::size_t rows() const { return shape_[0]; }
    std::size_t cols() const { return shape_[1]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Throws ShapeError naming both shapes unless a and b match.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace dat
