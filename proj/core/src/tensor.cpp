#include "dat/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dat/errors.hpp"

namespace dat {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (std::size_t d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string());
    }
    if (shape_product(shape_) != data_.size()) {
        std::ostringstream os;
        os << "tensor data length " << data_.size() << " does not match shape " << shape_string();
        throw ShapeError(os.str());
    }
    if (!all_finite()) throw NumericError("tensor constructed from non-finite data");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    return full(std::move(shape), 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(shape_product(t.shape_), value);
    return t;
}

Tensor Tensor::unchecked(std::vector<std::size_t> shape, std::vector<double> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

Tensor Tensor::vector(std::vector<double> data) {
    const std::size_t n = data.size();  // sequenced before the move
    return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                         b.shape_string() + " do not match");
    }
}

}  // namespace dat
