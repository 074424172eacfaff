#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace salcnn {

// Dense row-major tensor. Scalar type is templated so the same code runs at
// double for tests/oracles and float for training.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count_(shape_), T{0}) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count_(shape_) != data_.size()) {
            throw std::invalid_argument(
                "Tensor: shape product " + std::to_string(count_(shape_)) +
                " != data length " + std::to_string(data_.size()));
        }
    }

    // Construction with finite-value validation; used in tests and when
    // ingesting external data. Hot training loops use the plain constructor.
    static Tensor checked(std::vector<std::size_t> shape, std::vector<T> data) {
        Tensor t(std::move(shape), std::move(data));
        t.require_finite("Tensor::checked");
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& at3(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    const T& at3(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    T& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void require_finite(const std::string& who) const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(static_cast<double>(data_[i]))) {
                throw std::invalid_argument(who + ": non-finite value at flat index " +
                                            std::to_string(i));
            }
        }
    }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape_(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

private:
    static std::size_t count_(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
            n *= d;
        }
        return n;
    }

    void require_same_shape_(const Tensor& o, const char* who) const {
        if (shape_ != o.shape_) {
            throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                        shape_str() + " vs " + o.shape_str());
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

// Value/gradient pair with matching shapes.
template <typename T>
struct GradPair {
    Tensor<T> value;
    Tensor<T> grad;

    explicit GradPair(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}
};

}  // namespace salcnn
