#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "pathvit/errors.hpp"

namespace pathvit {

static_assert(std::endian::native == std::endian::little,
              "serialized tensors are little-endian raw; big-endian hosts are unsupported");

enum class Precision : std::uint8_t { single = 0, fp64 = 1 };

template <class T>
constexpr Precision precision_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? Precision::single : Precision::fp64;
}

inline const char* precision_name(Precision p) {
    return p == Precision::single ? "single" : "double";
}

// Dense row-major numeric array. Treated as an immutable value after
// construction: operations return fresh tensors, mutation is reserved for
// builders (fill loops right after allocation) and the optimizer.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = value;
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1, 1}, {value}); }

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    // 2-D view helpers; rank-1 tensors count as a single row.
    std::size_t rows() const {
        if (shape_.size() <= 1) return shape_.empty() ? 0 : 1;
        return shape_[0];
    }
    std::size_t cols() const {
        if (shape_.empty()) return 0;
        return shape_.size() == 1 ? shape_[0] : shape_[shape_.size() - 1];
    }

    T& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

    T& at(std::size_t flat) { return data_[flat]; }
    const T& at(std::size_t flat) const { return data_[flat]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    constexpr Precision precision() const { return precision_of<T>(); }

    bool all_finite() const {
        for (const T& x : data_) {
            if (!std::isfinite(static_cast<double>(x))) return false;
        }
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::ostringstream out;
        out << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) out << 'x';
            out << shape[i];
        }
        out << ']';
        return out.str();
    }

    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
            n *= e;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Precision-erased tensor payload, the unit of serialization.
struct TensorData {
    Precision precision = Precision::single;
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> bytes;

    std::size_t element_count() const {
        std::size_t n = shape.empty() ? 0 : 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }
    std::size_t element_size() const { return precision == Precision::single ? 4 : 8; }
};

template <class T>
TensorData to_data(const Tensor<T>& t) {
    TensorData d;
    d.precision = precision_of<T>();
    d.shape = t.shape();
    d.bytes.resize(t.size() * sizeof(T));
    std::memcpy(d.bytes.data(), t.data(), d.bytes.size());
    return d;
}

// Converts with precision widening/narrowing when tags differ.
template <class T>
Tensor<T> from_data(const TensorData& d) {
    const std::size_t n = d.element_count();
    if (d.bytes.size() != n * d.element_size()) {
        throw IoError("tensor payload of " + std::to_string(d.bytes.size()) +
                      " bytes does not match header " + Tensor<T>::shape_string(d.shape));
    }
    std::vector<T> out(n);
    if (d.precision == precision_of<T>()) {
        std::memcpy(out.data(), d.bytes.data(), d.bytes.size());
    } else if (d.precision == Precision::single) {
        const float* src = reinterpret_cast<const float*>(d.bytes.data());
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(src[i]);
    } else {
        const double* src = reinterpret_cast<const double*>(d.bytes.data());
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(src[i]);
    }
    return Tensor<T>(d.shape, std::move(out));
}

// Wire format: magic, precision tag, rank, extents, then raw little-endian
// values. Shared by standalone tensor files and checkpoint table entries.
void append_tensor_record(std::vector<std::uint8_t>& out, const TensorData& t);
TensorData parse_tensor_record(const std::uint8_t* data, std::size_t size, std::size_t& offset);
void write_tensor_file(const std::string& path, const TensorData& t);
TensorData read_tensor_file(const std::string& path);

}  // namespace pathvit
