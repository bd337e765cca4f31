#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pathvit/tensor.hpp"

// Dense kernels shared by the inference path and the autodiff tape. All
// reductions run in a fixed index order so repeated runs are bit-identical;
// the equivalence suite depends on that.
namespace pathvit {

namespace detail {
template <class T>
void require_2d(const Tensor<T>& t, const char* who) {
    if (t.rank() != 2) throw DimensionError(std::string(who) + ": expected rank-2 tensor, got " + t.shape_string());
}
}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c.at(i) = a.at(i) + b.at(i);
    return c;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("sub: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c.at(i) = a.at(i) - b.at(i);
    return c;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("mul: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c.at(i) = a.at(i) * b.at(i);
    return c;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, double s) {
    Tensor<T> c(a.shape());
    const T f = static_cast<T>(s);
    for (std::size_t i = 0; i < a.size(); ++i) c.at(i) = a.at(i) * f;
    return c;
}

// c[m x n] = a[m x k] * b[k x n]; i,k,j loop order for contiguous inner access.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner extents differ, " + a.shape_string() + " x " + b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = pc + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = pa[i * k + kk];
            const T* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

// c[m x n] = a[m x k] * b[n x k]^T
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul_nt");
    detail::require_2d(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: inner extents differ, " + a.shape_string() + " x " + b.shape_string() + "^T");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = b.data() + j * k;
            T acc = 0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            c(i, j) = acc;
        }
    }
    return c;
}

// c[m x n] = a[k x m]^T * b[k x n]
template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul_tn");
    detail::require_2d(b, "matmul_tn");
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: inner extents differ, " + a.shape_string() + "^T x " + b.shape_string());
    }
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Tensor<T> c({m, n});
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* arow = a.data() + kk * m;
        const T* brow = b.data() + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T aki = arow[i];
            T* crow = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_2d(a, "transpose");
    Tensor<T> c({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(j, i) = a(i, j);
    return c;
}

// Broadcasts a length-c vector over every row.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
    detail::require_2d(a, "add_rowvec");
    if (v.size() != a.cols()) {
        throw DimensionError("add_rowvec: vector " + v.shape_string() + " vs row width " + std::to_string(a.cols()));
    }
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + v.at(j);
    return c;
}

template <class T>
Tensor<T> mul_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
    detail::require_2d(a, "mul_rowvec");
    if (v.size() != a.cols()) {
        throw DimensionError("mul_rowvec: vector " + v.shape_string() + " vs row width " + std::to_string(a.cols()));
    }
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) * v.at(j);
    return c;
}

// Max-subtracted softmax along the last axis of a rank-2 tensor.
template <class T>
Tensor<T> row_softmax(const Tensor<T>& a) {
    detail::require_2d(a, "row_softmax");
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        T mx = a(i, 0);
        for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        T sum = 0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const T e = std::exp(a(i, j) - mx);
            c(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) /= sum;
    }
    return c;
}

template <class T>
Tensor<T> row_log_softmax(const Tensor<T>& a) {
    detail::require_2d(a, "row_log_softmax");
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        T mx = a(i, 0);
        for (std::size_t j = 1; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        T sum = 0;
        for (std::size_t j = 0; j < a.cols(); ++j) sum += std::exp(a(i, j) - mx);
        const T lse = mx + std::log(sum);
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - lse;
    }
    return c;
}

// Mean-0 / variance-1 normalization over the last axis, then affine.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    detail::require_2d(x, "layer_norm");
    const std::size_t d = x.cols();
    if (gamma.size() != d || beta.size() != d) {
        throw DimensionError("layer_norm: affine width mismatch with " + x.shape_string());
    }
    if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
    Tensor<T> c(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        T mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const T t = x(i, j) - mean;
            var += t * t;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
        for (std::size_t j = 0; j < d; ++j) c(i, j) = (x(i, j) - mean) * inv * gamma.at(j) + beta.at(j);
    }
    return c;
}

namespace detail {
// tanh-form GELU, used for both the forward value and the gradient.
template <class T>
inline T gelu_scalar(T x) {
    const T kRoot = static_cast<T>(0.7978845608028653558798921198687);  // sqrt(2/pi)
    const T inner = kRoot * (x + static_cast<T>(0.044715) * x * x * x);
    return static_cast<T>(0.5) * x * (T(1) + std::tanh(inner));
}

template <class T>
inline T gelu_grad_scalar(T x) {
    const T kRoot = static_cast<T>(0.7978845608028653558798921198687);
    const T inner = kRoot * (x + static_cast<T>(0.044715) * x * x * x);
    const T th = std::tanh(inner);
    const T sech2 = T(1) - th * th;
    const T dinner = kRoot * (T(1) + T(3) * static_cast<T>(0.044715) * x * x);
    return static_cast<T>(0.5) * (T(1) + th) + static_cast<T>(0.5) * x * sech2 * dinner;
}
}  // namespace detail

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> c(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) c.at(i) = detail::gelu_scalar(a.at(i));
    return c;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t row0, std::size_t count) {
    detail::require_2d(a, "slice_rows");
    if (row0 + count > a.rows()) throw DimensionError("slice_rows: out of range on " + a.shape_string());
    Tensor<T> c({count, a.cols()});
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(row0 + i, j);
    return c;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t col0, std::size_t count) {
    detail::require_2d(a, "slice_cols");
    if (col0 + count > a.cols()) throw DimensionError("slice_cols: out of range on " + a.shape_string());
    Tensor<T> c({a.rows(), count});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) c(i, j) = a(i, col0 + j);
    return c;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const std::size_t rows = parts[0].rows();
    std::size_t width = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_cols");
        if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
        width += p.cols();
    }
    Tensor<T> c({rows, width});
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) c(i, off + j) = p(i, j);
        off += p.cols();
    }
    return c;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const std::size_t cols = parts[0].cols();
    std::size_t height = 0;
    for (const auto& p : parts) {
        detail::require_2d(p, "concat_rows");
        if (p.cols() != cols) throw DimensionError("concat_rows: column count mismatch");
        height += p.rows();
    }
    Tensor<T> c({height, cols});
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < p.rows(); ++i)
            for (std::size_t j = 0; j < cols; ++j) c(off + i, j) = p(i, j);
        off += p.rows();
    }
    return c;
}

template <class T>
Tensor<T> mean_rows(const Tensor<T>& a) {
    detail::require_2d(a, "mean_rows");
    Tensor<T> c({1, a.cols()});
    for (std::size_t j = 0; j < a.cols(); ++j) {
        T acc = 0;
        for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, j);
        c(0, j) = acc / static_cast<T>(a.rows());
    }
    return c;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
    return Tensor<T>::scalar(acc);
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// Groups a row-major (grid x grid) token map into 2x2 neighborhoods:
// output token (gy, gx) is the concatenation of inputs (2gy, 2gx),
// (2gy, 2gx+1), (2gy+1, 2gx), (2gy+1, 2gx+1), width 4d.
template <class T>
Tensor<T> patch_merge(const Tensor<T>& a, std::size_t grid) {
    detail::require_2d(a, "patch_merge");
    if (grid % 2 != 0 || a.rows() != grid * grid) {
        throw DimensionError("patch_merge: need an even square grid, got " + a.shape_string() +
                             " with grid " + std::to_string(grid));
    }
    const std::size_t d = a.cols(), half = grid / 2;
    Tensor<T> c({half * half, 4 * d});
    for (std::size_t gy = 0; gy < half; ++gy) {
        for (std::size_t gx = 0; gx < half; ++gx) {
            const std::size_t src[4] = {(2 * gy) * grid + 2 * gx, (2 * gy) * grid + 2 * gx + 1,
                                        (2 * gy + 1) * grid + 2 * gx, (2 * gy + 1) * grid + 2 * gx + 1};
            const std::size_t dst = gy * half + gx;
            for (std::size_t s = 0; s < 4; ++s)
                for (std::size_t j = 0; j < d; ++j) c(dst, s * d + j) = a(src[s], j);
        }
    }
    return c;
}

// No-op on plain tensors; stops gradient flow on tape values.
template <class T>
const Tensor<T>& detach(const Tensor<T>& a) {
    return a;
}

template <class T>
std::size_t argmax(const Tensor<T>& a) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        if (a.at(i) > a.at(best)) best = i;  // ties resolve to the lowest index
    }
    return best;
}

template <class T>
double max_abs(const Tensor<T>& a) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.at(i))));
    return m;
}

// Infinity-norm relative deviation with a tiny absolute floor.
template <class T>
double rel_deviation(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw DimensionError("rel_deviation: shape mismatch");
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i))));
    }
    const double scale = std::max({max_abs(a), max_abs(b), 1e-300});
    return diff / scale;
}

}  // namespace pathvit
