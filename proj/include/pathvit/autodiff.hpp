#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "pathvit/tensor_ops.hpp"

namespace pathvit {

template <class T>
class Tape;

// Handle to one tape node. Cheap to copy; owns nothing. A tape is confined to
// a single worker, so handles must not cross threads.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor<T>& value() const { return tape->value(*this); }
};

using VarF = Var<float>;
using VarD = Var<double>;

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction; backward walks the list once in reverse.
template <class T>
class Tape {
public:
    using BackpropFn = std::function<void(Tape&, std::int32_t self)>;

    Var<T> leaf(Tensor<T> value) { return push(std::move(value), true, nullptr); }
    Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

    const Tensor<T>& value(Var<T> v) const { return nodes_[check(v)].value; }

    // Zero tensor of the value's shape when no gradient reached the node.
    const Tensor<T>& grad(Var<T> v) {
        Node& n = nodes_[check(v)];
        if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    std::size_t node_count() const { return nodes_.size(); }

    void backward(Var<T> loss) {
        const std::int32_t root = check(loss);
        if (nodes_[root].value.size() != 1) {
            throw DimensionError("backward: loss must be scalar, got " + nodes_[root].value.shape_string());
        }
        accumulate(root, Tensor<T>::scalar(T(1)));
        for (std::int32_t i = root; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.backprop && !n.grad.empty()) n.backprop(*this, i);
        }
    }

    void clear() { nodes_.clear(); }

    Var<T> push(Tensor<T> value, bool needs_grad, BackpropFn backprop) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return Var<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    bool needs_grad(Var<T> v) const { return nodes_[check(v)].needs_grad; }

    void accumulate(std::int32_t id, const Tensor<T>& g) {
        Node& n = nodes_[id];
        if (!n.needs_grad) return;
        if (n.grad.empty()) {
            n.grad = g;
        } else {
            for (std::size_t i = 0; i < g.size(); ++i) n.grad.at(i) += g.at(i);
        }
    }

    const Tensor<T>& grad_ref(std::int32_t id) const { return nodes_[id].grad; }
    const Tensor<T>& value_ref(std::int32_t id) const { return nodes_[id].value; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool needs_grad = false;
        BackpropFn backprop;
    };

    std::int32_t check(Var<T> v) const {
        if (v.tape != this || v.id < 0 || v.id >= static_cast<std::int32_t>(nodes_.size())) {
            throw ConfigError("autodiff: variable does not belong to this tape");
        }
        return v.id;
    }

    std::vector<Node> nodes_;
};

namespace ad {

template <class T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
    if (a.tape != b.tape || a.tape == nullptr) {
        throw ConfigError("autodiff: operands live on different tapes");
    }
    return *a.tape;
}

template <class T>
bool wants(Tape<T>& t, std::initializer_list<Var<T>> vs) {
    for (Var<T> v : vs)
        if (t.needs_grad(v)) return true;
    return false;
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Var ops. Each mirrors the Tensor op of the same name so model code can be
// written once against either value type.
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>& t = ad::same_tape(a, b);
    return t.push(add(t.value(a), t.value(b)), ad::wants(t, {a, b}),
                  [ia = a.id, ib = b.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      tp.accumulate(ia, g);
                      tp.accumulate(ib, g);
                  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    Tape<T>& t = ad::same_tape(a, b);
    return t.push(sub(t.value(a), t.value(b)), ad::wants(t, {a, b}),
                  [ia = a.id, ib = b.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      tp.accumulate(ia, g);
                      tp.accumulate(ib, scale(g, -1.0));
                  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>& t = ad::same_tape(a, b);
    return t.push(mul(t.value(a), t.value(b)), ad::wants(t, {a, b}),
                  [ia = a.id, ib = b.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      tp.accumulate(ia, mul(g, tp.value_ref(ib)));
                      tp.accumulate(ib, mul(g, tp.value_ref(ia)));
                  });
}

template <class T>
Var<T> scale(Var<T> a, double s) {
    Tape<T>& t = *a.tape;
    return t.push(scale(t.value(a), s), ad::wants(t, {a}),
                  [ia = a.id, s](Tape<T>& tp, std::int32_t self) {
                      tp.accumulate(ia, scale(tp.grad_ref(self), s));
                  });
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>& t = ad::same_tape(a, b);
    return t.push(matmul(t.value(a), t.value(b)), ad::wants(t, {a, b}),
                  [ia = a.id, ib = b.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      tp.accumulate(ia, matmul_nt(g, tp.value_ref(ib)));
                      tp.accumulate(ib, matmul_tn(tp.value_ref(ia), g));
                  });
}

template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    Tape<T>& t = ad::same_tape(a, b);
    return t.push(matmul_nt(t.value(a), t.value(b)), ad::wants(t, {a, b}),
                  [ia = a.id, ib = b.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      tp.accumulate(ia, matmul(g, tp.value_ref(ib)));
                      tp.accumulate(ib, matmul_tn(g, tp.value_ref(ia)));
                  });
}

template <class T>
Var<T> transpose(Var<T> a) {
    Tape<T>& t = *a.tape;
    return t.push(transpose(t.value(a)), ad::wants(t, {a}),
                  [ia = a.id](Tape<T>& tp, std::int32_t self) {
                      tp.accumulate(ia, transpose(tp.grad_ref(self)));
                  });
}

template <class T>
Var<T> add_rowvec(Var<T> a, Var<T> v) {
    Tape<T>& t = ad::same_tape(a, v);
    return t.push(add_rowvec(t.value(a), t.value(v)), ad::wants(t, {a, v}),
                  [ia = a.id, iv = v.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      tp.accumulate(ia, g);
                      Tensor<T> dv(tp.value_ref(iv).shape());
                      for (std::size_t i = 0; i < g.rows(); ++i)
                          for (std::size_t j = 0; j < g.cols(); ++j) dv.at(j) += g(i, j);
                      tp.accumulate(iv, dv);
                  });
}

template <class T>
Var<T> mul_rowvec(Var<T> a, Var<T> v) {
    Tape<T>& t = ad::same_tape(a, v);
    return t.push(mul_rowvec(t.value(a), t.value(v)), ad::wants(t, {a, v}),
                  [ia = a.id, iv = v.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const Tensor<T>& av = tp.value_ref(ia);
                      const Tensor<T>& vv = tp.value_ref(iv);
                      tp.accumulate(ia, mul_rowvec(g, vv));
                      Tensor<T> dv(vv.shape());
                      for (std::size_t i = 0; i < g.rows(); ++i)
                          for (std::size_t j = 0; j < g.cols(); ++j) dv.at(j) += g(i, j) * av(i, j);
                      tp.accumulate(iv, dv);
                  });
}

template <class T>
Var<T> row_softmax(Var<T> a) {
    Tape<T>& t = *a.tape;
    return t.push(row_softmax(t.value(a)), ad::wants(t, {a}),
                  [ia = a.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const Tensor<T>& y = tp.value_ref(self);
                      Tensor<T> dx(g.shape());
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                          T dot = 0;
                          for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
                          for (std::size_t j = 0; j < g.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
                      }
                      tp.accumulate(ia, dx);
                  });
}

template <class T>
Var<T> row_log_softmax(Var<T> a) {
    Tape<T>& t = *a.tape;
    return t.push(row_log_softmax(t.value(a)), ad::wants(t, {a}),
                  [ia = a.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const Tensor<T>& y = tp.value_ref(self);  // log-probabilities
                      Tensor<T> dx(g.shape());
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                          T gsum = 0;
                          for (std::size_t j = 0; j < g.cols(); ++j) gsum += g(i, j);
                          for (std::size_t j = 0; j < g.cols(); ++j)
                              dx(i, j) = g(i, j) - std::exp(y(i, j)) * gsum;
                      }
                      tp.accumulate(ia, dx);
                  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
    Tape<T>& t = ad::same_tape(x, gamma);
    ad::same_tape(gamma, beta);
    const Tensor<T>& xv = t.value(x);
    const std::size_t rows = xv.rows(), d = xv.cols();

    // Save the normalized activations and per-row inverse stddev for backward.
    Tensor<T> xhat({rows, d});
    std::vector<T> inv(rows);
    Tensor<T> out = layer_norm(xv, t.value(gamma), t.value(beta), eps);
    for (std::size_t i = 0; i < rows; ++i) {
        T mean = 0;
        for (std::size_t j = 0; j < d; ++j) mean += xv(i, j);
        mean /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const T c = xv(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        inv[i] = T(1) / std::sqrt(var + static_cast<T>(eps));
        for (std::size_t j = 0; j < d; ++j) xhat(i, j) = (xv(i, j) - mean) * inv[i];
    }

    return t.push(std::move(out), ad::wants(t, {x, gamma, beta}),
                  [ix = x.id, ig = gamma.id, ib = beta.id, xhat = std::move(xhat),
                   inv = std::move(inv)](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const std::size_t rows = g.rows(), d = g.cols();
                      const Tensor<T>& gam = tp.value_ref(ig);
                      Tensor<T> dgamma(gam.shape());
                      Tensor<T> dbeta(gam.shape());
                      Tensor<T> dx(g.shape());
                      for (std::size_t i = 0; i < rows; ++i) {
                          T mean_a = 0, mean_ax = 0;
                          for (std::size_t j = 0; j < d; ++j) {
                              const T a = gam.at(j) * g(i, j);
                              mean_a += a;
                              mean_ax += a * xhat(i, j);
                              dgamma.at(j) += g(i, j) * xhat(i, j);
                              dbeta.at(j) += g(i, j);
                          }
                          mean_a /= static_cast<T>(d);
                          mean_ax /= static_cast<T>(d);
                          for (std::size_t j = 0; j < d; ++j) {
                              const T a = gam.at(j) * g(i, j);
                              dx(i, j) = inv[i] * (a - mean_a - xhat(i, j) * mean_ax);
                          }
                      }
                      tp.accumulate(ix, dx);
                      tp.accumulate(ig, dgamma);
                      tp.accumulate(ib, dbeta);
                  });
}

template <class T>
Var<T> gelu(Var<T> a) {
    Tape<T>& t = *a.tape;
    return t.push(gelu(t.value(a)), ad::wants(t, {a}),
                  [ia = a.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const Tensor<T>& x = tp.value_ref(ia);
                      Tensor<T> dx(g.shape());
                      for (std::size_t i = 0; i < g.size(); ++i)
                          dx.at(i) = g.at(i) * detail::gelu_grad_scalar(x.at(i));
                      tp.accumulate(ia, dx);
                  });
}

template <class T>
Var<T> slice_rows(Var<T> a, std::size_t row0, std::size_t count) {
    Tape<T>& t = *a.tape;
    return t.push(slice_rows(t.value(a), row0, count), ad::wants(t, {a}),
                  [ia = a.id, row0](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      Tensor<T> da(tp.value_ref(ia).shape());
                      for (std::size_t i = 0; i < g.rows(); ++i)
                          for (std::size_t j = 0; j < g.cols(); ++j) da(row0 + i, j) = g(i, j);
                      tp.accumulate(ia, da);
                  });
}

template <class T>
Var<T> slice_cols(Var<T> a, std::size_t col0, std::size_t count) {
    Tape<T>& t = *a.tape;
    return t.push(slice_cols(t.value(a), col0, count), ad::wants(t, {a}),
                  [ia = a.id, col0](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      Tensor<T> da(tp.value_ref(ia).shape());
                      for (std::size_t i = 0; i < g.rows(); ++i)
                          for (std::size_t j = 0; j < g.cols(); ++j) da(i, col0 + j) = g(i, j);
                      tp.accumulate(ia, da);
                  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    Tape<T>& t = *parts[0].tape;
    std::vector<Tensor<T>> values;
    std::vector<std::int32_t> ids;
    bool ng = false;
    for (Var<T> p : parts) {
        ad::same_tape(parts[0], p);
        values.push_back(t.value(p));
        ids.push_back(p.id);
        ng = ng || t.needs_grad(p);
    }
    return t.push(concat_cols(values), ng, [ids](Tape<T>& tp, std::int32_t self) {
        const Tensor<T>& g = tp.grad_ref(self);
        std::size_t off = 0;
        for (std::int32_t id : ids) {
            const std::size_t w = tp.value_ref(id).cols();
            tp.accumulate(id, slice_cols(g, off, w));
            off += w;
        }
    });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    Tape<T>& t = *parts[0].tape;
    std::vector<Tensor<T>> values;
    std::vector<std::int32_t> ids;
    bool ng = false;
    for (Var<T> p : parts) {
        ad::same_tape(parts[0], p);
        values.push_back(t.value(p));
        ids.push_back(p.id);
        ng = ng || t.needs_grad(p);
    }
    return t.push(concat_rows(values), ng, [ids](Tape<T>& tp, std::int32_t self) {
        const Tensor<T>& g = tp.grad_ref(self);
        std::size_t off = 0;
        for (std::int32_t id : ids) {
            const std::size_t h = tp.value_ref(id).rows();
            tp.accumulate(id, slice_rows(g, off, h));
            off += h;
        }
    });
}

template <class T>
Var<T> mean_rows(Var<T> a) {
    Tape<T>& t = *a.tape;
    return t.push(mean_rows(t.value(a)), ad::wants(t, {a}),
                  [ia = a.id](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const Tensor<T>& av = tp.value_ref(ia);
                      Tensor<T> da(av.shape());
                      const T f = T(1) / static_cast<T>(av.rows());
                      for (std::size_t i = 0; i < av.rows(); ++i)
                          for (std::size_t j = 0; j < av.cols(); ++j) da(i, j) = g.at(j) * f;
                      tp.accumulate(ia, da);
                  });
}

template <class T>
Var<T> sum_all(Var<T> a) {
    Tape<T>& t = *a.tape;
    return t.push(sum_all(t.value(a)), ad::wants(t, {a}),
                  [ia = a.id](Tape<T>& tp, std::int32_t self) {
                      const T g = tp.grad_ref(self).at(0);
                      tp.accumulate(ia, Tensor<T>::full(tp.value_ref(ia).shape(), g));
                  });
}

template <class T>
Var<T> mean_all(Var<T> a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum_all(a), 1.0 / n);
}

template <class T>
Var<T> patch_merge(Var<T> a, std::size_t grid) {
    Tape<T>& t = *a.tape;
    return t.push(patch_merge(t.value(a), grid), ad::wants(t, {a}),
                  [ia = a.id, grid](Tape<T>& tp, std::int32_t self) {
                      const Tensor<T>& g = tp.grad_ref(self);
                      const Tensor<T>& av = tp.value_ref(ia);
                      const std::size_t d = av.cols(), half = grid / 2;
                      Tensor<T> da(av.shape());
                      for (std::size_t gy = 0; gy < half; ++gy) {
                          for (std::size_t gx = 0; gx < half; ++gx) {
                              const std::size_t src[4] = {
                                  (2 * gy) * grid + 2 * gx, (2 * gy) * grid + 2 * gx + 1,
                                  (2 * gy + 1) * grid + 2 * gx, (2 * gy + 1) * grid + 2 * gx + 1};
                              const std::size_t dst = gy * half + gx;
                              for (std::size_t s = 0; s < 4; ++s)
                                  for (std::size_t j = 0; j < d; ++j) da(src[s], j) = g(dst, s * d + j);
                          }
                      }
                      tp.accumulate(ia, da);
                  });
}

// Copies the value and cuts the gradient path.
template <class T>
Var<T> detach(Var<T> a) {
    return a.tape->constant(a.tape->value(a));
}

// ---------------------------------------------------------------------------
// Generic helpers so templated model code can treat Tensor<T> and Var<T>
// uniformly.
// ---------------------------------------------------------------------------

template <class T>
struct value_traits {
    using scalar = typename T::value_type;
    static const Tensor<scalar>& plain(const T& v) { return v; }
    static T lift(const T& /*like*/, Tensor<scalar> value) { return value; }
};

template <class S>
struct value_traits<Var<S>> {
    using scalar = S;
    static const Tensor<S>& plain(const Var<S>& v) { return v.tape->value(v); }
    static Var<S> lift(const Var<S>& like, Tensor<S> value) { return like.tape->constant(std::move(value)); }
};

// Read-only view of the underlying numbers for either value type.
template <class V>
const Tensor<typename value_traits<V>::scalar>& plain(const V& v) {
    return value_traits<V>::plain(v);
}

// Wraps a raw tensor into the same evaluation world as `like` (no gradient).
template <class V>
V lift(const V& like, Tensor<typename value_traits<V>::scalar> value) {
    return value_traits<V>::lift(like, std::move(value));
}

}  // namespace pathvit
