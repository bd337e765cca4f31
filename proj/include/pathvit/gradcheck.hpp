#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

// Central-difference derivative estimates (L(x+h) - L(x-h)) / 2h at the given
// flat indices of one parameter tensor. The parameter is restored exactly
// after probing. loss_fn takes no arguments and reads the tensor in place.
template <class T, class LossFn>
Tensor<double> finite_difference_gradient(LossFn&& loss_fn, Tensor<T>& param, double h,
                                          const std::vector<std::size_t>& sample_indices) {
    if (h <= 0) throw ConfigError("finite_difference_gradient: h must be positive");
    std::vector<double> est(sample_indices.size());
    for (std::size_t k = 0; k < sample_indices.size(); ++k) {
        const std::size_t i = sample_indices[k];
        const T saved = param.at(i);
        param.at(i) = saved + static_cast<T>(h);
        const double up = loss_fn();
        param.at(i) = saved - static_cast<T>(h);
        const double down = loss_fn();
        param.at(i) = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw EvalError("finite_difference_gradient: loss evaluated non-finite");
        }
        est[k] = (up - down) / (2.0 * h);
    }
    const std::size_t n = est.size();
    return Tensor<double>({n}, std::move(est));
}

// Same, over a parameter list addressed by a global flat index.
struct GlobalIndex {
    std::size_t tensor;
    std::size_t element;
};

template <class T, class LossFn>
Tensor<double> finite_difference_gradient(LossFn&& loss_fn, const std::vector<Tensor<T>*>& params, double h,
                                          const std::vector<GlobalIndex>& sample_indices) {
    if (h <= 0) throw ConfigError("finite_difference_gradient: h must be positive");
    std::vector<double> est(sample_indices.size());
    for (std::size_t k = 0; k < sample_indices.size(); ++k) {
        Tensor<T>& param = *params[sample_indices[k].tensor];
        const std::size_t i = sample_indices[k].element;
        const T saved = param.at(i);
        param.at(i) = saved + static_cast<T>(h);
        const double up = loss_fn();
        param.at(i) = saved - static_cast<T>(h);
        const double down = loss_fn();
        param.at(i) = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw EvalError("finite_difference_gradient: loss evaluated non-finite");
        }
        est[k] = (up - down) / (2.0 * h);
    }
    const std::size_t n = est.size();
    return Tensor<double>({n}, std::move(est));
}

// Relative-error comparison used by every gradient suite: the denominator is
// floored so finite-difference noise on near-zero gradients does not explode
// the ratio.
inline double grad_rel_error(double autodiff, double finite_diff, double floor = 1e-3) {
    const double denom = std::max({std::abs(autodiff), std::abs(finite_diff), floor});
    return std::abs(autodiff - finite_diff) / denom;
}

}  // namespace pathvit
