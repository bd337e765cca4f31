#pragma once

// Independent reference implementations used as test oracles. These must stay
// decoupled from the library's evaluation path: plain loops, std::complex
// arithmetic, no shared kernels.

#include <cmath>
#include <complex>
#include <vector>

#include "pathvit/rng.hpp"
#include "pathvit/tensor.hpp"

namespace oracle {

template <class T>
pathvit::Tensor<T> random_tensor(std::vector<std::size_t> shape, pathvit::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    pathvit::Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Triple-loop matrix product in i, j, k order (the library uses i, k, j).
template <class T>
pathvit::Tensor<T> matmul_triple_loop(const pathvit::Tensor<T>& a, const pathvit::Tensor<T>& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    pathvit::Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T acc = 0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += a(i, kk) * b(kk, j);
            c(i, j) = acc;
        }
    return c;
}

template <class T>
std::vector<double> softmax_direct(const std::vector<T>& x) {
    double mx = x[0];
    for (T v : x) mx = std::max(mx, static_cast<double>(v));
    std::vector<double> e(x.size());
    double sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        e[i] = std::exp(static_cast<double>(x[i]) - mx);
        sum += e[i];
    }
    for (double& v : e) v /= sum;
    return e;
}

// Scaled dot-product attention for one head, written with per-element loops.
template <class T>
pathvit::Tensor<T> attention_head_loop(const pathvit::Tensor<T>& q, const pathvit::Tensor<T>& k,
                                       const pathvit::Tensor<T>& v) {
    const std::size_t t = q.rows(), dk = q.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    pathvit::Tensor<T> out({t, v.cols()});
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<T> scores(t);
        for (std::size_t j = 0; j < t; ++j) {
            double dot = 0;
            for (std::size_t c = 0; c < dk; ++c)
                dot += static_cast<double>(q(i, c)) * static_cast<double>(k(j, c));
            scores[j] = static_cast<T>(dot * scale);
        }
        const std::vector<double> w = softmax_direct(scores);
        for (std::size_t c = 0; c < v.cols(); ++c) {
            double acc = 0;
            for (std::size_t j = 0; j < t; ++j) acc += w[j] * static_cast<double>(v(j, c));
            out(i, c) = static_cast<T>(acc);
        }
    }
    return out;
}

// Brute-force 2-D DFT with std::complex, channel-mean magnitudes, and
// round-to-nearest radial binning.
template <class T>
std::vector<double> radial_spectrum_bruteforce(const pathvit::Tensor<T>& tokens, std::size_t grid) {
    const std::size_t d = tokens.cols();
    const std::size_t bins = grid / 2 + 1;
    std::vector<double> amp(grid * grid, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t u = 0; u < grid; ++u)
            for (std::size_t vfreq = 0; vfreq < grid; ++vfreq) {
                std::complex<double> acc(0, 0);
                for (std::size_t y = 0; y < grid; ++y)
                    for (std::size_t x = 0; x < grid; ++x) {
                        const double angle = -2.0 * 3.14159265358979323846 *
                                             (static_cast<double>(u) * static_cast<double>(y) +
                                              static_cast<double>(vfreq) * static_cast<double>(x)) /
                                             static_cast<double>(grid);
                        acc += static_cast<double>(tokens(y * grid + x, c)) *
                               std::polar(1.0, angle);
                    }
                amp[u * grid + vfreq] += std::abs(acc);
            }
    }
    for (double& a : amp) a /= static_cast<double>(d);

    std::vector<double> sum(bins, 0.0);
    std::vector<int> count(bins, 0);
    const auto half = static_cast<long long>(grid) / 2;
    for (std::size_t u = 0; u < grid; ++u)
        for (std::size_t vfreq = 0; vfreq < grid; ++vfreq) {
            long long cu = static_cast<long long>(u), cv = static_cast<long long>(vfreq);
            if (cu > half) cu -= static_cast<long long>(grid);
            if (cv > half) cv -= static_cast<long long>(grid);
            const auto bin =
                static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cu * cu + cv * cv))));
            if (bin >= bins) continue;
            sum[bin] += amp[u * grid + vfreq];
            count[bin] += 1;
        }
    std::vector<double> rel(bins, 0.0);
    const double floor_log = std::log(1e-12);
    const double a0 = count[0] ? sum[0] / count[0] : 0.0;
    const double l0 = a0 > 0 ? std::log(a0) : floor_log;
    for (std::size_t b = 1; b < bins; ++b) {
        const double ab = count[b] ? sum[b] / count[b] : 0.0;
        rel[b] = ab > 0 ? std::log(ab) - l0 : floor_log;
    }
    return rel;
}

inline double rel_err(double got, double want, double floor = 1e-300) {
    const double denom = std::max({std::abs(got), std::abs(want), floor});
    return std::abs(got - want) / denom;
}

}  // namespace oracle
