#pragma once

#include <random>

#include "stegnet/tensor.hpp"

namespace testutil {

using stegnet::Shape;
using stegnet::Tensor;

template <typename Scalar>
Tensor<Scalar> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<Scalar> t(s);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
    return t;
}

// Reference convolution: seven nested loops, no staging. Kept deliberately
// independent of the im2col path it cross-checks.
template <typename Scalar>
Tensor<Scalar> naive_conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                            int stride, int pad) {
    const Shape& s = input.shape();
    const Shape& ws = weight.shape();
    const int ho = (s.h + 2 * pad - ws.h) / stride + 1;
    const int wo = (s.w + 2 * pad - ws.w) / stride + 1;
    Tensor<Scalar> out(s.n, ws.n, ho, wo);
    for (int n = 0; n < s.n; ++n)
        for (int co = 0; co < ws.n; ++co)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double sum = 0;
                    for (int ci = 0; ci < s.c; ++ci)
                        for (int ky = 0; ky < ws.h; ++ky)
                            for (int kx = 0; kx < ws.w; ++kx) {
                                const int iy = oy * stride - pad + ky;
                                const int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                                sum += static_cast<double>(input.at(n, ci, iy, ix)) *
                                       weight.at(co, ci, ky, kx);
                            }
                    out.at(n, co, oy, ox) = static_cast<Scalar>(sum);
                }
    return out;
}

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename Scalar>
double max_rel_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double floor = 1.0) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double av = a[i], bv = b[i];
        const double denom = std::max({std::abs(av), std::abs(bv), floor});
        m = std::max(m, std::abs(av - bv) / denom);
    }
    return m;
}

}  // namespace testutil
