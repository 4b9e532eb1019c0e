#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <utility>

#include "stegnet/tensor.hpp"

namespace stegnet {

inline void check_conv_args(const Shape& in, const Shape& w, int stride, int pad) {
    if (w.h != w.w || w.h < 1)
        throw std::invalid_argument("conv kernel must be square, got " + w.str());
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv stride must be 1 or 2, got " + std::to_string(stride));
    if (pad < 0)
        throw std::invalid_argument("conv padding must be >= 0");
    if (in.c != w.c)
        throw std::invalid_argument("conv channel mismatch: input " + in.str() +
                                    " vs weight " + w.str());
    if (conv_out_extent(in.h, w.h, stride, pad) < 1 || conv_out_extent(in.w, w.w, stride, pad) < 1)
        throw std::invalid_argument("conv output would be empty for input " + in.str() +
                                    " kernel " + std::to_string(w.h) + " stride " +
                                    std::to_string(stride) + " pad " + std::to_string(pad));
}

namespace detail {

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gather the (C*k*k) x (Ho*Wo) patch matrix for one image. Out-of-bounds
// positions contribute zeros.
template <typename Scalar>
void im2col(const Tensor<Scalar>& input, int n, int k, int stride, int pad,
            int ho, int wo, Scalar* cols) {
    const Shape& s = input.shape();
    const std::size_t patch_cols = static_cast<std::size_t>(ho) * wo;
    std::size_t row = 0;
    for (int c = 0; c < s.c; ++c) {
        const Scalar* src = input.plane(n, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                Scalar* dst = cols + row * patch_cols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= s.h) {
                        for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = Scalar(0);
                        continue;
                    }
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * wo + ox] =
                            (ix < 0 || ix >= s.w) ? Scalar(0) : src[iy * s.w + ix];
                    }
                }
            }
        }
    }
}

// Scatter-add of the patch matrix back into an image gradient.
template <typename Scalar>
void col2im(const Scalar* cols, int k, int stride, int pad, int ho, int wo,
            Tensor<Scalar>& grad_input, int n) {
    const Shape& s = grad_input.shape();
    const std::size_t patch_cols = static_cast<std::size_t>(ho) * wo;
    std::size_t row = 0;
    for (int c = 0; c < s.c; ++c) {
        Scalar* dst = grad_input.plane(n, c);
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const Scalar* src = cols + row * patch_cols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= s.h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= s.w) continue;
                        dst[iy * s.w + ix] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Cross-correlation (no kernel flip), no bias term. weight is (Cout,Cin,k,k).
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                              int stride, int pad) {
    check_conv_args(input.shape(), weight.shape(), stride, pad);
    const Shape& s = input.shape();
    const int k = weight.shape().h;
    const int cout = weight.shape().n;
    const int ho = conv_out_extent(s.h, k, stride, pad);
    const int wo = conv_out_extent(s.w, k, stride, pad);
    const Eigen::Index patch_rows = static_cast<Eigen::Index>(s.c) * k * k;
    const Eigen::Index patch_cols = static_cast<Eigen::Index>(ho) * wo;

    Tensor<Scalar> out(s.n, cout, ho, wo);
    std::vector<Scalar> cols(static_cast<std::size_t>(patch_rows) * patch_cols);
    Eigen::Map<const detail::MatrixRM<Scalar>> w_mat(weight.data(), cout, patch_rows);
    for (int n = 0; n < s.n; ++n) {
        detail::im2col(input, n, k, stride, pad, ho, wo, cols.data());
        Eigen::Map<const detail::MatrixRM<Scalar>> col_mat(cols.data(), patch_rows, patch_cols);
        Eigen::Map<detail::MatrixRM<Scalar>> out_mat(out.plane(n, 0), cout, patch_cols);
        out_mat.noalias() = w_mat * col_mat;
    }
    return out;
}

// Exact gradients of conv2d_forward. grad_weight accumulates over the batch.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> conv2d_backward(const Tensor<Scalar>& input,
                                                          const Tensor<Scalar>& weight,
                                                          const Tensor<Scalar>& grad_out,
                                                          int stride, int pad) {
    check_conv_args(input.shape(), weight.shape(), stride, pad);
    const Shape& s = input.shape();
    const int k = weight.shape().h;
    const int cout = weight.shape().n;
    const int ho = conv_out_extent(s.h, k, stride, pad);
    const int wo = conv_out_extent(s.w, k, stride, pad);
    if (grad_out.shape() != Shape{s.n, cout, ho, wo})
        throw std::invalid_argument("conv grad_out shape " + grad_out.shape().str() +
                                    " does not match forward output " +
                                    Shape{s.n, cout, ho, wo}.str());

    const Eigen::Index patch_rows = static_cast<Eigen::Index>(s.c) * k * k;
    const Eigen::Index patch_cols = static_cast<Eigen::Index>(ho) * wo;

    Tensor<Scalar> grad_input(s);
    Tensor<Scalar> grad_weight(weight.shape());
    std::vector<Scalar> cols(static_cast<std::size_t>(patch_rows) * patch_cols);
    std::vector<Scalar> col_grad(cols.size());

    Eigen::Map<const detail::MatrixRM<Scalar>> w_mat(weight.data(), cout, patch_rows);
    Eigen::Map<detail::MatrixRM<Scalar>> gw_mat(grad_weight.data(), cout, patch_rows);
    for (int n = 0; n < s.n; ++n) {
        detail::im2col(input, n, k, stride, pad, ho, wo, cols.data());
        Eigen::Map<const detail::MatrixRM<Scalar>> col_mat(cols.data(), patch_rows, patch_cols);
        Eigen::Map<const detail::MatrixRM<Scalar>> go_mat(grad_out.plane(n, 0), cout, patch_cols);
        gw_mat.noalias() += go_mat * col_mat.transpose();

        Eigen::Map<detail::MatrixRM<Scalar>> cg_mat(col_grad.data(), patch_rows, patch_cols);
        cg_mat.noalias() = w_mat.transpose() * go_mat;
        detail::col2im(col_grad.data(), k, stride, pad, ho, wo, grad_input, n);
    }
    return {std::move(grad_input), std::move(grad_weight)};
}

}  // namespace stegnet
