#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "stegnet/tensor.hpp"

namespace stegnet {

enum class Mode { Train, Eval };

// Per-channel batch normalization state. gamma/beta are the learnable
// parameters; running statistics serve eval-mode normalization.
template <typename Scalar>
struct BatchNormState {
    explicit BatchNormState(int channels, std::string name = "bn")
        : gamma(Shape{1, channels, 1, 1}, name + ".gamma"),
          beta(Shape{1, channels, 1, 1}, name + ".beta"),
          running_mean(1, channels, 1, 1),
          running_var(1, channels, 1, 1),
          saved_mean(1, channels, 1, 1),
          saved_inv_std(1, channels, 1, 1) {
        gamma.value.fill(Scalar(1));
        running_var.fill(Scalar(1));
    }

    int channels() const { return gamma.value.shape().c; }

    Parameter<Scalar> gamma;
    Parameter<Scalar> beta;
    Tensor<Scalar> running_mean;
    Tensor<Scalar> running_var;
    Scalar epsilon = Scalar(1e-5);
    Scalar momentum = Scalar(0.1);  // weight of the new batch statistic
    Mode mode = Mode::Train;

    // batch statistics captured by the last train-mode forward
    Tensor<Scalar> saved_mean;
    Tensor<Scalar> saved_inv_std;

    // back to the freshly constructed state: unit scale, zero shift, neutral
    // running statistics
    void reset() {
        gamma.value.fill(Scalar(1));
        beta.value.fill(Scalar(0));
        gamma.grad.zero();
        beta.grad.zero();
        gamma.momentum.zero();
        beta.momentum.zero();
        running_mean.zero();
        running_var.fill(Scalar(1));
        saved_mean.zero();
        saved_inv_std.zero();
    }
};

template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& input, BatchNormState<Scalar>& state) {
    const Shape& s = input.shape();
    if (s.c != state.channels())
        throw std::invalid_argument("batchnorm channel mismatch: input " + s.str() +
                                    " vs state channels " + std::to_string(state.channels()));
    Tensor<Scalar> out(s);
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t m = static_cast<std::size_t>(s.n) * hw;

    if (state.mode == Mode::Train) {
        if (m <= 1)
            throw std::invalid_argument(
                "batchnorm train mode needs N*H*W > 1 per channel (variance undefined)");
        for (int c = 0; c < s.c; ++c) {
            double sum = 0;
            for (int n = 0; n < s.n; ++n) {
                const Scalar* p = input.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            }
            const double mean = sum / static_cast<double>(m);
            double var_sum = 0;
            for (int n = 0; n < s.n; ++n) {
                const Scalar* p = input.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = p[i] - mean;
                    var_sum += d * d;
                }
            }
            const double var = var_sum / static_cast<double>(m);
            const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(state.epsilon));
            state.saved_mean[c] = static_cast<Scalar>(mean);
            state.saved_inv_std[c] = static_cast<Scalar>(inv_std);

            const double unbiased = var_sum / static_cast<double>(m - 1);
            state.running_mean[c] = static_cast<Scalar>(
                (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean);
            state.running_var[c] = static_cast<Scalar>(
                (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);

            const Scalar g = state.gamma.value[c];
            const Scalar b = state.beta.value[c];
            for (int n = 0; n < s.n; ++n) {
                const Scalar* p = input.plane(n, c);
                Scalar* q = out.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i)
                    q[i] = static_cast<Scalar>((p[i] - mean) * inv_std) * g + b;
            }
        }
    } else {
        for (int c = 0; c < s.c; ++c) {
            const double inv_std =
                1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                                static_cast<double>(state.epsilon));
            const double mean = state.running_mean[c];
            const Scalar g = state.gamma.value[c];
            const Scalar b = state.beta.value[c];
            for (int n = 0; n < s.n; ++n) {
                const Scalar* p = input.plane(n, c);
                Scalar* q = out.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i)
                    q[i] = static_cast<Scalar>((p[i] - mean) * inv_std) * g + b;
            }
        }
    }
    return out;
}

// Train-mode gradients, including the dependence of the batch statistics on
// the input. Fills gamma/beta grads (accumulating) and returns grad_input.
template <typename Scalar>
Tensor<Scalar> batchnorm_backward(const Tensor<Scalar>& input, BatchNormState<Scalar>& state,
                                  const Tensor<Scalar>& grad_out) {
    if (state.mode != Mode::Train)
        throw std::logic_error("batchnorm_backward requires train mode");
    const Shape& s = input.shape();
    if (grad_out.shape() != s)
        throw std::invalid_argument("batchnorm grad_out shape " + grad_out.shape().str() +
                                    " does not match input " + s.str());
    Tensor<Scalar> grad_input(s);
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    const double m = static_cast<double>(s.n) * hw;

    for (int c = 0; c < s.c; ++c) {
        const double mean = state.saved_mean[c];
        const double inv_std = state.saved_inv_std[c];
        const double g = state.gamma.value[c];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < s.n; ++n) {
            const Scalar* x = input.plane(n, c);
            const Scalar* dy = grad_out.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                const double xhat = (x[i] - mean) * inv_std;
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xhat;
            }
        }
        state.beta.grad[c] += static_cast<Scalar>(sum_dy);
        state.gamma.grad[c] += static_cast<Scalar>(sum_dy_xhat);

        const double mean_dy = sum_dy / m;
        const double mean_dy_xhat = sum_dy_xhat / m;
        for (int n = 0; n < s.n; ++n) {
            const Scalar* x = input.plane(n, c);
            const Scalar* dy = grad_out.plane(n, c);
            Scalar* dx = grad_input.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                const double xhat = (x[i] - mean) * inv_std;
                dx[i] = static_cast<Scalar>(g * inv_std * (dy[i] - mean_dy - xhat * mean_dy_xhat));
            }
        }
    }
    return grad_input;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
    Tensor<Scalar> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > Scalar(0) ? input[i] : Scalar(0);
    return out;
}

// Subgradient at exactly 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out) {
    if (!input.same_shape(grad_out))
        throw std::invalid_argument("relu grad_out shape " + grad_out.shape().str() +
                                    " does not match input " + input.shape().str());
    Tensor<Scalar> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > Scalar(0) ? grad_out[i] : Scalar(0);
    return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add shape mismatch: " + a.shape().str() + " vs " +
                                    b.shape().str());
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& input) {
    const Shape& s = input.shape();
    Tensor<Scalar> out(s.n, s.c, 1, 1);
    const std::size_t hw = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            double sum = 0;
            const Scalar* p = input.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            out.at(n, c, 0, 0) = static_cast<Scalar>(sum / static_cast<double>(hw));
        }
    return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Shape& in_shape, const Tensor<Scalar>& grad_out) {
    Tensor<Scalar> grad_input(in_shape);
    const std::size_t hw = static_cast<std::size_t>(in_shape.h) * in_shape.w;
    for (int n = 0; n < in_shape.n; ++n)
        for (int c = 0; c < in_shape.c; ++c) {
            const Scalar g = grad_out.at(n, c, 0, 0) / static_cast<Scalar>(hw);
            Scalar* p = grad_input.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) p[i] = g;
        }
    return grad_input;
}

// Windowed pooling. Padding positions are excluded from the window, so a
// constant input stays constant through either pool.
template <typename Scalar>
Tensor<Scalar> avg_pool(const Tensor<Scalar>& input, int window = 3, int stride = 2, int pad = 1) {
    const Shape& s = input.shape();
    const int ho = conv_out_extent(s.h, window, stride, pad);
    const int wo = conv_out_extent(s.w, window, stride, pad);
    Tensor<Scalar> out(s.n, s.c, ho, wo);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const Scalar* p = input.plane(n, c);
            Scalar* q = out.plane(n, c);
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const int y0 = std::max(0, oy * stride - pad);
                    const int y1 = std::min(s.h, oy * stride - pad + window);
                    const int x0 = std::max(0, ox * stride - pad);
                    const int x1 = std::min(s.w, ox * stride - pad + window);
                    double sum = 0;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) sum += p[y * s.w + x];
                    q[oy * wo + ox] =
                        static_cast<Scalar>(sum / static_cast<double>((y1 - y0) * (x1 - x0)));
                }
        }
    return out;
}

template <typename Scalar>
Tensor<Scalar> avg_pool_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out,
                                 int window = 3, int stride = 2, int pad = 1) {
    const Shape& s = input.shape();
    const int ho = grad_out.shape().h, wo = grad_out.shape().w;
    Tensor<Scalar> grad_input(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            Scalar* dx = grad_input.plane(n, c);
            const Scalar* dy = grad_out.plane(n, c);
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const int y0 = std::max(0, oy * stride - pad);
                    const int y1 = std::min(s.h, oy * stride - pad + window);
                    const int x0 = std::max(0, ox * stride - pad);
                    const int x1 = std::min(s.w, ox * stride - pad + window);
                    const Scalar g = dy[oy * wo + ox] / static_cast<Scalar>((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) dx[y * s.w + x] += g;
                }
        }
    return grad_input;
}

template <typename Scalar>
Tensor<Scalar> max_pool(const Tensor<Scalar>& input, int window = 3, int stride = 2, int pad = 1) {
    const Shape& s = input.shape();
    const int ho = conv_out_extent(s.h, window, stride, pad);
    const int wo = conv_out_extent(s.w, window, stride, pad);
    Tensor<Scalar> out(s.n, s.c, ho, wo);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const Scalar* p = input.plane(n, c);
            Scalar* q = out.plane(n, c);
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const int y0 = std::max(0, oy * stride - pad);
                    const int y1 = std::min(s.h, oy * stride - pad + window);
                    const int x0 = std::max(0, ox * stride - pad);
                    const int x1 = std::min(s.w, ox * stride - pad + window);
                    Scalar best = p[y0 * s.w + x0];
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) best = std::max(best, p[y * s.w + x]);
                    q[oy * wo + ox] = best;
                }
        }
    return out;
}

// Gradient routes to the first argmax element in row-major scan order.
template <typename Scalar>
Tensor<Scalar> max_pool_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out,
                                 int window = 3, int stride = 2, int pad = 1) {
    const Shape& s = input.shape();
    const int ho = grad_out.shape().h, wo = grad_out.shape().w;
    Tensor<Scalar> grad_input(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const Scalar* p = input.plane(n, c);
            Scalar* dx = grad_input.plane(n, c);
            const Scalar* dy = grad_out.plane(n, c);
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const int y0 = std::max(0, oy * stride - pad);
                    const int y1 = std::min(s.h, oy * stride - pad + window);
                    const int x0 = std::max(0, ox * stride - pad);
                    const int x1 = std::min(s.w, ox * stride - pad + window);
                    int by = y0, bx = x0;
                    Scalar best = p[y0 * s.w + x0];
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x)
                            if (p[y * s.w + x] > best) {
                                best = p[y * s.w + x];
                                by = y;
                                bx = x;
                            }
                    dx[by * s.w + bx] += dy[oy * wo + ox];
                }
        }
    return grad_input;
}

// Affine map on flattened (N,C,1,1) features. weight is (K,C,1,1), bias (K,1,1,1).
template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                               const Tensor<Scalar>& bias) {
    const Shape& s = input.shape();
    if (s.h != 1 || s.w != 1)
        throw std::invalid_argument("fully_connected expects flattened (N,C,1,1) input, got " +
                                    s.str());
    const int classes = weight.shape().n;
    if (weight.shape().c != s.c)
        throw std::invalid_argument("fully_connected weight " + weight.shape().str() +
                                    " does not match input " + s.str());
    Tensor<Scalar> out(s.n, classes, 1, 1);
    for (int n = 0; n < s.n; ++n)
        for (int k = 0; k < classes; ++k) {
            double sum = bias[k];
            for (int c = 0; c < s.c; ++c)
                sum += static_cast<double>(weight.at(k, c, 0, 0)) * input.at(n, c, 0, 0);
            out.at(n, k, 0, 0) = static_cast<Scalar>(sum);
        }
    return out;
}

template <typename Scalar>
std::tuple<Tensor<Scalar>, Tensor<Scalar>, Tensor<Scalar>> fully_connected_backward(
    const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& grad_out) {
    const Shape& s = input.shape();
    const int classes = weight.shape().n;
    Tensor<Scalar> grad_input(s);
    Tensor<Scalar> grad_weight(weight.shape());
    Tensor<Scalar> grad_bias(classes, 1, 1, 1);
    for (int n = 0; n < s.n; ++n)
        for (int k = 0; k < classes; ++k) {
            const Scalar g = grad_out.at(n, k, 0, 0);
            grad_bias[k] += g;
            for (int c = 0; c < s.c; ++c) {
                grad_weight.at(k, c, 0, 0) += g * input.at(n, c, 0, 0);
                grad_input.at(n, c, 0, 0) += g * weight.at(k, c, 0, 0);
            }
        }
    return {grad_input, grad_weight, grad_bias};
}

template <typename Scalar>
struct SoftmaxLoss {
    Scalar loss;
    Tensor<Scalar> probs;        // (N,K,1,1), rows sum to 1
    Tensor<Scalar> grad_logits;  // (probs - onehot) / N
};

// Numerically stable softmax + mean cross-entropy over the batch.
template <typename Scalar>
SoftmaxLoss<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits,
                                          const std::vector<int>& labels) {
    const Shape& s = logits.shape();
    if (s.h != 1 || s.w != 1)
        throw std::invalid_argument("softmax expects (N,K,1,1) logits, got " + s.str());
    if (static_cast<int>(labels.size()) != s.n)
        throw std::invalid_argument("softmax label count " + std::to_string(labels.size()) +
                                    " does not match batch " + std::to_string(s.n));
    SoftmaxLoss<Scalar> result{Scalar(0), Tensor<Scalar>(s), Tensor<Scalar>(s)};
    double total = 0;
    for (int n = 0; n < s.n; ++n) {
        if (labels[n] < 0 || labels[n] >= s.c)
            throw std::invalid_argument("label out of range: " + std::to_string(labels[n]));
        double mx = logits.at(n, 0, 0, 0);
        for (int k = 1; k < s.c; ++k) mx = std::max(mx, static_cast<double>(logits.at(n, k, 0, 0)));
        double denom = 0;
        for (int k = 0; k < s.c; ++k) denom += std::exp(static_cast<double>(logits.at(n, k, 0, 0)) - mx);
        for (int k = 0; k < s.c; ++k) {
            const double p = std::exp(static_cast<double>(logits.at(n, k, 0, 0)) - mx) / denom;
            result.probs.at(n, k, 0, 0) = static_cast<Scalar>(p);
            result.grad_logits.at(n, k, 0, 0) =
                static_cast<Scalar>((p - (k == labels[n] ? 1.0 : 0.0)) / s.n);
        }
        const double p_true = result.probs.at(n, labels[n], 0, 0);
        total += -std::log(std::max(p_true, 1e-300));
    }
    result.loss = static_cast<Scalar>(total / s.n);
    return result;
}

}  // namespace stegnet
