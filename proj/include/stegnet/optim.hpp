#pragma once

#include <stdexcept>
#include <vector>

#include "stegnet/tensor.hpp"

namespace stegnet {

// v <- momentum*v - lr*(g + wd*w); w <- w + v; gradients cleared afterwards.
// Weight decay applies only to parameters with the flag set.
template <typename Scalar>
void sgd_momentum_step(const std::vector<Parameter<Scalar>*>& params, Scalar lr,
                       Scalar momentum = Scalar(0.9), Scalar weight_decay = Scalar(0)) {
    if (lr <= Scalar(0))
        throw std::invalid_argument("learning rate must be positive");
    for (Parameter<Scalar>* p : params) {
        const Scalar wd = p->weight_decay_enabled ? weight_decay : Scalar(0);
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const Scalar g = p->grad[i] + wd * p->value[i];
            p->momentum[i] = momentum * p->momentum[i] - lr * g;
            p->value[i] += p->momentum[i];
        }
        p->zero_grad();
    }
}

}  // namespace stegnet
