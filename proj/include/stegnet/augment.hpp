#pragma once

#include <random>
#include <utility>

#include "stegnet/tensor.hpp"

namespace stegnet {

// A dihedral transform of the image plane: optional horizontal mirror
// followed by a quarter-turn rotation. Both members of a cover/stego pair
// receive the same transform so their coefficient-level difference is a
// pure permutation of pixel sites.
struct Augmentation {
    bool mirror = false;
    int quarter_turns = 0;  // counterclockwise, 0..3
};

template <class Rng>
Augmentation draw_augmentation(Rng& rng) {
    // Draw order is part of the checkpoint contract: mirror first, then the
    // rotation, one pair per call.
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> quarters(0, 3);
    Augmentation a;
    a.mirror = coin(rng) == 1;
    a.quarter_turns = quarters(rng);
    return a;
}

template <typename Scalar>
Tensor<Scalar> mirror_horizontal(const Tensor<Scalar>& t) {
    const Shape s = t.shape();
    Tensor<Scalar> out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                    out.at(n, c, y, x) = t.at(n, c, y, s.w - 1 - x);
    return out;
}

// One quarter turn counterclockwise; width and height swap.
template <typename Scalar>
Tensor<Scalar> rotate_quarter(const Tensor<Scalar>& t) {
    const Shape s = t.shape();
    Tensor<Scalar> out(Shape{s.n, s.c, s.w, s.h});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x)
                    out.at(n, c, s.w - 1 - x, y) = t.at(n, c, y, x);
    return out;
}

template <typename Scalar>
Tensor<Scalar> apply_augmentation(const Tensor<Scalar>& t, Augmentation a) {
    Tensor<Scalar> out = a.mirror ? mirror_horizontal(t) : t;
    for (int k = 0; k < (a.quarter_turns & 3); ++k) out = rotate_quarter(out);
    return out;
}

template <typename Scalar, class Rng>
std::pair<Tensor<Scalar>, Tensor<Scalar>> augment_pair(const Tensor<Scalar>& cover,
                                                       const Tensor<Scalar>& stego,
                                                       Rng& rng) {
    const Augmentation a = draw_augmentation(rng);
    return {apply_augmentation(cover, a), apply_augmentation(stego, a)};
}

}  // namespace stegnet
