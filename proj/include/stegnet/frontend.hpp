#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "stegnet/jpeg.hpp"
#include "stegnet/tensor.hpp"

namespace stegnet {

struct PreprocConfig {
    int dct_size = 4;
    double truncation_threshold = 8.0;
    // Optional band dropping. Defaults keep all bands; dropping showed no
    // benefit in our experiments but the knobs stay for study.
    bool include_dc = true;
    bool include_highest = true;

    void validate() const {
        if (dct_size != 2 && dct_size != 3 && dct_size != 4 && dct_size != 5 && dct_size != 8)
            throw std::invalid_argument("dct_size must be one of {2,3,4,5,8}");
        if (!(truncation_threshold > 0))
            throw std::invalid_argument("truncation_threshold must be positive");
    }
};

// Zero padding that preserves H x W for an n-tap window at stride 1. Even n
// needs an asymmetric split; one short side, one long side.
inline std::pair<int, int> bank_padding(int n) {
    const int before = (n - 1) / 2;
    return {before, n - 1 - before};
}

namespace frontend_detail {

// Rows of the orthonormal 1-D DCT-II basis of length n.
//
// The rows are built with their mirror symmetry b_u(n-1-j) = ±b_u(j) imposed
// bit-exactly, and the n=4 table additionally stores its half-integer entries
// as exact 0.5. Together with the mirrored accumulation order below this
// makes the filter bank cancel exactly on constant input: AC responses are
// 0.0 and the DC response is 4c, not merely close.
inline std::vector<double> basis_rows(int n) {
    std::vector<double> b(static_cast<std::size_t>(n) * n);
    if (n == 4) {
        const double h = 0.5;
        const double c1 = std::cos(std::acos(-1.0) / 8) * std::sqrt(0.5);
        const double c3 = std::cos(3 * std::acos(-1.0) / 8) * std::sqrt(0.5);
        const double rows[4][4] = {{h, h, h, h},  //
                                   {c1, c3, -c3, -c1},
                                   {h, -h, -h, h},
                                   {c3, -c1, c1, -c3}};
        for (int u = 0; u < 4; ++u)
            for (int j = 0; j < 4; ++j) b[static_cast<std::size_t>(u) * 4 + j] = rows[u][j];
        return b;
    }
    const double pi = std::acos(-1.0);
    for (int u = 0; u < n; ++u) {
        const double s = std::sqrt((u == 0 ? 1.0 : 2.0) / n);
        for (int j = 0; j <= (n - 1) / 2; ++j)
            b[static_cast<std::size_t>(u) * n + j] = s * std::cos(pi * u * (2 * j + 1) / (2 * n));
        if (n % 2 == 1 && u % 2 == 1) b[static_cast<std::size_t>(u) * n + (n - 1) / 2] = 0.0;
        for (int j = (n + 1) / 2; j < n; ++j)
            b[static_cast<std::size_t>(u) * n + j] =
                (u % 2 == 0 ? 1.0 : -1.0) * b[static_cast<std::size_t>(u) * n + (n - 1 - j)];
    }
    return b;
}

// Sum of n taps accumulated as mirror pairs: (t0+t_{n-1}) + (t1+t_{n-2}) + ...
// Symmetric windows cancel or double exactly instead of leaving roundoff.
template <typename Scalar>
Scalar mirror_sum(const Scalar* t, int n) {
    Scalar acc = 0;
    for (int j = 0; j < n / 2; ++j) acc += t[j] + t[n - 1 - j];
    if (n % 2 == 1) acc += t[n / 2];
    return acc;
}

inline std::vector<std::pair<int, int>> band_list(const PreprocConfig& cfg) {
    std::vector<std::pair<int, int>> bands;
    for (int u = 0; u < cfg.dct_size; ++u)
        for (int v = 0; v < cfg.dct_size; ++v) {
            if (u == 0 && v == 0 && !cfg.include_dc) continue;
            if (u == cfg.dct_size - 1 && v == cfg.dct_size - 1 && !cfg.include_highest) continue;
            bands.emplace_back(u, v);
        }
    return bands;
}

}  // namespace frontend_detail

// The fixed bank kernels as a (bands,1,n,n) tensor, band (u,v) at index u*n+v
// (minus any dropped bands). Kernel B(u,v) is the outer product of basis rows
// u and v. These are constants; nothing ever trains them.
template <typename Scalar = double>
Tensor<Scalar> dct_bank_kernels(const PreprocConfig& cfg = {}) {
    cfg.validate();
    const int n = cfg.dct_size;
    const auto basis = frontend_detail::basis_rows(n);
    const auto bands = frontend_detail::band_list(cfg);
    Tensor<Scalar> k(static_cast<int>(bands.size()), 1, n, n);
    for (std::size_t b = 0; b < bands.size(); ++b) {
        const auto [u, v] = bands[b];
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                k.at(static_cast<int>(b), 0, y, x) = static_cast<Scalar>(
                    basis[static_cast<std::size_t>(u) * n + y] *
                    basis[static_cast<std::size_t>(v) * n + x]);
    }
    return k;
}

// Undecimated projection of (N,1,H,W) spatial planes onto every DCT subband:
// stride-1 correlation with each bank kernel, zero-padded to keep H x W.
template <typename Scalar>
Tensor<Scalar> dct_filter_bank(const Tensor<Scalar>& spatial, const PreprocConfig& cfg = {}) {
    cfg.validate();
    const Shape sh = spatial.shape();
    if (sh.c != 1)
        throw std::invalid_argument("filter bank expects single-channel input, got " + sh.str());
    const int n = cfg.dct_size;
    const auto kernels = dct_bank_kernels<Scalar>(cfg);
    const int bands = kernels.shape().n;
    const auto [pad_before, pad_after] = bank_padding(n);
    (void)pad_after;
    Tensor<Scalar> out(sh.n, bands, sh.h, sh.w);
    for (int img = 0; img < sh.n; ++img) {
        const Scalar* src = spatial.plane(img, 0);
        for (int b = 0; b < bands; ++b) {
            const Scalar* kb = kernels.plane(b, 0);
            Scalar* dst = out.plane(img, b);
            for (int y = 0; y < sh.h; ++y)
                for (int x = 0; x < sh.w; ++x) {
                    Scalar rows[8];
                    for (int dy = 0; dy < n; ++dy) {
                        const int iy = y - pad_before + dy;
                        if (iy < 0 || iy >= sh.h) {
                            rows[dy] = 0;
                            continue;
                        }
                        Scalar taps[8];
                        for (int dx = 0; dx < n; ++dx) {
                            const int ix = x - pad_before + dx;
                            taps[dx] = (ix < 0 || ix >= sh.w)
                                           ? Scalar(0)
                                           : src[iy * sh.w + ix] * kb[dy * n + dx];
                        }
                        rows[dy] = frontend_detail::mirror_sum(taps, n);
                    }
                    dst[y * sh.w + x] = frontend_detail::mirror_sum(rows, n);
                }
        }
    }
    return out;
}

// Elementwise min(|x|, threshold). The threshold is inclusive; there is no
// quantization step afterwards.
template <typename Scalar>
Tensor<Scalar> abs_truncate(const Tensor<Scalar>& bands, double threshold = 8.0) {
    if (!(threshold > 0)) throw std::invalid_argument("threshold must be positive");
    Tensor<Scalar> out(bands.shape());
    const Scalar t = static_cast<Scalar>(threshold);
    for (std::size_t i = 0; i < bands.size(); ++i) {
        const Scalar a = bands[i] < 0 ? -bands[i] : bands[i];
        out[i] = a < t ? a : t;
    }
    return out;
}

// Full front end: coefficients -> real-valued plane -> subbands -> truncated
// magnitudes. This is the tensor the network consumes.
template <typename Scalar = double>
Tensor<Scalar> preprocess(const JpegPlane& plane, const PreprocConfig& cfg = {}) {
    cfg.validate();
    auto spatial = decompress_no_round<Scalar>(plane);
    auto bands = dct_filter_bank(spatial, cfg);
    return abs_truncate(bands, cfg.truncation_threshold);
}

}  // namespace stegnet
