#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "stegnet/io.hpp"
#include "stegnet/tensor.hpp"

namespace stegnet {

// Quantized DCT coefficients of one luminance plane, as handed over by a JPEG
// decoder after entropy decoding. Entropy coding itself is out of scope; the
// JCF1 container below carries exactly this struct.
struct JpegPlane {
    int width = 0;    // pixels, multiple of 8
    int height = 0;   // pixels, multiple of 8
    std::array<std::uint16_t, 64> qtable{};   // row-major, steps >= 1
    std::vector<std::int16_t> coeffs;         // 64 per block, blocks in raster order
    int quality_factor = 0;                   // metadata only, 0 = unknown

    int blocks_x() const { return width / 8; }
    int blocks_y() const { return height / 8; }
    int block_count() const { return blocks_x() * blocks_y(); }

    std::int16_t& coeff(int by, int bx, int u, int v) {
        return coeffs[static_cast<std::size_t>((by * blocks_x() + bx) * 64 + u * 8 + v)];
    }
    std::int16_t coeff(int by, int bx, int u, int v) const {
        return coeffs[static_cast<std::size_t>((by * blocks_x() + bx) * 64 + u * 8 + v)];
    }

    void validate() const {
        if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0)
            throw std::invalid_argument("plane dimensions must be positive multiples of 8");
        if (coeffs.size() != static_cast<std::size_t>(block_count()) * 64)
            throw std::invalid_argument("coefficient count does not match block grid");
        for (auto q : qtable)
            if (q < 1) throw std::invalid_argument("quantization steps must be >= 1");
    }
};

// Orthonormal n-point DCT-II matrix, row u = basis vector of frequency u.
inline std::vector<double> dct_matrix(int n) {
    std::vector<double> m(static_cast<std::size_t>(n) * n);
    const double pi = std::acos(-1.0);
    for (int u = 0; u < n; ++u) {
        const double s = std::sqrt((u == 0 ? 1.0 : 2.0) / n);
        for (int j = 0; j < n; ++j)
            m[static_cast<std::size_t>(u) * n + j] = s * std::cos(pi * u * (2 * j + 1) / (2 * n));
    }
    return m;
}

namespace jpeg_detail {

inline const std::vector<double>& dct8() {
    static const std::vector<double> m = dct_matrix(8);
    return m;
}

// S = A^T D A for one 8x8 block (inverse transform of orthonormal DCT).
inline void idct8x8(const double* d, double* s) {
    const auto& a = dct8();
    double t[64];
    for (int u = 0; u < 8; ++u)
        for (int j = 0; j < 8; ++j) {
            double acc = 0;
            for (int v = 0; v < 8; ++v) acc += d[u * 8 + v] * a[v * 8 + j];
            t[u * 8 + j] = acc;
        }
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            double acc = 0;
            for (int u = 0; u < 8; ++u) acc += a[u * 8 + i] * t[u * 8 + j];
            s[i * 8 + j] = acc;
        }
}

// D = A S A^T for one 8x8 block (forward orthonormal DCT).
inline void dct8x8(const double* s, double* d) {
    const auto& a = dct8();
    double t[64];
    for (int u = 0; u < 8; ++u)
        for (int j = 0; j < 8; ++j) {
            double acc = 0;
            for (int i = 0; i < 8; ++i) acc += a[u * 8 + i] * s[i * 8 + j];
            t[u * 8 + j] = acc;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int j = 0; j < 8; ++j) acc += t[u * 8 + j] * a[v * 8 + j];
            d[u * 8 + v] = acc;
        }
}

}  // namespace jpeg_detail

// Dequantize, inverse-transform and level-shift, keeping real-valued pixels.
// The usual final rounding/clamping to [0,255] is deliberately skipped.
template <typename Scalar = double>
Tensor<Scalar> decompress_no_round(const JpegPlane& plane) {
    plane.validate();
    Tensor<Scalar> out(1, 1, plane.height, plane.width);
    double d[64], s[64];
    for (int by = 0; by < plane.blocks_y(); ++by)
        for (int bx = 0; bx < plane.blocks_x(); ++bx) {
            for (int k = 0; k < 64; ++k)
                d[k] = static_cast<double>(plane.coeffs[(static_cast<std::size_t>(
                           by * plane.blocks_x() + bx)) * 64 + k]) *
                       plane.qtable[static_cast<std::size_t>(k)];
            jpeg_detail::idct8x8(d, s);
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    out.at(0, 0, by * 8 + i, bx * 8 + j) = static_cast<Scalar>(s[i * 8 + j] + 128.0);
        }
    return out;
}

// Forward path: spatial plane -> quantized coefficients. Used by the corpus
// generator and by round-trip tests; a plane produced by decompress_no_round
// re-quantizes to the original coefficients exactly.
template <typename Scalar>
JpegPlane quantize_plane(const Tensor<Scalar>& spatial,
                         const std::array<std::uint16_t, 64>& qtable, int quality_factor = 0) {
    const Shape sh = spatial.shape();
    if (sh.n != 1 || sh.c != 1 || sh.h % 8 != 0 || sh.w % 8 != 0)
        throw std::invalid_argument("expected a (1,1,H,W) plane with H,W multiples of 8");
    JpegPlane plane;
    plane.width = sh.w;
    plane.height = sh.h;
    plane.qtable = qtable;
    plane.quality_factor = quality_factor;
    plane.coeffs.resize(static_cast<std::size_t>(plane.block_count()) * 64);
    double s[64], d[64];
    for (int by = 0; by < plane.blocks_y(); ++by)
        for (int bx = 0; bx < plane.blocks_x(); ++bx) {
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    s[i * 8 + j] =
                        static_cast<double>(spatial.at(0, 0, by * 8 + i, bx * 8 + j)) - 128.0;
            jpeg_detail::dct8x8(s, d);
            for (int k = 0; k < 64; ++k) {
                const double q = std::llround(d[k] / qtable[static_cast<std::size_t>(k)]);
                const double clamped = std::min(32767.0, std::max(-32768.0, q));
                plane.coeffs[(static_cast<std::size_t>(by * plane.blocks_x() + bx)) * 64 + k] =
                    static_cast<std::int16_t>(clamped);
            }
        }
    plane.validate();
    return plane;
}

// Annex K luminance table scaled by the usual IJG quality mapping.
inline std::array<std::uint16_t, 64> standard_luminance_qtable(int quality) {
    static const int base[64] = {
        16, 11, 10, 16, 24,  40,  51,  61,   //
        12, 12, 14, 19, 26,  58,  60,  55,   //
        14, 13, 16, 24, 40,  57,  69,  56,   //
        14, 17, 22, 29, 51,  87,  80,  62,   //
        18, 22, 37, 56, 68,  109, 103, 77,   //
        24, 35, 55, 64, 81,  104, 113, 92,   //
        49, 64, 78, 87, 103, 121, 120, 101,  //
        72, 92, 95, 98, 112, 100, 103, 99};
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("quality factor must be in [1,100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<std::uint16_t, 64> q{};
    for (int k = 0; k < 64; ++k) {
        int v = (base[k] * scale + 50) / 100;
        q[static_cast<std::size_t>(k)] = static_cast<std::uint16_t>(std::min(255, std::max(1, v)));
    }
    return q;
}

// JCF1 container: little-endian header {magic, width u32, height u32,
// qtable 64 x u16}, then row-major int16 coefficients per block in raster
// block order.
inline void write_jcf(const std::string& path, const JpegPlane& plane) {
    plane.validate();
    auto os = open_out(path);
    write_magic(os, "JCF1");
    write_u32(os, static_cast<std::uint32_t>(plane.width));
    write_u32(os, static_cast<std::uint32_t>(plane.height));
    for (auto q : plane.qtable) write_u16(os, q);
    for (auto c : plane.coeffs) write_i16(os, c);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline JpegPlane read_jcf(const std::string& path) {
    auto is = open_in(path);
    expect_magic(is, "JCF1", "coefficient container");
    JpegPlane plane;
    plane.width = static_cast<int>(read_u32(is));
    plane.height = static_cast<int>(read_u32(is));
    if (plane.width <= 0 || plane.height <= 0 || plane.width % 8 || plane.height % 8 ||
        plane.width > (1 << 20) || plane.height > (1 << 20))
        throw std::runtime_error("bad dimensions in " + path);
    for (auto& q : plane.qtable) q = read_u16(is);
    plane.coeffs.resize(static_cast<std::size_t>(plane.block_count()) * 64);
    for (auto& c : plane.coeffs) c = read_i16(is);
    plane.validate();
    return plane;
}

}  // namespace stegnet
