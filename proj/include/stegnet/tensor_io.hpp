#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "stegnet/io.hpp"
#include "stegnet/tensor.hpp"

namespace stegnet {

// On-disk tensor container: magic "TNS1", scalar width in bytes (u32), shape
// as four u64 values, then the raw little-endian elements. Used to cache
// decompressed spatial planes so downstream tools skip the coefficient step.

template <typename Scalar>
void write_tensor(const std::string& path, const Tensor<Scalar>& t) {
    std::ofstream os = open_out(path);
    write_magic(os, "TNS1");
    write_u32(os, sizeof(Scalar));
    const Shape s = t.shape();
    write_u64(os, static_cast<std::uint64_t>(s.n));
    write_u64(os, static_cast<std::uint64_t>(s.c));
    write_u64(os, static_cast<std::uint64_t>(s.h));
    write_u64(os, static_cast<std::uint64_t>(s.w));
    for (std::size_t i = 0; i < t.size(); ++i) {
        if constexpr (sizeof(Scalar) == 4)
            write_f32(os, static_cast<float>(t[i]));
        else
            write_f64(os, static_cast<double>(t[i]));
    }
    if (!os) throw std::runtime_error("tensor write failed: " + path);
}

template <typename Scalar>
Tensor<Scalar> read_tensor(const std::string& path) {
    std::ifstream is = open_in(path);
    expect_magic(is, "TNS1", "tensor");
    const std::uint32_t tag = read_u32(is);
    if (tag != sizeof(Scalar))
        throw std::runtime_error(path + ": stores " + std::to_string(tag) +
                                 "-byte scalars, requested " + std::to_string(sizeof(Scalar)));
    std::uint64_t dims[4];
    for (auto& d : dims) {
        d = read_u64(is);
        if (d == 0 || d > (1u << 24)) throw std::runtime_error(path + ": implausible dimension");
    }
    Tensor<Scalar> t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                     static_cast<int>(dims[2]), static_cast<int>(dims[3]));
    for (std::size_t i = 0; i < t.size(); ++i) {
        if constexpr (sizeof(Scalar) == 4)
            t[i] = static_cast<Scalar>(read_f32(is));
        else
            t[i] = static_cast<Scalar>(read_f64(is));
    }
    return t;
}

}  // namespace stegnet
