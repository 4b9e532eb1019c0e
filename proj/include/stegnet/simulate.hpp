#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stegnet/jpeg.hpp"
#include "stegnet/manifest.hpp"
#include "stegnet/tensor.hpp"

namespace stegnet {

// Stand-in embedding: perturbs a fraction of the nonzero AC coefficients by
// one step each. Deliberately NOT a real embedding algorithm; it exists so
// the detector has something learnable to detect. The nominal payload rate is
// carried as metadata only.
struct SimConfig {
    double change_rate = 0.0;
    double payload_bpnzac = 0.0;
    std::uint64_t rng_seed = 1;

    void validate() const {
        if (!(change_rate >= 0 && change_rate <= 1))
            throw std::invalid_argument("change_rate must be in [0, 1]");
        if (payload_bpnzac < 0) throw std::invalid_argument("payload rate must be nonnegative");
    }
};

// Picks floor(change_rate * nnzAC) distinct nonzero AC coefficients uniformly
// at random and adds +-1 with uniform sign. DC and zero coefficients are never
// touched, so dimensions, qtable, DC, and the zero set are all preserved and
// the L1 coefficient distance equals the selection count exactly.
inline JpegPlane simulate_stego(const JpegPlane& plane, const SimConfig& cfg) {
    cfg.validate();
    plane.validate();
    JpegPlane out = plane;
    std::vector<std::size_t> nonzero_ac;
    for (std::size_t i = 0; i < out.coeffs.size(); ++i) {
        if (i % 64 == 0) continue;  // DC slot of its block
        if (out.coeffs[i] != 0) nonzero_ac.push_back(i);
    }
    const auto changes = static_cast<std::size_t>(
        std::floor(cfg.change_rate * static_cast<double>(nonzero_ac.size())));
    std::mt19937_64 rng(cfg.rng_seed);
    std::shuffle(nonzero_ac.begin(), nonzero_ac.end(), rng);
    std::uniform_int_distribution<int> coin(0, 1);
    for (std::size_t k = 0; k < changes; ++k) {
        const std::size_t i = nonzero_ac[k];
        int delta = coin(rng) ? 1 : -1;
        const int c = out.coeffs[i];
        // at the int16 rim the drawn direction would overflow; step inward
        if (c + delta > 32767 || c + delta < -32768) delta = -delta;
        out.coeffs[i] = static_cast<std::int16_t>(c + delta);
    }
    return out;
}

struct CorpusConfig {
    int n_pairs = 8;
    int image_size = 64;  // square, divisible by 16
    int quality = 75;
    SimConfig sim;
    std::string split = "train";

    void validate() const {
        if (n_pairs <= 0) throw std::invalid_argument("n_pairs must be positive");
        if (image_size < 16 || image_size % 16 != 0)
            throw std::invalid_argument("image_size must be a positive multiple of 16");
        sim.validate();
    }
};

namespace sim_detail {

// Smoothed uniform noise scaled to [0,255]: a separable 3-tap (1,2,1)/4 pass
// over an i.i.d. field, replicating edges. The low-pass step concentrates
// energy at low frequencies so quantization leaves nonzero AC coefficients at
// realistic densities instead of wiping the plane flat.
template <class Rng>
Tensor<double> smoothed_texture(int side, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor<double> noise(1, 1, side, side), tmp(1, 1, side, side), out(1, 1, side, side);
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = unit(rng);
    auto clampi = [side](int v) { return std::min(side - 1, std::max(0, v)); };
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            tmp.at(0, 0, y, x) = 0.25 * noise.at(0, 0, y, clampi(x - 1)) +
                                 0.5 * noise.at(0, 0, y, x) +
                                 0.25 * noise.at(0, 0, y, clampi(x + 1));
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            out.at(0, 0, y, x) = 255.0 * (0.25 * tmp.at(0, 0, clampi(y - 1), x) +
                                          0.5 * tmp.at(0, 0, y, x) +
                                          0.25 * tmp.at(0, 0, clampi(y + 1), x));
    return out;
}

inline std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace sim_detail

// Generates cover/stego pairs on disk plus the manifest describing them.
// Covers are smoothed textures pushed through the quantization round-trip;
// stegos come from the simulator. Everything derives from cfg.sim.rng_seed,
// so the same configuration reproduces the same bytes.
inline DatasetManifest make_synthetic_corpus(const std::string& out_dir, const CorpusConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    const auto qtable = standard_luminance_qtable(cfg.quality);
    std::mt19937_64 master(cfg.sim.rng_seed);

    DatasetManifest m;
    m.quality_factor = cfg.quality;
    m.embedding_rate = cfg.sim.payload_bpnzac > 0 ? cfg.sim.payload_bpnzac : cfg.sim.change_rate;
    m.split = cfg.split;
    m.base_dir = out_dir;
    for (int i = 0; i < cfg.n_pairs; ++i) {
        const std::uint64_t cover_seed = master();
        const std::uint64_t embed_seed = master();
        std::mt19937_64 rng(cover_seed);
        const Tensor<double> spatial = sim_detail::smoothed_texture(cfg.image_size, rng);
        const JpegPlane cover = quantize_plane(spatial, qtable, cfg.quality);
        SimConfig sim = cfg.sim;
        sim.rng_seed = embed_seed;
        const JpegPlane stego = simulate_stego(cover, sim);

        const std::string tag = sim_detail::zero_pad(i, 3);
        ManifestRecord r;
        r.pair_id = "p" + tag;
        r.cover_path = "c" + tag + ".jcf";
        r.stego_path = "s" + tag + ".jcf";
        write_jcf(out_dir + "/" + r.cover_path, cover);
        write_jcf(out_dir + "/" + r.stego_path, stego);
        m.records.push_back(std::move(r));
    }
    write_manifest(out_dir + "/manifest.tsv", m);
    return m;
}

}  // namespace stegnet
