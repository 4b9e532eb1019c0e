#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stegnet/arch.hpp"
#include "stegnet/io.hpp"
#include "stegnet/network.hpp"

namespace stegnet {

// Mutable training state beyond the network itself: everything needed to
// continue a run as if it had never stopped. The RNG both shuffles the pair
// order and draws augmentations, so serializing it (plus the current epoch
// permutation and cursor) makes resumption bit-exact.
struct TrainState {
    std::uint64_t iteration = 0;
    std::mt19937_64 rng;
    std::vector<std::uint64_t> pair_order;
    std::uint64_t cursor = 0;
};

namespace ckpt_detail {

template <typename Scalar>
void write_raw(std::ostream& os, const Tensor<Scalar>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if constexpr (sizeof(Scalar) == 4)
            write_f32(os, static_cast<float>(t[i]));
        else
            write_f64(os, static_cast<double>(t[i]));
    }
}

template <typename Scalar>
void read_raw(std::istream& is, Tensor<Scalar>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if constexpr (sizeof(Scalar) == 4)
            t[i] = static_cast<Scalar>(read_f32(is));
        else
            t[i] = static_cast<Scalar>(read_f64(is));
    }
}

template <typename Scalar>
void read_header(std::istream& is, const Network<Scalar>& net, const std::string& what) {
    expect_magic(is, "SCK1", "checkpoint");
    const std::uint32_t version = read_u32(is);
    if (version != 1)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t hash = read_u64(is);
    const std::string text = read_string(is);
    if (hash != arch_hash(net.spec())) {
        ArchSpec stored = parse_arch_text(text);
        throw std::runtime_error(what + ": checkpoint architecture \"" + stored.name +
                                 "\" does not match network \"" + net.spec().name + "\"");
    }
    const std::uint32_t tag = read_u32(is);
    if (tag != sizeof(Scalar))
        throw std::runtime_error("checkpoint stores " + std::to_string(tag) +
                                 "-byte scalars, network uses " + std::to_string(sizeof(Scalar)));
}

}  // namespace ckpt_detail

// Enough of the header to reconstruct the owning network without loading the
// weights: the embedded architecture, the scalar width, and the iteration.
struct CheckpointInfo {
    ArchSpec arch;
    std::uint32_t scalar_bytes = 0;
    std::uint64_t iteration = 0;
};

inline CheckpointInfo checkpoint_info(const std::string& path) {
    std::ifstream is = open_in(path);
    expect_magic(is, "SCK1", "checkpoint");
    const std::uint32_t version = read_u32(is);
    if (version != 1)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t hash = read_u64(is);
    CheckpointInfo info;
    info.arch = parse_arch_text(read_string(is));
    if (hash != arch_hash(info.arch))
        throw std::runtime_error(path + ": embedded architecture hash mismatch");
    info.scalar_bytes = read_u32(is);
    info.iteration = read_u64(is);
    return info;
}

template <typename Scalar>
void save_checkpoint(const std::string& path, Network<Scalar>& net, const TrainState& state,
                     std::uint64_t config_hash) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os = open_out(tmp);
        write_magic(os, "SCK1");
        write_u32(os, 1);
        write_u64(os, arch_hash(net.spec()));
        write_string(os, write_arch_text(net.spec()));
        write_u32(os, sizeof(Scalar));
        write_u64(os, state.iteration);
        write_u64(os, config_hash);

        const auto params = net.parameters();
        write_u64(os, params.size());
        for (const auto* p : params) {
            write_u64(os, p->value.size());
            ckpt_detail::write_raw(os, p->value);
            ckpt_detail::write_raw(os, p->momentum);
        }
        const auto bns = net.bn_states();
        write_u64(os, bns.size());
        for (const auto* bn : bns) {
            write_u64(os, static_cast<std::uint64_t>(bn->channels()));
            ckpt_detail::write_raw(os, bn->running_mean);
            ckpt_detail::write_raw(os, bn->running_var);
        }

        std::ostringstream rs;
        rs << state.rng;
        write_string(os, rs.str());
        write_u64(os, state.pair_order.size());
        for (std::uint64_t v : state.pair_order) write_u64(os, v);
        write_u64(os, state.cursor);
        if (!os) throw std::runtime_error("checkpoint write failed: " + tmp);
    }
    // Publish atomically so an interrupted write can never shadow a good file.
    std::filesystem::rename(tmp, path);
}

// Restores network and training state for resumption. Returns the hash of the
// training configuration the checkpoint was written under; the caller rejects
// resumption under a different configuration.
template <typename Scalar>
std::uint64_t load_checkpoint(const std::string& path, Network<Scalar>& net, TrainState& state) {
    std::ifstream is = open_in(path);
    ckpt_detail::read_header(is, net, path);
    state.iteration = read_u64(is);
    const std::uint64_t config_hash = read_u64(is);

    const auto params = net.parameters();
    const std::uint64_t n_params = read_u64(is);
    if (n_params != params.size())
        throw std::runtime_error(path + ": parameter count mismatch");
    for (auto* p : params) {
        const std::uint64_t n = read_u64(is);
        if (n != p->value.size())
            throw std::runtime_error(path + ": size mismatch for " + p->name);
        ckpt_detail::read_raw(is, p->value);
        ckpt_detail::read_raw(is, p->momentum);
        p->grad.zero();
    }
    const auto bns = net.bn_states();
    const std::uint64_t n_bns = read_u64(is);
    if (n_bns != bns.size()) throw std::runtime_error(path + ": batch-norm count mismatch");
    for (auto* bn : bns) {
        const std::uint64_t ch = read_u64(is);
        if (ch != static_cast<std::uint64_t>(bn->channels()))
            throw std::runtime_error(path + ": batch-norm channel mismatch");
        ckpt_detail::read_raw(is, bn->running_mean);
        ckpt_detail::read_raw(is, bn->running_var);
    }

    std::istringstream rs(read_string(is));
    rs >> state.rng;
    if (!rs) throw std::runtime_error(path + ": bad RNG state");
    const std::uint64_t n_order = read_u64(is);
    state.pair_order.resize(n_order);
    for (auto& v : state.pair_order) v = read_u64(is);
    state.cursor = read_u64(is);
    return config_hash;
}

// Sets up fine-tuning: copies parameter values and batch-norm running stats
// from a checkpoint into a compatible network, discarding momentum and the
// iteration counter so the new run starts its schedule from scratch.
template <typename Scalar>
void finetune_init(Network<Scalar>& net, const std::string& path) {
    std::ifstream is = open_in(path);
    ckpt_detail::read_header(is, net, path);
    read_u64(is);  // iteration, discarded
    read_u64(is);  // config hash, irrelevant to the new schedule

    const auto params = net.parameters();
    const std::uint64_t n_params = read_u64(is);
    if (n_params != params.size())
        throw std::runtime_error(path + ": parameter count mismatch");
    Tensor<Scalar> discard;
    for (auto* p : params) {
        const std::uint64_t n = read_u64(is);
        if (n != p->value.size())
            throw std::runtime_error(path + ": size mismatch for " + p->name);
        ckpt_detail::read_raw(is, p->value);
        discard = Tensor<Scalar>(p->momentum.shape());
        ckpt_detail::read_raw(is, discard);
        p->momentum.zero();
        p->grad.zero();
    }
    const auto bns = net.bn_states();
    const std::uint64_t n_bns = read_u64(is);
    if (n_bns != bns.size()) throw std::runtime_error(path + ": batch-norm count mismatch");
    for (auto* bn : bns) {
        const std::uint64_t ch = read_u64(is);
        if (ch != static_cast<std::uint64_t>(bn->channels()))
            throw std::runtime_error(path + ": batch-norm channel mismatch");
        ckpt_detail::read_raw(is, bn->running_mean);
        ckpt_detail::read_raw(is, bn->running_var);
    }
}

}  // namespace stegnet
