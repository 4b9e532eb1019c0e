#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "stegnet/augment.hpp"
#include "stegnet/checkpoint.hpp"
#include "stegnet/frontend.hpp"
#include "stegnet/jpeg.hpp"
#include "stegnet/layers.hpp"
#include "stegnet/manifest.hpp"
#include "stegnet/network.hpp"
#include "stegnet/optim.hpp"

namespace stegnet {

struct TrainConfig {
    double base_lr = 0.001;
    double lr_decay_factor = 0.9;
    int lr_decay_every = 5000;
    double momentum = 0.9;
    int batch_pairs = 16;  // batch size is twice this, cover and stego of each pair
    int checkpoint_every = 5000;
    int max_iters = 90000;
    double weight_decay = 5e-4;  // applied to classifier weights only
    std::uint64_t rng_seed = 1;

    void validate() const {
        if (!(base_lr > 0)) throw std::invalid_argument("base_lr must be positive");
        if (!(lr_decay_factor > 0 && lr_decay_factor <= 1))
            throw std::invalid_argument("lr_decay_factor must be in (0, 1]");
        if (lr_decay_every <= 0) throw std::invalid_argument("lr_decay_every must be positive");
        if (!(momentum >= 0 && momentum < 1))
            throw std::invalid_argument("momentum must be in [0, 1)");
        if (batch_pairs <= 0) throw std::invalid_argument("batch_pairs must be positive");
        if (checkpoint_every <= 0) throw std::invalid_argument("checkpoint_every must be positive");
        if (max_iters < 0) throw std::invalid_argument("max_iters must be nonnegative");
        if (weight_decay < 0) throw std::invalid_argument("weight_decay must be nonnegative");
    }
};

namespace trainer_detail {

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace trainer_detail

// Canonical key=value form; also the byte stream the config hash is taken
// over, so field order here is load-bearing.
inline std::string write_train_config_text(const TrainConfig& cfg) {
    using trainer_detail::fmt_double;
    std::ostringstream os;
    os << "base_lr=" << fmt_double(cfg.base_lr) << "\n"
       << "lr_decay_factor=" << fmt_double(cfg.lr_decay_factor) << "\n"
       << "lr_decay_every=" << cfg.lr_decay_every << "\n"
       << "momentum=" << fmt_double(cfg.momentum) << "\n"
       << "batch_pairs=" << cfg.batch_pairs << "\n"
       << "checkpoint_every=" << cfg.checkpoint_every << "\n"
       << "max_iters=" << cfg.max_iters << "\n"
       << "weight_decay=" << fmt_double(cfg.weight_decay) << "\n"
       << "rng_seed=" << cfg.rng_seed << "\n";
    return os.str();
}

inline std::uint64_t train_config_hash(const TrainConfig& cfg) {
    return fnv1a_64(write_train_config_text(cfg));
}

inline TrainConfig parse_train_config_text(const std::string& text,
                                           const std::string& source = "config") {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error(source + " line " + std::to_string(lineno) + ": " + msg);
    };
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail("expected key=value, got \"" + t + "\"");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "base_lr")
                cfg.base_lr = std::stod(value);
            else if (key == "lr_decay_factor")
                cfg.lr_decay_factor = std::stod(value);
            else if (key == "lr_decay_every")
                cfg.lr_decay_every = std::stoi(value);
            else if (key == "momentum")
                cfg.momentum = std::stod(value);
            else if (key == "batch_pairs")
                cfg.batch_pairs = std::stoi(value);
            else if (key == "checkpoint_every")
                cfg.checkpoint_every = std::stoi(value);
            else if (key == "max_iters")
                cfg.max_iters = std::stoi(value);
            else if (key == "weight_decay")
                cfg.weight_decay = std::stod(value);
            else if (key == "rng_seed")
                cfg.rng_seed = std::stoull(value);
            else
                fail("unknown key \"" + key + "\"");
        } catch (const std::invalid_argument&) {
            fail("bad value \"" + value + "\" for " + key);
        } catch (const std::out_of_range&) {
            fail("value \"" + value + "\" for " + key + " out of range");
        }
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig read_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_train_config_text(buf.str(), path);
}

// Step-decayed learning rate: base_lr * factor^(iter / every), with integer
// division. iter counts completed iterations, so steps 0..4999 share the base
// rate under the defaults and the first drop lands at 5000.
inline double lr_at(const TrainConfig& cfg, long long iter) {
    if (iter < 0) throw std::invalid_argument("iteration must be nonnegative");
    const long long drops = iter / cfg.lr_decay_every;
    return cfg.base_lr * std::pow(cfg.lr_decay_factor, static_cast<double>(drops));
}

// Snapshots land on exact multiples of checkpoint_every, nothing else. A
// max_iters that is not itself a multiple ends without a final snapshot; pick
// a divisible horizon if the last state matters.
inline bool is_checkpoint_iteration(const TrainConfig& cfg, std::uint64_t iter) {
    return iter % static_cast<std::uint64_t>(cfg.checkpoint_every) == 0;
}

inline std::vector<std::uint64_t> checkpoint_iterations(const TrainConfig& cfg) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t iter = 1; iter <= static_cast<std::uint64_t>(cfg.max_iters); ++iter)
        if (is_checkpoint_iteration(cfg, iter)) out.push_back(iter);
    return out;
}

// Epoch sampler over pair indices, living inside TrainState so checkpoints
// capture it. A fresh epoch reshuffles; a batch larger than the pair count
// wraps around and repeats pairs (desk-scale datasets hit this).
inline void reset_sampler(TrainState& state, std::size_t n_pairs) {
    if (n_pairs == 0) throw std::invalid_argument("sampler needs at least one pair");
    state.pair_order.resize(n_pairs);
    std::iota(state.pair_order.begin(), state.pair_order.end(), std::uint64_t(0));
    state.cursor = n_pairs;  // force a shuffle before the first draw
}

inline std::vector<std::size_t> next_pair_indices(TrainState& state, std::size_t count) {
    if (state.pair_order.empty()) throw std::logic_error("sampler not initialized");
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        if (state.cursor >= state.pair_order.size()) {
            std::shuffle(state.pair_order.begin(), state.pair_order.end(), state.rng);
            state.cursor = 0;
        }
        out.push_back(static_cast<std::size_t>(state.pair_order[state.cursor++]));
    }
    return out;
}

// All spatial planes of a manifest, decompressed once up front. Batches then
// only pay for augmentation and the filter bank.
template <typename Scalar>
struct PairDataset {
    std::vector<Tensor<Scalar>> covers;  // (1,1,H,W) each
    std::vector<Tensor<Scalar>> stegos;
    int height = 0;
    int width = 0;
    std::size_t size() const { return covers.size(); }
};

template <typename Scalar = double>
PairDataset<Scalar> load_pairs(const DatasetManifest& m) {
    if (m.records.empty()) throw std::runtime_error("manifest has no records");
    PairDataset<Scalar> ds;
    for (const auto& r : m.records) {
        const JpegPlane cover = read_jcf(m.resolve(r.cover_path));
        const JpegPlane stego = read_jcf(m.resolve(r.stego_path));
        if (cover.width != stego.width || cover.height != stego.height)
            throw std::runtime_error("pair " + r.pair_id + ": cover and stego sizes differ");
        if (ds.covers.empty()) {
            ds.height = cover.height;
            ds.width = cover.width;
        } else if (cover.height != ds.height || cover.width != ds.width) {
            throw std::runtime_error("pair " + r.pair_id + ": size differs from rest of set");
        }
        ds.covers.push_back(decompress_no_round<Scalar>(cover));
        ds.stegos.push_back(decompress_no_round<Scalar>(stego));
    }
    return ds;
}

template <typename Scalar>
struct Batch {
    Tensor<Scalar> input;     // (2P, bands, H, W)
    std::vector<int> labels;  // cover 0 at even slots, stego 1 at odd
};

// Builds a network batch from selected pairs: optional synchronized
// augmentation of both spatial planes, then the fixed filter bank and
// magnitude truncation. Slot 2i holds pair i's cover, slot 2i+1 its stego.
template <typename Scalar>
Batch<Scalar> assemble_batch(const PairDataset<Scalar>& ds,
                             const std::vector<std::size_t>& pair_idx, const PreprocConfig& pp,
                             std::mt19937_64* aug_rng) {
    if (pair_idx.empty()) throw std::invalid_argument("empty batch");
    if (aug_rng && ds.height != ds.width)
        throw std::invalid_argument("augmentation rotates planes; images must be square");
    const int pairs = static_cast<int>(pair_idx.size());
    Tensor<Scalar> spatial(2 * pairs, 1, ds.height, ds.width);
    Batch<Scalar> batch;
    batch.labels.resize(2 * static_cast<std::size_t>(pairs));
    for (int i = 0; i < pairs; ++i) {
        const std::size_t pi = pair_idx[static_cast<std::size_t>(i)];
        if (pi >= ds.size()) throw std::out_of_range("pair index out of range");
        Tensor<Scalar> cover = ds.covers[pi];
        Tensor<Scalar> stego = ds.stegos[pi];
        if (aug_rng) {
            const Augmentation a = draw_augmentation(*aug_rng);
            cover = apply_augmentation(cover, a);
            stego = apply_augmentation(stego, a);
        }
        std::copy(cover.data(), cover.data() + cover.size(), spatial.plane(2 * i, 0));
        std::copy(stego.data(), stego.data() + stego.size(), spatial.plane(2 * i + 1, 0));
        batch.labels[static_cast<std::size_t>(2 * i)] = 0;
        batch.labels[static_cast<std::size_t>(2 * i + 1)] = 1;
    }
    batch.input = abs_truncate(dct_filter_bank(spatial, pp), pp.truncation_threshold);
    return batch;
}

// One SGD step: forward, softmax cross entropy, backward, momentum update.
// Throws if the loss goes non-finite rather than continuing a dead run.
template <typename Scalar>
Scalar train_step(Network<Scalar>& net, const Batch<Scalar>& batch, double lr,
                  const TrainConfig& cfg) {
    net.set_mode(Mode::Train);
    net.zero_grad();
    const Tensor<Scalar> logits = net.forward(batch.input);
    const SoftmaxLoss<Scalar> sm = softmax_cross_entropy(logits, batch.labels);
    if (!std::isfinite(static_cast<double>(sm.loss)))
        throw std::runtime_error("training diverged: non-finite loss");
    net.backward(sm.grad_logits);
    const auto params = net.parameters();
    sgd_momentum_step(params, static_cast<Scalar>(lr), static_cast<Scalar>(cfg.momentum),
                      static_cast<Scalar>(cfg.weight_decay));
    return sm.loss;
}

// Fraction of images misclassified, evaluation mode, no augmentation.
// Logit ties resolve to cover.
template <typename Scalar>
double validation_error(Network<Scalar>& net, const PairDataset<Scalar>& ds,
                        const PreprocConfig& pp) {
    const Mode prev = net.mode();
    net.set_mode(Mode::Eval);
    std::size_t wrong = 0, total = 0;
    const std::size_t chunk = 16;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t stop = std::min(ds.size(), start + chunk);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch<Scalar> b = assemble_batch(ds, idx, pp, nullptr);
        const Tensor<Scalar> logits = net.forward(b.input);
        for (int i = 0; i < logits.shape().n; ++i) {
            const int pred = logits.at(i, 1, 0, 0) > logits.at(i, 0, 0, 0) ? 1 : 0;
            wrong += pred != b.labels[static_cast<std::size_t>(i)];
            ++total;
        }
    }
    net.set_mode(prev);
    return static_cast<double>(wrong) / static_cast<double>(total);
}

struct TrainOptions {
    std::string out_dir = ".";
    std::string resume_from;   // checkpoint path; continues that run in place
    bool init_network = true;  // false when the caller preloaded weights
    PreprocConfig preproc;
    std::ostream* log = nullptr;
};

struct TrainResult {
    std::vector<std::string> checkpoint_paths;
    std::string metrics_path;
    double final_loss = 0;
    std::uint64_t iterations = 0;
};

// The full protocol: epoch-shuffled pair batches, synchronized augmentation,
// step-decayed SGD with momentum, periodic checkpoints with optional
// validation. A run resumed from a checkpoint consumes the random stream from
// exactly where the original left off, so it reproduces the uninterrupted run
// bit for bit. On divergence or a failed checkpoint write the exception
// propagates; completed checkpoint files are never touched after rename.
template <typename Scalar = double>
TrainResult train_loop(Network<Scalar>& net, const PairDataset<Scalar>& train_set,
                       const std::type_identity_t<PairDataset<Scalar>>* val_set,
                       const TrainConfig& cfg, const TrainOptions& opts = {}) {
    cfg.validate();
    std::filesystem::create_directories(opts.out_dir);
    const std::uint64_t cfg_hash = train_config_hash(cfg);

    TrainState state;
    bool fresh = true;
    if (!opts.resume_from.empty()) {
        const std::uint64_t stored = load_checkpoint(opts.resume_from, net, state);
        if (stored != cfg_hash)
            throw std::runtime_error(opts.resume_from +
                                     ": checkpoint was written under a different training "
                                     "configuration");
        if (state.pair_order.size() != train_set.size())
            throw std::runtime_error(opts.resume_from + ": pair count changed since checkpoint");
        fresh = false;
    } else {
        if (opts.init_network) net.init_params(cfg.rng_seed);
        // Decouple the training stream from the init stream; any fixed offset
        // works, it just must never change.
        state.rng.seed(cfg.rng_seed ^ 0x9e3779b97f4a7c15ull);
        reset_sampler(state, train_set.size());
    }

    if (static_cast<std::size_t>(cfg.batch_pairs) > train_set.size() && opts.log)
        *opts.log << "note: " << train_set.size() << " pairs < batch of " << cfg.batch_pairs
                  << "; pairs repeat within a batch\n";

    TrainResult result;
    result.metrics_path = (std::filesystem::path(opts.out_dir) / "metrics.csv").string();
    std::ofstream metrics(result.metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw std::runtime_error("cannot open " + result.metrics_path);
    metrics << std::setprecision(17);
    if (fresh) metrics << "iter,lr,train_loss,val_error\n";

    for (std::uint64_t iter = state.iteration + 1;
         iter <= static_cast<std::uint64_t>(cfg.max_iters); ++iter) {
        const double lr = lr_at(cfg, static_cast<long long>(iter) - 1);
        const auto idx = next_pair_indices(state, static_cast<std::size_t>(cfg.batch_pairs));
        const Batch<Scalar> batch = assemble_batch(train_set, idx, opts.preproc, &state.rng);
        const double loss = static_cast<double>(train_step(net, batch, lr, cfg));
        state.iteration = iter;
        result.final_loss = loss;

        metrics << iter << ',' << lr << ',' << loss << ',';
        if (is_checkpoint_iteration(cfg, iter)) {
            if (val_set) {
                const double verr = validation_error(net, *val_set, opts.preproc);
                metrics << verr;
                if (opts.log)
                    *opts.log << "iter " << iter << " loss " << loss << " val_error " << verr
                              << "\n";
            } else if (opts.log) {
                *opts.log << "iter " << iter << " loss " << loss << "\n";
            }
            const std::string path =
                (std::filesystem::path(opts.out_dir) / ("ck" + std::to_string(iter) + ".sck"))
                    .string();
            save_checkpoint(path, net, state, cfg_hash);
            result.checkpoint_paths.push_back(path);
        }
        metrics << '\n';
    }
    metrics.flush();
    if (!metrics) throw std::runtime_error("metrics write failed: " + result.metrics_path);
    result.iterations = state.iteration;
    return result;
}

}  // namespace stegnet
