#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stegnet/arch.hpp"
#include "stegnet/conv.hpp"
#include "stegnet/layers.hpp"
#include "stegnet/tensor.hpp"

namespace stegnet {

// A spec instantiated with parameter storage. Forward walks the layer chain
// node by node, mixing in shortcut branches as their target nodes complete;
// backward retraces it from stored node activations.
template <typename Scalar>
class Network {
  public:
    explicit Network(const ArchSpec& spec) : spec_(spec) {
        validate_spec(spec_);
        const auto states = arch_detail::trace_states(spec_);
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const LayerDef& l = spec_.layers[i];
            const int in = states[i].channels;
            switch (l.kind) {
                case LayerKind::Conv: {
                    ConvLayer c{Parameter<Scalar>(Shape{l.out_channels, in, l.kernel, l.kernel},
                                                  "conv" + std::to_string(convs_.size())),
                                l.stride, l.pad};
                    convs_.push_back(std::move(c));
                    break;
                }
                case LayerKind::BatchNorm:
                    bns_.emplace_back(in, "bn" + std::to_string(bns_.size()));
                    break;
                case LayerKind::Fc: {
                    FcLayer f{Parameter<Scalar>(Shape{l.out_channels, in, 1, 1}, "fc_weight"),
                              Parameter<Scalar>(Shape{l.out_channels, 1, 1, 1}, "fc_bias")};
                    f.weight.weight_decay_enabled = true;
                    f.bias.weight_decay_enabled = true;
                    fcs_.push_back(std::move(f));
                    break;
                }
                default:
                    break;
            }
        }
        projection_index_.assign(spec_.shortcuts.size(), -1);
        for (std::size_t s = 0; s < spec_.shortcuts.size(); ++s) {
            const ShortcutDef& e = spec_.shortcuts[s];
            if (e.kind != ShortcutKind::Projection) continue;
            projection_index_[s] = static_cast<int>(projections_.size());
            const int cin = states[static_cast<std::size_t>(e.from)].channels;
            const int cout = states[static_cast<std::size_t>(e.to)].channels;
            const std::string tag = "proj" + std::to_string(projections_.size());
            projections_.push_back(
                Projection{Parameter<Scalar>(Shape{cout, cin, 1, 1}, tag + "_weight"),
                           BatchNormState<Scalar>(cout, tag + "_bn")});
        }
        down_factor_ = 1;
        for (const auto& l : spec_.layers)
            if (l.kind != LayerKind::Fc && l.stride == 2) down_factor_ *= 2;
    }

    const ArchSpec& spec() const { return spec_; }

    void set_mode(Mode m) {
        mode_ = m;
        for (auto& bn : bns_) bn.mode = m;
        for (auto& p : projections_) p.bn.mode = m;
    }
    Mode mode() const { return mode_; }

    // Parameters in a fixed order: chain layers as encountered (conv weight;
    // bn gamma, beta; fc weight, bias), then projection branches.
    std::vector<Parameter<Scalar>*> parameters() {
        std::vector<Parameter<Scalar>*> ps;
        std::size_t ci = 0, bi = 0, fi = 0;
        for (const auto& l : spec_.layers) {
            switch (l.kind) {
                case LayerKind::Conv: ps.push_back(&convs_[ci++].weight); break;
                case LayerKind::BatchNorm:
                    ps.push_back(&bns_[bi].gamma);
                    ps.push_back(&bns_[bi].beta);
                    ++bi;
                    break;
                case LayerKind::Fc:
                    ps.push_back(&fcs_[fi].weight);
                    ps.push_back(&fcs_[fi].bias);
                    ++fi;
                    break;
                default: break;
            }
        }
        for (auto& p : projections_) {
            ps.push_back(&p.weight);
            ps.push_back(&p.bn.gamma);
            ps.push_back(&p.bn.beta);
        }
        return ps;
    }

    std::vector<BatchNormState<Scalar>*> bn_states() {
        std::vector<BatchNormState<Scalar>*> bs;
        for (auto& bn : bns_) bs.push_back(&bn);
        for (auto& p : projections_) bs.push_back(&p.bn);
        return bs;
    }

    long long parameter_elements() {
        long long n = 0;
        for (auto* p : parameters()) n += static_cast<long long>(p->value.size());
        return n;
    }

    // Gaussian conv kernels, unit/zero batch norm, Xavier-uniform classifier,
    // zeroed optimizer state. Draw order is fixed (chain convs, projection
    // convs, classifier) so a seed pins every weight.
    void init_params(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& c : convs_) fill_normal(c.weight.value, rng, 0.0, 0.01);
        for (auto& p : projections_) fill_normal(p.weight.value, rng, 0.0, 0.01);
        for (auto& f : fcs_) {
            const Shape ws = f.weight.value.shape();
            const double bound = std::sqrt(6.0 / (ws.c + ws.n));
            fill_uniform(f.weight.value, rng, -bound, bound);
            f.bias.value.zero();
        }
        for (auto* bn : bn_states()) bn->reset();
        for (auto* p : parameters()) {
            p->grad.zero();
            p->momentum.zero();
        }
    }

    void check_input(const Shape& s) const {
        if (s.c != spec_.input_channels)
            throw std::invalid_argument("network expects " +
                                        std::to_string(spec_.input_channels) +
                                        " input channels, got " + s.str());
        for (int hw : {s.h, s.w}) {
            int x = hw;
            for (int factor = down_factor_; factor > 1; factor /= 2) {
                if (x > 1 && x % 2 != 0)
                    throw std::invalid_argument(
                        "input spatial size " + std::to_string(hw) +
                        " must halve cleanly through the downsampling stages (divisible by " +
                        std::to_string(down_factor_) + ", or collapsing to 1)");
                x = (x + 1) / 2;
            }
        }
    }

    // Returns the logits. In train mode every node activation is retained for
    // backward; eval mode keeps only what pending shortcuts still need.
    Tensor<Scalar> forward(const Tensor<Scalar>& input) {
        check_input(input.shape());
        const bool keep = mode_ == Mode::Train;
        nodes_.clear();
        proj_conv_out_.assign(projections_.size(), Tensor<Scalar>());

        std::map<int, int> pending;  // tap node -> shortcuts yet to consume it
        std::map<int, Tensor<Scalar>> taps;
        if (!keep)
            for (const auto& e : spec_.shortcuts) ++pending[e.from];

        Tensor<Scalar> value = input;
        if (keep)
            nodes_.push_back(value);
        else if (pending.count(0))
            taps[0] = value;

        std::size_t ci = 0, bi = 0, fi = 0;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const LayerDef& l = spec_.layers[i];
            switch (l.kind) {
                case LayerKind::Conv: {
                    auto& c = convs_[ci++];
                    value = conv2d_forward(value, c.weight.value, c.stride, c.pad);
                    break;
                }
                case LayerKind::BatchNorm: value = batchnorm_forward(value, bns_[bi++]); break;
                case LayerKind::Relu: value = relu(value); break;
                case LayerKind::AvgPool: value = avg_pool(value, l.kernel, l.stride, l.pad); break;
                case LayerKind::MaxPool: value = max_pool(value, l.kernel, l.stride, l.pad); break;
                case LayerKind::GlobalPool: value = global_avg_pool(value); break;
                case LayerKind::Fc: {
                    auto& f = fcs_[fi++];
                    value = fully_connected(value, f.weight.value, f.bias.value);
                    break;
                }
            }
            const int node = static_cast<int>(i) + 1;
            for (std::size_t s = 0; s < spec_.shortcuts.size(); ++s) {
                const ShortcutDef& e = spec_.shortcuts[s];
                if (e.to != node) continue;
                const Tensor<Scalar>& source =
                    keep ? nodes_[static_cast<std::size_t>(e.from)] : taps.at(e.from);
                if (e.kind == ShortcutKind::Identity) {
                    value = add(value, source);
                } else {
                    auto& p = projections_[static_cast<std::size_t>(projection_index_[s])];
                    auto conv_out = conv2d_forward(source, p.weight.value, 2, 0);
                    auto branch = batchnorm_forward(conv_out, p.bn);
                    if (keep)
                        proj_conv_out_[static_cast<std::size_t>(projection_index_[s])] =
                            std::move(conv_out);
                    value = add(value, branch);
                }
                if (!keep && --pending[e.from] == 0) taps.erase(e.from);
            }
            if (keep)
                nodes_.push_back(value);
            else if (pending.count(node) && pending[node] > 0)
                taps[node] = value;
        }
        return value;
    }

    // Accumulates parameter gradients from the stored forward pass. Input
    // gradients are propagated but discarded (the front end is fixed).
    void backward(const Tensor<Scalar>& grad_logits) {
        if (mode_ != Mode::Train) throw std::logic_error("backward requires train mode");
        if (nodes_.size() != spec_.layers.size() + 1)
            throw std::logic_error("backward requires a stored train-mode forward pass");
        if (!grad_logits.same_shape(nodes_.back()))
            throw std::invalid_argument("logits gradient shape mismatch");
        std::vector<Tensor<Scalar>> grads(nodes_.size());
        grads.back() = grad_logits;
        std::size_t ci = convs_.size(), bi = bns_.size(), fi = fcs_.size();
        for (int i = static_cast<int>(spec_.layers.size()) - 1; i >= 0; --i) {
            const LayerDef& l = spec_.layers[static_cast<std::size_t>(i)];
            const int node = i + 1;
            Tensor<Scalar>& g = grads[static_cast<std::size_t>(node)];
            // shortcut branches consume the same output gradient as the chain
            for (std::size_t s = 0; s < spec_.shortcuts.size(); ++s) {
                const ShortcutDef& e = spec_.shortcuts[s];
                if (e.to != node) continue;
                auto& src_grad = grads[static_cast<std::size_t>(e.from)];
                if (e.kind == ShortcutKind::Identity) {
                    accumulate(src_grad, g, nodes_[static_cast<std::size_t>(e.from)].shape());
                } else {
                    auto& p = projections_[static_cast<std::size_t>(projection_index_[s])];
                    const auto& conv_out =
                        proj_conv_out_[static_cast<std::size_t>(projection_index_[s])];
                    auto gb = batchnorm_backward(conv_out, p.bn, g);
                    auto [gi, gw] = conv2d_backward(nodes_[static_cast<std::size_t>(e.from)],
                                                    p.weight.value, gb, 2, 0);
                    add_into(p.weight.grad, gw);
                    accumulate(src_grad, gi, nodes_[static_cast<std::size_t>(e.from)].shape());
                }
            }
            const Tensor<Scalar>& input = nodes_[static_cast<std::size_t>(i)];
            Tensor<Scalar> gi;
            switch (l.kind) {
                case LayerKind::Conv: {
                    auto& c = convs_[--ci];
                    auto [gin, gw] = conv2d_backward(input, c.weight.value, g, c.stride, c.pad);
                    add_into(c.weight.grad, gw);
                    gi = std::move(gin);
                    break;
                }
                case LayerKind::BatchNorm: gi = batchnorm_backward(input, bns_[--bi], g); break;
                case LayerKind::Relu: gi = relu_backward(input, g); break;
                case LayerKind::AvgPool:
                    gi = avg_pool_backward(input, g, l.kernel, l.stride, l.pad);
                    break;
                case LayerKind::MaxPool:
                    gi = max_pool_backward(input, g, l.kernel, l.stride, l.pad);
                    break;
                case LayerKind::GlobalPool:
                    gi = global_avg_pool_backward(input.shape(), g);
                    break;
                case LayerKind::Fc: {
                    auto& f = fcs_[--fi];
                    auto [gin, gw, gb] = fully_connected_backward(input, f.weight.value, g);
                    add_into(f.weight.grad, gw);
                    add_into(f.bias.grad, gb);
                    gi = std::move(gin);
                    break;
                }
            }
            accumulate(grads[static_cast<std::size_t>(i)], gi, input.shape());
        }
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    // Node activations stored by the last train-mode forward; node 0 is the
    // input, node k the value after k layers.
    const std::vector<Tensor<Scalar>>& node_activations() const { return nodes_; }

  private:
    struct ConvLayer {
        Parameter<Scalar> weight;
        int stride;
        int pad;
    };
    struct FcLayer {
        Parameter<Scalar> weight;
        Parameter<Scalar> bias;
    };
    struct Projection {
        Parameter<Scalar> weight;
        BatchNormState<Scalar> bn;
    };

    static void accumulate(Tensor<Scalar>& dst, const Tensor<Scalar>& src, const Shape& shape) {
        if (dst.empty()) dst = Tensor<Scalar>(shape);
        add_into(dst, src);
    }

    static void add_into(Tensor<Scalar>& dst, const Tensor<Scalar>& src) {
        if (!dst.same_shape(src)) throw std::logic_error("gradient shape mismatch");
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    ArchSpec spec_;
    std::vector<ConvLayer> convs_;
    std::vector<BatchNormState<Scalar>> bns_;
    std::vector<FcLayer> fcs_;
    std::vector<Projection> projections_;
    std::vector<int> projection_index_;
    int down_factor_ = 1;
    Mode mode_ = Mode::Train;

    std::vector<Tensor<Scalar>> nodes_;
    std::vector<Tensor<Scalar>> proj_conv_out_;
};

}  // namespace stegnet
