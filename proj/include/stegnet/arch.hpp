#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stegnet {

enum class LayerKind { Conv, BatchNorm, Relu, AvgPool, MaxPool, GlobalPool, Fc };

struct LayerDef {
    LayerKind kind;
    int out_channels = 0;  // Conv, Fc
    int kernel = 0;        // Conv, pools
    int stride = 0;
    int pad = 0;
};

enum class ShortcutKind { Identity, Projection };

// Shortcut edge between graph nodes. Node k is the activation after k layers
// of the chain; node 0 is the preprocessed input. The edge adds its branch
// into node `to` after the chain computes it: identity passes node `from`
// through, projection applies a 1x1 stride-2 conv plus batch norm first.
struct ShortcutDef {
    int from = 0;
    int to = 0;
    ShortcutKind kind = ShortcutKind::Identity;
};

struct ArchSpec {
    std::string name;
    double width_mult = 1.0;
    int input_channels = 16;
    std::vector<LayerDef> layers;
    std::vector<ShortcutDef> shortcuts;
};

namespace arch_detail {

// Symbolic per-node shape: channel count plus how many times the spatial
// extent has been halved. Two nodes are addable iff these match.
struct NodeState {
    int channels = 0;
    int down = 0;
    bool pooled = false;  // after global pooling (spatial collapsed)
    bool operator==(const NodeState&) const = default;
};

inline std::vector<NodeState> trace_states(const ArchSpec& spec) {
    if (spec.input_channels < 1) throw std::invalid_argument("input_channels must be positive");
    std::vector<NodeState> states;
    states.reserve(spec.layers.size() + 1);
    NodeState s{spec.input_channels, 0, false};
    states.push_back(s);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDef& l = spec.layers[i];
        const std::string where = "layer " + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Conv:
                if (s.pooled) throw std::invalid_argument(where + ": conv after global pooling");
                if (l.out_channels < 1)
                    throw std::invalid_argument(where + ": conv needs positive channels");
                if (l.stride != 1 && l.stride != 2)
                    throw std::invalid_argument(where + ": conv stride must be 1 or 2");
                s.channels = l.out_channels;
                if (l.stride == 2) ++s.down;
                break;
            case LayerKind::BatchNorm:
            case LayerKind::Relu:
                break;
            case LayerKind::AvgPool:
            case LayerKind::MaxPool:
                if (s.pooled) throw std::invalid_argument(where + ": pool after global pooling");
                if (l.stride == 2) ++s.down;
                break;
            case LayerKind::GlobalPool:
                if (s.pooled) throw std::invalid_argument(where + ": repeated global pooling");
                s.pooled = true;
                break;
            case LayerKind::Fc:
                if (!s.pooled)
                    throw std::invalid_argument(where + ": fc requires globally pooled input");
                if (l.out_channels < 1)
                    throw std::invalid_argument(where + ": fc needs positive outputs");
                s.channels = l.out_channels;
                break;
        }
        states.push_back(s);
    }
    return states;
}

}  // namespace arch_detail

// Structural validation before any tensor is allocated. Throws on a miswired
// spec: shortcut shape mismatches, adds with more than two inputs, a missing
// classifier head.
inline void validate_spec(const ArchSpec& spec) {
    const auto states = arch_detail::trace_states(spec);
    if (spec.layers.empty() || spec.layers.back().kind != LayerKind::Fc)
        throw std::invalid_argument("architecture must end in a fully connected classifier");
    const int last = static_cast<int>(spec.layers.size());
    std::vector<char> has_shortcut(states.size(), 0);
    for (std::size_t i = 0; i < spec.shortcuts.size(); ++i) {
        const ShortcutDef& e = spec.shortcuts[i];
        const std::string where = "shortcut " + std::to_string(i);
        if (e.from < 0 || e.to <= e.from || e.to > last)
            throw std::invalid_argument(where + ": nodes out of range or not forward");
        if (has_shortcut[static_cast<std::size_t>(e.to)]++)
            throw std::invalid_argument(where + ": node " + std::to_string(e.to) +
                                        " already receives a shortcut");
        const auto& a = states[static_cast<std::size_t>(e.from)];
        const auto& b = states[static_cast<std::size_t>(e.to)];
        if (a.pooled || b.pooled)
            throw std::invalid_argument(where + ": shortcuts must precede global pooling");
        if (e.kind == ShortcutKind::Identity) {
            if (!(a == b))
                throw std::invalid_argument(
                    where + ": identity endpoints differ (channels " + std::to_string(a.channels) +
                    " vs " + std::to_string(b.channels) + ", downsampling " +
                    std::to_string(a.down) + " vs " + std::to_string(b.down) + ")");
        } else {
            if (b.down != a.down + 1)
                throw std::invalid_argument(where +
                                            ": projection expects exactly one downsampling "
                                            "between its endpoints");
        }
    }
}

// Longest and shortest source-to-sink path counted in convolution layers.
// Projection shortcuts contribute one conv; identity shortcuts none.
struct PathReport {
    int longest = 0;
    int shortest = 0;
    int conv_layers = 0;       // convs on the plain chain
    int pooled_features = 0;   // channel width entering the classifier
};

inline PathReport analyze_paths(const ArchSpec& spec) {
    validate_spec(spec);
    const auto states = arch_detail::trace_states(spec);
    const int last = static_cast<int>(spec.layers.size());
    std::vector<int> longest(states.size(), 0), shortest(states.size(), 0);
    for (int k = 0; k < last; ++k) {
        const int w = spec.layers[static_cast<std::size_t>(k)].kind == LayerKind::Conv ? 1 : 0;
        longest[static_cast<std::size_t>(k + 1)] = longest[static_cast<std::size_t>(k)] + w;
        shortest[static_cast<std::size_t>(k + 1)] = shortest[static_cast<std::size_t>(k)] + w;
        for (const auto& e : spec.shortcuts) {
            if (e.to != k + 1) continue;
            const int ew = e.kind == ShortcutKind::Projection ? 1 : 0;
            longest[static_cast<std::size_t>(k + 1)] =
                std::max(longest[static_cast<std::size_t>(k + 1)],
                         longest[static_cast<std::size_t>(e.from)] + ew);
            shortest[static_cast<std::size_t>(k + 1)] =
                std::min(shortest[static_cast<std::size_t>(k + 1)],
                         shortest[static_cast<std::size_t>(e.from)] + ew);
        }
    }
    PathReport r;
    r.longest = longest.back();
    r.shortest = shortest.back();
    for (const auto& l : spec.layers) r.conv_layers += l.kind == LayerKind::Conv ? 1 : 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i)
        if (spec.layers[i].kind == LayerKind::GlobalPool)
            r.pooled_features = states[i].channels;
    return r;
}

// Spatial side lengths of a square input as it passes the downsampling
// layers, starting with the input itself: net20 on 512 gives
// 512,256,128,64,32.
inline std::vector<int> spatial_trace(const ArchSpec& spec, int input_hw) {
    validate_spec(spec);
    std::vector<int> trace{input_hw};
    int hw = input_hw;
    for (const auto& l : spec.layers) {
        const bool downsamples = (l.kind == LayerKind::Conv || l.kind == LayerKind::AvgPool ||
                                  l.kind == LayerKind::MaxPool) &&
                                 l.stride == 2;
        if (downsamples) {
            hw = (hw + 1) / 2;
            trace.push_back(hw);
        }
    }
    return trace;
}

// Trainable parameter count as a pure function of the spec: conv kernels,
// batch norm scale/shift pairs, projection branches, classifier weights.
inline long long parameter_count(const ArchSpec& spec) {
    validate_spec(spec);
    const auto states = arch_detail::trace_states(spec);
    long long count = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDef& l = spec.layers[i];
        const int in = states[i].channels;
        switch (l.kind) {
            case LayerKind::Conv:
                count += 1LL * l.out_channels * in * l.kernel * l.kernel;
                break;
            case LayerKind::BatchNorm:
                count += 2LL * in;
                break;
            case LayerKind::Fc:
                count += 1LL * l.out_channels * in + l.out_channels;
                break;
            default:
                break;
        }
    }
    for (const auto& e : spec.shortcuts) {
        if (e.kind != ShortcutKind::Projection) continue;
        const int cin = states[static_cast<std::size_t>(e.from)].channels;
        const int cout = states[static_cast<std::size_t>(e.to)].channels;
        count += 1LL * cout * cin + 2LL * cout;
    }
    return count;
}

namespace arch_detail {

// Nearest integer channel count for base width times multiplier; the product
// must already be an integer up to 1% of the base, so reasonable command line
// spellings of thirds (0.333, 0.667) snap cleanly.
inline int snap_width(int base, double mult) {
    const double exact = base * mult;
    const int c = static_cast<int>(std::llround(exact));
    if (std::abs(exact - c) > 0.01 * base || c < 1)
        throw std::invalid_argument("width multiplier " + std::to_string(mult) +
                                    " does not yield integer channels for base width " +
                                    std::to_string(base));
    return c;
}

inline void push_cbr(ArchSpec& spec, int channels, int stride) {
    spec.layers.push_back({LayerKind::Conv, channels, 3, stride, 1});
    spec.layers.push_back({LayerKind::BatchNorm});
    spec.layers.push_back({LayerKind::Relu});
}

}  // namespace arch_detail

// The 20-conv residual classifier. One stride-1 stage at the base width, then
// four stride-2 stages with doubling widths. Each stage opens with a
// transition conv (bypassed by a projection shortcut when it downsamples) and
// continues with a three-conv residual block under an identity shortcut.
inline ArchSpec make_net20(double width_mult = 1.0, bool shortcuts = true) {
    using namespace arch_detail;
    static const int kBase[5] = {24, 48, 96, 192, 384};
    ArchSpec spec;
    spec.name = shortcuts ? "net20" : "net20-noshort";
    spec.width_mult = width_mult;
    spec.input_channels = 16;
    for (int stage = 0; stage < 5; ++stage) {
        const int ch = snap_width(kBase[stage], width_mult);
        const int start = static_cast<int>(spec.layers.size());
        push_cbr(spec, ch, stage == 0 ? 1 : 2);
        if (stage > 0)
            spec.shortcuts.push_back({start, start + 3, ShortcutKind::Projection});
        const int block_start = static_cast<int>(spec.layers.size());
        for (int i = 0; i < 3; ++i) push_cbr(spec, ch, 1);
        spec.shortcuts.push_back(
            {block_start, static_cast<int>(spec.layers.size()), ShortcutKind::Identity});
    }
    spec.layers.push_back({LayerKind::GlobalPool});
    spec.layers.push_back({LayerKind::Fc, 2});
    if (!shortcuts) spec.shortcuts.clear();
    validate_spec(spec);
    return spec;
}

inline ArchSpec make_net20_noshortcut(double width_mult = 1.0) {
    return make_net20(width_mult, false);
}

// The six-conv baseline: plain conv stacks with a pooling layer after each of
// the last five convs.
inline ArchSpec make_net6(LayerKind pool_kind) {
    if (pool_kind != LayerKind::AvgPool && pool_kind != LayerKind::MaxPool)
        throw std::invalid_argument("pool_kind must be avg or max pooling");
    using namespace arch_detail;
    static const int kWidths[6] = {16, 24, 48, 96, 192, 256};
    ArchSpec spec;
    spec.name = pool_kind == LayerKind::AvgPool ? "net6-avg" : "net6-max";
    spec.input_channels = 16;
    for (int i = 0; i < 6; ++i) {
        push_cbr(spec, kWidths[i], 1);
        if (i > 0) spec.layers.push_back({pool_kind, 0, 3, 2, 1});
    }
    spec.layers.push_back({LayerKind::GlobalPool});
    spec.layers.push_back({LayerKind::Fc, 2});
    validate_spec(spec);
    return spec;
}

inline ArchSpec make_net6_avg() { return make_net6(LayerKind::AvgPool); }
inline ArchSpec make_net6_max() { return make_net6(LayerKind::MaxPool); }

// The eleven-conv all-convolutional baseline: the six-conv net with each
// pooling layer replaced by a channel-preserving stride-2 conv (plus BN and
// ReLU), so downsampling itself is learned.
inline ArchSpec make_net11() {
    using namespace arch_detail;
    static const int kWidths[6] = {16, 24, 48, 96, 192, 256};
    ArchSpec spec;
    spec.name = "net11";
    spec.input_channels = 16;
    for (int i = 0; i < 6; ++i) {
        push_cbr(spec, kWidths[i], 1);
        if (i > 0) push_cbr(spec, kWidths[i], 2);
    }
    spec.layers.push_back({LayerKind::GlobalPool});
    spec.layers.push_back({LayerKind::Fc, 2});
    validate_spec(spec);
    return spec;
}

// Registry behind the --arch flag.
inline ArchSpec make_arch(const std::string& name, double width_mult = 1.0) {
    if (name == "net20") return make_net20(width_mult);
    if (name == "net20-noshort") return make_net20_noshortcut(width_mult);
    const bool fixed_width = width_mult == 1.0;
    if (name == "net6-avg" || name == "net6-max" || name == "net11") {
        if (!fixed_width)
            throw std::invalid_argument("architecture " + name + " has fixed widths");
        if (name == "net6-avg") return make_net6_avg();
        if (name == "net6-max") return make_net6_max();
        return make_net11();
    }
    throw std::invalid_argument("unknown architecture \"" + name +
                                "\"; valid names: net20, net20-noshort, net6-avg, net6-max, "
                                "net11");
}

// One layer per line, shortcut edges by node index; round-trips exactly.
inline std::string write_arch_text(const ArchSpec& spec) {
    std::ostringstream os;
    os << "name " << spec.name << "\n";
    os << "width " << spec.width_mult << "\n";
    os << "input " << spec.input_channels << "\n";
    for (const auto& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                os << "conv " << l.out_channels << " " << l.kernel << " " << l.stride << " "
                   << l.pad << "\n";
                break;
            case LayerKind::BatchNorm: os << "bn\n"; break;
            case LayerKind::Relu: os << "relu\n"; break;
            case LayerKind::AvgPool:
                os << "avg_pool " << l.kernel << " " << l.stride << " " << l.pad << "\n";
                break;
            case LayerKind::MaxPool:
                os << "max_pool " << l.kernel << " " << l.stride << " " << l.pad << "\n";
                break;
            case LayerKind::GlobalPool: os << "global_pool\n"; break;
            case LayerKind::Fc: os << "fc " << l.out_channels << "\n"; break;
        }
    }
    for (const auto& e : spec.shortcuts)
        os << "shortcut " << e.from << " " << e.to << " "
           << (e.kind == ShortcutKind::Identity ? "identity" : "projection") << "\n";
    return os.str();
}

// Width written as a decimal or a fraction ("0.667", "2/3").
inline double parse_width_token(const std::string& w) {
    const auto slash = w.find('/');
    if (slash != std::string::npos) {
        const double num = std::stod(w.substr(0, slash));
        const double den = std::stod(w.substr(slash + 1));
        if (den == 0) throw std::invalid_argument("zero denominator in width \"" + w + "\"");
        return num / den;
    }
    return std::stod(w);
}

inline ArchSpec parse_arch_text(const std::string& text) {
    ArchSpec spec;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::invalid_argument("architecture text line " + std::to_string(lineno) + ": " +
                                    msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok) || tok[0] == '#') continue;
        auto need_int = [&](const char* what) {
            long long v;
            if (!(ls >> v)) fail(std::string("expected ") + what);
            return static_cast<int>(v);
        };
        if (tok == "name") {
            if (!(ls >> spec.name)) fail("expected a name");
        } else if (tok == "width") {
            std::string w;
            if (!(ls >> w)) fail("expected a width");
            try {
                spec.width_mult = parse_width_token(w);
            } catch (const std::exception& e) {
                fail(e.what());
            }
        } else if (tok == "input") {
            spec.input_channels = need_int("input channel count");
        } else if (tok == "conv") {
            LayerDef l{LayerKind::Conv};
            l.out_channels = need_int("channels");
            l.kernel = need_int("kernel");
            l.stride = need_int("stride");
            l.pad = need_int("pad");
            spec.layers.push_back(l);
        } else if (tok == "bn") {
            spec.layers.push_back({LayerKind::BatchNorm});
        } else if (tok == "relu") {
            spec.layers.push_back({LayerKind::Relu});
        } else if (tok == "avg_pool" || tok == "max_pool") {
            LayerDef l{tok == "avg_pool" ? LayerKind::AvgPool : LayerKind::MaxPool};
            l.out_channels = 0;
            l.kernel = need_int("kernel");
            l.stride = need_int("stride");
            l.pad = need_int("pad");
            spec.layers.push_back(l);
        } else if (tok == "global_pool") {
            spec.layers.push_back({LayerKind::GlobalPool});
        } else if (tok == "fc") {
            spec.layers.push_back({LayerKind::Fc, need_int("output count")});
        } else if (tok == "shortcut") {
            ShortcutDef e;
            e.from = need_int("from node");
            e.to = need_int("to node");
            std::string kind;
            if (!(ls >> kind)) fail("expected identity or projection");
            if (kind == "identity")
                e.kind = ShortcutKind::Identity;
            else if (kind == "projection")
                e.kind = ShortcutKind::Projection;
            else
                fail("unknown shortcut kind \"" + kind + "\"");
            spec.shortcuts.push_back(e);
        } else {
            fail("unknown directive \"" + tok + "\"");
        }
    }
    validate_spec(spec);
    return spec;
}

// FNV-1a over the serialized text; stamped into checkpoints so a file can
// refuse to load into a different architecture.
inline std::uint64_t arch_hash(const ArchSpec& spec) {
    const std::string text = write_arch_text(spec);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace stegnet
