#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stegnet/conv.hpp"
#include "stegnet/layers.hpp"
#include "stegnet/network.hpp"
#include "stegnet/tensor.hpp"

namespace stegnet {

struct GradCheckEntry {
    std::string name;      // layer plus buffer under test
    double max_rel_err;    // analytic vs central finite differences
    double tolerance;
    bool pass() const { return max_rel_err <= tolerance; }
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool pass() const {
        for (const auto& e : entries)
            if (!e.pass()) return false;
        return true;
    }
    double worst() const {
        double m = 0;
        for (const auto& e : entries) m = std::max(m, e.max_rel_err);
        return m;
    }
};

namespace gradcheck_detail {

constexpr double kPerturbation = 1e-6;

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / denom;
}

// Central finite differences of `objective` with respect to every element of
// `buf`, compared against the analytic gradient.
inline double check_buffer(Tensor<double>& buf, const Tensor<double>& analytic,
                           const std::function<double()>& objective) {
    double worst = 0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const double saved = buf[i];
        buf[i] = saved + kPerturbation;
        const double plus = objective();
        buf[i] = saved - kPerturbation;
        const double minus = objective();
        buf[i] = saved;
        const double numeric = (plus - minus) / (2 * kPerturbation);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

// As check_buffer, but only for the given element indices; large buffers are
// spot-checked instead of swept.
inline double check_buffer_indices(Tensor<double>& buf, const Tensor<double>& analytic,
                                   const std::vector<std::size_t>& indices,
                                   const std::function<double()>& objective,
                                   double h = kPerturbation) {
    double worst = 0;
    for (std::size_t i : indices) {
        const double saved = buf[i];
        buf[i] = saved + h;
        const double plus = objective();
        buf[i] = saved - h;
        const double minus = objective();
        buf[i] = saved;
        const double numeric = (plus - minus) / (2 * h);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

inline std::vector<std::size_t> sample_indices(std::size_t size, std::size_t count,
                                               std::mt19937_64& rng) {
    if (count >= size) {
        std::vector<std::size_t> all(size);
        for (std::size_t i = 0; i < size; ++i) all[i] = i;
        return all;
    }
    std::vector<std::size_t> picked;
    std::uniform_int_distribution<std::size_t> dist(0, size - 1);
    while (picked.size() < count) {
        const std::size_t i = dist(rng);
        bool seen = false;
        for (auto j : picked) seen |= (j == i);
        if (!seen) picked.push_back(i);
    }
    return picked;
}

// Fixed projection turning a tensor-valued op into a scalar objective.
inline double project(const Tensor<double>& out, const Tensor<double>& weights) {
    double sum = 0;
    for (std::size_t i = 0; i < out.size(); ++i) sum += out[i] * weights[i];
    return sum;
}

inline Tensor<double> random_like(Shape s, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
    Tensor<double> t(s);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace gradcheck_detail

inline GradCheckEntry check_conv2d(Shape in_shape, int cout, int k, int stride, int pad,
                                   double tol = 1e-5, unsigned seed = 12345) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto input = random_like(in_shape, rng);
    auto weight = random_like(Shape{cout, in_shape.c, k, k}, rng);
    auto out = conv2d_forward(input, weight, stride, pad);
    auto proj = random_like(out.shape(), rng);
    auto [gi, gw] = conv2d_backward(input, weight, proj, stride, pad);

    auto objective = [&] { return project(conv2d_forward(input, weight, stride, pad), proj); };
    double worst = check_buffer(input, gi, objective);
    worst = std::max(worst, check_buffer(weight, gw, objective));
    const std::string name = "conv" + std::to_string(k) + "x" + std::to_string(k) + "_s" +
                             std::to_string(stride);
    return {name, worst, tol};
}

inline GradCheckEntry check_batchnorm(Shape in_shape, double tol = 1e-5, unsigned seed = 207) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    BatchNormState<double> st(in_shape.c);
    // non-trivial scale and shift so the gamma path is exercised
    for (int c = 0; c < in_shape.c; ++c) {
        st.gamma.value[c] = 0.5 + 0.3 * c;
        st.beta.value[c] = -0.2 + 0.1 * c;
    }
    auto input = random_like(in_shape, rng);
    auto out = batchnorm_forward(input, st);
    auto proj = random_like(out.shape(), rng);
    st.gamma.zero_grad();
    st.beta.zero_grad();
    auto gi = batchnorm_backward(input, st, proj);

    auto objective = [&] { return project(batchnorm_forward(input, st), proj); };
    double worst = check_buffer(input, gi, objective);
    worst = std::max(worst, check_buffer(st.gamma.value, st.gamma.grad, objective));
    worst = std::max(worst, check_buffer(st.beta.value, st.beta.grad, objective));
    return {"batchnorm_train", worst, tol};
}

inline GradCheckEntry check_relu(Shape in_shape, double tol = 1e-5, unsigned seed = 31) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto input = random_like(in_shape, rng);
    // keep inputs away from the kink at 0 where the subgradient convention
    // and finite differences legitimately disagree
    for (std::size_t i = 0; i < input.size(); ++i)
        while (std::abs(input[i]) < 1e-3) input[i] = random_like(Shape{1, 1, 1, 1}, rng)[0];
    auto proj = random_like(in_shape, rng);
    auto gi = relu_backward(input, proj);
    auto objective = [&] { return project(relu(input), proj); };
    return {"relu", check_buffer(input, gi, objective), tol};
}

inline GradCheckEntry check_add(Shape in_shape, double tol = 1e-5, unsigned seed = 41) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto a = random_like(in_shape, rng);
    auto b = random_like(in_shape, rng);
    auto proj = random_like(in_shape, rng);
    // backward of add passes grad through to both inputs
    auto objective = [&] { return project(add(a, b), proj); };
    double worst = check_buffer(a, proj, objective);
    worst = std::max(worst, check_buffer(b, proj, objective));
    return {"add", worst, tol};
}

inline GradCheckEntry check_global_avg_pool(Shape in_shape, double tol = 1e-5,
                                            unsigned seed = 43) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto input = random_like(in_shape, rng);
    auto out = global_avg_pool(input);
    auto proj = random_like(out.shape(), rng);
    auto gi = global_avg_pool_backward(in_shape, proj);
    auto objective = [&] { return project(global_avg_pool(input), proj); };
    return {"global_avg_pool", check_buffer(input, gi, objective), tol};
}

inline GradCheckEntry check_avg_pool(Shape in_shape, double tol = 1e-5, unsigned seed = 47) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto input = random_like(in_shape, rng);
    auto out = avg_pool(input);
    auto proj = random_like(out.shape(), rng);
    auto gi = avg_pool_backward(input, proj);
    auto objective = [&] { return project(avg_pool(input), proj); };
    return {"avg_pool", check_buffer(input, gi, objective), tol};
}

inline GradCheckEntry check_max_pool(Shape in_shape, double tol = 1e-5, unsigned seed = 53) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto input = random_like(in_shape, rng);
    auto out = max_pool(input);
    auto proj = random_like(out.shape(), rng);
    auto gi = max_pool_backward(input, proj);
    auto objective = [&] { return project(max_pool(input), proj); };
    return {"max_pool", check_buffer(input, gi, objective), tol};
}

inline GradCheckEntry check_fully_connected(int batch, int features, int classes,
                                            double tol = 1e-5, unsigned seed = 59) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto input = random_like(Shape{batch, features, 1, 1}, rng);
    auto weight = random_like(Shape{classes, features, 1, 1}, rng);
    auto bias = random_like(Shape{classes, 1, 1, 1}, rng);
    auto out = fully_connected(input, weight, bias);
    auto proj = random_like(out.shape(), rng);
    auto [gi, gw, gb] = fully_connected_backward(input, weight, proj);
    auto objective = [&] { return project(fully_connected(input, weight, bias), proj); };
    double worst = check_buffer(input, gi, objective);
    worst = std::max(worst, check_buffer(weight, gw, objective));
    worst = std::max(worst, check_buffer(bias, gb, objective));
    return {"fully_connected", worst, tol};
}

inline GradCheckEntry check_softmax_ce(int batch, double tol = 1e-5, unsigned seed = 61) {
    using namespace gradcheck_detail;
    std::mt19937_64 rng(seed);
    auto logits = random_like(Shape{batch, 2, 1, 1}, rng, -2.0, 2.0);
    std::vector<int> labels(batch);
    for (int n = 0; n < batch; ++n) labels[n] = n % 2;
    auto res = softmax_cross_entropy(logits, labels);
    auto objective = [&] {
        return static_cast<double>(softmax_cross_entropy(logits, labels).loss);
    };
    return {"softmax_cross_entropy", check_buffer(logits, res.grad_logits, objective), tol};
}

// End-to-end check of the assembled 20-conv network at 1/8 width on tiny
// inputs, against the softmax objective actually trained. The first conv,
// batch norm, projection and classifier buffers are swept in full; deeper
// convs are spot-checked.
//
// The step is smaller here than the per-layer default. Batch norm divides by
// batch deviations of order 0.01 (the conv init scale), which makes the
// composed objective's higher derivatives enormous; at h=1e-6 the h^2
// truncation term alone is ~3e-4 for first-layer weights. The measured error
// scales as h^2 (3e-2 / 3.2e-4 / 3.2e-6 at h=1e-5/1e-6/1e-7), which is the
// signature of a correct analytic gradient under truncation error, so h=1e-7
// sits comfortably below the 1e-4 tolerance while roundoff noise stays near
// 1e-6.
inline GradCheckReport full_net20_gradient_check(double tol = 1e-4, unsigned seed = 2024) {
    using namespace gradcheck_detail;
    Network<double> net(make_net20(0.125));
    net.init_params(seed);
    net.set_mode(Mode::Train);

    std::mt19937_64 rng(seed + 1);
    Tensor<double> input(2, 16, 8, 8);
    std::uniform_real_distribution<double> dist(0.0, 8.0);  // subband range
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = dist(rng);
    const std::vector<int> labels{0, 1};

    net.zero_grad();
    auto logits = net.forward(input);
    auto sm = softmax_cross_entropy(logits, labels);
    net.backward(sm.grad_logits);

    auto params = net.parameters();
    // analytic grads are snapshotted; later objective calls rerun forward only
    std::vector<Tensor<double>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    auto objective = [&] {
        return static_cast<double>(softmax_cross_entropy(net.forward(input), labels).loss);
    };

    GradCheckReport report;
    const double h = 1e-7;
    auto check = [&](std::size_t param_idx, std::size_t cap, const std::string& label) {
        auto& buf = params[param_idx]->value;
        auto idx = sample_indices(buf.size(), cap, rng);
        const double err = check_buffer_indices(buf, analytic[param_idx], idx, objective, h);
        report.entries.push_back({label, err, tol});
    };

    // chain order: [conv_w, bn_gamma, bn_beta] x20, fc_w, fc_b, then the four
    // projection triples
    check(0, 9999, "net20_conv0");
    check(1, 9999, "net20_bn0_gamma");
    check(2, 9999, "net20_bn0_beta");
    check(3 * 4, 40, "net20_conv4");
    check(3 * 8, 40, "net20_conv8");
    check(3 * 12, 40, "net20_conv12");
    check(3 * 16, 40, "net20_conv16");
    check(3 * 19, 40, "net20_conv19");
    check(3 * 19 + 1, 9999, "net20_bn19_gamma");
    check(60, 9999, "net20_fc_weight");
    check(61, 9999, "net20_fc_bias");
    check(62, 9999, "net20_proj0_weight");
    check(63, 9999, "net20_proj0_bn_gamma");
    check(71, 40, "net20_proj3_weight");
    return report;
}

// The per-layer verification suite behind the `gradcheck` CLI command.
inline GradCheckReport layer_gradient_checks() {
    GradCheckReport report;
    report.entries.push_back(check_conv2d(Shape{2, 3, 8, 8}, 4, 3, 1, 1));
    report.entries.push_back(check_conv2d(Shape{2, 4, 9, 9}, 4, 3, 2, 1));
    report.entries.push_back(check_conv2d(Shape{2, 3, 8, 8}, 4, 1, 1, 0));
    report.entries.push_back(check_conv2d(Shape{2, 2, 9, 9}, 3, 4, 2, 1));
    report.entries.push_back(check_batchnorm(Shape{4, 3, 5, 5}));
    report.entries.push_back(check_relu(Shape{2, 3, 6, 6}));
    report.entries.push_back(check_add(Shape{2, 3, 5, 5}));
    report.entries.push_back(check_global_avg_pool(Shape{2, 3, 6, 6}));
    report.entries.push_back(check_avg_pool(Shape{2, 3, 9, 9}));
    report.entries.push_back(check_max_pool(Shape{2, 3, 9, 9}));
    report.entries.push_back(check_fully_connected(3, 5, 2));
    report.entries.push_back(check_softmax_ce(4));
    return report;
}

}  // namespace stegnet
