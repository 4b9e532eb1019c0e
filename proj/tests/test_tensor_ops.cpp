#include <catch2/catch_amalgamated.hpp>

#include "stegnet/conv.hpp"
#include "stegnet/layers.hpp"
#include "stegnet/optim.hpp"
#include "testutil.hpp"

using namespace stegnet;
using Catch::Approx;
using testutil::naive_conv2d;
using testutil::random_tensor;

TEST_CASE("tensor shape invariants") {
    Tensor<float> t(2, 3, 4, 5);
    REQUIRE(t.size() == 2u * 3 * 4 * 5);
    REQUIRE_THROWS_AS(Tensor<float>(Shape{0, 1, 1, 1}), std::invalid_argument);
    REQUIRE_THROWS_AS(Tensor<float>(Shape{1, 1, -2, 1}), std::invalid_argument);
    t.at(1, 2, 3, 4) = 7.f;
    REQUIRE(t[t.size() - 1] == 7.f);
}

TEST_CASE("conv2d forward counts constant kernels") {
    auto input = Tensor<double>::full(Shape{1, 1, 4, 4}, 1.0);
    auto weight = Tensor<double>::full(Shape{1, 1, 3, 3}, 1.0);
    auto out = conv2d_forward(input, weight, 1, 1);
    REQUIRE(out.shape() == Shape{1, 1, 4, 4});
    REQUIRE(out.at(0, 0, 1, 1) == Approx(9.0));
    REQUIRE(out.at(0, 0, 1, 2) == Approx(9.0));
    REQUIRE(out.at(0, 0, 0, 0) == Approx(4.0));
    REQUIRE(out.at(0, 0, 3, 3) == Approx(4.0));
    REQUIRE(out.at(0, 0, 0, 1) == Approx(6.0));
}

TEST_CASE("conv2d shape formula") {
    REQUIRE(conv_out_extent(512, 3, 1, 1) == 512);
    REQUIRE(conv_out_extent(512, 3, 2, 1) == 256);
    // (32,16,512,512) with 24 3x3 stride-1 filters keeps spatial size
    REQUIRE(Shape{32, 24, conv_out_extent(512, 3, 1, 1), conv_out_extent(512, 3, 1, 1)} ==
            Shape{32, 24, 512, 512});
    // stride 2 halves spatial size while channels double
    REQUIRE(Shape{1, 48, conv_out_extent(512, 3, 2, 1), conv_out_extent(512, 3, 2, 1)} ==
            Shape{1, 48, 256, 256});

    std::mt19937_64 rng(7);
    auto input = random_tensor<float>(Shape{2, 16, 20, 20}, rng);
    auto weight = random_tensor<float>(Shape{24, 16, 3, 3}, rng);
    REQUIRE(conv2d_forward(input, weight, 1, 1).shape() == Shape{2, 24, 20, 20});
    REQUIRE(conv2d_forward(input, weight, 2, 1).shape() == Shape{2, 24, 10, 10});
}

TEST_CASE("conv2d rejects mismatched channels and bad args") {
    std::mt19937_64 rng(3);
    auto input = random_tensor<double>(Shape{1, 3, 8, 8}, rng);
    auto weight = random_tensor<double>(Shape{4, 5, 3, 3}, rng);
    REQUIRE_THROWS_WITH(conv2d_forward(input, weight, 1, 1),
                        Catch::Matchers::ContainsSubstring("(1,3,8,8)") &&
                            Catch::Matchers::ContainsSubstring("(4,5,3,3)"));
    auto w2 = random_tensor<double>(Shape{4, 3, 2, 3}, rng);
    REQUIRE_THROWS_AS(conv2d_forward(input, w2, 1, 1), std::invalid_argument);
    auto w3 = random_tensor<double>(Shape{4, 3, 3, 3}, rng);
    REQUIRE_THROWS_AS(conv2d_forward(input, w3, 3, 1), std::invalid_argument);
}

TEST_CASE("conv2d matches the naive reference") {
    std::mt19937_64 rng(11);
    struct Case {
        Shape in;
        int cout, k, stride, pad;
    };
    const Case cases[] = {
        {{1, 1, 5, 5}, 1, 3, 1, 1}, {{2, 3, 9, 9}, 4, 3, 2, 1},  {{4, 8, 16, 16}, 6, 3, 1, 1},
        {{3, 2, 7, 6}, 5, 1, 1, 0}, {{2, 4, 10, 10}, 3, 4, 2, 1}, {{1, 6, 12, 12}, 8, 4, 1, 2},
        {{4, 8, 16, 16}, 8, 3, 2, 1},
    };
    for (const auto& c : cases) {
        auto input = random_tensor<double>(c.in, rng);
        auto weight = random_tensor<double>(Shape{c.cout, c.in.c, c.k, c.k}, rng);
        auto fast = conv2d_forward(input, weight, c.stride, c.pad);
        auto ref = naive_conv2d(input, weight, c.stride, c.pad);
        REQUIRE(fast.shape() == ref.shape());
        REQUIRE(testutil::max_rel_diff(fast, ref) < 1e-12);
    }
    // float path stays close to the double reference
    auto input = random_tensor<float>(Shape{4, 8, 16, 16}, rng);
    auto weight = random_tensor<float>(Shape{8, 8, 3, 3}, rng);
    auto fast = conv2d_forward(input, weight, 1, 1);
    auto ref = naive_conv2d(input.cast<double>(), weight.cast<double>(), 1, 1);
    REQUIRE(testutil::max_rel_diff(fast.cast<double>(), ref) < 1e-5);
}

TEST_CASE("conv2d backward trivial cases") {
    std::mt19937_64 rng(5);
    auto input = random_tensor<double>(Shape{2, 3, 6, 6}, rng);
    auto weight = random_tensor<double>(Shape{4, 3, 3, 3}, rng);

    SECTION("zero grad_out gives zero gradients") {
        Tensor<double> zeros(2, 4, 6, 6);
        auto [gi, gw] = conv2d_backward(input, weight, zeros, 1, 1);
        REQUIRE(testutil::max_abs_diff(gi, Tensor<double>(gi.shape())) == 0.0);
        REQUIRE(testutil::max_abs_diff(gw, Tensor<double>(gw.shape())) == 0.0);
    }

    SECTION("1x1 kernel grad_weight is a per-pair scalar product") {
        auto w1 = random_tensor<double>(Shape{2, 3, 1, 1}, rng);
        auto go = random_tensor<double>(Shape{2, 2, 6, 6}, rng);
        auto [gi, gw] = conv2d_backward(input, w1, go, 1, 0);
        for (int o = 0; o < 2; ++o)
            for (int i = 0; i < 3; ++i) {
                double expect = 0;
                for (int n = 0; n < 2; ++n)
                    for (int y = 0; y < 6; ++y)
                        for (int x = 0; x < 6; ++x)
                            expect += input.at(n, i, y, x) * go.at(n, o, y, x);
                REQUIRE(gw.at(o, i, 0, 0) == Approx(expect).epsilon(1e-10));
            }
    }

    SECTION("grad_out shape is validated") {
        Tensor<double> bad(2, 4, 5, 5);
        REQUIRE_THROWS_AS(conv2d_backward(input, weight, bad, 1, 1), std::invalid_argument);
    }
}

TEST_CASE("batchnorm forward statistics") {
    std::mt19937_64 rng(17);

    SECTION("constant input maps to nearly zero") {
        BatchNormState<double> st(3);
        auto input = Tensor<double>::full(Shape{2, 3, 4, 4}, 5.0);
        auto out = batchnorm_forward(input, st);
        for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(std::abs(out[i]) < 1e-3);
    }

    SECTION("normalized batch has zero mean and unit variance per channel") {
        BatchNormState<double> st(3);
        auto input = random_tensor<double>(Shape{4, 3, 5, 5}, rng, -2.0, 3.0);
        auto out = batchnorm_forward(input, st);
        const int m = 4 * 5 * 5;
        for (int c = 0; c < 3; ++c) {
            double mean = 0, var = 0;
            for (int n = 0; n < 4; ++n)
                for (int y = 0; y < 5; ++y)
                    for (int x = 0; x < 5; ++x) mean += out.at(n, c, y, x);
            mean /= m;
            for (int n = 0; n < 4; ++n)
                for (int y = 0; y < 5; ++y)
                    for (int x = 0; x < 5; ++x) {
                        const double d = out.at(n, c, y, x) - mean;
                        var += d * d;
                    }
            var /= m;
            REQUIRE(std::abs(mean) < 1e-5);
            REQUIRE(std::abs(var - 1.0) < 1e-3);
        }
    }

    SECTION("eval mode is an affine map of the running stats") {
        BatchNormState<double> st(2);
        st.mode = Mode::Eval;
        st.gamma.value.fill(2.0);
        st.beta.value.fill(1.0);
        auto input = random_tensor<double>(Shape{3, 2, 4, 4}, rng);
        auto out = batchnorm_forward(input, st);
        for (std::size_t i = 0; i < out.size(); ++i)
            REQUIRE(out[i] == Approx(2.0 * input[i] + 1.0).margin(1e-4));
    }

    SECTION("degenerate train batch is rejected") {
        BatchNormState<double> st(3);
        auto input = Tensor<double>(1, 3, 1, 1);
        REQUIRE_THROWS_AS(batchnorm_forward(input, st), std::invalid_argument);
    }

    SECTION("channel mismatch is rejected") {
        BatchNormState<double> st(4);
        auto input = Tensor<double>(2, 3, 4, 4);
        REQUIRE_THROWS_AS(batchnorm_forward(input, st), std::invalid_argument);
    }
}

TEST_CASE("batchnorm backward basics") {
    std::mt19937_64 rng(19);
    BatchNormState<double> st(3);
    auto input = random_tensor<double>(Shape{4, 3, 5, 5}, rng);
    batchnorm_forward(input, st);

    SECTION("zero grad_out gives zero gradients") {
        Tensor<double> zeros(input.shape());
        auto gi = batchnorm_backward(input, st, zeros);
        REQUIRE(testutil::max_abs_diff(gi, Tensor<double>(gi.shape())) == 0.0);
        REQUIRE(testutil::max_abs_diff(st.gamma.grad, Tensor<double>(st.gamma.grad.shape())) == 0.0);
        REQUIRE(testutil::max_abs_diff(st.beta.grad, Tensor<double>(st.beta.grad.shape())) == 0.0);
    }

    SECTION("grad_beta is the per-channel sum of grad_out") {
        auto go = random_tensor<double>(input.shape(), rng);
        batchnorm_backward(input, st, go);
        for (int c = 0; c < 3; ++c) {
            double expect = 0;
            for (int n = 0; n < 4; ++n)
                for (int y = 0; y < 5; ++y)
                    for (int x = 0; x < 5; ++x) expect += go.at(n, c, y, x);
            REQUIRE(st.beta.grad[c] == Approx(expect).epsilon(1e-10));
        }
    }

    SECTION("eval mode is rejected") {
        st.mode = Mode::Eval;
        auto go = random_tensor<double>(input.shape(), rng);
        REQUIRE_THROWS_AS(batchnorm_backward(input, st, go), std::logic_error);
    }
}

TEST_CASE("relu forward and backward") {
    Tensor<double> input(1, 1, 1, 3);
    input[0] = -1.0;
    input[1] = 0.0;
    input[2] = 2.5;
    auto out = relu(input);
    REQUIRE(out[0] == 0.0);
    REQUIRE(out[1] == 0.0);
    REQUIRE(out[2] == 2.5);

    auto grad = Tensor<double>::full(input.shape(), 1.0);
    auto gi = relu_backward(input, grad);
    REQUIRE(gi[0] == 0.0);
    REQUIRE(gi[1] == 0.0);  // subgradient at 0 is 0
    REQUIRE(gi[2] == 1.0);

    auto neg = Tensor<double>::full(Shape{2, 2, 3, 3}, -4.0);
    auto zout = relu(neg);
    auto zgrad = relu_backward(neg, Tensor<double>::full(neg.shape(), 2.0));
    REQUIRE(testutil::max_abs_diff(zout, Tensor<double>(neg.shape())) == 0.0);
    REQUIRE(testutil::max_abs_diff(zgrad, Tensor<double>(neg.shape())) == 0.0);
}

TEST_CASE("elementwise add") {
    std::mt19937_64 rng(23);
    auto a = random_tensor<float>(Shape{1, 48, 16, 16}, rng);
    auto zero = Tensor<float>(a.shape());
    auto sum = add(a, zero);
    REQUIRE(testutil::max_abs_diff(sum, a) == 0.0);

    auto big1 = Tensor<float>(1, 48, 256, 256);
    auto big2 = Tensor<float>(1, 48, 256, 256);
    REQUIRE_NOTHROW(add(big1, big2));
    auto other = Tensor<float>(1, 24, 512, 512);
    REQUIRE_THROWS_AS(add(other, big1), std::invalid_argument);
    // backward passes grad_out through unchanged to both inputs
}

TEST_CASE("global average pool") {
    auto wide = Tensor<float>(1, 384, 32, 32);
    REQUIRE(global_avg_pool(wide).shape() == Shape{1, 384, 1, 1});

    auto constant = Tensor<double>::full(Shape{2, 3, 4, 4}, 2.5);
    auto pooled = global_avg_pool(constant);
    for (std::size_t i = 0; i < pooled.size(); ++i) REQUIRE(pooled[i] == Approx(2.5));

    std::mt19937_64 rng(29);
    auto input = random_tensor<double>(Shape{2, 3, 4, 4}, rng);
    auto out = global_avg_pool(input);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) {
            double sum = 0;  // brute-force per-plane mean
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x) sum += input.at(n, c, y, x);
            REQUIRE(std::abs(out.at(n, c, 0, 0) - sum / 16.0) < 1e-6);
        }

    auto go = random_tensor<double>(Shape{2, 3, 1, 1}, rng);
    auto gi = global_avg_pool_backward(input.shape(), go);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x)
                    REQUIRE(gi.at(n, c, y, x) == Approx(go.at(n, c, 0, 0) / 16.0));
}

TEST_CASE("windowed pooling") {
    SECTION("constant input is preserved by both pools") {
        auto constant = Tensor<double>::full(Shape{1, 2, 8, 8}, 3.25);
        auto a = avg_pool(constant);
        auto m = max_pool(constant);
        REQUIRE(a.shape() == Shape{1, 2, 4, 4});
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i] == Approx(3.25));
            REQUIRE(m[i] == Approx(3.25));
        }
    }

    SECTION("shape halves at stride 2") {
        REQUIRE(conv_out_extent(512, 3, 2, 1) == 256);
        auto t = Tensor<float>(1, 16, 64, 64);
        REQUIRE(avg_pool(t).shape() == Shape{1, 16, 32, 32});
        REQUIRE(max_pool(t).shape() == Shape{1, 16, 32, 32});
    }

    SECTION("max pool picks the max and routes its gradient") {
        Tensor<double> input(1, 1, 1, 3);
        input[0] = 1.0;
        input[1] = 5.0;
        input[2] = 3.0;
        auto out = max_pool(input, 3, 2, 1);
        REQUIRE(out.shape() == Shape{1, 1, 1, 2});
        REQUIRE(out[0] == 5.0);
        auto go = Tensor<double>::full(out.shape(), 1.0);
        auto gi = max_pool_backward(input, go, 3, 2, 1);
        REQUIRE(gi[0] == 0.0);
        REQUIRE(gi[1] == 2.0);  // both windows route to the 5
        REQUIRE(gi[2] == 0.0);
    }
}

TEST_CASE("fully connected layer") {
    SECTION("identity-like rows copy channels") {
        Tensor<double> input(1, 4, 1, 1);
        for (int c = 0; c < 4; ++c) input[c] = c + 1.0;
        Tensor<double> weight(2, 4, 1, 1);
        weight.at(0, 1, 0, 0) = 1.0;  // row 0 selects channel 1
        weight.at(1, 3, 0, 0) = 1.0;  // row 1 selects channel 3
        Tensor<double> bias(2, 1, 1, 1);
        auto out = fully_connected(input, weight, bias);
        REQUIRE(out.at(0, 0, 0, 0) == Approx(2.0));
        REQUIRE(out.at(0, 1, 0, 0) == Approx(4.0));
    }

    SECTION("shape and validation") {
        auto input = Tensor<float>(32, 384, 1, 1);
        auto weight = Tensor<float>(2, 384, 1, 1);
        auto bias = Tensor<float>(2, 1, 1, 1);
        REQUIRE(fully_connected(input, weight, bias).shape() == Shape{32, 2, 1, 1});
        auto spatial = Tensor<float>(2, 384, 2, 2);
        REQUIRE_THROWS_AS(fully_connected(spatial, weight, bias), std::invalid_argument);
    }
}

TEST_CASE("softmax cross entropy") {
    SECTION("uniform logits give ln 2") {
        Tensor<double> logits(1, 2, 1, 1);
        auto res = softmax_cross_entropy(logits, {0});
        REQUIRE(res.probs[0] == Approx(0.5));
        REQUIRE(res.probs[1] == Approx(0.5));
        REQUIRE(res.loss == Approx(std::log(2.0)));
    }

    SECTION("rows sum to one") {
        std::mt19937_64 rng(31);
        auto logits = random_tensor<double>(Shape{8, 2, 1, 1}, rng, -5.0, 5.0);
        auto res = softmax_cross_entropy(logits, std::vector<int>(8, 1));
        for (int n = 0; n < 8; ++n)
            REQUIRE(res.probs.at(n, 0, 0, 0) + res.probs.at(n, 1, 0, 0) == Approx(1.0).epsilon(1e-6));
        REQUIRE(res.loss >= 0.0);
    }

    SECTION("large logits do not overflow") {
        Tensor<double> logits(1, 2, 1, 1);
        logits[0] = 1000.0;
        auto res = softmax_cross_entropy(logits, {0});
        REQUIRE(res.probs[0] == Approx(1.0));
        REQUIRE(res.probs[1] == Approx(0.0).margin(1e-12));
        REQUIRE(std::isfinite(res.loss));
    }

    SECTION("grad is probs minus onehot over batch") {
        Tensor<double> logits(2, 2, 1, 1);
        logits.at(0, 0, 0, 0) = 0.3;
        logits.at(1, 1, 0, 0) = -0.7;
        auto res = softmax_cross_entropy(logits, {0, 1});
        for (int n = 0; n < 2; ++n)
            for (int k = 0; k < 2; ++k) {
                const double onehot = (n == 0 ? k == 0 : k == 1) ? 1.0 : 0.0;
                REQUIRE(res.grad_logits.at(n, k, 0, 0) ==
                        Approx((res.probs.at(n, k, 0, 0) - onehot) / 2.0));
            }
    }
}

TEST_CASE("sgd with momentum") {
    SECTION("zero gradient leaves parameters unchanged") {
        Parameter<double> p(Shape{1, 1, 1, 1});
        p.value[0] = 3.0;
        std::vector<Parameter<double>*> params{&p};
        sgd_momentum_step(params, 0.1, 0.9, 0.0);
        REQUIRE(p.value[0] == 3.0);
        REQUIRE(p.momentum[0] == 0.0);
    }

    SECTION("two-step recurrence on a scalar") {
        Parameter<double> p(Shape{1, 1, 1, 1});
        p.value[0] = 1.0;
        std::vector<Parameter<double>*> params{&p};

        p.grad[0] = 1.0;
        sgd_momentum_step(params, 0.1, 0.9, 0.0);
        REQUIRE(p.value[0] == Approx(0.9));
        REQUIRE(p.momentum[0] == Approx(-0.1));

        p.grad[0] = 1.0;
        sgd_momentum_step(params, 0.1, 0.9, 0.0);
        REQUIRE(p.momentum[0] == Approx(-0.19));
        REQUIRE(p.value[0] == Approx(0.71));
    }

    SECTION("weight decay only touches flagged parameters") {
        Parameter<double> conv_p(Shape{1, 1, 1, 1});
        Parameter<double> conv_ref(Shape{1, 1, 1, 1});
        Parameter<double> fc_p(Shape{1, 1, 1, 1});
        fc_p.weight_decay_enabled = true;
        for (auto* p : {&conv_p, &conv_ref, &fc_p}) {
            p->value[0] = 2.0;
            p->grad[0] = 0.5;
        }
        std::vector<Parameter<double>*> a{&conv_p, &fc_p};
        sgd_momentum_step(a, 0.1, 0.9, 5e-4);
        std::vector<Parameter<double>*> b{&conv_ref};
        sgd_momentum_step(b, 0.1, 0.9, 0.0);
        REQUIRE(conv_p.value[0] == conv_ref.value[0]);
        REQUIRE(fc_p.value[0] != conv_p.value[0]);
    }

    SECTION("non-positive learning rate is rejected") {
        Parameter<double> p(Shape{1, 1, 1, 1});
        std::vector<Parameter<double>*> params{&p};
        REQUIRE_THROWS_AS(sgd_momentum_step(params, 0.0, 0.9, 0.0), std::invalid_argument);
    }

    SECTION("gradients are cleared after the step") {
        Parameter<double> p(Shape{1, 1, 1, 1});
        p.grad[0] = 1.0;
        std::vector<Parameter<double>*> params{&p};
        sgd_momentum_step(params, 0.1, 0.9, 0.0);
        REQUIRE(p.grad[0] == 0.0);
    }
}
