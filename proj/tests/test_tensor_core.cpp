#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>

#include "alf/conv.hpp"
#include "alf/grad_check.hpp"
#include "alf/tape.hpp"
#include "alf/tensor.hpp"
#include "support/test_util.hpp"

using namespace alf;
using alf::test::max_abs_diff;
using alf::test::random_tensor;

TEST_CASE("tensor basics") {
    Tensor4 t({2, 3, 4, 5}, Layout::NHWC);
    CHECK(t.size() == 120);
    t(1, 2, 3, 4) = 7.0f;
    CHECK(t.raw()[119] == 7.0f);
    CHECK_THROWS_AS(t.reshaped({2, 3, 4, 4}), ShapeError);
    Tensor4 r = t.reshaped({1, 1, 1, 120});
    CHECK(r.raw()[119] == 7.0f);

    Tensor4 bad = Tensor4::zeros({1, 1, 1, 2}, Layout::NHWC);
    bad.raw()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(bad.check_finite("test"), NumericError);
}

TEST_CASE("conv2d_naive hand-expanded example") {
    // input 1x2x2x1 = [[1,2],[3,4]], kernel [[1,0],[0,1]] -> 1*1 + 4*1 = 5
    Tensor4 in = Tensor4::from({1, 2, 2, 1}, Layout::NHWC, {1, 2, 3, 4});
    Tensor4 w = Tensor4::from({2, 2, 1, 1}, Layout::KKIO, {1, 0, 0, 1});
    Tensor4 out = conv2d_naive(in, w, {2, 1, 0});
    REQUIRE(out.dims() == Tensor4::Dims{1, 1, 1, 1});
    CHECK(out.raw()[0] == doctest::Approx(5.0f));
}

TEST_CASE("conv2d_naive zero weights give zero output") {
    std::mt19937 rng(11);
    Tensor4 in = random_tensor<float>({2, 5, 5, 3}, Layout::NHWC, rng, -10, 10);
    Tensor4 w = Tensor4::zeros({3, 3, 3, 4}, Layout::KKIO);
    Tensor4 out = conv2d_naive(in, w, {3, 1, 1});
    for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("conv2d_naive 1x1 identity kernel is identity") {
    std::mt19937 rng(12);
    Tensor4 in = random_tensor<float>({1, 3, 3, 1}, Layout::NHWC, rng);
    Tensor4 w = Tensor4::from({1, 1, 1, 1}, Layout::KKIO, {1});
    Tensor4 out = conv2d_naive(in, w, {1, 1, 0});
    CHECK(max_abs_diff(out, in) == 0.0);
}

TEST_CASE("conv2d geometry and shape errors") {
    Tensor4 in = Tensor4::zeros({1, 5, 5, 2}, Layout::NHWC);
    Tensor4 w = Tensor4::zeros({3, 3, 2, 4}, Layout::KKIO);
    // (5 - 3) % 2 == 0 is fine; (5 + 0 - 3) % 3 != 0 must throw.
    CHECK_NOTHROW(conv2d_naive(in, w, {3, 2, 0}));
    CHECK_THROWS_AS(conv2d_naive(in, w, {3, 3, 0}), ShapeError);
    Tensor4 wbad = Tensor4::zeros({3, 3, 3, 4}, Layout::KKIO);
    CHECK_THROWS_AS(conv2d_naive(in, wbad, {3, 1, 0}), ShapeError);
    Tensor4 wbad2 = Tensor4::zeros({5, 5, 2, 4}, Layout::KKIO);
    CHECK_THROWS_AS(conv2d_naive(in, wbad2, {3, 1, 0}), ShapeError);
}

TEST_CASE("conv2d_naive rejects non-finite results") {
    Tensor4 in = Tensor4::from({1, 1, 1, 1}, Layout::NHWC,
                               {std::numeric_limits<float>::quiet_NaN()});
    Tensor4 w = Tensor4::from({1, 1, 1, 1}, Layout::KKIO, {1});
    CHECK_THROWS_AS(conv2d_naive(in, w, {1, 1, 0}), NumericError);
}

TEST_CASE("conv2d_fast matches the naive oracle on the pinned examples") {
    Tensor4 in = Tensor4::from({1, 2, 2, 1}, Layout::NHWC, {1, 2, 3, 4});
    Tensor4 w = Tensor4::from({2, 2, 1, 1}, Layout::KKIO, {1, 0, 0, 1});
    CHECK(max_abs_diff(conv2d_fast(in, w, {2, 1, 0}), conv2d_naive(in, w, {2, 1, 0})) <= 1e-5);

    std::mt19937 rng(13);
    Tensor4 in2 = random_tensor<float>({4, 8, 8, 3}, Layout::NHWC, rng, -10, 10);
    Tensor4 w2 = random_tensor<float>({3, 3, 3, 8}, Layout::KKIO, rng, -10, 10);
    CHECK(max_abs_diff(conv2d_fast(in2, w2, {3, 1, 1}), conv2d_naive(in2, w2, {3, 1, 1})) <= 1e-5);
}

TEST_CASE("conv2d_fast handles an empty batch") {
    Tensor4 in = Tensor4::zeros({0, 4, 4, 2}, Layout::NHWC);
    Tensor4 w = Tensor4::zeros({3, 3, 2, 5}, Layout::KKIO);
    Tensor4 out = conv2d_fast(in, w, {3, 1, 1});
    CHECK(out.dims() == Tensor4::Dims{0, 4, 4, 5});
    CHECK(out.size() == 0);
}

TEST_CASE("property: conv2d_fast == conv2d_naive over random shapes") {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> nd(0, 3), hw(1, 9), cd(1, 5), od(1, 6), kd(1, 3), sd(1, 2),
        pd(0, 2);
    int trials = 0;
    while (trials < 120) {
        ConvGeometry g{kd(rng), sd(rng), pd(rng)};
        const int hi = hw(rng), wi = hw(rng);
        if ((hi + 2 * g.pad - g.kernel) < 0 || (hi + 2 * g.pad - g.kernel) % g.stride != 0) continue;
        if ((wi + 2 * g.pad - g.kernel) < 0 || (wi + 2 * g.pad - g.kernel) % g.stride != 0) continue;
        const int ci = cd(rng);
        Tensor4 in = random_tensor<float>({nd(rng), hi, wi, ci}, Layout::NHWC, rng, -10, 10);
        Tensor4 w = random_tensor<float>({g.kernel, g.kernel, ci, od(rng)}, Layout::KKIO, rng, -10,
                                         10);
        CHECK(max_abs_diff(conv2d_fast(in, w, g), conv2d_naive(in, w, g)) <= 1e-5);
        ++trials;
    }
}

// Linearity is a property of the algorithm, so it is checked on the f64
// instantiation where rounding noise sits far below the tolerance. A small
// f32 spot check with O(1) data covers the production dtype.
TEST_CASE("property: convolution is linear in the weights") {
    std::mt19937 rng(7);
    for (int t = 0; t < 25; ++t) {
        ConvGeometry g{3, 1, 1};
        Tensor4d x = random_tensor<double>({2, 6, 6, 3}, Layout::NHWC, rng, -5, 5);
        Tensor4d w1 = random_tensor<double>({3, 3, 3, 4}, Layout::KKIO, rng, -5, 5);
        Tensor4d w2 = random_tensor<double>({3, 3, 3, 4}, Layout::KKIO, rng, -5, 5);
        const double a = 0.7, b = -1.3;
        Tensor4d wsum({3, 3, 3, 4}, Layout::KKIO);
        for (std::int64_t i = 0; i < wsum.size(); ++i) {
            wsum.raw()[i] = a * w1.raw()[i] + b * w2.raw()[i];
        }
        Tensor4d lhs = conv2d_naive(x, wsum, g);
        Tensor4d y1 = conv2d_naive(x, w1, g);
        Tensor4d y2 = conv2d_naive(x, w2, g);
        Tensor4d rhs({lhs.dims()}, Layout::NHWC);
        for (std::int64_t i = 0; i < rhs.size(); ++i) {
            rhs.raw()[i] = a * y1.raw()[i] + b * y2.raw()[i];
        }
        CHECK(max_abs_diff(lhs, rhs) <= 1e-5);
    }

    Tensor4 xf = random_tensor<float>({1, 4, 4, 2}, Layout::NHWC, rng, -1, 1);
    Tensor4 w1f = random_tensor<float>({3, 3, 2, 2}, Layout::KKIO, rng, -1, 1);
    Tensor4 w2f = random_tensor<float>({3, 3, 2, 2}, Layout::KKIO, rng, -1, 1);
    Tensor4 wsf({3, 3, 2, 2}, Layout::KKIO);
    for (std::int64_t i = 0; i < wsf.size(); ++i) {
        wsf.raw()[i] = 0.5f * w1f.raw()[i] - 0.25f * w2f.raw()[i];
    }
    Tensor4 lf = conv2d_naive(xf, wsf, {3, 1, 1});
    Tensor4 y1f = conv2d_naive(xf, w1f, {3, 1, 1});
    Tensor4 y2f = conv2d_naive(xf, w2f, {3, 1, 1});
    Tensor4 rf(lf.dims(), Layout::NHWC);
    for (std::int64_t i = 0; i < rf.size(); ++i) {
        rf.raw()[i] = 0.5f * y1f.raw()[i] - 0.25f * y2f.raw()[i];
    }
    CHECK(max_abs_diff(lf, rf) <= 1e-5);
}

TEST_CASE("pointwise_conv hand example and identity") {
    Tensor4 in = Tensor4::from({1, 1, 1, 2}, Layout::NHWC, {2, 4});
    Tensor4 w = Tensor4::from({1, 1, 2, 1}, Layout::KKIO, {0.5f, 0.25f});
    Tensor4 out = pointwise_conv(in, w);
    CHECK(out.raw()[0] == doctest::Approx(2.0f));

    std::mt19937 rng(5);
    Tensor4 x = random_tensor<float>({2, 3, 3, 4}, Layout::NHWC, rng);
    Tensor4 eye = Tensor4::zeros({1, 1, 4, 4}, Layout::KKIO);
    for (int c = 0; c < 4; ++c) eye(0, 0, c, c) = 1.0f;
    CHECK(max_abs_diff(pointwise_conv(x, eye), x) == 0.0);

    Tensor4 wbad = Tensor4::zeros({1, 1, 3, 2}, Layout::KKIO);
    CHECK_THROWS_AS(pointwise_conv(x, wbad), ShapeError);
}

TEST_CASE("pointwise_conv equals conv2d_naive with K=1") {
    std::mt19937 rng(6);
    for (int t = 0; t < 20; ++t) {
        Tensor4 x = random_tensor<float>({2, 4, 5, 6}, Layout::NHWC, rng, -3, 3);
        Tensor4 w = random_tensor<float>({1, 1, 6, 3}, Layout::KKIO, rng, -3, 3);
        CHECK(max_abs_diff(pointwise_conv(x, w), conv2d_naive(x, w, {1, 1, 0})) <= 1e-6);
    }
}

TEST_CASE("activation kinds") {
    Tensor4 x = Tensor4::from({1, 1, 1, 3}, Layout::NHWC, {-1, 0, 2});
    Tensor4 r = activation(x, Activation::Relu);
    CHECK(r.raw()[0] == 0.0f);
    CHECK(r.raw()[1] == 0.0f);
    CHECK(r.raw()[2] == 2.0f);
    CHECK(max_abs_diff(activation(x, Activation::Identity), x) == 0.0);
    CHECK(max_abs_diff(activation(r, Activation::Relu), r) == 0.0);  // idempotent
}

TEST_CASE("tape: loss = sum(w * x) has gradient x") {
    std::mt19937 rng(21);
    Tensor4 xv = random_tensor<float>({1, 2, 2, 3}, Layout::NHWC, rng);
    Tensor4 wv = random_tensor<float>({1, 2, 2, 3}, Layout::NHWC, rng);
    Tape tape;
    auto x = tape.leaf(xv);
    auto w = tape.leaf(wv, true);
    auto loss = tape.sum_all(tape.mul(w, x));
    tape.backward(loss);
    CHECK(max_abs_diff(tape.grad(w), xv) <= 1e-6);
}

TEST_CASE("tape: unused parameter keeps an exactly-zero gradient") {
    Tape tape;
    auto used = tape.leaf(Tensor4::from({1, 1, 1, 2}, Layout::NHWC, {1, 2}), true);
    auto unused = tape.leaf(Tensor4::from({1, 1, 1, 2}, Layout::NHWC, {3, 4}), true);
    auto loss = tape.sum_all(tape.mul(used, used));
    tape.backward(loss);
    for (float g : tape.grad(unused).data()) CHECK(g == 0.0f);
    CHECK(tape.grad(used).raw()[0] == doctest::Approx(2.0f));
}

TEST_CASE("tape: backward requires a scalar loss") {
    Tape tape;
    auto x = tape.leaf(Tensor4::zeros({1, 1, 1, 2}, Layout::NHWC), true);
    CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("tape: mse(conv(x,w), t) gradient matches finite differences") {
    std::mt19937 rng(31);
    Tensor4d x = random_tensor<double>({2, 5, 5, 2}, Layout::NHWC, rng);
    Tensor4d w = random_tensor<double>({3, 3, 2, 3}, Layout::KKIO, rng);
    Tensor4d target = random_tensor<double>({2, 5, 5, 3}, Layout::NHWC, rng);
    ConvGeometry g{3, 1, 1};

    auto build = [&](TapeD& tape, const std::vector<TapeD::NodeId>& params) {
        auto xn = tape.leaf(x);
        auto tn = tape.leaf(target);
        return tape.mse(tape.conv2d(xn, params[0], g), tn);
    };
    auto report = grad_check(build, {w}, 1e-3, 1e-3, {"w"});
    INFO(report.summary());
    CHECK(report.pass);
}

TEST_CASE("tape: every differentiable op passes grad_check at 1e-3") {
    std::mt19937 rng(41);
    const double eps = 1e-3, tol = 1e-3;

    SUBCASE("conv2d wrt input and weights, strided and padded") {
        Tensor4d x = random_tensor<double>({2, 6, 6, 3}, Layout::NHWC, rng);
        Tensor4d w = random_tensor<double>({3, 3, 3, 4}, Layout::KKIO, rng);
        auto build = [&](TapeD& tape, const std::vector<TapeD::NodeId>& p) {
            auto y = tape.conv2d(p[0], p[1], ConvGeometry{3, 1, 1});
            return tape.mse(y, tape.leaf(Tensor4d::zeros(tape.value(y).dims(), Layout::NHWC)));
        };
        auto report = grad_check(build, {x, w}, eps, tol, {"x", "w"});
        INFO(report.summary());
        CHECK(report.pass);
    }
    SUBCASE("pointwise conv") {
        Tensor4d x = random_tensor<double>({2, 3, 3, 4}, Layout::NHWC, rng);
        Tensor4d w = random_tensor<double>({1, 1, 4, 2}, Layout::KKIO, rng);
        auto build = [&](TapeD& tape, const std::vector<TapeD::NodeId>& p) {
            auto y = tape.pointwise(p[0], p[1]);
            return tape.mse(y, tape.leaf(Tensor4d::zeros(tape.value(y).dims(), Layout::NHWC)));
        };
        auto report = grad_check(build, {x, w}, eps, tol);
        INFO(report.summary());
        CHECK(report.pass);
    }
    SUBCASE("relu away from the kink") {
        Tensor4d x({1, 1, 2, 3}, Layout::NHWC);
        double vals[] = {-2.0, -0.7, 0.5, 1.5, -1.1, 2.2};
        for (int i = 0; i < 6; ++i) x.raw()[i] = vals[i];
        auto build = [&](TapeD& tape, const std::vector<TapeD::NodeId>& p) {
            return tape.sum_all(tape.mul(tape.act(p[0], Activation::Relu),
                                         tape.act(p[0], Activation::Relu)));
        };
        auto report = grad_check(build, {x}, eps, tol);
        INFO(report.summary());
        CHECK(report.pass);
    }
    SUBCASE("scale_channels, add_bias, add_scaled, reshape") {
        Tensor4d x = random_tensor<double>({2, 2, 2, 3}, Layout::NHWC, rng);
        Tensor4d b = random_tensor<double>({1, 1, 1, 3}, Layout::NHWC, rng);
        auto build = [&](TapeD& tape, const std::vector<TapeD::NodeId>& p) {
            auto s = tape.scale_channels(p[0], {0.5, 0.0, 2.0});
            auto y = tape.add_bias(s, p[1]);
            auto z = tape.add_scaled(y, s, 1.5, -0.5);
            auto r = tape.reshape(z, {2, 1, 1, 12});
            return tape.mse(r, tape.leaf(Tensor4d::zeros({2, 1, 1, 12}, Layout::NHWC)));
        };
        auto report = grad_check(build, {x, b}, eps, tol, {"x", "bias"});
        INFO(report.summary());
        CHECK(report.pass);
    }
    SUBCASE("softmax cross entropy") {
        Tensor4d logits = random_tensor<double>({4, 1, 1, 5}, Layout::NHWC, rng, -2, 2);
        std::vector<std::int32_t> labels{0, 3, 4, 1};
        auto build = [&](TapeD& tape, const std::vector<TapeD::NodeId>& p) {
            return tape.softmax_cross_entropy(p[0], labels);
        };
        auto report = grad_check(build, {logits}, eps, tol);
        INFO(report.summary());
        CHECK(report.pass);
    }
}

TEST_CASE("grad_check: quadratic passes at 1e-6 and a corrupted rule fails") {
    std::mt19937 rng(51);
    Tensor4d w = random_tensor<double>({1, 1, 2, 3}, Layout::NHWC, rng, 0.5, 2.0);

    ValueFn value = [](const std::vector<Tensor4d>& p) {
        double acc = 0.0;
        for (double v : p[0].data()) acc += v * v;
        return acc;
    };
    GradsFn good = [](const std::vector<Tensor4d>& p) {
        Tensor4d g = p[0];
        for (auto& v : g.data()) v *= 2.0;
        return std::vector<Tensor4d>{g};
    };
    auto report = grad_check_fn(value, good, {w}, 1e-3, 1e-6);
    INFO(report.summary());
    CHECK(report.pass);

    GradsFn corrupted = [&good](const std::vector<Tensor4d>& p) {
        auto g = good(p);
        for (auto& v : g[0].data()) v *= 1.05;  // wrong backward rule
        return g;
    };
    auto bad = grad_check_fn(value, corrupted, {w}, 1e-3, 1e-3);
    CHECK_FALSE(bad.pass);
    CHECK(bad.max_rel_err > 1e-3);
}

TEST_CASE("tape replay is deterministic bit for bit") {
    auto run = [](std::vector<float>& grads_out) {
        std::mt19937 rng(61);
        Tensor4 x = random_tensor<float>({2, 6, 6, 2}, Layout::NHWC, rng);
        Tensor4 w = random_tensor<float>({3, 3, 2, 4}, Layout::KKIO, rng);
        Tensor4 t = random_tensor<float>({2, 6, 6, 4}, Layout::NHWC, rng);
        Tape tape;
        auto xn = tape.leaf(x, true);
        auto wn = tape.leaf(w, true);
        auto y = tape.act(tape.conv2d(xn, wn, {3, 1, 1}), Activation::Relu);
        auto loss = tape.mse(y, tape.leaf(t));
        tape.backward(loss);
        grads_out.clear();
        for (float g : tape.grad(wn).data()) grads_out.push_back(g);
        for (float g : tape.grad(xn).data()) grads_out.push_back(g);
    };
    std::vector<float> a, b;
    run(a);
    run(b);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}
