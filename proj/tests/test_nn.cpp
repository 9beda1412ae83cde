#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pnn/nn.hpp"
#include "support.hpp"

using namespace pnn;
using testing::random_tensor;

namespace {

double max_rel_diff(const Tensor4& a, const Tensor4& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max(scale, static_cast<double>(std::abs(b.data()[i])));
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]) / std::max(scale, 1e-30));
    return worst;
}

}  // namespace

TEST_CASE("conv: trivial kernels") {
    Rng rng(1);
    const Tensor4 x = random_tensor(rng, 2, 3, 6, 5);
    Tensor4 id(3, 3, 1, 1);
    for (int c = 0; c < 3; ++c) id.at(c, c, 0, 0) = 1.0f;
    CHECK(nn::conv_forward(x, id, std::vector<float>(3, 0.0f), Padding::same_mirror) == x);
    CHECK(nn::conv_forward(x, id, std::vector<float>(3, 0.0f), Padding::valid) == x);

    const Tensor4 zero(2, 3, 3, 3);
    const Tensor4 y = nn::conv_forward(x, zero, std::vector<float>{1.25f, -2.0f}, Padding::same_mirror);
    for (int n = 0; n < 2; ++n)
        for (int yy = 0; yy < 6; ++yy)
            for (int xx = 0; xx < 5; ++xx) {
                CHECK(y.at(n, 0, yy, xx) == 1.25f);
                CHECK(y.at(n, 1, yy, xx) == -2.0f);
            }
}

TEST_CASE("conv: matches the naive oracle") {
    Rng rng(2);
    const Tensor4 x = random_tensor(rng, 1, 2, 5, 5);
    const Tensor4 w = random_tensor(rng, 3, 2, 3, 3);
    const auto b = testing::random_vector(rng, 3);
    for (auto p : {Padding::same_mirror, Padding::valid})
        CHECK(max_rel_diff(nn::conv_forward(x, w, b, p), testing::naive_conv(x, w, b, p)) <= 1e-6);

    const Tensor4 big = random_tensor(rng, 2, 4, 9, 9);
    const Tensor4 w9 = random_tensor(rng, 2, 4, 9, 9);
    const auto b2 = testing::random_vector(rng, 2);
    CHECK(max_rel_diff(nn::conv_forward(big, w9, b2, Padding::same_mirror),
                       testing::naive_conv(big, w9, b2, Padding::same_mirror)) <= 1e-6);
    CHECK(nn::conv_forward(big, w9, b2, Padding::valid).h() == 1);
    CHECK_THROWS_AS(nn::conv_forward(big, random_tensor(rng, 2, 3, 3, 3), b2, Padding::valid), ShapeError);
    CHECK_THROWS_AS(nn::conv_forward(big, random_tensor(rng, 2, 4, 2, 2), b2, Padding::valid), ShapeError);
}

TEST_CASE("conv: backward basics") {
    Rng rng(3);
    const Tensor4 x = random_tensor(rng, 2, 3, 7, 7);
    const Tensor4 w = random_tensor(rng, 2, 3, 3, 3);
    const Tensor4 go = random_tensor(rng, 2, 2, 7, 7);
    const auto g = nn::conv_backward(x, w, go, Padding::same_mirror);
    for (int m = 0; m < 2; ++m) {
        double s = 0.0;
        for (int n = 0; n < 2; ++n)
            for (int y = 0; y < 7; ++y)
                for (int xx = 0; xx < 7; ++xx) s += go.at(n, m, y, xx);
        CHECK(g.grad_b[static_cast<std::size_t>(m)] == doctest::Approx(s).epsilon(1e-5));
    }
    const auto z = nn::conv_backward(x, w, Tensor4(2, 2, 7, 7), Padding::same_mirror);
    CHECK(std::all_of(z.grad_x.data().begin(), z.grad_x.data().end(), [](float v) { return v == 0.0f; }));
    CHECK(std::all_of(z.grad_w.data().begin(), z.grad_w.data().end(), [](float v) { return v == 0.0f; }));
    CHECK(std::all_of(z.grad_b.begin(), z.grad_b.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("conv: finite differences at h = 1e-3 on 2x3x7x7") {
    Rng rng(4);
    Tensor4 x = random_tensor(rng, 2, 3, 7, 7);
    Tensor4 w = random_tensor(rng, 2, 3, 3, 3);
    std::vector<float> b = testing::random_vector(rng, 2);
    for (auto p : {Padding::same_mirror, Padding::valid}) {
        const Tensor4 y = nn::conv_forward(x, w, b, p);
        const Tensor4 r = random_tensor(rng, y.n(), y.c(), y.h(), y.w());
        const auto g = nn::conv_backward(x, w, r, p);
        auto obj = [&] { return testing::dot(r, nn::conv_forward(x, w, b, p)); };
        CHECK(testing::compare_grad(x.data(), g.grad_x.data(), 1e-3, obj) < 1e-3);
        CHECK(testing::compare_grad(w.data(), g.grad_w.data(), 1e-3, obj) < 1e-3);
        CHECK(testing::compare_grad(b, g.grad_b, 1e-3, obj) < 1e-3);
    }
}

TEST_CASE("relu") {
    Rng rng(5);
    const Tensor4 neg = random_tensor(rng, 1, 2, 3, 3, -2.0, -0.01);
    const Tensor4 g = random_tensor(rng, 1, 2, 3, 3);
    const Tensor4 r = nn::relu(neg), rb = nn::relu_backward(neg, g);
    for (float v : r.data()) CHECK(v == 0.0f);
    for (float v : rb.data()) CHECK(v == 0.0f);
    const Tensor4 pos = random_tensor(rng, 1, 2, 3, 3, 0.01, 2.0);
    CHECK(nn::relu(pos) == pos);
    CHECK(nn::relu_backward(pos, g) == g);
    Tensor4 tie(1, 1, 1, 1, 0.0f);
    CHECK(nn::relu_backward(tie, Tensor4(1, 1, 1, 1, 5.0f)).data()[0] == 0.0f);
    for (int i = 0; i < 5; ++i) CHECK(testing::relu_grad_error(rng) < 1e-3);
}

TEST_CASE("batch norm") {
    Rng rng(6);
    const Tensor4 x = random_tensor(rng, 4, 3, 5, 5, -3.0, 7.0);
    const std::vector<float> one(3, 1.0f), zero(3, 0.0f);
    nn::BatchNormCache cache;
    const Tensor4 y = nn::batchnorm_forward(x, one, zero, zero, one, Mode::train, &cache);
    for (int c = 0; c < 3; ++c) {
        double s = 0.0, s2 = 0.0;
        int n = 0;
        for (int b = 0; b < 4; ++b)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) {
                    s += y.at(b, c, i, j);
                    s2 += static_cast<double>(y.at(b, c, i, j)) * y.at(b, c, i, j);
                    ++n;
                }
        CHECK(std::abs(s / n) <= 1e-5);
        CHECK(std::abs(s2 / n - 1.0) <= 1e-3);
    }
    // Already normalized input passes through (up to epsilon).
    const Tensor4 again = nn::batchnorm_forward(y, one, zero, zero, one, Mode::train, &cache);
    CHECK(max_rel_diff(again, y) < 1e-4);

    // Running statistics: 0.9 * old + 0.1 * batch.
    std::vector<float> rm(3, 1.0f), rv(3, 2.0f);
    nn::BatchNormCache c2;
    nn::batchnorm_forward(x, one, zero, rm, rv, Mode::train, &c2);
    nn::batchnorm_update_running(rm, rv, c2);
    CHECK(rm[0] == doctest::Approx(0.9 + 0.1 * c2.mean[0]));
    CHECK(rv[1] == doctest::Approx(1.8 + 0.1 * c2.var[1]));

    // Eval mode uses the running statistics.
    const Tensor4 e = nn::batchnorm_forward(x, one, zero, rm, rv, Mode::eval, nullptr);
    CHECK(e.at(1, 2, 3, 4) == doctest::Approx((x.at(1, 2, 3, 4) - rm[2]) / std::sqrt(rv[2] + 1e-5)).epsilon(1e-5));

    CHECK_THROWS_AS(nn::batchnorm_forward(Tensor4(1, 3, 1, 1), one, zero, zero, one, Mode::train, &cache), ShapeError);
    for (int i = 0; i < 5; ++i) CHECK(testing::batchnorm_grad_error(rng) < 1e-3);
}

TEST_CASE("network: Table I shapes") {
    const auto ge1 = nn::table1_spec("ge1", true);
    CHECK(ge1.layers.size() == 3);
    CHECK(ge1.layers[0].in_channels == 5);
    CHECK(ge1.layers[0].out_channels == 48);
    CHECK(ge1.layers[0].kernel == 9);
    CHECK(ge1.layers[1].out_channels == 32);
    CHECK(ge1.layers[1].kernel == 5);
    CHECK(ge1.layers[2].out_channels == 4);
    CHECK(ge1.layers[2].kernel == 5);
    CHECK(ge1.layers[2].activation == Activation::identity);
    CHECK(ge1.receptive_radius() == 8);
    CHECK(nn::table1_spec("ik", false).layers[0].kernel == 5);
    CHECK(nn::table1_spec("ge1", false, true).layers[0].in_channels == 7);
    CHECK(nn::table1_spec("wv2", false).layers[0].in_channels == 9);
    CHECK(nn::table1_spec("wv3", false, true).layers[0].in_channels == 13);
    CHECK(nn::table1_spec("wv3", false).layers[2].out_channels == 8);

    const auto params = nn::init_params(ge1, 3);
    Rng rng(7);
    const Tensor4 x = random_tensor(rng, 1, 5, 33, 33, 0.0, 1.0);
    const Tensor4 y = nn::network_forward(x, ge1, params, Mode::eval, Padding::same_mirror);
    CHECK(y.n() == 1);
    CHECK(y.c() == 4);
    CHECK(y.h() == 33);
    CHECK(y.w() == 33);
    CHECK(nn::network_forward(x, ge1, params, Mode::eval, Padding::valid).h() == 17);

    auto zeroed = params;
    zeroed.layers.back().weights.fill(0.0f);
    std::fill(zeroed.layers.back().bias.begin(), zeroed.layers.back().bias.end(), 0.0f);
    const Tensor4 z = nn::network_forward(x, ge1, zeroed, Mode::eval, Padding::same_mirror);
    for (float v : z.data()) CHECK(v == 0.0f);

    CHECK(nn::init_params(ge1, 3) == params);
    CHECK_FALSE(nn::init_params(ge1, 4) == params);
}

TEST_CASE("network: init statistics") {
    const auto spec = nn::table1_spec("ge1", true);
    const auto p = nn::init_params(spec, 11);
    auto stdev = [](const Tensor4& t) {
        double s = 0, s2 = 0;
        for (float v : t.data()) {
            s += v;
            s2 += static_cast<double>(v) * v;
        }
        const double n = static_cast<double>(t.size());
        return std::sqrt(s2 / n - (s / n) * (s / n));
    };
    CHECK(stdev(p.layers[0].weights) == doctest::Approx(std::sqrt(2.0 / (5 * 81))).epsilon(0.05));
    CHECK(stdev(p.layers[1].weights) == doctest::Approx(std::sqrt(2.0 / (48 * 25))).epsilon(0.05));
    CHECK(stdev(p.layers[2].weights) == doctest::Approx(1e-3).epsilon(0.1));
    for (const auto& l : p.layers)
        for (float b : l.bias) CHECK(b == 0.0f);
}

TEST_CASE("network: spec validation") {
    auto s = nn::table1_spec("ge1", true);
    s.layers[1].in_channels = 40;
    CHECK_THROWS_AS(s.validate(), ShapeError);
    s = nn::table1_spec("ge1", true);
    s.layers[2].activation = Activation::relu;
    CHECK_THROWS_AS(s.validate(), ShapeError);
    s = nn::table1_spec("ge1", true);
    s.layers[0].kernel = 4;
    CHECK_THROWS_AS(s.validate(), ShapeError);
    s = nn::table1_spec("ge1", true);
    s.layers[2].out_channels = 3;
    s.input.ms_bands = 4;
    CHECK_THROWS_AS(s.validate(), ShapeError);

    const auto deep = nn::deep_spec(4, 10, 32, 7, 3, true);
    deep.validate();
    CHECK(deep.layers.size() == 10);
    CHECK(deep.layers[3].batch_norm);
    CHECK_FALSE(deep.layers.back().batch_norm);
    CHECK(deep.receptive_radius() == 3 + 9);
}

TEST_CASE("network: finite differences on small networks") {
    Rng rng(8);
    for (bool bn : {false, true})
        for (auto p : {Padding::same_mirror, Padding::valid}) CHECK(testing::network_grad_error(rng, bn, p) < 1e-3);
}

TEST_CASE("loss: zero at equality, scale invariance, L1 gradient") {
    Rng rng(9);
    const Tensor4 a = random_tensor(rng, 2, 4, 5, 5, 0.1, 1.0);
    for (auto k : {LossKind::l2, LossKind::l1, LossKind::sam, LossKind::sid}) {
        const auto r = nn::loss_eval(a, a, {k, 0});
        CHECK(r.value == doctest::Approx(0.0));
        for (float v : r.grad.data()) CHECK(std::abs(v) < 1e-6f);
    }
    const Tensor4 b = random_tensor(rng, 2, 4, 5, 5, 0.1, 1.0);
    Tensor4 scaled = a;
    for (auto& v : scaled.data()) v *= 3.5f;
    CHECK(nn::loss_eval(scaled, b, {LossKind::sam, 0}).value ==
          doctest::Approx(nn::loss_eval(a, b, {LossKind::sam, 0}).value).epsilon(1e-6));

    const auto l1 = nn::loss_eval(a, b, {LossKind::l1, 0});
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const float d = a.data()[i] - b.data()[i];
        const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        CHECK(l1.grad.data()[i] == doctest::Approx(s / n));
    }
    const auto tie = nn::loss_eval(a, a, {LossKind::l1, 0});
    for (float v : tie.grad.data()) CHECK(v == 0.0f);

    for (auto k : {LossKind::l2, LossKind::l1, LossKind::sam, LossKind::sid})
        for (int i = 0; i < 3; ++i) CHECK(testing::loss_grad_error(rng, k) < 1e-3);

    CHECK_THROWS_AS(nn::loss_eval(Tensor4(1, 1, 3, 3, 1.0f), Tensor4(1, 1, 3, 3, 2.0f), {LossKind::sam, 0}), ShapeError);
    CHECK_THROWS_AS(nn::loss_eval(a, random_tensor(rng, 2, 3, 5, 5), {LossKind::l2, 0}), ShapeError);
    CHECK(nn::parse_loss_kind("mse") == LossKind::l2);
    CHECK(nn::parse_loss_kind("mae") == LossKind::l1);
    CHECK_THROWS_AS(nn::parse_loss_kind("huber"), Error);
}

TEST_CASE("loss: cropping and values") {
    // L2 on a 5x5 with margin 1 only sees the 3x3 centre.
    Tensor4 p(1, 1, 5, 5, 0.0f), r(1, 1, 5, 5, 0.0f);
    p.at(0, 0, 0, 0) = 100.0f;  // outside the window
    p.at(0, 0, 2, 2) = 3.0f;
    const auto res = nn::loss_eval(p, r, {LossKind::l2, 1});
    CHECK(res.value == doctest::Approx(9.0 / 9.0));
    CHECK(res.grad.at(0, 0, 0, 0) == 0.0f);
    CHECK(res.grad.at(0, 0, 2, 2) == doctest::Approx(2.0 * 3.0 / 9.0));

    // Prediction from a valid-padded net is centred on the cropped reference.
    Tensor4 small(1, 1, 3, 3, 1.0f);
    const auto c = nn::loss_eval(small, Tensor4(1, 1, 5, 5, 0.0f), {LossKind::l1, 1});
    CHECK(c.value == doctest::Approx(1.0));

    // SAM of orthogonal spectra is pi/2.
    Tensor4 e1(1, 2, 1, 1), e2(1, 2, 1, 1);
    e1.at(0, 0, 0, 0) = 1.0f;
    e2.at(0, 1, 0, 0) = 1.0f;
    CHECK(nn::loss_eval(e1, e2, {LossKind::sam, 0}).value == doctest::Approx(std::numbers::pi / 2));

    // SID of (0.25, 0.75) vs (0.5, 0.5).
    Tensor4 s1(1, 2, 1, 1), s2(1, 2, 1, 1, 1.0f);
    s1.at(0, 0, 0, 0) = 1.0f;
    s1.at(0, 1, 0, 0) = 3.0f;
    const double expect = (0.25 - 0.5) * std::log(0.25 / 0.5) + (0.75 - 0.5) * std::log(0.75 / 0.5);
    CHECK(nn::loss_eval(s1, s2, {LossKind::sid, 0}).value == doctest::Approx(expect));
}
