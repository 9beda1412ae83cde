#pragma once

// Reference implementations written independently of the library, plus
// finite-difference gradient checks. Shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "pnn/nn.hpp"
#include "pnn/random.hpp"
#include "pnn/raster.hpp"

namespace pnn::testing {

inline Tensor4 random_tensor(Rng& rng, int n, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
    Tensor4 t(n, c, h, w);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

inline std::vector<float> random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

inline MultibandImage random_image(Rng& rng, int w, int h, int bands, double lo = 0.0, double hi = 2047.0) {
    MultibandImage img(w, h, bands);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

// Half-sample symmetric reflection: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...
inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

// Direct quadruple loop, double accumulation.
inline Tensor4 naive_conv(const Tensor4& x, const Tensor4& w, const std::vector<float>& b, Padding padding) {
    const int K = w.h();
    const int r = (K - 1) / 2;
    const bool same = padding == Padding::same_mirror;
    const int oh = same ? x.h() : x.h() - K + 1;
    const int ow = same ? x.w() : x.w() - K + 1;
    Tensor4 y(x.n(), w.n(), oh, ow);
    for (int n = 0; n < x.n(); ++n)
        for (int m = 0; m < w.n(); ++m)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double s = b[static_cast<std::size_t>(m)];
                    for (int c = 0; c < x.c(); ++c)
                        for (int i = 0; i < K; ++i)
                            for (int j = 0; j < K; ++j) {
                                const int sy = same ? reflect(oy + i - r, x.h()) : oy + i;
                                const int sx = same ? reflect(ox + j - r, x.w()) : ox + j;
                                s += static_cast<double>(w.at(m, c, i, j)) * x.at(n, c, sy, sx);
                            }
                    y.at(n, m, oy, ox) = static_cast<float>(s);
                }
    return y;
}

// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double den = std::sqrt(std::max(na, nb));
    return den == 0.0 ? 0.0 : std::sqrt(d) / den;
}

inline std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

// Central difference of `objective` w.r.t. values[i], using the step that is
// actually representable in float. Returns NaN if `smooth` reports a kink.
inline double central_difference(float& value, double h, const std::function<double()>& objective,
                                 const std::function<bool()>& smooth = {}) {
    const float v = value;
    value = static_cast<float>(v + h);
    const double hp = static_cast<double>(value) - v;
    const double fp = objective();
    const bool ok_p = !smooth || smooth();
    value = static_cast<float>(v - h);
    const double hm = v - static_cast<double>(value);
    const double fm = objective();
    const bool ok_m = !smooth || smooth();
    value = v;
    if (!ok_p || !ok_m) return std::nan("");
    return (fp - fm) / (hp + hm);
}

inline double dot(const Tensor4& r, const Tensor4& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(r.data()[i]) * y.data()[i];
    return s;
}

// Compares analytic and numeric gradients over every coordinate of `values`,
// skipping coordinates the numeric side marks as non-smooth (NaN).
inline double compare_grad(std::vector<float>& values, const std::vector<float>& analytic, double h,
                           const std::function<double()>& objective, const std::function<bool()>& smooth = {}) {
    std::vector<double> a, n;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = central_difference(values[i], h, objective, smooth);
        if (std::isnan(g)) continue;
        a.push_back(analytic[i]);
        n.push_back(g);
    }
    return rel_error(a, n);
}

// ---- gradient checks; each returns the worst relative error of one random instance ----

inline double conv_grad_error(Rng& rng, Padding padding) {
    const int n = 1 + static_cast<int>(rng.index(2));
    const int c = 1 + static_cast<int>(rng.index(3));
    const int m = 1 + static_cast<int>(rng.index(3));
    const int K = std::array{1, 3, 5}[rng.index(3)];
    const int h = K + 1 + static_cast<int>(rng.index(4));
    const int w = K + 1 + static_cast<int>(rng.index(4));
    Tensor4 x = random_tensor(rng, n, c, h, w);
    Tensor4 wt = random_tensor(rng, m, c, K, K);
    std::vector<float> b = random_vector(rng, static_cast<std::size_t>(m));
    const Tensor4 y0 = nn::conv_forward(x, wt, b, padding);
    const Tensor4 r = random_tensor(rng, y0.n(), y0.c(), y0.h(), y0.w());
    const auto g = nn::conv_backward(x, wt, r, padding);
    auto obj = [&] { return dot(r, nn::conv_forward(x, wt, b, padding)); };
    // Linear in every argument: any step is exact up to rounding.
    double e = compare_grad(x.data(), g.grad_x.data(), 0.5, obj);
    e = std::max(e, compare_grad(wt.data(), g.grad_w.data(), 0.5, obj));
    e = std::max(e, compare_grad(b, g.grad_b, 0.5, obj));
    return e;
}

inline double relu_grad_error(Rng& rng) {
    Tensor4 x = random_tensor(rng, 2, 3, 4, 5);
    for (auto& v : x.data()) v = static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0));
    const Tensor4 r = random_tensor(rng, 2, 3, 4, 5);
    const Tensor4 g = nn::relu_backward(x, r);
    auto obj = [&] { return dot(r, nn::relu(x)); };
    return compare_grad(x.data(), g.data(), 0.05, obj);
}

inline double batchnorm_grad_error(Rng& rng) {
    const int n = 2 + static_cast<int>(rng.index(2));
    const int c = 1 + static_cast<int>(rng.index(3));
    Tensor4 x = random_tensor(rng, n, c, 3, 4);
    std::vector<float> scale = random_vector(rng, static_cast<std::size_t>(c), 0.5, 1.5);
    std::vector<float> shift = random_vector(rng, static_cast<std::size_t>(c));
    const std::vector<float> rm(static_cast<std::size_t>(c), 0.0f), rv(static_cast<std::size_t>(c), 1.0f);
    const Tensor4 r = random_tensor(rng, n, c, 3, 4);
    nn::BatchNormCache cache;
    nn::batchnorm_forward(x, scale, shift, rm, rv, Mode::train, &cache);
    const auto g = nn::batchnorm_backward(r, scale, cache);
    auto obj = [&] {
        nn::BatchNormCache tmp;
        return dot(r, nn::batchnorm_forward(x, scale, shift, rm, rv, Mode::train, &tmp));
    };
    double e = compare_grad(x.data(), g.grad_x.data(), 1e-2, obj);
    e = std::max(e, compare_grad(scale, g.grad_scale, 1e-2, obj));
    e = std::max(e, compare_grad(shift, g.grad_shift, 1e-2, obj));
    return e;
}

inline double loss_grad_error(Rng& rng, LossKind kind) {
    const int n = 1 + static_cast<int>(rng.index(2));
    const int c = 2 + static_cast<int>(rng.index(3));
    const int margin = static_cast<int>(rng.index(2));
    const int h = 3 + 2 * margin + static_cast<int>(rng.index(3));
    const int w = 3 + 2 * margin + static_cast<int>(rng.index(3));
    const bool positive = kind == LossKind::sid || kind == LossKind::sam;
    Tensor4 pred = random_tensor(rng, n, c, h, w, positive ? 0.1 : -1.0, 1.0);
    const Tensor4 ref = random_tensor(rng, n, c, h, w, positive ? 0.1 : -1.0, 1.0);
    double step = 1e-3;
    if (kind == LossKind::l1) {
        // Keep every residual away from the kink at zero.
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const float d = pred.data()[i] - ref.data()[i];
            if (std::abs(d) < 0.1f) pred.data()[i] = ref.data()[i] + (d < 0 ? -0.1f : 0.1f);
        }
        step = 0.02;
    }
    if (kind == LossKind::sam) {
        // Keep every spectral angle away from the kink at zero.
        for (int i = 0; i < n; ++i)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (;;) {
                        double pp = 0, rr = 0, pr = 0;
                        for (int ch = 0; ch < c; ++ch) {
                            const double p = pred.at(i, ch, y, x), r = ref.at(i, ch, y, x);
                            pp += p * p;
                            rr += r * r;
                            pr += p * r;
                        }
                        if (std::acos(std::min(1.0, pr / std::sqrt(pp * rr))) >= 0.1) break;
                        for (int ch = 0; ch < c; ++ch) pred.at(i, ch, y, x) = static_cast<float>(rng.uniform(0.1, 1.0));
                    }
    }
    const nn::LossSpec spec{kind, margin};
    const auto res = nn::loss_eval(pred, ref, spec);
    auto obj = [&] { return nn::loss_eval(pred, ref, spec).value; };
    return compare_grad(pred.data(), res.grad.data(), step, obj);
}

// Small network with and without batch norm; the objective is the L2 loss.
inline NetworkSpec small_network(bool batch_norm, bool residual) {
    NetworkSpec s;
    s.input = {1, 2, 0};
    s.residual = residual;
    s.layers = {{3, 4, 3, Activation::relu, batch_norm}, {4, 3, 3, Activation::relu, batch_norm},
                {3, 2, 1, Activation::identity, false}};
    return s;
}

inline double network_grad_error(Rng& rng, bool batch_norm, Padding padding) {
    const NetworkSpec spec = small_network(batch_norm, false);
    NetworkParams params = nn::init_params(spec, rng.next());
    for (auto& l : params.layers) {
        for (auto& v : l.weights.data()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
        for (auto& v : l.bias) v = static_cast<float>(rng.uniform(-0.2, 0.2));
        for (auto& v : l.bn_scale) v = static_cast<float>(rng.uniform(0.5, 1.5));
        for (auto& v : l.bn_shift) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    }
    const Tensor4 x = random_tensor(rng, 2, 3, 7, 7);
    nn::ForwardCache cache;
    const Tensor4 y = nn::network_forward(x, spec, params, Mode::train, padding, &cache);
    const Tensor4 t = random_tensor(rng, y.n(), y.c(), y.h(), y.w());
    const nn::LossSpec ls{LossKind::l2, 0};
    const auto loss = nn::loss_eval(y, t, ls);
    const NetworkGrads g = nn::network_backward(loss.grad, spec, params, cache, padding);

    // ReLU masks at the unperturbed point; a coordinate whose perturbation
    // flips any mask sits on a kink and is excluded.
    auto masks = [&](const nn::ForwardCache& c) {
        std::vector<bool> m;
        for (std::size_t l = 0; l < spec.layers.size(); ++l)
            if (spec.layers[l].activation == Activation::relu)
                for (float v : c.layers[l].pre_activation.data()) m.push_back(v > 0.0f);
        return m;
    };
    const std::vector<bool> base = masks(cache);
    nn::ForwardCache probe;
    auto obj = [&] {
        probe = {};
        return nn::loss_eval(nn::network_forward(x, spec, params, Mode::train, padding, &probe), t, ls).value;
    };
    auto smooth = [&] { return masks(probe) == base; };
    // One norm-wise error over every parameter: a conv bias feeding batch
    // norm has an exactly zero gradient, so per-tensor ratios would compare noise.
    std::vector<double> a, n;
    auto add = [&](std::vector<float>& values, const std::vector<float>& analytic) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double d = central_difference(values[i], 1e-2, obj, smooth);
            if (std::isnan(d)) continue;
            a.push_back(analytic[i]);
            n.push_back(d);
        }
    };
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        auto& p = params.layers[l];
        const auto& q = g.layers[l];
        add(p.weights.data(), q.weights.data());
        add(p.bias, q.bias);
        if (spec.layers[l].batch_norm) {
            add(p.bn_scale, q.bn_scale);
            add(p.bn_shift, q.bn_shift);
        }
    }
    return rel_error(a, n);
}

// ---- explicit quaternion arithmetic ----

struct Quat {
    double w = 0, x = 0, y = 0, z = 0;
};

inline Quat operator+(Quat a, Quat b) { return {a.w + b.w, a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Quat operator-(Quat a, Quat b) { return {a.w - b.w, a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Quat operator*(Quat a, double s) { return {a.w * s, a.x * s, a.y * s, a.z * s}; }
inline Quat conj(Quat a) { return {a.w, -a.x, -a.y, -a.z}; }
inline double norm2(Quat a) { return a.w * a.w + a.x * a.x + a.y * a.y + a.z * a.z; }
// Hamilton product, i^2 = j^2 = k^2 = ijk = -1.
inline Quat operator*(Quat a, Quat b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

// Q4 of one whole 4-band image treated as a single block.
inline double quaternion_q4(const MultibandImage& a, const MultibandImage& b) {
    const std::size_t n = a.plane_size();
    auto pixel = [](const MultibandImage& img, std::size_t i) {
        return Quat{img.band(0)[i], img.band(1)[i], img.band(2)[i], img.band(3)[i]};
    };
    Quat ma, mb;
    for (std::size_t i = 0; i < n; ++i) {
        ma = ma + pixel(a, i);
        mb = mb + pixel(b, i);
    }
    ma = ma * (1.0 / n);
    mb = mb * (1.0 / n);
    Quat cov;
    double va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Quat da = pixel(a, i) - ma, db = pixel(b, i) - mb;
        va += norm2(da);
        vb += norm2(db);
        cov = cov + da * conj(db);
    }
    va /= n;
    vb /= n;
    cov = cov * (1.0 / n);
    return 4.0 * std::sqrt(norm2(cov)) * std::sqrt(norm2(ma)) * std::sqrt(norm2(mb)) /
           ((va + vb) * (norm2(ma) + norm2(mb)));
}

// Two-pass UIQI of one window, straight from the definition.
inline double uiqi_window(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        c += (a[i] - ma) * (b[i] - mb);
    }
    va /= n - 1;
    vb /= n - 1;
    c /= n - 1;
    return 4.0 * c * ma * mb / ((va + vb) * (ma * ma + mb * mb));
}

}  // namespace pnn::testing
