#include <cmath>

#include "pnn/nn.hpp"
#include "pnn/random.hpp"

namespace pnn {

void NetworkSpec::validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    if (layers.front().in_channels != input.total())
        throw ShapeError("first layer expects " + std::to_string(layers.front().in_channels) +
                         " channels but the input layout has " + std::to_string(input.total()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.in_channels <= 0 || L.out_channels <= 0) throw ShapeError("layer channel counts must be positive");
        if (L.kernel <= 0 || L.kernel % 2 == 0) throw ShapeError("layer kernel sizes must be odd");
        if (l + 1 < layers.size() && layers[l + 1].in_channels != L.out_channels)
            throw ShapeError("layer " + std::to_string(l + 1) + " input does not chain to layer " + std::to_string(l));
    }
    if (layers.back().activation != Activation::identity) throw ShapeError("last layer must be linear");
    if (residual && layers.back().out_channels != input.ms_bands)
        throw ShapeError("residual network must output one channel per MS band");
    if (!(value_scale > 0.0f)) throw ShapeError("value_scale must be positive");
}

int NetworkSpec::receptive_radius() const {
    int r = 0;
    for (const auto& L : layers) r += (L.kernel - 1) / 2;
    return r;
}

void NetworkParams::check(const NetworkSpec& spec) const {
    if (layers.size() != spec.layers.size())
        throw ShapeError("parameters have " + std::to_string(layers.size()) + " layers, spec has " +
                         std::to_string(spec.layers.size()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& S = spec.layers[l];
        const auto& P = layers[l];
        const auto where = "layer " + std::to_string(l) + ": ";
        if (P.weights.n() != S.out_channels || P.weights.c() != S.in_channels || P.weights.h() != S.kernel ||
            P.weights.w() != S.kernel)
            throw ShapeError(where + "weights " + P.weights.shape_string() + " do not match spec");
        if (P.bias.size() != static_cast<std::size_t>(S.out_channels)) throw ShapeError(where + "bias length");
        const std::size_t bn = S.batch_norm ? static_cast<std::size_t>(S.out_channels) : 0;
        if (P.bn_scale.size() != bn || P.bn_shift.size() != bn || P.bn_mean.size() != bn || P.bn_var.size() != bn)
            throw ShapeError(where + "batch-norm parameter sizes");
        if (!P.weights.all_finite()) throw ShapeError(where + "non-finite weights");
        for (const auto* v : {&P.bias, &P.bn_scale, &P.bn_shift, &P.bn_mean, &P.bn_var})
            for (float x : *v)
                if (!std::isfinite(x)) throw ShapeError(where + "non-finite parameter");
    }
}

NetworkParams NetworkParams::zeros_like() const {
    NetworkParams z = *this;
    for (auto& L : z.layers) {
        L.weights.fill(0.0f);
        for (auto* v : {&L.bias, &L.bn_scale, &L.bn_shift, &L.bn_mean, &L.bn_var}) std::fill(v->begin(), v->end(), 0.0f);
    }
    return z;
}

namespace nn {

NetworkSpec table1_spec(std::string_view sensor, bool residual, bool augment) {
    int bands = 0;
    int first_kernel = 0;
    if (sensor == "ik") {
        bands = 4;
        first_kernel = 5;
    } else if (sensor == "ge1") {
        bands = 4;
        first_kernel = 9;
    } else if (sensor == "wv2" || sensor == "wv3") {
        bands = 8;
        first_kernel = 9;
    } else {
        throw ShapeError("unknown sensor '" + std::string(sensor) + "' (expected ik, ge1, wv2, wv3)");
    }
    NetworkSpec spec;
    spec.residual = residual;
    spec.input.pan_channels = 1;
    spec.input.ms_bands = bands;
    spec.input.index_bands = augment ? (bands == 8 ? 4 : 2) : 0;
    spec.layers = {
        {spec.input.total(), 48, first_kernel, Activation::relu, false},
        {48, 32, 5, Activation::relu, false},
        {32, bands, 5, Activation::identity, false},
    };
    spec.validate();
    return spec;
}

NetworkSpec deep_spec(int ms_bands, int depth, int features, int first_kernel, int kernel, bool residual,
                      int index_bands) {
    if (depth < 2) throw ShapeError("deep_spec needs at least two layers");
    NetworkSpec spec;
    spec.residual = residual;
    spec.input.ms_bands = ms_bands;
    spec.input.index_bands = index_bands;
    spec.layers.push_back({spec.input.total(), features, first_kernel, Activation::relu, true});
    for (int l = 1; l + 1 < depth; ++l) spec.layers.push_back({features, features, kernel, Activation::relu, true});
    spec.layers.push_back({features, ms_bands, kernel, Activation::identity, false});
    spec.validate();
    return spec;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    NetworkParams params;
    for (const auto& S : spec.layers) {
        LayerParams P;
        P.weights = Tensor4(S.out_channels, S.in_channels, S.kernel, S.kernel);
        const double fan_in = static_cast<double>(S.in_channels) * S.kernel * S.kernel;
        const double stddev = S.activation == Activation::relu ? std::sqrt(2.0 / fan_in) : 1e-3;
        for (float& w : P.weights.data()) w = static_cast<float>(rng.normal(0.0, stddev));
        P.bias.assign(static_cast<std::size_t>(S.out_channels), 0.0f);
        if (S.batch_norm) {
            const auto c = static_cast<std::size_t>(S.out_channels);
            P.bn_scale.assign(c, 1.0f);
            P.bn_shift.assign(c, 0.0f);
            P.bn_mean.assign(c, 0.0f);
            P.bn_var.assign(c, 1.0f);
        }
        params.layers.push_back(std::move(P));
    }
    return params;
}

Tensor4 network_forward(const Tensor4& x, const NetworkSpec& spec, const NetworkParams& params, Mode mode,
                        Padding padding, ForwardCache* cache) {
    params.check(spec);
    if (x.c() != spec.input.total())
        throw ShapeError("input has " + std::to_string(x.c()) + " channels, network expects " +
                         std::to_string(spec.input.total()));
    if (cache) cache->layers.assign(spec.layers.size(), {});
    Tensor4 cur = x;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& S = spec.layers[l];
        const auto& P = params.layers[l];
        Tensor4 z = conv_forward(cur, P.weights, P.bias, padding);
        if (padding == Padding::same_mirror && (z.h() != cur.h() || z.w() != cur.w()))
            throw ShapeError("same padding changed spatial size at layer " + std::to_string(l));
        if (S.batch_norm)
            z = batchnorm_forward(z, P.bn_scale, P.bn_shift, P.bn_mean, P.bn_var, mode,
                                  cache ? &cache->layers[l].bn : nullptr);
        Tensor4 y = S.activation == Activation::relu ? relu(z) : z;
        if (cache) {
            cache->layers[l].input = std::move(cur);
            cache->layers[l].pre_activation = std::move(z);
        }
        cur = std::move(y);
    }
    return cur;
}

NetworkGrads network_backward(const Tensor4& grad_out, const NetworkSpec& spec, const NetworkParams& params,
                              const ForwardCache& cache, Padding padding) {
    if (cache.layers.size() != spec.layers.size()) throw ShapeError("forward cache does not match network");
    NetworkGrads grads = params.zeros_like();
    Tensor4 g = grad_out;
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const auto& S = spec.layers[li];
        const auto& P = params.layers[li];
        const auto& C = cache.layers[li];
        if (S.activation == Activation::relu) g = relu_backward(C.pre_activation, g);
        if (S.batch_norm) {
            auto bn = batchnorm_backward(g, P.bn_scale, C.bn);
            grads.layers[li].bn_scale = std::move(bn.grad_scale);
            grads.layers[li].bn_shift = std::move(bn.grad_shift);
            g = std::move(bn.grad_x);
        }
        auto cg = conv_backward(C.input, P.weights, g, padding, li > 0);
        grads.layers[li].weights = std::move(cg.grad_w);
        grads.layers[li].bias = std::move(cg.grad_b);
        g = std::move(cg.grad_x);
    }
    return grads;
}

}  // namespace nn
}  // namespace pnn
