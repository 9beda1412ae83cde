#include <cmath>

#include "pnn/nn.hpp"

namespace pnn::nn {

Tensor4 relu(const Tensor4& x) {
    Tensor4 out = x;
    for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
    if (!x.same_shape(grad_out)) throw ShapeError("relu_backward: shape mismatch");
    Tensor4 g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(x.data()[i] > 0.0f)) g.data()[i] = 0.0f;
    return g;
}

Tensor4 batchnorm_forward(const Tensor4& x, std::span<const float> scale, std::span<const float> shift,
                          std::span<const float> running_mean, std::span<const float> running_var, Mode mode,
                          BatchNormCache* cache) {
    const auto channels = static_cast<std::size_t>(x.c());
    if (scale.size() != channels || shift.size() != channels || running_mean.size() != channels ||
        running_var.size() != channels)
        throw ShapeError("batch norm parameters do not match channel count");
    const std::size_t plane = x.plane();
    const std::size_t count = plane * static_cast<std::size_t>(x.n());

    std::vector<double> mean(channels), var(channels);
    if (mode == Mode::train) {
        if (count < 2) throw ShapeError("batch norm in train mode needs at least two values per channel");
        if (!cache) throw ShapeError("batch norm in train mode needs a cache");
        for (std::size_t c = 0; c < channels; ++c) {
            double s = 0.0;
            for (int n = 0; n < x.n(); ++n) {
                const float* p = x.sample(n) + c * plane;
                for (std::size_t i = 0; i < plane; ++i) s += p[i];
            }
            const double m = s / static_cast<double>(count);
            double ss = 0.0;
            for (int n = 0; n < x.n(); ++n) {
                const float* p = x.sample(n) + c * plane;
                for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
            }
            mean[c] = m;
            var[c] = ss / static_cast<double>(count);
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            mean[c] = running_mean[c];
            var[c] = running_var[c];
        }
    }

    Tensor4 out(x.n(), x.c(), x.h(), x.w());
    std::vector<double> inv_std(channels);
    for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kBatchNormEpsilon);
    Tensor4 x_hat;
    if (cache) x_hat = Tensor4(x.n(), x.c(), x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            const float* p = x.sample(n) + c * plane;
            float* o = out.sample(n) + c * plane;
            float* xh = cache ? x_hat.sample(n) + c * plane : nullptr;
            for (std::size_t i = 0; i < plane; ++i) {
                const double h = (p[i] - mean[c]) * inv_std[c];
                if (xh) xh[i] = static_cast<float>(h);
                o[i] = static_cast<float>(scale[c] * h + shift[c]);
            }
        }
    if (cache) {
        cache->mean = std::move(mean);
        cache->var = std::move(var);
        cache->inv_std = std::move(inv_std);
        cache->x_hat = std::move(x_hat);
    }
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor4& grad_out, std::span<const float> scale, const BatchNormCache& cache) {
    const Tensor4& x_hat = cache.x_hat;
    if (!grad_out.same_shape(x_hat)) throw ShapeError("batchnorm_backward: shape mismatch");
    const auto channels = static_cast<std::size_t>(x_hat.c());
    const std::size_t plane = x_hat.plane();
    const double count = static_cast<double>(plane * static_cast<std::size_t>(x_hat.n()));

    BatchNormGrads g;
    g.grad_x = Tensor4(x_hat.n(), x_hat.c(), x_hat.h(), x_hat.w());
    g.grad_scale.assign(channels, 0.0f);
    g.grad_shift.assign(channels, 0.0f);
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < x_hat.n(); ++n) {
            const float* go = grad_out.sample(n) + c * plane;
            const float* xh = x_hat.sample(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += go[i];
                sum_gx += static_cast<double>(go[i]) * xh[i];
            }
        }
        g.grad_shift[c] = static_cast<float>(sum_g);
        g.grad_scale[c] = static_cast<float>(sum_gx);
        // dx = scale * inv_std / N * (N * dy - sum(dy) - x_hat * sum(dy * x_hat))
        const double k = scale[c] * cache.inv_std[c] / count;
        for (int n = 0; n < x_hat.n(); ++n) {
            const float* go = grad_out.sample(n) + c * plane;
            const float* xh = x_hat.sample(n) + c * plane;
            float* gx = g.grad_x.sample(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i)
                gx[i] = static_cast<float>(k * (count * go[i] - sum_g - xh[i] * sum_gx));
        }
    }
    return g;
}

void batchnorm_update_running(std::vector<float>& running_mean, std::vector<float>& running_var,
                              const BatchNormCache& cache) {
    if (running_mean.size() != cache.mean.size() || running_var.size() != cache.var.size())
        throw ShapeError("running statistics do not match batch statistics");
    for (std::size_t c = 0; c < running_mean.size(); ++c) {
        running_mean[c] = static_cast<float>(kBatchNormMomentum * running_mean[c] + (1.0 - kBatchNormMomentum) * cache.mean[c]);
        running_var[c] = static_cast<float>(kBatchNormMomentum * running_var[c] + (1.0 - kBatchNormMomentum) * cache.var[c]);
    }
}

}  // namespace pnn::nn
