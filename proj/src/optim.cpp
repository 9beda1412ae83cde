#include "pnn/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "pnn/random.hpp"

namespace pnn {

OptimizerState OptimizerState::create(const NetworkParams& params, std::vector<double> learning_rates,
                                      double momentum) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("optim.config", "momentum must lie in [0, 1)");
    if (learning_rates.size() != params.layers.size())
        throw Error("optim.config", "need one learning rate per layer (" + std::to_string(params.layers.size()) + ")");
    for (double a : learning_rates)
        if (!(a > 0.0)) throw Error("optim.config", "learning rates must be positive");
    OptimizerState s;
    s.velocity = params.zeros_like();
    s.momentum = momentum;
    s.learning_rates = std::move(learning_rates);
    return s;
}

namespace optim {

namespace {

void step_vector(std::vector<float>& param, const std::vector<float>& grad, std::vector<float>& vel, double mu,
                 double lr, const char* what, std::size_t layer) {
    if (param.size() != grad.size() || param.size() != vel.size())
        throw ShapeError(std::string("sgd step: ") + what + " shape mismatch at layer " + std::to_string(layer));
    for (std::size_t i = 0; i < param.size(); ++i) {
        if (!std::isfinite(grad[i]))
            throw TrainingError(std::string("non-finite gradient in ") + what + " of layer " + std::to_string(layer) +
                                " at index " + std::to_string(i));
        vel[i] = static_cast<float>(mu * vel[i] + lr * grad[i]);
        param[i] -= vel[i];
    }
}

void check_samples(std::span<const TrainingSample> samples, const NetworkSpec& spec, const char* what) {
    const TargetKind expected = spec.residual ? TargetKind::residual : TargetKind::full;
    for (const auto& s : samples) {
        if (s.input.bands() != spec.input.total())
            throw ShapeError(std::string(what) + ": sample has " + std::to_string(s.input.bands()) +
                             " input channels, network expects " + std::to_string(spec.input.total()));
        if (s.target.bands() != spec.output_channels())
            throw ShapeError(std::string(what) + ": target band count does not match network output");
        if (s.input.width() != s.target.width() || s.input.height() != s.target.height())
            throw ShapeError(std::string(what) + ": input and target sizes differ");
        if (s.target_kind != expected)
            throw ShapeError(std::string(what) + ": target kind does not match the network's residual flag");
        if (s.input.width() != samples.front().input.width() || s.input.height() != samples.front().input.height())
            throw ShapeError(std::string(what) + ": samples must share one tile size");
    }
}

int resolve_margin(const TrainConfig& config, const NetworkSpec& spec) {
    return config.crop_margin >= 0 ? config.crop_margin : spec.receptive_radius();
}

}  // namespace

void sgd_momentum_step(NetworkParams& params, const NetworkGrads& grads, OptimizerState& state) {
    if (params.layers.size() != grads.layers.size() || params.layers.size() != state.velocity.layers.size() ||
        params.layers.size() != state.learning_rates.size())
        throw ShapeError("sgd step: layer counts differ");
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& P = params.layers[l];
        const auto& G = grads.layers[l];
        auto& V = state.velocity.layers[l];
        const double lr = state.learning_rates[l];
        if (!P.weights.same_shape(G.weights)) throw ShapeError("sgd step: weight shape mismatch at layer " + std::to_string(l));
        step_vector(P.weights.data(), G.weights.data(), V.weights.data(), state.momentum, lr, "weights", l);
        step_vector(P.bias, G.bias, V.bias, state.momentum, lr, "bias", l);
        step_vector(P.bn_scale, G.bn_scale, V.bn_scale, state.momentum, lr, "bn_scale", l);
        step_vector(P.bn_shift, G.bn_shift, V.bn_shift, state.momentum, lr, "bn_shift", l);
    }
}

Tensor4 batch_inputs(std::span<const TrainingSample> samples, std::span<const std::size_t> order,
                     const NetworkSpec& spec) {
    const auto& first = samples[order.front()].input;
    Tensor4 x(static_cast<int>(order.size()), first.bands(), first.height(), first.width());
    const int radiance = spec.input.pan_channels + spec.input.ms_bands;
    const float inv = 1.0f / spec.value_scale;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& img = samples[order[i]].input;
        float* dst = x.sample(static_cast<int>(i));
        for (int b = 0; b < img.bands(); ++b) {
            const auto src = img.band(b);
            const float k = b < radiance ? inv : 1.0f;
            for (std::size_t j = 0; j < src.size(); ++j) dst[static_cast<std::size_t>(b) * src.size() + j] = src[j] * k;
        }
    }
    return x;
}

Tensor4 batch_targets(std::span<const TrainingSample> samples, std::span<const std::size_t> order,
                      const NetworkSpec& spec) {
    const auto& first = samples[order.front()].target;
    Tensor4 t(static_cast<int>(order.size()), first.bands(), first.height(), first.width());
    const float inv = 1.0f / spec.value_scale;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& src = samples[order[i]].target.data();
        std::transform(src.begin(), src.end(), t.sample(static_cast<int>(i)), [inv](float v) { return v * inv; });
    }
    return t;
}

ValidationResult validate(const NetworkParams& params, const NetworkSpec& spec,
                          std::span<const TrainingSample> val_samples, Padding padding, int crop_margin) {
    ValidationResult res;
    if (val_samples.empty()) return res;
    check_samples(val_samples, spec, "validate");
    constexpr std::size_t kBatch = 32;
    double se = 0.0, ae = 0.0, count = 0.0;
    std::vector<std::size_t> order;
    for (std::size_t start = 0; start < val_samples.size(); start += kBatch) {
        order.resize(std::min(kBatch, val_samples.size() - start));
        std::iota(order.begin(), order.end(), start);
        const Tensor4 pred_full = nn::network_forward(batch_inputs(val_samples, order, spec), spec, params, Mode::eval, padding);
        const Tensor4 ref_full = batch_targets(val_samples, order, spec);
        const Tensor4 ref = crop_spatial(ref_full, crop_margin, crop_margin);
        const int my = (pred_full.h() - ref.h()) / 2;
        const int mx = (pred_full.w() - ref.w()) / 2;
        if (my < 0 || mx < 0) throw ShapeError("validate: prediction smaller than cropped target");
        const Tensor4 pred = crop_spatial(pred_full, my, mx);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            const double d = static_cast<double>(pred.data()[i]) - ref.data()[i];
            se += d * d;
            ae += std::abs(d);
        }
        count += static_cast<double>(ref.size());
    }
    res.mse = se / count;
    res.mae = ae / count;
    return res;
}

TrainResult train(std::span<const TrainingSample> samples, const NetworkSpec& spec, const TrainConfig& config,
                  std::span<const TrainingSample> val_samples, const std::optional<NetworkParams>& initial,
                  const ProgressCallback& progress) {
    spec.validate();
    if (config.batch_size < 1) throw Error("optim.config", "batch_size must be >= 1");
    if (config.iterations < 0) throw Error("optim.config", "iterations must be >= 0");
    if (samples.empty() && config.iterations > 0) throw Error("optim.config", "no training samples");
    check_samples(samples, spec, "train");

    TrainResult result;
    result.params = initial ? *initial : nn::init_params(spec, Rng::mix(config.seed, 1));
    result.params.check(spec);
    std::vector<double> rates = config.learning_rates;
    if (rates.empty()) rates.assign(spec.layers.size(), kDefaultRate);
    if (rates.size() == 1) rates.assign(spec.layers.size(), rates.front());
    OptimizerState state = OptimizerState::create(result.params, rates, config.momentum);

    const nn::LossSpec loss_spec{config.loss, resolve_margin(config, spec)};
    Rng rng(Rng::mix(config.seed, 2));
    std::vector<std::size_t> perm(samples.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t cursor = perm.size();  // forces a shuffle on the first batch

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    double loss_acc = 0.0;
    long long loss_n = 0;
    std::vector<std::size_t> batch;

    auto emit = [&](long long it) {
        HistoryRow row;
        row.iteration = it;
        row.seconds = elapsed();
        row.loss = loss_n > 0 ? loss_acc / static_cast<double>(loss_n) : std::numeric_limits<double>::quiet_NaN();
        if (!val_samples.empty()) {
            const auto v = validate(result.params, spec, val_samples, config.padding, loss_spec.crop_margin);
            row.val_mse = v.mse;
            row.val_mae = v.mae;
        } else {
            row.val_mse = row.val_mae = std::numeric_limits<double>::quiet_NaN();
        }
        if (!result.history.empty()) row.seconds = std::max(row.seconds, result.history.back().seconds);
        result.history.push_back(row);
        if (progress) progress(row);
        loss_acc = 0.0;
        loss_n = 0;
    };

    for (long long it = 1; it <= config.iterations; ++it) {
        if (cursor >= perm.size()) {
            // Fisher-Yates reshuffle per epoch.
            for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
            cursor = 0;
        }
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), perm.size() - cursor);
        batch.assign(perm.begin() + static_cast<std::ptrdiff_t>(cursor), perm.begin() + static_cast<std::ptrdiff_t>(cursor + take));
        cursor += take;

        const Tensor4 x = batch_inputs(samples, batch, spec);
        const Tensor4 t = batch_targets(samples, batch, spec);
        nn::ForwardCache cache;
        const Tensor4 y = nn::network_forward(x, spec, result.params, Mode::train, config.padding, &cache);
        const auto loss = nn::loss_eval(y, t, loss_spec);
        if (!std::isfinite(loss.value))
            throw TrainingError("loss became non-finite at iteration " + std::to_string(it));
        const NetworkGrads grads = nn::network_backward(loss.grad, spec, result.params, cache, config.padding);
        sgd_momentum_step(result.params, grads, state);
        for (std::size_t l = 0; l < spec.layers.size(); ++l)
            if (spec.layers[l].batch_norm)
                nn::batchnorm_update_running(result.params.layers[l].bn_mean, result.params.layers[l].bn_var,
                                             cache.layers[l].bn);
        loss_acc += loss.value;
        ++loss_n;

        const bool budget_hit = config.time_budget_seconds > 0.0 && elapsed() >= config.time_budget_seconds;
        const bool cadence = config.validation_every > 0 && it % config.validation_every == 0;
        if (cadence || it == config.iterations || budget_hit) emit(it);
        if (budget_hit) break;
    }
    return result;
}

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("optim.io", "cannot open " + path.string() + " for writing");
    out << "iteration,seconds,loss,mse,mae\n";
    out.precision(9);
    for (const auto& r : history)
        out << r.iteration << ',' << r.seconds << ',' << r.loss << ',' << r.val_mse << ',' << r.val_mae << '\n';
}

}  // namespace optim
}  // namespace pnn
