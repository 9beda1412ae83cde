#include "pnn/adapt.hpp"

#include <algorithm>

namespace pnn::adapt {

namespace {

class AdaptError : public Error {
public:
    explicit AdaptError(const std::string& what) : Error("adapt.invalid", what) {}
};

void check_pair(const MultibandImage& ms, const MultibandImage& pan, const SensorProfile& profile,
                const NetworkSpec& spec) {
    if (pan.bands() != 1) throw AdaptError("pan must have one band");
    if (pan.width() != ms.width() * profile.ratio || pan.height() != ms.height() * profile.ratio)
        throw AdaptError("pan " + std::to_string(pan.width()) + "x" + std::to_string(pan.height()) +
                         " is not ms " + std::to_string(ms.width()) + "x" + std::to_string(ms.height()) +
                         " times ratio " + std::to_string(profile.ratio));
    if (ms.bands() != spec.input.ms_bands)
        throw ShapeError("network expects " + std::to_string(spec.input.ms_bands) + " MS bands, image has " +
                         std::to_string(ms.bands()));
    if (spec.input.index_bands > 0 && spec.input.index_bands != static_cast<int>(profile.indices.size()))
        throw ShapeError("network index channels do not match the sensor profile's index recipe");
    if (spec.output_channels() != ms.bands()) throw ShapeError("network output channels must match MS bands");
}

}  // namespace

InputStack prepare_inputs(const MultibandImage& ms, const MultibandImage& pan, const SensorProfile& profile,
                          const NetworkSpec& spec) {
    spec.validate();
    check_pair(ms, pan, profile, spec);
    InputStack out;
    out.ms_up = dsp::interp23(ms, profile.ratio);
    out.ms_up.set_bit_depth(ms.bit_depth());
    if (spec.input.index_bands > 0) {
        const MultibandImage idx_up = dsp::interp23(dsp::radiometric_indices(ms, profile), profile.ratio);
        const MultibandImage* parts[] = {&pan, &out.ms_up, &idx_up};
        out.stack = raster::stack_bands(parts);
    } else {
        const MultibandImage* parts[] = {&pan, &out.ms_up};
        out.stack = raster::stack_bands(parts);
    }
    return out;
}

std::vector<TrainingSample> wald_training_set(const MultibandImage& ms, const MultibandImage& pan,
                                              const SensorProfile& profile, const NetworkSpec& spec, int tile,
                                              int count, std::uint64_t seed) {
    const WaldTriplet wald = dsp::wald_degrade(ms, pan, profile);
    const InputStack in = prepare_inputs(wald.ms_lr, wald.pan_lr, profile, spec);
    if (tile > in.stack.width() || tile > in.stack.height())
        throw AdaptError("image too small: reduced-scale size " + std::to_string(in.stack.width()) + "x" +
                         std::to_string(in.stack.height()) + " cannot hold a " + std::to_string(tile) + " tile");
    if (!spec.residual)
        return raster::extract_tiles(in.stack, wald.reference, tile, count, seed, TargetKind::full);
    MultibandImage residual = wald.reference;
    for (std::size_t i = 0; i < residual.size(); ++i) residual.data()[i] -= in.ms_up.data()[i];
    return raster::extract_tiles(in.stack, residual, tile, count, seed, TargetKind::residual);
}

int finetune_tile_count(int pan_width, int pan_height, int ratio, int tile, int max_tiles) {
    const long long w = pan_width / ratio;
    const long long h = pan_height / ratio;
    if (w < tile || h < tile) return 0;
    const long long positions = (w - tile + 1) * (h - tile + 1);
    return static_cast<int>(std::min<long long>(positions, max_tiles));
}

NetworkParams finetune(const NetworkParams& params, const NetworkSpec& spec, const MultibandImage& target_ms,
                       const MultibandImage& target_pan, const SensorProfile& profile, const FinetuneConfig& config) {
    params.check(spec);
    if (config.iterations <= 0) return params;
    const int count = finetune_tile_count(target_pan.width(), target_pan.height(), profile.ratio, config.tile,
                                          config.max_tiles);
    if (count <= 0)
        throw AdaptError("target too small to yield one " + std::to_string(config.tile) + "x" +
                         std::to_string(config.tile) + " tile at reduced scale");
    const auto samples = wald_training_set(target_ms, target_pan, profile, spec, config.tile, count, config.seed);

    TrainConfig tc;
    tc.batch_size = config.batch_size;
    tc.iterations = config.iterations;
    tc.loss = config.loss;
    tc.padding = Padding::same_mirror;
    tc.crop_margin = -1;
    tc.validation_every = 0;
    tc.seed = config.seed;
    tc.momentum = config.momentum;
    tc.learning_rates = config.learning_rates;
    return optim::train(samples, spec, tc, {}, params).params;
}

Tensor4 to_network_input(const MultibandImage& stack, const NetworkSpec& spec) {
    if (stack.bands() != spec.input.total()) throw ShapeError("input stack does not match network input layout");
    Tensor4 x(1, stack.bands(), stack.height(), stack.width());
    const int radiance = spec.input.pan_channels + spec.input.ms_bands;
    const float inv = 1.0f / spec.value_scale;
    for (int b = 0; b < stack.bands(); ++b) {
        const auto src = stack.band(b);
        float* dst = x.sample(0) + static_cast<std::size_t>(b) * x.plane();
        const float k = b < radiance ? inv : 1.0f;
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * k;
    }
    return x;
}

MultibandImage from_network_output(const Tensor4& out, const NetworkSpec& spec, int bit_depth) {
    MultibandImage img(out.w(), out.h(), out.c(), bit_depth);
    std::transform(out.data().begin(), out.data().begin() + static_cast<std::ptrdiff_t>(out.item()), img.data().begin(),
                   [s = spec.value_scale](float v) { return v * s; });
    return img;
}

MultibandImage pansharpen(const NetworkParams& params, const NetworkSpec& spec, const MultibandImage& ms,
                          const MultibandImage& pan, const SensorProfile& profile) {
    params.check(spec);
    const InputStack in = prepare_inputs(ms, pan, profile, spec);
    const Tensor4 y = nn::network_forward(to_network_input(in.stack, spec), spec, params, Mode::eval,
                                          Padding::same_mirror);
    MultibandImage out = from_network_output(y, spec, ms.bit_depth());
    if (spec.residual)
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += in.ms_up.data()[i];
    return out;
}

MultibandImage pansharpen_tiled(const NetworkParams& params, const NetworkSpec& spec, const MultibandImage& ms,
                                const MultibandImage& pan, const SensorProfile& profile, int tile, int overlap,
                                TiledStats* stats) {
    params.check(spec);
    if (tile <= 0) throw AdaptError("tile must be positive");
    if (overlap < spec.receptive_radius())
        throw AdaptError("overlap " + std::to_string(overlap) + " smaller than receptive radius " +
                         std::to_string(spec.receptive_radius()));
    const InputStack in = prepare_inputs(ms, pan, profile, spec);
    const int W = in.stack.width();
    const int H = in.stack.height();
    MultibandImage out(W, H, spec.output_channels(), ms.bit_depth());
    TiledStats local;
    for (int y0 = 0; y0 < H; y0 += tile) {
        for (int x0 = 0; x0 < W; x0 += tile) {
            const int cx1 = std::min(W, x0 + tile), cy1 = std::min(H, y0 + tile);
            const int rx0 = std::max(0, x0 - overlap), ry0 = std::max(0, y0 - overlap);
            const int rx1 = std::min(W, cx1 + overlap), ry1 = std::min(H, cy1 + overlap);
            const MultibandImage window = raster::crop(in.stack, rx0, ry0, rx1 - rx0, ry1 - ry0);
            local.max_tile_values = std::max(local.max_tile_values, window.size());
            ++local.tiles;
            const Tensor4 y = nn::network_forward(to_network_input(window, spec), spec, params, Mode::eval,
                                                  Padding::same_mirror);
            for (int b = 0; b < out.bands(); ++b)
                for (int yy = y0; yy < cy1; ++yy)
                    for (int xx = x0; xx < cx1; ++xx) {
                        float v = y.at(0, b, yy - ry0, xx - rx0) * spec.value_scale;
                        if (spec.residual) v += in.ms_up.at(b, yy, xx);
                        out.at(b, yy, xx) = v;
                    }
        }
    }
    if (stats) *stats = local;
    return out;
}

}  // namespace pnn::adapt
