#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pnn/tensor.hpp"

namespace pnn {

enum class Padding { same_mirror, valid };
enum class Activation { relu, identity };
enum class Mode { train, eval };
enum class LossKind { l2, l1, sam, sid };

struct LayerSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    Activation activation = Activation::relu;
    bool batch_norm = false;
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Channel order of the network input stack: PAN, upsampled MS, then indices.
struct InputLayout {
    int pan_channels = 1;
    int ms_bands = 4;
    int index_bands = 0;
    int total() const noexcept { return pan_channels + ms_bands + index_bands; }
    friend bool operator==(const InputLayout&, const InputLayout&) = default;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    bool residual = false;
    InputLayout input;
    // Radiance channels (PAN and MS) and targets are divided by this before
    // entering the network; index channels are used as-is.
    float value_scale = 2047.0f;

    void validate() const;
    // Sum over layers of (K - 1) / 2: border lost by valid convolutions.
    int receptive_radius() const;
    int output_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct LayerParams {
    Tensor4 weights;  // (out, in, K, K)
    std::vector<float> bias;
    // Present only for batch-normalized layers.
    std::vector<float> bn_scale, bn_shift, bn_mean, bn_var;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkParams {
    std::vector<LayerParams> layers;

    // Throws ShapeError unless shapes agree with `spec` and all values are finite.
    void check(const NetworkSpec& spec) const;
    // Same layout, every value zero.
    NetworkParams zeros_like() const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// Gradients share the NetworkParams layout; bn_mean / bn_var are unused.
using NetworkGrads = NetworkParams;

namespace nn {

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kSidFloor = 1e-12;

// ---- convolution ----

struct ConvGrads {
    Tensor4 grad_x;
    Tensor4 grad_w;
    std::vector<float> grad_b;
};

// Cross-correlation z(m) = sum_n w(m, n) * x(n) + b(m). `same_mirror` pads by
// (K-1)/2 with symmetric extension and keeps H x W; `valid` shrinks by K-1.
Tensor4 conv_forward(const Tensor4& x, const Tensor4& w, std::span<const float> b, Padding padding);
ConvGrads conv_backward(const Tensor4& x, const Tensor4& w, const Tensor4& grad_out, Padding padding,
                        bool need_grad_x = true);

// ---- activations ----

Tensor4 relu(const Tensor4& x);
// Passes grad where x > 0; zero at and below 0.
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

// ---- batch normalization ----

struct BatchNormCache {
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> inv_std;
    Tensor4 x_hat;
};

struct BatchNormGrads {
    Tensor4 grad_x;
    std::vector<float> grad_scale;
    std::vector<float> grad_shift;
};

// Train mode normalizes with batch statistics over (N, H, W) and fills
// `cache` (required); eval mode uses the running statistics.
Tensor4 batchnorm_forward(const Tensor4& x, std::span<const float> scale, std::span<const float> shift,
                          std::span<const float> running_mean, std::span<const float> running_var, Mode mode,
                          BatchNormCache* cache);
BatchNormGrads batchnorm_backward(const Tensor4& grad_out, std::span<const float> scale, const BatchNormCache& cache);
// running <- momentum * running + (1 - momentum) * batch
void batchnorm_update_running(std::vector<float>& running_mean, std::vector<float>& running_var,
                              const BatchNormCache& cache);

// ---- network ----

// Three-layer architecture per sensor ("ik", "ge1", "wv2", "wv3"). `augment`
// adds the radiometric-index input channels (5 -> 7, 9 -> 13).
NetworkSpec table1_spec(std::string_view sensor, bool residual, bool augment = false);

// Configurable-depth variant: `depth` layers, first with `first_kernel`, the
// rest `kernel` x `kernel` with `features` channels, batch norm on hidden layers.
NetworkSpec deep_spec(int ms_bands, int depth, int features, int first_kernel, int kernel, bool residual,
                      int index_bands = 0);

// Biases zero; ReLU-layer weights with std sqrt(2 / fan_in), output-layer
// weights with std 1e-3. BN scale 1, shift 0, running var 1.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

struct LayerCache {
    Tensor4 input;
    Tensor4 pre_activation;  // after conv (+ batch norm)
    BatchNormCache bn;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
};

// Chained layers. For residual specs the output is the network branch only;
// the skip-add happens in the pansharpening pipeline. Pass `cache` to enable backward.
Tensor4 network_forward(const Tensor4& x, const NetworkSpec& spec, const NetworkParams& params, Mode mode,
                        Padding padding, ForwardCache* cache = nullptr);

// Gradients of a scalar objective given d(objective)/d(output).
NetworkGrads network_backward(const Tensor4& grad_out, const NetworkSpec& spec, const NetworkParams& params,
                              const ForwardCache& cache, Padding padding);

// ---- losses ----

struct LossSpec {
    LossKind kind = LossKind::l1;
    int crop_margin = 0;
};

struct LossResult {
    double value = 0.0;
    Tensor4 grad;  // d(value)/d(pred), shape of pred
};

// Both tensors are cropped to the centered window of size ref - 2*crop_margin.
// L2/L1: mean over elements. SAM: mean angle (radians) over pixels with
// non-zero spectra. SID: mean symmetric KL over pixels.
LossResult loss_eval(const Tensor4& pred, const Tensor4& ref, const LossSpec& spec);

LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind kind);

}  // namespace nn
}  // namespace pnn
