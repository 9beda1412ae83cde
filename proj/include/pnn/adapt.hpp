#pragma once

#include <cstdint>
#include <vector>

#include "pnn/dsp.hpp"
#include "pnn/nn.hpp"
#include "pnn/optim.hpp"
#include "pnn/raster.hpp"

namespace pnn {

struct FinetuneConfig {
    long long iterations = 50;
    int batch_size = 128;
    int max_tiles = 4096;
    int tile = 33;
    LossKind loss = LossKind::l1;
    double momentum = 0.9;
    std::vector<double> learning_rates;  // empty = optim default
    std::uint64_t seed = 1;
};

// Network input at PAN resolution: PAN, interp23(MS) and, if the network
// asks for them, interpolated radiometric indices of the MS.
struct InputStack {
    MultibandImage stack;
    MultibandImage ms_up;
};

struct TiledStats {
    int tiles = 0;
    std::size_t max_tile_values = 0;  // largest per-tile input buffer, in floats
};

namespace adapt {

InputStack prepare_inputs(const MultibandImage& ms, const MultibandImage& pan, const SensorProfile& profile,
                          const NetworkSpec& spec);

// Wald-protocol training tiles: degrade (ms, pan), build the reduced-scale
// input stack, take the original MS (or its residual) as target.
std::vector<TrainingSample> wald_training_set(const MultibandImage& ms, const MultibandImage& pan,
                                              const SensorProfile& profile, const NetworkSpec& spec, int tile,
                                              int count, std::uint64_t seed);

// Number of tiles fine-tuning draws from a target of the given PAN size.
int finetune_tile_count(int pan_width, int pan_height, int ratio, int tile, int max_tiles);

NetworkParams finetune(const NetworkParams& params, const NetworkSpec& spec, const MultibandImage& target_ms,
                       const MultibandImage& target_pan, const SensorProfile& profile, const FinetuneConfig& config);

MultibandImage pansharpen(const NetworkParams& params, const NetworkSpec& spec, const MultibandImage& ms,
                          const MultibandImage& pan, const SensorProfile& profile);

// Same result as `pansharpen` computed on overlapping windows of
// (tile + 2 * overlap)^2 pixels; overlap must cover the receptive radius.
MultibandImage pansharpen_tiled(const NetworkParams& params, const NetworkSpec& spec, const MultibandImage& ms,
                                const MultibandImage& pan, const SensorProfile& profile, int tile, int overlap,
                                TiledStats* stats = nullptr);

// Network-domain helpers shared with the training code.
Tensor4 to_network_input(const MultibandImage& stack, const NetworkSpec& spec);
MultibandImage from_network_output(const Tensor4& out, const NetworkSpec& spec, int bit_depth);

}  // namespace adapt
}  // namespace pnn
