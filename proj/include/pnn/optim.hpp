#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pnn/nn.hpp"
#include "pnn/raster.hpp"

namespace pnn {

struct OptimizerState {
    NetworkParams velocity;
    double momentum = 0.9;
    std::vector<double> learning_rates;  // one per layer

    // Zero velocity shaped like `params`.
    static OptimizerState create(const NetworkParams& params, std::vector<double> learning_rates,
                                 double momentum = 0.9);
};

struct TrainConfig {
    int batch_size = 128;
    long long iterations = 1000;
    double time_budget_seconds = 0.0;  // 0 = unlimited
    LossKind loss = LossKind::l1;
    Padding padding = Padding::valid;
    // Border excluded from the loss; -1 selects the network's receptive radius.
    int crop_margin = -1;
    long long validation_every = 100;  // 0 disables periodic validation
    std::uint64_t seed = 1;
    double momentum = 0.9;
    std::vector<double> learning_rates;  // empty = 1e-4 for every layer
};

struct HistoryRow {
    long long iteration = 0;
    double seconds = 0.0;
    double loss = 0.0;
    double val_mse = 0.0;  // NaN when not validated at this row
    double val_mae = 0.0;
};

struct TrainResult {
    NetworkParams params;
    std::vector<HistoryRow> history;
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& what) : Error("optim.diverged", what) {}
};

namespace optim {

// Baseline per-layer rates for the three-layer network.
inline const std::vector<double> kBaselineRates{1e-4, 1e-4, 1e-5};
inline constexpr double kDefaultRate = 1e-4;

// velocity <- mu * velocity + lr_l * grad ; params <- params - velocity
void sgd_momentum_step(NetworkParams& params, const NetworkGrads& grads, OptimizerState& state);

// Stacks samples into network tensors, dividing radiance channels and targets by spec.value_scale.
Tensor4 batch_inputs(std::span<const TrainingSample> samples, std::span<const std::size_t> order,
                     const NetworkSpec& spec);
Tensor4 batch_targets(std::span<const TrainingSample> samples, std::span<const std::size_t> order,
                      const NetworkSpec& spec);

struct ValidationResult {
    double mse = 0.0;
    double mae = 0.0;
};

// Mean squared / absolute error over all target values in the network's
// (scaled) domain; residual targets are compared in residual space.
ValidationResult validate(const NetworkParams& params, const NetworkSpec& spec,
                          std::span<const TrainingSample> val_samples, Padding padding = Padding::same_mirror,
                          int crop_margin = 0);

using ProgressCallback = std::function<void(const HistoryRow&)>;

// Trains from `initial` (or a fresh seeded initialization) with mini-batches
// drawn without replacement per epoch.
TrainResult train(std::span<const TrainingSample> samples, const NetworkSpec& spec, const TrainConfig& config,
                  std::span<const TrainingSample> val_samples = {},
                  const std::optional<NetworkParams>& initial = std::nullopt, const ProgressCallback& progress = {});

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path);

// ---- checkpoints ----
// "PNNW" | u16 version | spec | raw f32 tensors in layer order (all little-endian).

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    NetworkSpec spec;
    NetworkParams params;
};

void save_checkpoint(const NetworkParams& params, const NetworkSpec& spec, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Also requires the stored spec to equal `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected);

std::vector<std::uint8_t> encode_checkpoint(const NetworkParams& params, const NetworkSpec& spec);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace optim
}  // namespace pnn
