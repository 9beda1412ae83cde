#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pnn/error.hpp"
#include "pnn/keyvalue.hpp"
#include "pnn/raster.hpp"

namespace pnn {

// Normalized difference (b_a - b_b) / (b_a + b_b + eps) between two MS bands.
struct IndexRecipe {
    std::string name;
    int band_a = 0;
    int band_b = 0;
    friend bool operator==(const IndexRecipe&, const IndexRecipe&) = default;
};

struct SensorProfile {
    std::string name;
    int bands = 4;
    int ratio = 4;
    int bit_depth = 11;
    std::vector<double> gnyq_ms;  // one per band, each in (0, 1)
    double gnyq_pan = 0.15;
    std::vector<IndexRecipe> indices;

    // Throws DspError if any invariant is violated.
    void validate() const;

    // 2 for 4-band sensors, 4 for 8-band sensors.
    static int expected_index_count(int bands);

    friend bool operator==(const SensorProfile&, const SensorProfile&) = default;
};

class DspError : public Error {
public:
    explicit DspError(const std::string& what) : Error("dsp.invalid", what) {}
};

// 1-D factor of a separable 2-D kernel; the 2-D coefficient at (i, j) is taps[i] * taps[j].
struct SeparableKernel {
    std::vector<double> taps;

    int size() const noexcept { return static_cast<int>(taps.size()); }
    int radius() const noexcept { return size() / 2; }
    double at(int i, int j) const { return taps[static_cast<std::size_t>(i)] * taps[static_cast<std::size_t>(j)]; }
};

struct WaldTriplet {
    MultibandImage ms_lr;
    MultibandImage pan_lr;
    MultibandImage reference;
};

namespace dsp {

inline constexpr int kMtfKernelSize = 41;
inline constexpr int kInterpTaps = 23;
inline constexpr double kIndexEpsilon = 1e-9;

// Built-in presets: "ik", "ge1" (4 bands) and "wv2", "wv3" (8 bands).
SensorProfile sensor_preset(std::string_view name);
SensorProfile profile_from_config(const KeyValues& kv);
KeyValues profile_to_config(const SensorProfile& profile);
SensorProfile read_profile(const std::filesystem::path& path);
void write_profile(const SensorProfile& profile, const std::filesystem::path& path);

// Gaussian whose frequency response at 1/(2*ratio) cycles/sample equals gnyq:
// sigma = (ratio / pi) * sqrt(-2 ln gnyq), truncated to `size` taps and normalized.
SeparableKernel mtf_gaussian_kernel(int ratio, double gnyq, int size = kMtfKernelSize);

// Discrete-time Fourier transform magnitude of a symmetric 1-D kernel at f (cycles/sample).
double frequency_response(std::span<const double> taps, double f);

// Sample position kept by decimation: offset + k * ratio, offset = (ratio - 1) / 2.
constexpr int decimation_offset(int ratio) { return (ratio - 1) / 2; }

// Index into [0, n) under half-sample symmetric extension (x[-1] = x[0]).
int mirror_index(int i, int n) noexcept;

// Separable filtering of one plane with symmetric boundary extension.
std::vector<float> filter_plane(std::span<const float> plane, int width, int height, const SeparableKernel& kernel);

MultibandImage lowpass_decimate(const MultibandImage& img, const SeparableKernel& kernel, int ratio);
// Per-band kernels (kernels.size() == img.bands()).
MultibandImage lowpass_decimate(const MultibandImage& img, std::span<const SeparableKernel> kernels, int ratio);

// 23-tap half-band interpolation kernel: center 1, zeros at even offsets from
// the center, odd-offset taps from a Kaiser(beta=8) windowed sinc rescaled to sum 1.
std::vector<double> interp23_kernel();

// Cascade of dyadic stages. Input sample (i, j) lands on output
// (offset + ratio*i, offset + ratio*j) with offset = decimation_offset(ratio).
MultibandImage interp23(const MultibandImage& img, int ratio);

WaldTriplet wald_degrade(const MultibandImage& ms, const MultibandImage& pan, const SensorProfile& profile);

MultibandImage radiometric_indices(const MultibandImage& ms, const SensorProfile& profile);

}  // namespace dsp
}  // namespace pnn
