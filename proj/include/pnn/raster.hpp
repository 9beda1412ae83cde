#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pnn/error.hpp"

namespace pnn {

// Planar (band-sequential) multiband raster of 32-bit floats. Band b, row y,
// column x lives at data[(b * height + y) * width + x].
class MultibandImage {
public:
    MultibandImage() = default;
    MultibandImage(int width, int height, int bands, int bit_depth = 11, float fill = 0.0f);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int bands() const noexcept { return bands_; }
    int bit_depth() const noexcept { return bit_depth_; }
    void set_bit_depth(int bits) noexcept { bit_depth_ = bits; }

    std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int band, int y, int x) noexcept {
        return data_[(static_cast<std::size_t>(band) * height_ + y) * width_ + x];
    }
    float at(int band, int y, int x) const noexcept {
        return data_[(static_cast<std::size_t>(band) * height_ + y) * width_ + x];
    }

    std::span<float> band(int b) noexcept {
        return {data_.data() + static_cast<std::size_t>(b) * plane_size(), plane_size()};
    }
    std::span<const float> band(int b) const noexcept {
        return {data_.data() + static_cast<std::size_t>(b) * plane_size(), plane_size()};
    }

    std::vector<float>& data() noexcept { return data_; }
    const std::vector<float>& data() const noexcept { return data_; }

    bool same_shape(const MultibandImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && bands_ == other.bands_;
    }

    // Throws RasterError(invalid_image) on a length mismatch or non-finite value.
    void validate() const;

    friend bool operator==(const MultibandImage&, const MultibandImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int bands_ = 0;
    int bit_depth_ = 11;
    std::vector<float> data_;
};

class RasterError : public Error {
public:
    enum class Kind { bad_magic, bad_version, dimension_overflow, truncated, trailing_data, invalid_image, invalid_argument, io };

    RasterError(Kind kind, const std::string& what);
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

enum class TargetKind { full, residual };

struct TrainingSample {
    MultibandImage input;   // stacked channels: PAN, upsampled MS, optional indices
    MultibandImage target;  // MS band count; reference or reference minus upsampled MS
    TargetKind target_kind = TargetKind::full;
};

struct TileOrigin {
    int x = 0;
    int y = 0;
    friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

namespace raster {

// MBIR on-disk layout (all little-endian):
//   "MBIR" | u16 version | u32 width | u32 height | u32 bands | u16 bit_depth | f32 payload
inline constexpr std::array<char, 4> kMagic{'M', 'B', 'I', 'R'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 20;

MultibandImage read_raster(const std::filesystem::path& path);
void write_raster(const MultibandImage& img, const std::filesystem::path& path);

// In-memory codec used by the file functions.
std::vector<std::uint8_t> encode(const MultibandImage& img);
MultibandImage decode(std::span<const std::uint8_t> bytes);

// Nearest-rank percentile of `values`, pct in [0, 100]. pct == 0 gives the minimum.
float percentile_nearest_rank(std::span<const float> values, double pct);

// Linear stretch of one band between its low/high percentiles into [0, 255].
// A band with equal low and high values maps to 128 everywhere.
std::vector<std::uint8_t> stretch_band(std::span<const float> values, double low_pct, double high_pct);

// Writes a binary PPM (P6) from three stretched bands.
void export_rgb_preview(const MultibandImage& img, std::array<int, 3> band_triplet,
                        double low_pct, double high_pct, const std::filesystem::path& path);

// Sub-image copy; the window must lie inside `img`.
MultibandImage crop(const MultibandImage& img, int x0, int y0, int width, int height);

// Concatenates bands of equally sized images, in argument order.
MultibandImage stack_bands(std::span<const MultibandImage* const> parts);

// `count` top-left corners drawn uniformly with replacement from all valid
// positions of a `tile` x `tile` window. Deterministic under `seed`.
std::vector<TileOrigin> sample_tile_origins(int width, int height, int tile, int count, std::uint64_t seed);

// Crops aligned (input, target) tile pairs at sampled origins.
std::vector<TrainingSample> extract_tiles(const MultibandImage& input_stack, const MultibandImage& target,
                                          int tile, int count, std::uint64_t seed, TargetKind kind);

// Convenience form: input = PAN + upsampled MS; target = ref (full) or
// ref - upsampled MS (residual). All three at PAN resolution.
std::vector<TrainingSample> extract_tiles(const MultibandImage& ms_up, const MultibandImage& pan,
                                          const MultibandImage& ref, int tile, int count, std::uint64_t seed,
                                          TargetKind kind = TargetKind::full);

}  // namespace raster
}  // namespace pnn
