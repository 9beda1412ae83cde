#include "pnn/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "pnn/random.hpp"

namespace pnn {

namespace {

const char* kind_code(RasterError::Kind kind) {
    switch (kind) {
        case RasterError::Kind::bad_magic: return "raster.bad_magic";
        case RasterError::Kind::bad_version: return "raster.bad_version";
        case RasterError::Kind::dimension_overflow: return "raster.dimension_overflow";
        case RasterError::Kind::truncated: return "raster.truncated";
        case RasterError::Kind::trailing_data: return "raster.trailing_data";
        case RasterError::Kind::invalid_image: return "raster.invalid_image";
        case RasterError::Kind::invalid_argument: return "raster.invalid_argument";
        case RasterError::Kind::io: return "raster.io";
    }
    return "raster.unknown";
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

RasterError::RasterError(Kind kind, const std::string& what) : Error(kind_code(kind), what), kind_(kind) {}

MultibandImage::MultibandImage(int width, int height, int bands, int bit_depth, float fill)
    : width_(width), height_(height), bands_(bands), bit_depth_(bit_depth) {
    if (width < 0 || height < 0 || bands < 0)
        throw RasterError(RasterError::Kind::invalid_argument, "negative image dimension");
    data_.assign(static_cast<std::size_t>(width) * height * bands, fill);
}

void MultibandImage::validate() const {
    if (data_.size() != static_cast<std::size_t>(width_) * height_ * bands_)
        throw RasterError(RasterError::Kind::invalid_image, "data length does not match width*height*bands");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i]))
            throw RasterError(RasterError::Kind::invalid_image,
                              "non-finite value at flat index " + std::to_string(i));
    }
}

namespace raster {

std::vector<std::uint8_t> encode(const MultibandImage& img) {
    img.validate();
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + img.size() * 4);
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(img.width()));
    put_u32(out, static_cast<std::uint32_t>(img.height()));
    put_u32(out, static_cast<std::uint32_t>(img.bands()));
    put_u16(out, static_cast<std::uint16_t>(img.bit_depth()));
    for (float v : img.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

MultibandImage decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
        throw RasterError(RasterError::Kind::bad_magic, "missing MBIR magic");
    if (bytes.size() < kHeaderBytes)
        throw RasterError(RasterError::Kind::truncated, "header shorter than 20 bytes");
    const std::uint8_t* p = bytes.data();
    const std::uint16_t version = get_u16(p + 4);
    if (version != kVersion)
        throw RasterError(RasterError::Kind::bad_version, "unsupported MBIR version " + std::to_string(version));
    const std::uint32_t w = get_u32(p + 6);
    const std::uint32_t h = get_u32(p + 10);
    const std::uint32_t b = get_u32(p + 14);
    const std::uint16_t bits = get_u16(p + 18);

    constexpr std::uint64_t kMaxDim = std::numeric_limits<std::int32_t>::max();
    if (w > kMaxDim || h > kMaxDim || b > kMaxDim)
        throw RasterError(RasterError::Kind::dimension_overflow, "dimension exceeds 2^31-1");
    // Payload capped at 2^48 bytes; w * h < 2^62 cannot overflow.
    constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 46;
    const std::uint64_t plane = static_cast<std::uint64_t>(w) * h;
    if (b != 0 && plane > kMaxValues / b)
        throw RasterError(RasterError::Kind::dimension_overflow, "payload size overflows");
    const std::uint64_t payload = plane * b * 4;
    const std::size_t need = static_cast<std::size_t>(payload);
    const std::size_t have = bytes.size() - kHeaderBytes;
    if (have < need)
        throw RasterError(RasterError::Kind::truncated, "payload has " + std::to_string(have) + " bytes, header needs " +
                                                            std::to_string(need));
    if (have > need)
        throw RasterError(RasterError::Kind::trailing_data, "unexpected bytes after payload");

    MultibandImage img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(b), bits);
    const std::uint8_t* q = p + kHeaderBytes;
    auto& data = img.data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(q + 4 * i));
    img.validate();
    return img;
}

MultibandImage read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RasterError(RasterError::Kind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

void write_raster(const MultibandImage& img, const std::filesystem::path& path) {
    const auto bytes = encode(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RasterError(RasterError::Kind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RasterError(RasterError::Kind::io, "write failed for " + path.string());
}

float percentile_nearest_rank(std::span<const float> values, double pct) {
    if (values.empty()) throw RasterError(RasterError::Kind::invalid_argument, "percentile of empty band");
    if (!(pct >= 0.0 && pct <= 100.0))
        throw RasterError(RasterError::Kind::invalid_argument, "percentile outside [0, 100]");
    std::vector<float> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

std::vector<std::uint8_t> stretch_band(std::span<const float> values, double low_pct, double high_pct) {
    if (!(low_pct >= 0.0 && low_pct < high_pct && high_pct <= 100.0))
        throw RasterError(RasterError::Kind::invalid_argument, "need 0 <= low_pct < high_pct <= 100");
    const double lo = percentile_nearest_rank(values, low_pct);
    const double hi = percentile_nearest_rank(values, high_pct);
    std::vector<std::uint8_t> out(values.size(), 128);
    if (!(hi > lo)) return out;
    const double gain = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::round((values[i] - lo) * gain);
        out[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    return out;
}

void export_rgb_preview(const MultibandImage& img, std::array<int, 3> band_triplet, double low_pct, double high_pct,
                        const std::filesystem::path& path) {
    for (int b : band_triplet) {
        if (b < 0 || b >= img.bands())
            throw RasterError(RasterError::Kind::invalid_argument, "band index " + std::to_string(b) + " out of range");
    }
    std::array<std::vector<std::uint8_t>, 3> planes;
    for (int c = 0; c < 3; ++c) planes[c] = stretch_band(img.band(band_triplet[c]), low_pct, high_pct);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RasterError(RasterError::Kind::io, "cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
    std::vector<std::uint8_t> rgb(img.plane_size() * 3);
    for (std::size_t i = 0; i < img.plane_size(); ++i) {
        rgb[3 * i] = planes[0][i];
        rgb[3 * i + 1] = planes[1][i];
        rgb[3 * i + 2] = planes[2][i];
    }
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw RasterError(RasterError::Kind::io, "write failed for " + path.string());
}

MultibandImage crop(const MultibandImage& img, int x0, int y0, int width, int height) {
    if (x0 < 0 || y0 < 0 || width < 0 || height < 0 || x0 + width > img.width() || y0 + height > img.height())
        throw RasterError(RasterError::Kind::invalid_argument, "crop window outside image");
    MultibandImage out(width, height, img.bands(), img.bit_depth());
    for (int b = 0; b < img.bands(); ++b) {
        for (int y = 0; y < height; ++y) {
            const float* src = &img.data()[(static_cast<std::size_t>(b) * img.height() + y0 + y) * img.width() + x0];
            std::copy(src, src + width, &out.at(b, y, 0));
        }
    }
    return out;
}

MultibandImage stack_bands(std::span<const MultibandImage* const> parts) {
    if (parts.empty()) return {};
    const int w = parts.front()->width();
    const int h = parts.front()->height();
    int total = 0;
    for (const auto* p : parts) {
        if (p->width() != w || p->height() != h)
            throw RasterError(RasterError::Kind::invalid_argument, "stack_bands: size mismatch");
        total += p->bands();
    }
    MultibandImage out(w, h, total, parts.front()->bit_depth());
    auto it = out.data().begin();
    for (const auto* p : parts) it = std::copy(p->data().begin(), p->data().end(), it);
    return out;
}

std::vector<TileOrigin> sample_tile_origins(int width, int height, int tile, int count, std::uint64_t seed) {
    if (tile <= 0 || count < 0) throw RasterError(RasterError::Kind::invalid_argument, "tile and count must be positive");
    if (tile > width || tile > height)
        throw RasterError(RasterError::Kind::invalid_argument, "tile size " + std::to_string(tile) +
                                                                   " larger than image " + std::to_string(width) + "x" +
                                                                   std::to_string(height));
    Rng rng(seed);
    const auto nx = static_cast<std::uint64_t>(width - tile + 1);
    const auto ny = static_cast<std::uint64_t>(height - tile + 1);
    std::vector<TileOrigin> origins(static_cast<std::size_t>(count));
    for (auto& o : origins) {
        o.x = static_cast<int>(rng.index(nx));
        o.y = static_cast<int>(rng.index(ny));
    }
    return origins;
}

std::vector<TrainingSample> extract_tiles(const MultibandImage& input_stack, const MultibandImage& target, int tile,
                                          int count, std::uint64_t seed, TargetKind kind) {
    if (input_stack.width() != target.width() || input_stack.height() != target.height())
        throw RasterError(RasterError::Kind::invalid_argument, "input stack and target are not aligned");
    const auto origins = sample_tile_origins(input_stack.width(), input_stack.height(), tile, count, seed);
    std::vector<TrainingSample> samples;
    samples.reserve(origins.size());
    for (const auto& o : origins) {
        samples.push_back({crop(input_stack, o.x, o.y, tile, tile), crop(target, o.x, o.y, tile, tile), kind});
    }
    return samples;
}

std::vector<TrainingSample> extract_tiles(const MultibandImage& ms_up, const MultibandImage& pan,
                                          const MultibandImage& ref, int tile, int count, std::uint64_t seed,
                                          TargetKind kind) {
    if (!ms_up.same_shape(ref) || pan.width() != ref.width() || pan.height() != ref.height())
        throw RasterError(RasterError::Kind::invalid_argument, "ms, pan and ref must be aligned at PAN resolution");
    const MultibandImage* parts[] = {&pan, &ms_up};
    const MultibandImage stack = stack_bands(parts);
    if (kind == TargetKind::full) return extract_tiles(stack, ref, tile, count, seed, kind);
    MultibandImage residual = ref;
    for (std::size_t i = 0; i < residual.size(); ++i) residual.data()[i] -= ms_up.data()[i];
    return extract_tiles(stack, residual, tile, count, seed, kind);
}

}  // namespace raster
}  // namespace pnn
