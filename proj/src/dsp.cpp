#include "pnn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace pnn {

int SensorProfile::expected_index_count(int bands) { return bands >= 8 ? 4 : 2; }

void SensorProfile::validate() const {
    if (bands < 1) throw DspError("profile '" + name + "': bands must be positive");
    if (ratio < 2) throw DspError("profile '" + name + "': ratio must be >= 2");
    if (static_cast<int>(gnyq_ms.size()) != bands)
        throw DspError("profile '" + name + "': gnyq_ms needs one value per band");
    for (double g : gnyq_ms) {
        if (!(g > 0.0 && g < 1.0)) throw DspError("profile '" + name + "': gnyq_ms values must lie in (0,1)");
    }
    if (!(gnyq_pan > 0.0 && gnyq_pan < 1.0)) throw DspError("profile '" + name + "': gnyq_pan must lie in (0,1)");
    if (static_cast<int>(indices.size()) != expected_index_count(bands))
        throw DspError("profile '" + name + "': expected " + std::to_string(expected_index_count(bands)) +
                       " radiometric indices");
    for (const auto& r : indices) {
        if (r.band_a < 0 || r.band_a >= bands || r.band_b < 0 || r.band_b >= bands)
            throw DspError("profile '" + name + "': index '" + r.name + "' references a missing band");
    }
}

namespace dsp {

namespace {

constexpr double kDefaultGnyqMs = 0.30;
constexpr double kDefaultGnyqPan = 0.15;

// Band order: blue, green, red, nir.
std::vector<IndexRecipe> four_band_indices() { return {{"ndvi", 3, 2}, {"ndwi", 1, 3}}; }

// Band order: coastal, blue, green, yellow, red, red-edge, nir1, nir2.
std::vector<IndexRecipe> eight_band_indices() {
    return {{"ndvi", 6, 4}, {"ndwi", 2, 6}, {"ndre", 6, 5}, {"coastal", 0, 7}};
}

// Filters one row of length n at the output positions start, start+step, ...
void filter_line(const float* src, std::ptrdiff_t stride, int n, const std::vector<double>& taps, int start, int step,
                 int count, float* dst, std::ptrdiff_t dst_stride) {
    const int r = static_cast<int>(taps.size()) / 2;
    for (int k = 0; k < count; ++k) {
        const int c = start + k * step;
        double acc = 0.0;
        if (c - r >= 0 && c + r < n) {
            for (int t = -r; t <= r; ++t) acc += taps[static_cast<std::size_t>(t + r)] * src[(c + t) * stride];
        } else {
            for (int t = -r; t <= r; ++t)
                acc += taps[static_cast<std::size_t>(t + r)] * src[mirror_index(c + t, n) * stride];
        }
        dst[k * dst_stride] = static_cast<float>(acc);
    }
}

// Separable filter evaluated only on the decimated grid.
void decimate_plane(std::span<const float> plane, int width, int height, const SeparableKernel& kernel, int ratio,
                    std::span<float> out) {
    const int ow = width / ratio;
    const int oh = height / ratio;
    const int offset = decimation_offset(ratio);
    std::vector<float> horiz(static_cast<std::size_t>(height) * ow);
    for (int y = 0; y < height; ++y)
        filter_line(plane.data() + static_cast<std::size_t>(y) * width, 1, width, kernel.taps, offset, ratio, ow,
                    horiz.data() + static_cast<std::size_t>(y) * ow, 1);
    for (int x = 0; x < ow; ++x)
        filter_line(horiz.data() + x, ow, height, kernel.taps, offset, ratio, oh, out.data() + x, ow);
}

// One dyadic stage along a line: output position q holds src[(q - phase) / 2]
// when q - phase is even, otherwise the half-band interpolation at that point.
void interp_line(const float* src, std::ptrdiff_t stride, int n, const std::vector<double>& kernel, int phase,
                 float* dst, std::ptrdiff_t dst_stride) {
    const int r = static_cast<int>(kernel.size()) / 2;
    for (int q = 0; q < 2 * n; ++q) {
        const int d = q - phase;
        if ((d & 1) == 0) {
            dst[q * dst_stride] = src[mirror_index(d / 2, n) * stride];
            continue;
        }
        double acc = 0.0;
        // Taps at odd offsets t from the center read input sample (d - t) / 2.
        for (int t = -r; t <= r; ++t) {
            if ((t & 1) == 0) continue;
            const int m = (d - t) / 2;
            acc += kernel[static_cast<std::size_t>(t + r)] * src[mirror_index(m, n) * stride];
        }
        dst[q * dst_stride] = static_cast<float>(acc);
    }
}

MultibandImage interp_stage(const MultibandImage& img, const std::vector<double>& kernel, int phase) {
    const int w = img.width();
    const int h = img.height();
    MultibandImage rows(2 * w, h, img.bands(), img.bit_depth());
    MultibandImage out(2 * w, 2 * h, img.bands(), img.bit_depth());
    for (int b = 0; b < img.bands(); ++b) {
        const auto src = img.band(b);
        auto mid = rows.band(b);
        for (int y = 0; y < h; ++y)
            interp_line(src.data() + static_cast<std::size_t>(y) * w, 1, w, kernel, phase,
                        mid.data() + static_cast<std::size_t>(y) * 2 * w, 1);
        auto dst = out.band(b);
        for (int x = 0; x < 2 * w; ++x) interp_line(mid.data() + x, 2 * w, h, kernel, phase, dst.data() + x, 2 * w);
    }
    return out;
}

}  // namespace

SensorProfile sensor_preset(std::string_view name) {
    SensorProfile p;
    p.name = std::string(name);
    p.ratio = 4;
    p.bit_depth = 11;
    p.gnyq_pan = kDefaultGnyqPan;
    if (name == "ik" || name == "ge1") {
        p.bands = 4;
        p.indices = four_band_indices();
    } else if (name == "wv2" || name == "wv3") {
        p.bands = 8;
        p.indices = eight_band_indices();
    } else {
        throw DspError("unknown sensor preset '" + std::string(name) + "' (expected ik, ge1, wv2, wv3)");
    }
    p.gnyq_ms.assign(static_cast<std::size_t>(p.bands), kDefaultGnyqMs);
    return p;
}

SensorProfile profile_from_config(const KeyValues& kv) {
    SensorProfile p;
    if (kv.has("preset")) p = sensor_preset(kv.get("preset"));
    p.name = kv.get("name", p.name.empty() ? std::string("custom") : p.name);
    p.bands = static_cast<int>(kv.get_int("bands", p.bands));
    p.ratio = static_cast<int>(kv.get_int("ratio", p.ratio));
    p.bit_depth = static_cast<int>(kv.get_int("bit_depth", p.bit_depth));
    if (kv.has("gnyq_ms")) {
        p.gnyq_ms = kv.get_doubles("gnyq_ms");
        if (p.gnyq_ms.size() == 1) p.gnyq_ms.assign(static_cast<std::size_t>(p.bands), p.gnyq_ms.front());
    } else if (p.gnyq_ms.size() != static_cast<std::size_t>(p.bands)) {
        p.gnyq_ms.assign(static_cast<std::size_t>(p.bands), kDefaultGnyqMs);
    }
    p.gnyq_pan = kv.get_double("gnyq_pan", p.gnyq_pan);
    if (kv.has("indices")) {
        // name:a:b entries, comma separated.
        p.indices.clear();
        for (const auto& item : kv.get_list("indices")) {
            std::stringstream ss(item);
            IndexRecipe r;
            std::string a, b;
            if (!std::getline(ss, r.name, ':') || !std::getline(ss, a, ':') || !std::getline(ss, b))
                throw Error("config.bad_value", "index recipe '" + item + "' must be name:band_a:band_b");
            try {
                r.band_a = std::stoi(a);
                r.band_b = std::stoi(b);
            } catch (const std::logic_error&) {
                throw Error("config.bad_value", "index recipe '" + item + "' has non-integer bands");
            }
            p.indices.push_back(r);
        }
    } else if (static_cast<int>(p.indices.size()) != SensorProfile::expected_index_count(p.bands)) {
        p.indices = p.bands >= 8 ? eight_band_indices() : four_band_indices();
    }
    p.validate();
    return p;
}

KeyValues profile_to_config(const SensorProfile& profile) {
    KeyValues kv;
    kv.set("name", profile.name);
    kv.set("bands", std::to_string(profile.bands));
    kv.set("ratio", std::to_string(profile.ratio));
    kv.set("bit_depth", std::to_string(profile.bit_depth));
    std::ostringstream g;
    g.precision(17);
    for (std::size_t i = 0; i < profile.gnyq_ms.size(); ++i) g << (i ? "," : "") << profile.gnyq_ms[i];
    kv.set("gnyq_ms", g.str());
    std::ostringstream gp;
    gp.precision(17);
    gp << profile.gnyq_pan;
    kv.set("gnyq_pan", gp.str());
    std::string idx;
    for (std::size_t i = 0; i < profile.indices.size(); ++i) {
        const auto& r = profile.indices[i];
        idx += (i ? "," : "") + r.name + ":" + std::to_string(r.band_a) + ":" + std::to_string(r.band_b);
    }
    kv.set("indices", idx);
    return kv;
}

SensorProfile read_profile(const std::filesystem::path& path) { return profile_from_config(KeyValues::read(path)); }

void write_profile(const SensorProfile& profile, const std::filesystem::path& path) {
    profile_to_config(profile).write(path);
}

SeparableKernel mtf_gaussian_kernel(int ratio, double gnyq, int size) {
    if (size <= 0 || size % 2 == 0) throw DspError("kernel size must be odd and positive");
    if (!(gnyq > 0.0 && gnyq < 1.0)) throw DspError("gnyq must lie in (0,1)");
    if (ratio < 1) throw DspError("ratio must be positive");
    const double sigma = (ratio / std::numbers::pi) * std::sqrt(-2.0 * std::log(gnyq));
    const int r = size / 2;
    SeparableKernel k;
    k.taps.resize(static_cast<std::size_t>(size));
    for (int i = -r; i <= r; ++i) k.taps[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    // Sum in symmetric pairs so that taps stay exactly mirrored after scaling.
    double sum = k.taps[static_cast<std::size_t>(r)];
    for (int i = 1; i <= r; ++i) sum += 2.0 * k.taps[static_cast<std::size_t>(r + i)];
    for (auto& t : k.taps) t /= sum;
    return k;
}

double frequency_response(std::span<const double> taps, double f) {
    const int r = static_cast<int>(taps.size()) / 2;
    double re = 0.0, im = 0.0;
    for (int i = 0; i < static_cast<int>(taps.size()); ++i) {
        const double phase = 2.0 * std::numbers::pi * f * (i - r);
        re += taps[static_cast<std::size_t>(i)] * std::cos(phase);
        im -= taps[static_cast<std::size_t>(i)] * std::sin(phase);
    }
    return std::hypot(re, im);
}

int mirror_index(int i, int n) noexcept {
    if (n <= 1) return 0;
    const int period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

std::vector<float> filter_plane(std::span<const float> plane, int width, int height, const SeparableKernel& kernel) {
    std::vector<float> horiz(plane.size());
    for (int y = 0; y < height; ++y)
        filter_line(plane.data() + static_cast<std::size_t>(y) * width, 1, width, kernel.taps, 0, 1, width,
                    horiz.data() + static_cast<std::size_t>(y) * width, 1);
    std::vector<float> out(plane.size());
    for (int x = 0; x < width; ++x)
        filter_line(horiz.data() + x, width, height, kernel.taps, 0, 1, height, out.data() + x, width);
    return out;
}

MultibandImage lowpass_decimate(const MultibandImage& img, const SeparableKernel& kernel, int ratio) {
    std::vector<SeparableKernel> kernels(static_cast<std::size_t>(img.bands()), kernel);
    return lowpass_decimate(img, kernels, ratio);
}

MultibandImage lowpass_decimate(const MultibandImage& img, std::span<const SeparableKernel> kernels, int ratio) {
    if (ratio < 1) throw DspError("ratio must be positive");
    if (img.width() % ratio != 0 || img.height() % ratio != 0)
        throw DspError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                       " not divisible by ratio " + std::to_string(ratio));
    if (static_cast<int>(kernels.size()) != img.bands()) throw DspError("need one kernel per band");
    MultibandImage out(img.width() / ratio, img.height() / ratio, img.bands(), img.bit_depth());
    for (int b = 0; b < img.bands(); ++b)
        decimate_plane(img.band(b), img.width(), img.height(), kernels[static_cast<std::size_t>(b)], ratio,
                       out.band(b));
    return out;
}

std::vector<double> interp23_kernel() {
    constexpr int n = kInterpTaps;
    constexpr int r = n / 2;
    constexpr double beta = 8.0;
    const double i0_beta = std::cyl_bessel_i(0.0, beta);
    std::vector<double> h(n, 0.0);
    h[r] = 1.0;
    double odd_sum = 0.0;
    for (int t = 1; t <= r; t += 2) {
        const double x = std::numbers::pi * t / 2.0;
        const double sinc = std::sin(x) / x;
        const double ratio = static_cast<double>(t) / r;
        const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - ratio * ratio)) / i0_beta;
        h[r + t] = h[r - t] = sinc * window;
        odd_sum += 2.0 * sinc * window;
    }
    for (int t = 1; t <= r; t += 2) {
        h[r + t] /= odd_sum;
        h[r - t] = h[r + t];
    }
    return h;
}

MultibandImage interp23(const MultibandImage& img, int ratio) {
    if (ratio < 2 || (ratio & (ratio - 1)) != 0) throw DspError("interp23 ratio must be a power of two >= 2");
    static const std::vector<double> kernel = interp23_kernel();
    MultibandImage cur = img;
    // First stage places samples on even positions, later ones on odd positions,
    // which accumulates to an offset of ratio/2 - 1 == (ratio - 1) / 2.
    for (int stage = 0, r = ratio; r > 1; r /= 2, ++stage) cur = interp_stage(cur, kernel, stage == 0 ? 0 : 1);
    return cur;
}

WaldTriplet wald_degrade(const MultibandImage& ms, const MultibandImage& pan, const SensorProfile& profile) {
    profile.validate();
    if (ms.bands() != profile.bands)
        throw DspError("ms has " + std::to_string(ms.bands()) + " bands, profile expects " +
                       std::to_string(profile.bands));
    if (pan.bands() != 1) throw DspError("pan must have exactly one band");
    if (pan.width() != ms.width() * profile.ratio || pan.height() != ms.height() * profile.ratio)
        throw DspError("pan dimensions must equal ms dimensions times the ratio");
    std::vector<SeparableKernel> kernels;
    for (double g : profile.gnyq_ms) kernels.push_back(mtf_gaussian_kernel(profile.ratio, g));
    WaldTriplet out;
    out.ms_lr = lowpass_decimate(ms, kernels, profile.ratio);
    out.pan_lr = lowpass_decimate(pan, mtf_gaussian_kernel(profile.ratio, profile.gnyq_pan), profile.ratio);
    out.reference = ms;
    return out;
}

MultibandImage radiometric_indices(const MultibandImage& ms, const SensorProfile& profile) {
    if (ms.bands() != profile.bands)
        throw DspError("ms has " + std::to_string(ms.bands()) + " bands, profile expects " +
                       std::to_string(profile.bands));
    MultibandImage out(ms.width(), ms.height(), static_cast<int>(profile.indices.size()), ms.bit_depth());
    for (std::size_t k = 0; k < profile.indices.size(); ++k) {
        const auto& r = profile.indices[k];
        if (r.band_a < 0 || r.band_a >= ms.bands() || r.band_b < 0 || r.band_b >= ms.bands())
            throw DspError("index '" + r.name + "' references a missing band");
        const auto a = ms.band(r.band_a);
        const auto b = ms.band(r.band_b);
        auto dst = out.band(static_cast<int>(k));
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const double v = (static_cast<double>(a[i]) - b[i]) / (static_cast<double>(a[i]) + b[i] + kIndexEpsilon);
            dst[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
    }
    return out;
}

}  // namespace dsp
}  // namespace pnn
