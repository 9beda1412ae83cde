#include "pnn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace pnn {

Tensor4::Tensor4(int n, int c, int h, int w, float fill) : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor4::shape_string() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
}

bool Tensor4::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor4::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4 crop_spatial(const Tensor4& t, int margin_y, int margin_x) {
    if (margin_y < 0 || margin_x < 0 || 2 * margin_y > t.h() || 2 * margin_x > t.w())
        throw ShapeError("crop margins exceed tensor " + t.shape_string());
    if (margin_y == 0 && margin_x == 0) return t;
    Tensor4 out(t.n(), t.c(), t.h() - 2 * margin_y, t.w() - 2 * margin_x);
    for (int n = 0; n < t.n(); ++n)
        for (int c = 0; c < t.c(); ++c)
            for (int y = 0; y < out.h(); ++y) {
                const float* src = &t.data()[t.index(n, c, y + margin_y, margin_x)];
                std::copy(src, src + out.w(), &out.at(n, c, y, 0));
            }
    return out;
}

}  // namespace pnn
