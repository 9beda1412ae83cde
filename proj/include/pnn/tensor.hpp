#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pnn/error.hpp"

namespace pnn {

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("nn.shape", what) {}
};

// Dense NCHW tensor of 32-bit floats.
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(int n, int c, int h, int w, float fill = 0.0f);

    int n() const noexcept { return n_; }
    int c() const noexcept { return c_; }
    int h() const noexcept { return h_; }
    int w() const noexcept { return w_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h_) * w_; }
    std::size_t item() const noexcept { return plane() * c_; }

    float& at(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
    float at(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }

    std::size_t index(int n, int c, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
    }

    float* sample(int n) noexcept { return data_.data() + static_cast<std::size_t>(n) * item(); }
    const float* sample(int n) const noexcept { return data_.data() + static_cast<std::size_t>(n) * item(); }

    std::vector<float>& data() noexcept { return data_; }
    const std::vector<float>& data() const noexcept { return data_; }

    bool same_shape(const Tensor4& o) const noexcept { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
    std::string shape_string() const;
    bool all_finite() const noexcept;
    void fill(float v);

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<float> data_;
};

// Centered spatial crop removing `margin_y` rows and `margin_x` columns on each side.
Tensor4 crop_spatial(const Tensor4& t, int margin_y, int margin_x);

}  // namespace pnn
