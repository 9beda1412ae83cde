// 2-D convolution layer via im2col + GEMM.

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "pnn/dsp.hpp"
#include "pnn/nn.hpp"
#include "pnn/parallel.hpp"

namespace pnn::nn {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; large images are processed in row blocks.
constexpr std::size_t kColumnBudget = 1u << 21;
// Samples per gradient partial. Fixed so the reduction order does not depend on thread count.
constexpr int kChunk = 4;

struct Geometry {
    int cin, cout, k, pad;
    int h, w;    // input
    int hp, wp;  // padded input
    int ho, wo;  // output
    int rows_per_block;
    int patch() const { return cin * k * k; }
};

Geometry geometry(const Tensor4& x, const Tensor4& w, Padding padding) {
    if (w.h() != w.w() || w.h() % 2 == 0) throw ShapeError("kernel must be square with odd size");
    if (x.c() != w.c())
        throw ShapeError("input has " + std::to_string(x.c()) + " channels, weights expect " + std::to_string(w.c()));
    Geometry g{};
    g.cin = x.c();
    g.cout = w.n();
    g.k = w.h();
    g.pad = padding == Padding::same_mirror ? g.k / 2 : 0;
    g.h = x.h();
    g.w = x.w();
    g.hp = g.h + 2 * g.pad;
    g.wp = g.w + 2 * g.pad;
    g.ho = g.hp - g.k + 1;
    g.wo = g.wp - g.k + 1;
    if (g.ho <= 0 || g.wo <= 0) throw ShapeError("input " + x.shape_string() + " smaller than kernel");
    const std::size_t per_row = static_cast<std::size_t>(g.patch()) * g.wo;
    g.rows_per_block = static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1,
                                                                static_cast<std::size_t>(g.ho)));
    return g;
}

// Symmetric-extension padding of one CHW sample.
void pad_sample(const float* src, const Geometry& g, std::vector<float>& dst) {
    dst.resize(static_cast<std::size_t>(g.cin) * g.hp * g.wp);
    for (int c = 0; c < g.cin; ++c) {
        const float* plane = src + static_cast<std::size_t>(c) * g.h * g.w;
        float* out = dst.data() + static_cast<std::size_t>(c) * g.hp * g.wp;
        for (int y = 0; y < g.hp; ++y) {
            const float* row = plane + static_cast<std::size_t>(dsp::mirror_index(y - g.pad, g.h)) * g.w;
            float* orow = out + static_cast<std::size_t>(y) * g.wp;
            for (int x = 0; x < g.wp; ++x) orow[x] = row[dsp::mirror_index(x - g.pad, g.w)];
        }
    }
}

// Adjoint of pad_sample: accumulates padded-domain gradients back onto the source.
void fold_sample(const std::vector<float>& padded, const Geometry& g, float* dst) {
    std::fill(dst, dst + static_cast<std::size_t>(g.cin) * g.h * g.w, 0.0f);
    for (int c = 0; c < g.cin; ++c) {
        const float* in = padded.data() + static_cast<std::size_t>(c) * g.hp * g.wp;
        float* plane = dst + static_cast<std::size_t>(c) * g.h * g.w;
        for (int y = 0; y < g.hp; ++y) {
            float* row = plane + static_cast<std::size_t>(dsp::mirror_index(y - g.pad, g.h)) * g.w;
            const float* irow = in + static_cast<std::size_t>(y) * g.wp;
            for (int x = 0; x < g.wp; ++x) row[dsp::mirror_index(x - g.pad, g.w)] += irow[x];
        }
    }
}

void im2col(const float* in, const Geometry& g, int y0, int rows, float* col) {
    const std::size_t cols = static_cast<std::size_t>(rows) * g.wo;
    for (int c = 0; c < g.cin; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                float* dst = col + (static_cast<std::size_t>((c * g.k + ky) * g.k + kx)) * cols;
                for (int r = 0; r < rows; ++r) {
                    const float* src = in + (static_cast<std::size_t>(c) * g.hp + y0 + r + ky) * g.wp + kx;
                    std::memcpy(dst + static_cast<std::size_t>(r) * g.wo, src, sizeof(float) * g.wo);
                }
            }
}

void col2im_add(const float* col, const Geometry& g, int y0, int rows, float* out) {
    const std::size_t cols = static_cast<std::size_t>(rows) * g.wo;
    for (int c = 0; c < g.cin; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const float* src = col + (static_cast<std::size_t>((c * g.k + ky) * g.k + kx)) * cols;
                for (int r = 0; r < rows; ++r) {
                    float* dst = out + (static_cast<std::size_t>(c) * g.hp + y0 + r + ky) * g.wp + kx;
                    const float* s = src + static_cast<std::size_t>(r) * g.wo;
                    for (int x = 0; x < g.wo; ++x) dst[x] += s[x];
                }
            }
}

}  // namespace

Tensor4 conv_forward(const Tensor4& x, const Tensor4& w, std::span<const float> b, Padding padding) {
    const Geometry g = geometry(x, w, padding);
    if (static_cast<int>(b.size()) != g.cout) throw ShapeError("bias length does not match output channels");
    Tensor4 out(x.n(), g.cout, g.ho, g.wo);
    const ConstMatMap weights(w.data().data(), g.cout, g.patch());
    const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;

    parallel_for(0, static_cast<std::size_t>(x.n()), [&](std::size_t n) {
        std::vector<float> padded;
        const float* in = x.sample(static_cast<int>(n));
        if (g.pad > 0) {
            pad_sample(in, g, padded);
            in = padded.data();
        }
        std::vector<float> col(static_cast<std::size_t>(g.patch()) * g.rows_per_block * g.wo);
        float* dst = out.sample(static_cast<int>(n));
        for (int y0 = 0; y0 < g.ho; y0 += g.rows_per_block) {
            const int rows = std::min(g.rows_per_block, g.ho - y0);
            const Eigen::Index cols = static_cast<Eigen::Index>(rows) * g.wo;
            im2col(in, g, y0, rows, col.data());
            StridedMap block(dst + static_cast<std::size_t>(y0) * g.wo, g.cout, cols,
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
            block.noalias() = weights * ConstMatMap(col.data(), g.patch(), cols);
            for (int m = 0; m < g.cout; ++m) block.row(m).array() += b[static_cast<std::size_t>(m)];
        }
    });
    return out;
}

ConvGrads conv_backward(const Tensor4& x, const Tensor4& w, const Tensor4& grad_out, Padding padding,
                        bool need_grad_x) {
    const Geometry g = geometry(x, w, padding);
    if (grad_out.n() != x.n() || grad_out.c() != g.cout || grad_out.h() != g.ho || grad_out.w() != g.wo)
        throw ShapeError("grad_out " + grad_out.shape_string() + " does not match forward output");

    ConvGrads grads;
    grads.grad_w = Tensor4(w.n(), w.c(), w.h(), w.w());
    grads.grad_b.assign(static_cast<std::size_t>(g.cout), 0.0f);
    if (need_grad_x) grads.grad_x = Tensor4(x.n(), x.c(), x.h(), x.w());

    const ConstMatMap weights(w.data().data(), g.cout, g.patch());
    const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
    const int chunks = (x.n() + kChunk - 1) / kChunk;
    std::vector<RowMatrix> partial_w(static_cast<std::size_t>(chunks));
    std::vector<std::vector<double>> partial_b(static_cast<std::size_t>(chunks));

    parallel_for(0, static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
        RowMatrix& gw = partial_w[chunk];
        gw = RowMatrix::Zero(g.cout, g.patch());
        auto& gb = partial_b[chunk];
        gb.assign(static_cast<std::size_t>(g.cout), 0.0);
        std::vector<float> padded, grad_padded;
        std::vector<float> col(static_cast<std::size_t>(g.patch()) * g.rows_per_block * g.wo);
        std::vector<float> grad_col(need_grad_x ? col.size() : 0);

        const int first = static_cast<int>(chunk) * kChunk;
        const int last = std::min(x.n(), first + kChunk);
        for (int n = first; n < last; ++n) {
            const float* in = x.sample(n);
            if (g.pad > 0) {
                pad_sample(in, g, padded);
                in = padded.data();
            }
            if (need_grad_x) grad_padded.assign(static_cast<std::size_t>(g.cin) * g.hp * g.wp, 0.0f);
            const float* go = grad_out.sample(n);
            for (int m = 0; m < g.cout; ++m) {
                double s = 0.0;
                const float* p = go + static_cast<std::size_t>(m) * out_plane;
                for (std::size_t i = 0; i < out_plane; ++i) s += p[i];
                gb[static_cast<std::size_t>(m)] += s;
            }
            for (int y0 = 0; y0 < g.ho; y0 += g.rows_per_block) {
                const int rows = std::min(g.rows_per_block, g.ho - y0);
                const Eigen::Index cols = static_cast<Eigen::Index>(rows) * g.wo;
                im2col(in, g, y0, rows, col.data());
                const ConstStridedMap gblock(go + static_cast<std::size_t>(y0) * g.wo, g.cout, cols,
                                             Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
                const ConstMatMap colm(col.data(), g.patch(), cols);
                gw.noalias() += gblock * colm.transpose();
                if (need_grad_x) {
                    MatMap gcol(grad_col.data(), g.patch(), cols);
                    gcol.noalias() = weights.transpose() * gblock;
                    col2im_add(grad_col.data(), g, y0, rows, grad_padded.data());
                }
            }
            if (need_grad_x) {
                if (g.pad > 0) {
                    fold_sample(grad_padded, g, grads.grad_x.sample(n));
                } else {
                    std::copy(grad_padded.begin(), grad_padded.end(), grads.grad_x.sample(n));
                }
            }
        }
    });

    MatMap gw_total(grads.grad_w.data().data(), g.cout, g.patch());
    std::vector<double> gb_total(static_cast<std::size_t>(g.cout), 0.0);
    for (int c = 0; c < chunks; ++c) {
        gw_total += partial_w[static_cast<std::size_t>(c)];
        for (int m = 0; m < g.cout; ++m) gb_total[static_cast<std::size_t>(m)] += partial_b[static_cast<std::size_t>(c)][static_cast<std::size_t>(m)];
    }
    for (int m = 0; m < g.cout; ++m) grads.grad_b[static_cast<std::size_t>(m)] = static_cast<float>(gb_total[static_cast<std::size_t>(m)]);
    return grads;
}

}  // namespace pnn::nn
