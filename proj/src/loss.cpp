#include <algorithm>
#include <cmath>
#include <vector>

#include "pnn/nn.hpp"

namespace pnn::nn {

namespace {

struct Window {
    int pred_my, pred_mx;
    int ref_my, ref_mx;
    int h, w;
};

Window common_window(const Tensor4& pred, const Tensor4& ref, int margin) {
    if (margin < 0) throw ShapeError("crop_margin must be non-negative");
    if (pred.n() != ref.n() || pred.c() != ref.c())
        throw ShapeError("loss: pred " + pred.shape_string() + " vs ref " + ref.shape_string());
    Window win{};
    win.h = ref.h() - 2 * margin;
    win.w = ref.w() - 2 * margin;
    if (win.h <= 0 || win.w <= 0) throw ShapeError("crop_margin leaves no pixels");
    const int dy = pred.h() - win.h;
    const int dx = pred.w() - win.w;
    if (dy < 0 || dx < 0 || dy % 2 != 0 || dx % 2 != 0)
        throw ShapeError("loss: pred " + pred.shape_string() + " cannot be centered on the cropped reference");
    win.pred_my = dy / 2;
    win.pred_mx = dx / 2;
    win.ref_my = margin;
    win.ref_mx = margin;
    return win;
}

}  // namespace

LossResult loss_eval(const Tensor4& pred, const Tensor4& ref, const LossSpec& spec) {
    const Window win = common_window(pred, ref, spec.crop_margin);
    const int channels = pred.c();
    if ((spec.kind == LossKind::sam || spec.kind == LossKind::sid) && channels < 2)
        throw ShapeError("spectral losses need at least two channels");

    LossResult res;
    res.grad = Tensor4(pred.n(), pred.c(), pred.h(), pred.w());
    const double elements = static_cast<double>(pred.n()) * channels * win.h * win.w;
    const double pixels = static_cast<double>(pred.n()) * win.h * win.w;

    auto p_at = [&](int n, int c, int y, int x) { return pred.index(n, c, y + win.pred_my, x + win.pred_mx); };
    auto r_at = [&](int n, int c, int y, int x) { return ref.index(n, c, y + win.ref_my, x + win.ref_mx); };
    auto& grad = res.grad.data();
    const auto& P = pred.data();
    const auto& R = ref.data();

    switch (spec.kind) {
        case LossKind::l2:
        case LossKind::l1: {
            const bool l2 = spec.kind == LossKind::l2;
            double total = 0.0;
            for (int n = 0; n < pred.n(); ++n)
                for (int c = 0; c < channels; ++c)
                    for (int y = 0; y < win.h; ++y)
                        for (int x = 0; x < win.w; ++x) {
                            const std::size_t pi = p_at(n, c, y, x);
                            const double d = static_cast<double>(P[pi]) - R[r_at(n, c, y, x)];
                            if (l2) {
                                total += d * d;
                                grad[pi] = static_cast<float>(2.0 * d / elements);
                            } else {
                                total += std::abs(d);
                                grad[pi] = static_cast<float>((d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) / elements);
                            }
                        }
            res.value = total / elements;
            break;
        }
        case LossKind::sam: {
            // Two passes: the mean runs over pixels with non-zero spectra only.
            std::vector<double> p(static_cast<std::size_t>(channels)), r(p.size());
            double total = 0.0;
            std::size_t valid = 0;
            struct PixelGrad {
                int n, y, x;
                double scale_r, scale_p;  // dtheta/dp = scale_r * r + scale_p * p
            };
            std::vector<PixelGrad> pending;
            for (int n = 0; n < pred.n(); ++n)
                for (int y = 0; y < win.h; ++y)
                    for (int x = 0; x < win.w; ++x) {
                        double pp = 0.0, rr = 0.0, pr = 0.0;
                        for (int c = 0; c < channels; ++c) {
                            p[static_cast<std::size_t>(c)] = P[p_at(n, c, y, x)];
                            r[static_cast<std::size_t>(c)] = R[r_at(n, c, y, x)];
                            pp += p[static_cast<std::size_t>(c)] * p[static_cast<std::size_t>(c)];
                            rr += r[static_cast<std::size_t>(c)] * r[static_cast<std::size_t>(c)];
                            pr += p[static_cast<std::size_t>(c)] * r[static_cast<std::size_t>(c)];
                        }
                        if (pp <= 0.0 || rr <= 0.0) continue;
                        const double np = std::sqrt(pp), nr = std::sqrt(rr);
                        const double cosv = std::clamp(pr / (np * nr), -1.0, 1.0);
                        total += std::acos(cosv);
                        ++valid;
                        const double s2 = 1.0 - cosv * cosv;
                        if (s2 > 1e-12) {
                            const double k = -1.0 / std::sqrt(s2);
                            pending.push_back({n, y, x, k / (np * nr), -k * cosv / pp});
                        }
                    }
            if (valid > 0) {
                res.value = total / static_cast<double>(valid);
                const double inv = 1.0 / static_cast<double>(valid);
                for (const auto& g : pending)
                    for (int c = 0; c < channels; ++c) {
                        const std::size_t pi = p_at(g.n, c, g.y, g.x);
                        grad[pi] = static_cast<float>(inv * (g.scale_r * R[r_at(g.n, c, g.y, g.x)] + g.scale_p * P[pi]));
                    }
            }
            break;
        }
        case LossKind::sid: {
            std::vector<double> u(static_cast<std::size_t>(channels)), q(u.size()), gp(u.size());
            double total = 0.0;
            for (int n = 0; n < pred.n(); ++n)
                for (int y = 0; y < win.h; ++y)
                    for (int x = 0; x < win.w; ++x) {
                        double su = 0.0, sq = 0.0;
                        for (int c = 0; c < channels; ++c) {
                            u[static_cast<std::size_t>(c)] = std::max<double>(P[p_at(n, c, y, x)], kSidFloor);
                            q[static_cast<std::size_t>(c)] = std::max<double>(R[r_at(n, c, y, x)], kSidFloor);
                            su += u[static_cast<std::size_t>(c)];
                            sq += q[static_cast<std::size_t>(c)];
                        }
                        double sid = 0.0, weighted = 0.0;
                        for (std::size_t c = 0; c < u.size(); ++c) {
                            const double pc = u[c] / su, qc = q[c] / sq;
                            const double lr = std::log(pc / qc);
                            sid += (pc - qc) * lr;
                            gp[c] = lr + 1.0 - qc / pc;  // d sid / d p_c
                            weighted += gp[c] * pc;
                        }
                        total += sid;
                        for (int c = 0; c < channels; ++c) {
                            const std::size_t pi = p_at(n, c, y, x);
                            if (!(P[pi] > kSidFloor)) continue;
                            grad[pi] = static_cast<float>((gp[static_cast<std::size_t>(c)] - weighted) / su / pixels);
                        }
                    }
            res.value = total / pixels;
            break;
        }
    }
    return res;
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "l2" || name == "mse") return LossKind::l2;
    if (name == "l1" || name == "mae") return LossKind::l1;
    if (name == "sam") return LossKind::sam;
    if (name == "sid") return LossKind::sid;
    throw Error("nn.bad_loss", "unknown loss '" + std::string(name) + "' (expected l2, l1, sam, sid)");
}

std::string_view loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::l2: return "l2";
        case LossKind::l1: return "l1";
        case LossKind::sam: return "sam";
        case LossKind::sid: return "sid";
    }
    return "unknown";
}

}  // namespace pnn::nn
