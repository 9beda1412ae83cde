#include "pnn/quality.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace pnn {

QualityReport::QualityReport() {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    sam_deg = ergas = q_avg = q2n = d_lambda = d_s = qnr = nan;
}

namespace quality {

namespace {

void require_same_shape(const MultibandImage& a, const MultibandImage& b, const char* what) {
    if (!a.same_shape(b))
        throw QualityError(std::string(what) + ": images differ in shape (" + std::to_string(a.width()) + "x" +
                           std::to_string(a.height()) + "x" + std::to_string(a.bands()) + " vs " +
                           std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
                           std::to_string(b.bands()) + ")");
}

void require_blocks(int width, int height, int block) {
    if (block <= 0) throw QualityError("block size must be positive");
    if (block > width || block > height)
        throw QualityError("block " + std::to_string(block) + " larger than image " + std::to_string(width) + "x" +
                           std::to_string(height));
}

int resolve_lr_block(int block, int lr_block, int full_width, int lr_width) {
    if (lr_block > 0) return lr_block;
    if (lr_width <= 0 || full_width % lr_width != 0)
        throw QualityError("fused width " + std::to_string(full_width) + " is not a multiple of the low-resolution width " +
                           std::to_string(lr_width));
    return std::max(1, block / (full_width / lr_width));
}

int next_pow2(int n) {
    int d = 1;
    while (d < n) d *= 2;
    return d;
}

}  // namespace

double sam(const MultibandImage& pred, const MultibandImage& ref) {
    require_same_shape(pred, ref, "sam");
    const std::size_t plane = pred.plane_size();
    double total = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < plane; ++i) {
        double pp = 0.0, rr = 0.0;
        for (int b = 0; b < pred.bands(); ++b) {
            const double p = pred.band(b)[i], r = ref.band(b)[i];
            pp += p * p;
            rr += r * r;
        }
        if (pp <= 0.0 || rr <= 0.0) continue;
        // 2 atan2(|p^ - r^|, |p^ + r^|) stays accurate near 0 and pi, unlike acos.
        const double np = std::sqrt(pp), nr = std::sqrt(rr);
        double diff = 0.0, sum = 0.0;
        for (int b = 0; b < pred.bands(); ++b) {
            const double p = pred.band(b)[i] / np, r = ref.band(b)[i] / nr;
            diff += (p - r) * (p - r);
            sum += (p + r) * (p + r);
        }
        total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
        ++valid;
    }
    if (valid == 0) throw QualityError("sam: every pixel has a zero spectrum");
    return total / static_cast<double>(valid) * 180.0 / std::numbers::pi;
}

double ergas(const MultibandImage& pred, const MultibandImage& ref, int ratio) {
    require_same_shape(pred, ref, "ergas");
    if (ratio <= 0) throw QualityError("ergas: ratio must be positive");
    double acc = 0.0;
    for (int b = 0; b < pred.bands(); ++b) {
        const auto p = pred.band(b), r = ref.band(b);
        double se = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = static_cast<double>(p[i]) - r[i];
            se += d * d;
            sum += r[i];
        }
        const double mean = sum / static_cast<double>(p.size());
        if (mean == 0.0) throw QualityError("ergas: reference band " + std::to_string(b) + " has zero mean");
        const double rmse = std::sqrt(se / static_cast<double>(p.size()));
        acc += (rmse / mean) * (rmse / mean);
    }
    return 100.0 / ratio * std::sqrt(acc / pred.bands());
}

double uiqi_q(std::span<const float> a, std::span<const float> b, int width, int height, int block) {
    require_blocks(width, height, block);
    if (a.size() != b.size() || a.size() != static_cast<std::size_t>(width) * height)
        throw QualityError("uiqi_q: plane sizes do not match");
    const double n = static_cast<double>(block) * block;
    double total = 0.0;
    int used = 0;
    for (int by = 0; by + block <= height; by += block)
        for (int bx = 0; bx + block <= width; bx += block) {
            double sa = 0.0, sb = 0.0;
            for (int y = by; y < by + block; ++y)
                for (int x = bx; x < bx + block; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    sa += a[i];
                    sb += b[i];
                }
            const double ma = sa / n, mb = sb / n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int y = by; y < by + block; ++y)
                for (int x = bx; x < bx + block; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    const double da = a[i] - ma, db = b[i] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            const double den = (va + vb) * (ma * ma + mb * mb);
            if (den == 0.0) continue;
            total += 4.0 * cov * ma * mb / den;
            ++used;
        }
    if (used == 0) throw QualityError("uiqi_q: every window is degenerate");
    return total / used;
}

double uiqi_q(const MultibandImage& a, const MultibandImage& b, int block) {
    require_same_shape(a, b, "uiqi_q");
    double total = 0.0;
    for (int k = 0; k < a.bands(); ++k) total += uiqi_q(a.band(k), b.band(k), a.width(), a.height(), block);
    return total / a.bands();
}

void cd_conjugate(std::span<const double> a, std::span<double> out) {
    out[0] = a[0];
    for (std::size_t i = 1; i < a.size(); ++i) out[i] = -a[i];
}

// (a, b)(c, d) = (ac - conj(d) b, d a + b conj(c))
void cd_multiply(std::span<const double> x, std::span<const double> y, std::span<double> out) {
    const std::size_t n = x.size();
    if (n == 1) {
        out[0] = x[0] * y[0];
        return;
    }
    const std::size_t h = n / 2;
    const auto a = x.first(h), b = x.subspan(h), c = y.first(h), d = y.subspan(h);
    std::vector<double> tmp(4 * h);
    std::span<double> conj_d(tmp.data(), h), conj_c(tmp.data() + h, h), t1(tmp.data() + 2 * h, h),
        t2(tmp.data() + 3 * h, h);
    cd_conjugate(d, conj_d);
    cd_conjugate(c, conj_c);
    cd_multiply(a, c, out.first(h));
    cd_multiply(conj_d, b, t1);
    for (std::size_t i = 0; i < h; ++i) out[i] -= t1[i];
    cd_multiply(d, a, out.subspan(h));
    cd_multiply(b, conj_c, t2);
    for (std::size_t i = 0; i < h; ++i) out[h + i] += t2[i];
}

double q2n(const MultibandImage& pred, const MultibandImage& ref, int block) {
    require_same_shape(pred, ref, "q2n");
    require_blocks(pred.width(), pred.height(), block);
    const int dim = next_pow2(pred.bands());
    const int bands = pred.bands();
    const int width = pred.width();
    const double n = static_cast<double>(block) * block;
    std::vector<double> ma(dim), mb(dim), da(dim), db(dim), conj_db(dim), prod(dim), cov(dim);
    double total = 0.0;
    int used = 0;
    for (int by = 0; by + block <= pred.height(); by += block)
        for (int bx = 0; bx + block <= width; bx += block) {
            std::fill(ma.begin(), ma.end(), 0.0);
            std::fill(mb.begin(), mb.end(), 0.0);
            for (int k = 0; k < bands; ++k) {
                double sa = 0.0, sb = 0.0;
                const auto pa = pred.band(k), pb = ref.band(k);
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x) {
                        const std::size_t i = static_cast<std::size_t>(y) * width + x;
                        sa += pa[i];
                        sb += pb[i];
                    }
                ma[static_cast<std::size_t>(k)] = sa / n;
                mb[static_cast<std::size_t>(k)] = sb / n;
            }
            double va = 0.0, vb = 0.0;
            std::fill(cov.begin(), cov.end(), 0.0);
            std::fill(da.begin(), da.end(), 0.0);
            std::fill(db.begin(), db.end(), 0.0);
            for (int y = by; y < by + block; ++y)
                for (int x = bx; x < bx + block; ++x) {
                    const std::size_t i = static_cast<std::size_t>(y) * width + x;
                    for (int k = 0; k < bands; ++k) {
                        da[static_cast<std::size_t>(k)] = pred.band(k)[i] - ma[static_cast<std::size_t>(k)];
                        db[static_cast<std::size_t>(k)] = ref.band(k)[i] - mb[static_cast<std::size_t>(k)];
                    }
                    for (int k = 0; k < dim; ++k) {
                        va += da[static_cast<std::size_t>(k)] * da[static_cast<std::size_t>(k)];
                        vb += db[static_cast<std::size_t>(k)] * db[static_cast<std::size_t>(k)];
                    }
                    cd_conjugate(db, conj_db);
                    cd_multiply(da, conj_db, prod);
                    for (int k = 0; k < dim; ++k) cov[static_cast<std::size_t>(k)] += prod[static_cast<std::size_t>(k)];
                }
            va /= n;
            vb /= n;
            double cov2 = 0.0, ma2 = 0.0, mb2 = 0.0;
            for (int k = 0; k < dim; ++k) {
                const double c = cov[static_cast<std::size_t>(k)] / n;
                cov2 += c * c;
                ma2 += ma[static_cast<std::size_t>(k)] * ma[static_cast<std::size_t>(k)];
                mb2 += mb[static_cast<std::size_t>(k)] * mb[static_cast<std::size_t>(k)];
            }
            const double den = (va + vb) * (ma2 + mb2);
            if (den == 0.0) continue;
            // One band is an ordinary real number: keep the sign so Q2^0 is UIQI.
            if (dim == 1)
                total += 4.0 * (cov[0] / n) * ma[0] * mb[0] / den;
            else
                total += 4.0 * std::sqrt(cov2) * std::sqrt(ma2) * std::sqrt(mb2) / den;
            ++used;
        }
    if (used == 0) throw QualityError("q2n: every block is degenerate");
    return total / used;
}

double d_lambda(const MultibandImage& fused, const MultibandImage& ms_lr, double p, int block, int lr_block) {
    if (fused.bands() != ms_lr.bands()) throw QualityError("d_lambda: band counts differ");
    if (fused.bands() < 2) throw QualityError("d_lambda needs at least two bands");
    if (!(p > 0.0)) throw QualityError("d_lambda: exponent must be positive");
    const int n = fused.bands();
    const int lb = resolve_lr_block(block, lr_block, fused.width(), ms_lr.width());
    double acc = 0.0;
    for (int l = 0; l < n; ++l)
        for (int r = 0; r < n; ++r) {
            if (l == r) continue;
            const double qf = uiqi_q(fused.band(l), fused.band(r), fused.width(), fused.height(), block);
            const double qm = uiqi_q(ms_lr.band(l), ms_lr.band(r), ms_lr.width(), ms_lr.height(), lb);
            acc += std::pow(std::abs(qf - qm), p);
        }
    return std::pow(acc / (n * (n - 1.0)), 1.0 / p);
}

double d_s(const MultibandImage& fused, const MultibandImage& pan, const MultibandImage& ms_lr,
           const MultibandImage& pan_lr, double q, int block, int lr_block) {
    if (fused.bands() != ms_lr.bands()) throw QualityError("d_s: band counts differ");
    if (pan.bands() != 1 || pan_lr.bands() != 1) throw QualityError("d_s: pan images must have one band");
    if (pan.width() != fused.width() || pan.height() != fused.height()) throw QualityError("d_s: pan/fused size mismatch");
    if (pan_lr.width() != ms_lr.width() || pan_lr.height() != ms_lr.height())
        throw QualityError("d_s: pan_lr/ms_lr size mismatch");
    if (!(q > 0.0)) throw QualityError("d_s: exponent must be positive");
    const int lb = resolve_lr_block(block, lr_block, fused.width(), ms_lr.width());
    double acc = 0.0;
    for (int l = 0; l < fused.bands(); ++l) {
        const double qf = uiqi_q(fused.band(l), pan.band(0), fused.width(), fused.height(), block);
        const double qm = uiqi_q(ms_lr.band(l), pan_lr.band(0), ms_lr.width(), ms_lr.height(), lb);
        acc += std::pow(std::abs(qf - qm), q);
    }
    return std::pow(acc / fused.bands(), 1.0 / q);
}

double qnr(double d_lambda, double d_s, double alpha, double beta) {
    return std::pow(1.0 - d_lambda, alpha) * std::pow(1.0 - d_s, beta);
}

QualityReport evaluate_reduced(const MultibandImage& fused_lr, const MultibandImage& ms_original, int ratio,
                               int block) {
    QualityReport r;
    r.sam_deg = sam(fused_lr, ms_original);
    r.ergas = ergas(fused_lr, ms_original, ratio);
    r.q_avg = uiqi_q(fused_lr, ms_original, block);
    r.q2n = q2n(fused_lr, ms_original, block);
    return r;
}

QualityReport evaluate_full(const MultibandImage& fused, const MultibandImage& ms_lr, const MultibandImage& pan,
                            const SensorProfile& profile, int block, int lr_block) {
    const MultibandImage pan_lr =
        dsp::lowpass_decimate(pan, dsp::mtf_gaussian_kernel(profile.ratio, profile.gnyq_pan), profile.ratio);
    QualityReport r;
    r.d_lambda = d_lambda(fused, ms_lr, 1.0, block, lr_block);
    r.d_s = d_s(fused, pan, ms_lr, pan_lr, 1.0, block, lr_block);
    r.qnr = qnr(r.d_lambda, r.d_s);
    return r;
}

std::string csv_header() { return "SAM,ERGAS,Q,Q2n,Dlambda,Ds,QNR"; }

std::string csv_row(const QualityReport& r) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    const double fields[] = {r.sam_deg, r.ergas, r.q_avg, r.q2n, r.d_lambda, r.d_s, r.qnr};
    for (std::size_t i = 0; i < std::size(fields); ++i) {
        if (i) out << ',';
        if (std::isnan(fields[i]))
            out << "nan";
        else
            out << fields[i];
    }
    return out.str();
}

}  // namespace quality
}  // namespace pnn
