#pragma once

#include <span>
#include <string>
#include <vector>

#include "pnn/dsp.hpp"
#include "pnn/error.hpp"
#include "pnn/raster.hpp"

namespace pnn {

// One row of a results table. Fields not computed by a regime are NaN.
struct QualityReport {
    double sam_deg;
    double ergas;
    double q_avg;
    double q2n;
    double d_lambda;
    double d_s;
    double qnr;

    QualityReport();
};

class QualityError : public Error {
public:
    explicit QualityError(const std::string& what) : Error("quality.invalid", what) {}
};

namespace quality {

inline constexpr int kDefaultBlock = 32;

// Mean spectral angle in degrees over pixels where both spectra are non-zero.
double sam(const MultibandImage& pred, const MultibandImage& ref);

// 100 / ratio * sqrt(mean_b (RMSE_b / mean(ref_b))^2)
double ergas(const MultibandImage& pred, const MultibandImage& ref, int ratio);

// Universal image quality index of one band pair, averaged over
// non-overlapping block x block windows; windows with zero denominator are skipped.
double uiqi_q(std::span<const float> a, std::span<const float> b, int width, int height, int block = kDefaultBlock);
// Band-wise UIQI averaged over bands.
double uiqi_q(const MultibandImage& a, const MultibandImage& b, int block = kDefaultBlock);

// Q2^n: block-wise hypercomplex quality index; spectra are treated as
// Cayley-Dickson numbers of dimension 2^n (bands zero-padded up to it).
double q2n(const MultibandImage& pred, const MultibandImage& ref, int block = kDefaultBlock);

// Cayley-Dickson product and conjugate on 2^n-dimensional numbers.
void cd_multiply(std::span<const double> a, std::span<const double> b, std::span<double> out);
void cd_conjugate(std::span<const double> a, std::span<double> out);

// `block` is the window on the fused grid. `lr_block` is the window on the
// low-resolution grid; 0 selects the same ground footprint (block scaled by
// the grid ratio), a positive value is used as given.
double d_lambda(const MultibandImage& fused, const MultibandImage& ms_lr, double p = 1.0, int block = kDefaultBlock,
                int lr_block = 0);
double d_s(const MultibandImage& fused, const MultibandImage& pan, const MultibandImage& ms_lr,
           const MultibandImage& pan_lr, double q = 1.0, int block = kDefaultBlock, int lr_block = 0);
double qnr(double d_lambda, double d_s, double alpha = 1.0, double beta = 1.0);

// Full-reference regime: fused product at reduced scale vs the original MS.
QualityReport evaluate_reduced(const MultibandImage& fused_lr, const MultibandImage& ms_original, int ratio,
                               int block = kDefaultBlock);
// No-reference regime at full scale; pan_lr comes from the profile's PAN MTF filter.
QualityReport evaluate_full(const MultibandImage& fused, const MultibandImage& ms_lr, const MultibandImage& pan,
                            const SensorProfile& profile, int block = kDefaultBlock, int lr_block = 0);

std::string csv_header();
std::string csv_row(const QualityReport& report);

}  // namespace quality
}  // namespace pnn
