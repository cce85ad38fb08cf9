#pragma once

#include <span>
#include <utility>
#include <vector>

#include "volift/volume.h"

namespace volift {

// Reported for identical volumes instead of +inf in text output.
inline constexpr double kPsnrIdentical = 999.0;

double mse(const Volume3D& a, const Volume3D& b);
// 10 log10(255^2 / MSE) on 8-bit volumes; +inf when identical.
double psnr(const Volume3D& a, const Volume3D& b);
// Mean over axial slices of 2-D SSIM (11x11 Gaussian window, sigma 1.5,
// K1 = 0.01, K2 = 0.03, L = 255, valid region only).
double ssim(const Volume3D& a, const Volume3D& b);

struct RdPoint {
    double bpp = 0.0;
    double quality = 0.0; // PSNR in dB, or SSIM
};

// Bjontegaard delta: mean gap (test minus anchor) between cubic fits of
// quality over log rate, integrated over the overlapping rate interval.
double bd_quality(std::span<const RdPoint> anchor, std::span<const RdPoint> test);

} // namespace volift
