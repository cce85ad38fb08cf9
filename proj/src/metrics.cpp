#include "volift/metrics.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "volift/errors.h"

namespace volift {

namespace {

void check_same_shape(const Volume3D& a, const Volume3D& b)
{
    if (!(a.shape() == b.shape()))
        throw ArgumentError("volume shapes differ: " + a.shape().str() + " vs " + b.shape().str());
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_taps()
{
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double x = i - kWindow / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g)
        v /= sum;
    return g;
}

// Separable valid-mode Gaussian filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& g)
{
    const std::size_t ow = w - kWindow + 1;
    const std::size_t oh = h - kWindow + 1;
    std::vector<double> rows(h * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k)
                s += g[static_cast<std::size_t>(k)] * plane[y * w + x + static_cast<std::size_t>(k)];
            rows[y * ow + x] = s;
        }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int k = 0; k < kWindow; ++k)
                s += g[static_cast<std::size_t>(k)] * rows[(y + static_cast<std::size_t>(k)) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

} // namespace

double mse(const Volume3D& a, const Volume3D& b)
{
    check_same_shape(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Volume3D& a, const Volume3D& b)
{
    const double e = mse(a, b);
    if (e == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / e);
}

double ssim(const Volume3D& a, const Volume3D& b)
{
    check_same_shape(a, b);
    const Shape& s = a.shape();
    if (s.h < kWindow || s.w < kWindow)
        throw ArgumentError("ssim needs axial slices of at least 11x11, got " + std::to_string(s.h) + "x" +
                            std::to_string(s.w));
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const auto g = gaussian_taps();
    const std::size_t plane = s.h * s.w;
    double total = 0.0;
    for (std::size_t d = 0; d < s.d; ++d) {
        std::vector<double> x(a.data().begin() + static_cast<std::ptrdiff_t>(d * plane),
                              a.data().begin() + static_cast<std::ptrdiff_t>((d + 1) * plane));
        std::vector<double> y(b.data().begin() + static_cast<std::ptrdiff_t>(d * plane),
                              b.data().begin() + static_cast<std::ptrdiff_t>((d + 1) * plane));
        std::vector<double> xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, s.h, s.w, g);
        const auto my = filter_valid(y, s.h, s.w, g);
        const auto sxx = filter_valid(xx, s.h, s.w, g);
        const auto syy = filter_valid(yy, s.h, s.w, g);
        const auto sxy = filter_valid(xy, s.h, s.w, g);
        double slice = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cxy = sxy[i] - mx[i] * my[i];
            slice += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += slice / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(s.d);
}

namespace {

Eigen::Vector4d fit_cubic(std::span<const RdPoint> pts)
{
    Eigen::MatrixXd a(static_cast<Eigen::Index>(pts.size()), 4);
    Eigen::VectorXd y(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double r = std::log(pts[i].bpp);
        const auto row = static_cast<Eigen::Index>(i);
        a(row, 0) = 1.0;
        a(row, 1) = r;
        a(row, 2) = r * r;
        a(row, 3) = r * r * r;
        y(row) = pts[i].quality;
    }
    return a.colPivHouseholderQr().solve(y);
}

double integrate_cubic(const Eigen::Vector4d& c, double lo, double hi)
{
    auto prim = [&c](double x) {
        return c(0) * x + c(1) * x * x / 2.0 + c(2) * x * x * x / 3.0 + c(3) * x * x * x * x / 4.0;
    };
    return prim(hi) - prim(lo);
}

std::pair<double, double> log_rate_span(std::span<const RdPoint> pts)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : pts) {
        if (!(p.bpp > 0.0))
            throw ArgumentError("rate points must have positive bpp");
        lo = std::min(lo, std::log(p.bpp));
        hi = std::max(hi, std::log(p.bpp));
    }
    return {lo, hi};
}

} // namespace

double bd_quality(std::span<const RdPoint> anchor, std::span<const RdPoint> test)
{
    if (anchor.size() < 4 || test.size() < 4)
        throw ArgumentError("Bjontegaard delta needs at least 4 points per curve");
    const auto [alo, ahi] = log_rate_span(anchor);
    const auto [tlo, thi] = log_rate_span(test);
    const double lo = std::max(alo, tlo);
    const double hi = std::min(ahi, thi);
    if (!(hi > lo))
        throw ArgumentError("rate-distortion curves do not overlap in rate");
    const auto ca = fit_cubic(anchor);
    const auto ct = fit_cubic(test);
    return (integrate_cubic(ct, lo, hi) - integrate_cubic(ca, lo, hi)) / (hi - lo);
}

} // namespace volift
