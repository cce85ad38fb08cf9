#include "volift/entropy.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "volift/errors.h"
#include "volift/lifting.h"

namespace volift {

namespace {

constexpr int kIn[EntropyModel::kMaps] = {1, 3, 3, 3};
constexpr int kOut[EntropyModel::kMaps] = {3, 3, 3, 1};

struct MapOffsets {
    std::size_t matrix, bias, gate;
};

constexpr MapOffsets map_offsets(int k)
{
    std::size_t off = 0;
    for (int i = 0; i < k; ++i)
        off += static_cast<std::size_t>(kIn[i] * kOut[i] + kOut[i] + (i < 3 ? kOut[i] : 0));
    const std::size_t m = off;
    const std::size_t b = m + static_cast<std::size_t>(kIn[k] * kOut[k]);
    return {m, b, b + static_cast<std::size_t>(kOut[k])};
}

static_assert(map_offsets(3).bias + 1 == EntropyModel::kParamsPerClass);

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

struct EntropyModel::Trace {
    double in[kMaps][kWidth];
    double z[kMaps][kWidth];
};

EntropyModel::EntropyModel(std::size_t classes)
    : classes_(classes), params_(classes * kParamsPerClass, 0.0), grads_(params_.size(), 0.0)
{
    reset();
}

void EntropyModel::reset()
{
    // Per-map scale 10^(1/4), so the composed slope at init is 1/10.
    const double scale = std::pow(10.0, 1.0 / (kMaps));
    for (std::size_t c = 0; c < classes_; ++c) {
        double* p = &params_[c * kParamsPerClass];
        for (int k = 0; k < kMaps; ++k) {
            const auto off = map_offsets(k);
            const double init = std::log(std::expm1(1.0 / scale / kOut[k]));
            for (int i = 0; i < kIn[k] * kOut[k]; ++i)
                p[off.matrix + static_cast<std::size_t>(i)] = init;
            for (int i = 0; i < kOut[k]; ++i) {
                p[off.bias + static_cast<std::size_t>(i)] = 0.0;
                if (k < kMaps - 1)
                    p[off.gate + static_cast<std::size_t>(i)] = 0.0;
            }
        }
    }
    zero_grad();
}

void EntropyModel::randomize(Rng& rng)
{
    for (std::size_t c = 0; c < classes_; ++c) {
        double* p = &params_[c * kParamsPerClass];
        for (int k = 0; k < kMaps; ++k) {
            const auto off = map_offsets(k);
            for (int i = 0; i < kIn[k] * kOut[k]; ++i)
                p[off.matrix + static_cast<std::size_t>(i)] = rng.uniform(-3.0, 1.5);
            for (int i = 0; i < kOut[k]; ++i) {
                p[off.bias + static_cast<std::size_t>(i)] = rng.uniform(-2.0, 2.0);
                if (k < kMaps - 1)
                    p[off.gate + static_cast<std::size_t>(i)] = rng.uniform(-2.0, 2.0);
            }
        }
    }
}

void EntropyModel::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void EntropyModel::check_class(std::size_t cls) const
{
    if (cls >= classes_)
        throw ArgumentError("entropy class " + std::to_string(cls) + " out of range (" +
                            std::to_string(classes_) + " classes)");
}

double EntropyModel::logit_traced(std::size_t cls, double x, Trace* trace) const
{
    const double* p = &params_[cls * kParamsPerClass];
    double cur[kWidth] = {x, 0.0, 0.0};
    for (int k = 0; k < kMaps; ++k) {
        const auto off = map_offsets(k);
        double next[kWidth] = {0.0, 0.0, 0.0};
        for (int i = 0; i < kOut[k]; ++i) {
            double z = p[off.bias + static_cast<std::size_t>(i)];
            for (int j = 0; j < kIn[k]; ++j)
                z += softplus(p[off.matrix + static_cast<std::size_t>(i * kIn[k] + j)]) * cur[j];
            if (trace != nullptr)
                trace->z[k][i] = z;
            next[i] = k < kMaps - 1 ? z + std::tanh(p[off.gate + static_cast<std::size_t>(i)]) * std::tanh(z) : z;
        }
        if (trace != nullptr)
            std::copy(cur, cur + kWidth, trace->in[k]);
        std::copy(next, next + kWidth, cur);
    }
    return cur[0];
}

void EntropyModel::logit_backward(std::size_t cls, const Trace& trace, double g, double* dx)
{
    const double* p = &params_[cls * kParamsPerClass];
    double* gp = &grads_[cls * kParamsPerClass];
    double g_out[kWidth] = {g, 0.0, 0.0};
    for (int k = kMaps - 1; k >= 0; --k) {
        const auto off = map_offsets(k);
        double g_in[kWidth] = {0.0, 0.0, 0.0};
        for (int i = 0; i < kOut[k]; ++i) {
            double gz = g_out[i];
            if (k < kMaps - 1) {
                const double ta = std::tanh(p[off.gate + static_cast<std::size_t>(i)]);
                const double tz = std::tanh(trace.z[k][i]);
                gp[off.gate + static_cast<std::size_t>(i)] += g_out[i] * tz * (1.0 - ta * ta);
                gz = g_out[i] * (1.0 + ta * (1.0 - tz * tz));
            }
            gp[off.bias + static_cast<std::size_t>(i)] += gz;
            for (int j = 0; j < kIn[k]; ++j) {
                const std::size_t m = off.matrix + static_cast<std::size_t>(i * kIn[k] + j);
                gp[m] += gz * trace.in[k][j] * sigmoid(p[m]);
                g_in[j] += gz * softplus(p[m]);
            }
        }
        std::copy(g_in, g_in + kWidth, g_out);
    }
    if (dx != nullptr)
        *dx = g_out[0];
}

double EntropyModel::logit(std::size_t cls, double x) const
{
    check_class(cls);
    return logit_traced(cls, x, nullptr);
}

double EntropyModel::cdf(std::size_t cls, double x) const { return sigmoid(logit(cls, x)); }

namespace {

// log(sigmoid(u) - sigmoid(l)) for u > l, stable in both tails.
double log_mass(double u, double l)
{
    const double gap = std::max(u - l, 1e-300);
    return u - softplus(u) - softplus(l) + std::log(-std::expm1(-gap));
}

} // namespace

double EntropyModel::mass(std::size_t cls, double q) const
{
    check_class(cls);
    return std::exp(log_mass(logit_traced(cls, q + 0.5, nullptr), logit_traced(cls, q - 0.5, nullptr)));
}

double EntropyModel::pmf(std::size_t cls, long long q) const
{
    return std::max(mass(cls, static_cast<double>(q)), kPmfFloor);
}

double EntropyModel::bits(std::size_t cls, double y, double weight, double* dy)
{
    check_class(cls);
    Trace tu;
    Trace tl;
    const double u = logit_traced(cls, y + 0.5, &tu);
    const double l = logit_traced(cls, y - 0.5, &tl);
    const double lp = log_mass(u, l);
    const double value = std::min(-lp / std::numbers::ln2, 16.0);
    if (weight != 0.0 || dy != nullptr) {
        const double g_lp = -weight / std::numbers::ln2;
        const double inv = 1.0 / std::expm1(std::max(u - l, 1e-300));
        const double gu = g_lp * (sigmoid(-u) + inv);
        const double gl = g_lp * (-sigmoid(l) - inv);
        double dxu = 0.0;
        double dxl = 0.0;
        logit_backward(cls, tu, gu, &dxu);
        logit_backward(cls, tl, gl, &dxl);
        if (dy != nullptr)
            *dy = dxu + dxl;
    }
    return value;
}

double rate_bits(const EntropyModel& model, const SubbandPyramid& quantized)
{
    if (quantized.bands.size() > model.classes())
        throw ArgumentError("pyramid has more bands than the entropy model has classes");
    double total = 0.0;
    for (std::size_t b = 0; b < quantized.bands.size(); ++b) {
        const Volume3D& band = quantized.bands[b].data;
        if (!is_integer_valued(band))
            throw ArgumentError("rate_bits: band " + quantized.bands[b].label + " is not integer-valued");
        for (double q : band.data())
            total += -std::log2(model.pmf(b, static_cast<long long>(q)));
    }
    return total;
}

double RateTerm::forward(const SubbandPyramid& relaxed)
{
    if (relaxed.bands.size() > model_.classes())
        throw ArgumentError("pyramid has more bands than the entropy model has classes");
    cached_.clear();
    double total = 0.0;
    for (std::size_t b = 0; b < relaxed.bands.size(); ++b) {
        const auto values = relaxed.bands[b].data.data();
        cached_.emplace_back(values.begin(), values.end());
        for (double y : values)
            total += model_.bits(b, y);
    }
    layout_ = &relaxed;
    have_forward_ = true;
    return total;
}

SubbandPyramid RateTerm::backward(double grad_scale)
{
    if (!have_forward_)
        throw StateError("rate backward called without a cached forward");
    SubbandPyramid grad = layout_->zeros_like();
    if (grad_scale == 0.0)
        return grad;
    for (std::size_t b = 0; b < cached_.size(); ++b) {
        auto g = grad.bands[b].data.data();
        for (std::size_t i = 0; i < cached_[b].size(); ++i)
            model_.bits(b, cached_[b][i], grad_scale, &g[i]);
    }
    return grad;
}

CdfTable CdfTable::from_weights(std::int32_t s_min, std::span<const double> weights)
{
    const std::size_t n = weights.size();
    if (n == 0)
        throw ArgumentError("cdf table needs at least one symbol");
    if (n > kTotal - 1)
        throw RangeError("symbol range of " + std::to_string(n) + " exceeds the 2^16 table budget");
    const std::uint32_t avail = kTotal - 1; // one unit reserved for the escape symbol
    const double spare = static_cast<double>(avail - n);
    double sum = 0.0;
    for (double w : weights)
        sum += std::max(w, 0.0);

    std::vector<std::uint32_t> freq(n, 1);
    std::vector<double> remainder(n, 0.0);
    std::uint64_t assigned = n;
    for (std::size_t i = 0; i < n; ++i) {
        const double share = sum > 0.0 ? std::max(weights[i], 0.0) / sum * spare : spare / static_cast<double>(n);
        const double whole = std::floor(share);
        freq[i] += static_cast<std::uint32_t>(whole);
        remainder[i] = share - whole;
        assigned += static_cast<std::uint64_t>(whole);
    }
    std::size_t leftover = avail - assigned;
    if (leftover > 0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
        for (std::size_t i = 0; leftover > 0; ++i, --leftover)
            ++freq[order[i % n]];
    }

    CdfTable t;
    t.s_min = s_min;
    t.s_max = static_cast<std::int32_t>(static_cast<std::int64_t>(s_min) + static_cast<std::int64_t>(n) - 1);
    t.cum.resize(n + 2);
    t.cum[0] = 0;
    for (std::size_t i = 0; i < n; ++i)
        t.cum[i + 1] = t.cum[i] + freq[i];
    t.cum[n + 1] = kTotal;
    return t;
}

CdfTable build_cdf_table(const EntropyModel& model, std::size_t cls, std::int32_t s_min, std::int32_t s_max)
{
    if (s_min > s_max)
        throw ArgumentError("cdf table range is empty");
    const std::int64_t n = static_cast<std::int64_t>(s_max) - s_min + 1;
    if (n > static_cast<std::int64_t>(CdfTable::kTotal) - 1)
        throw RangeError("symbol range [" + std::to_string(s_min) + ", " + std::to_string(s_max) +
                         "] is wider than the 2^16 table budget");
    std::vector<double> weights(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        weights[static_cast<std::size_t>(i)] = model.pmf(cls, s_min + i);
    return CdfTable::from_weights(s_min, weights);
}

} // namespace volift
