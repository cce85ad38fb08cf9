#include "volift/nn3d.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "volift/errors.h"

namespace volift {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

// Source index of position i-1 (i in [0, n+1]) under reflect-without-repeat;
// a length-1 axis reflects onto itself.
std::vector<std::size_t> reflect_table(std::size_t n)
{
    std::vector<std::size_t> t(n + 2);
    for (std::size_t i = 0; i < n + 2; ++i) {
        const long p = static_cast<long>(i) - 1;
        long r = p;
        if (n == 1)
            r = 0;
        else if (p < 0)
            r = -p;
        else if (p >= static_cast<long>(n))
            r = 2 * static_cast<long>(n) - 2 - p;
        t[i] = static_cast<std::size_t>(r);
    }
    return t;
}

// Precomputed source voxel for every (voxel, tap) pair of a shape.
struct TapIndex {
    std::vector<std::uint32_t> src; // voxels * 27

    explicit TapIndex(const Shape& s) : src(s.voxels() * Conv3DLayer::kTaps)
    {
        const auto rd = reflect_table(s.d);
        const auto rh = reflect_table(s.h);
        const auto rw = reflect_table(s.w);
        std::size_t p = 0;
        for (std::size_t d = 0; d < s.d; ++d)
            for (std::size_t h = 0; h < s.h; ++h)
                for (std::size_t w = 0; w < s.w; ++w, ++p) {
                    std::uint32_t* out = &src[p * Conv3DLayer::kTaps];
                    for (int kd = 0; kd < 3; ++kd)
                        for (int kh = 0; kh < 3; ++kh)
                            for (int kw = 0; kw < 3; ++kw)
                                *out++ = static_cast<std::uint32_t>(
                                    (rd[d + kd] * s.h + rh[h + kh]) * s.w + rw[w + kw]);
                }
    }
};

constexpr std::size_t kBlockElems = 1u << 18;

std::size_t block_rows(std::size_t cols)
{
    return std::max<std::size_t>(64, kBlockElems / std::max<std::size_t>(cols, 1));
}

// Column rows are tap-major: row[t * cin + ci].
void gather_columns(const FeatureMap& in, const TapIndex& taps, std::size_t p0, std::size_t rows,
                    double* col)
{
    const std::size_t cin = in.channels;
    const std::size_t k = cin * Conv3DLayer::kTaps;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::uint32_t* src = &taps.src[(p0 + r) * Conv3DLayer::kTaps];
        double* row = col + r * k;
        for (std::size_t t = 0; t < Conv3DLayer::kTaps; ++t)
            std::copy_n(&in.data[src[t] * cin], cin, row + t * cin);
    }
}

// Kernel (Cout, Cin, 27) reordered to the tap-major column layout (Cout, 27, Cin).
RowMat tap_major(std::span<const double> kernel, std::size_t cout, std::size_t cin)
{
    const std::size_t taps = Conv3DLayer::kTaps;
    RowMat m(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * taps));
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t t = 0; t < taps; ++t)
                m(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(t * cin + ci)) =
                    kernel[(co * cin + ci) * taps + t];
    return m;
}

// Pins Eigen's GEMM block sizes to fixed cache sizes instead of the host's.
void pin_gemm_blocking()
{
    static const bool pinned = [] {
        Eigen::setCpuCacheSizes(32 * 1024, 1024 * 1024, 8 * 1024 * 1024);
        return true;
    }();
    (void)pinned;
}

// Reusable uninitialized scratch for column blocks.
double* scratch(std::size_t count)
{
    thread_local std::unique_ptr<double[]> buf;
    thread_local std::size_t cap = 0;
    if (count > cap) {
        buf.reset(new double[count]);
        cap = count;
    }
    return buf.get();
}

} // namespace

FeatureMap FeatureMap::from_volume(const Volume3D& v)
{
    FeatureMap f;
    f.channels = 1;
    f.shape = v.shape();
    f.data.assign(v.data().begin(), v.data().end());
    return f;
}

Volume3D FeatureMap::to_volume() const
{
    if (channels != 1)
        throw ArgumentError("feature map with " + std::to_string(channels) + " channels is not a volume");
    return Volume3D(shape, data);
}

Conv3DLayer::Conv3DLayer(std::size_t in_channels, std::size_t out_channels)
    : in_(in_channels), out_(out_channels), kernel_(out_channels * in_channels * kTaps, 0.0),
      bias_(out_channels, 0.0), kernel_grad_(kernel_.size(), 0.0), bias_grad_(out_channels, 0.0)
{
}

FeatureMap Conv3DLayer::forward(const FeatureMap& in) const
{
    if (in.channels != in_)
        throw ArgumentError("conv3d: expected " + std::to_string(in_) + " input channels, got " +
                            std::to_string(in.channels));
    const std::size_t n = in.shape.voxels();
    const std::size_t k = in_ * kTaps;
    FeatureMap out(out_, in.shape);
    const TapIndex taps(in.shape);
    pin_gemm_blocking();
    const RowMat weights = tap_major(kernel_, out_, in_);
    const Eigen::Map<const Eigen::RowVectorXd> b(bias_.data(), static_cast<Eigen::Index>(out_));

    const std::size_t rows = std::min(block_rows(k), n);
    double* col = scratch(rows * k);
    for (std::size_t p0 = 0; p0 < n; p0 += rows) {
        const std::size_t nb = std::min(rows, n - p0);
        gather_columns(in, taps, p0, nb, col);
        const ConstRowMap cols(col, static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(k));
        RowMap o(out.data.data() + p0 * out_, static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(out_));
        o.noalias() = cols * weights.transpose();
        o.rowwise() += b;
    }
    return out;
}

FeatureMap Conv3DLayer::backward(const FeatureMap& in, const FeatureMap& grad_out)
{
    if (in.channels != in_)
        throw ArgumentError("conv3d backward: input channel mismatch");
    if (grad_out.channels != out_ || !(grad_out.shape == in.shape))
        throw ArgumentError("conv3d backward: grad_out shape does not match forward output");
    const std::size_t n = in.shape.voxels();
    const std::size_t k = in_ * kTaps;
    FeatureMap grad_in(in_, in.shape);
    const TapIndex taps(in.shape);
    pin_gemm_blocking();
    const RowMat weights = tap_major(kernel_, out_, in_);
    RowMat kgrad = RowMat::Zero(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(k));
    Eigen::Map<Eigen::RowVectorXd> bgrad(bias_grad_.data(), static_cast<Eigen::Index>(out_));

    const std::size_t rows = std::min(block_rows(k), n);
    double* col = scratch(rows * k);
    RowMat gcol;
    for (std::size_t p0 = 0; p0 < n; p0 += rows) {
        const std::size_t nb = std::min(rows, n - p0);
        const ConstRowMap g(grad_out.data.data() + p0 * out_, static_cast<Eigen::Index>(nb),
                            static_cast<Eigen::Index>(out_));
        gather_columns(in, taps, p0, nb, col);
        const ConstRowMap cols(col, static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(k));
        kgrad.noalias() += g.transpose() * cols;
        bgrad += g.colwise().sum();
        gcol.noalias() = g * weights;
        // Scatter: the adjoint of the gather, reflections included.
        for (std::size_t r = 0; r < nb; ++r) {
            const std::uint32_t* src = &taps.src[(p0 + r) * kTaps];
            const double* row = gcol.data() + r * k;
            for (std::size_t t = 0; t < kTaps; ++t) {
                double* v = &grad_in.data[src[t] * in_];
                for (std::size_t ci = 0; ci < in_; ++ci)
                    v[ci] += row[t * in_ + ci];
            }
        }
    }
    for (std::size_t co = 0; co < out_; ++co)
        for (std::size_t ci = 0; ci < in_; ++ci)
            for (std::size_t t = 0; t < kTaps; ++t)
                kernel_grad_[(co * in_ + ci) * kTaps + t] +=
                    kgrad(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(t * in_ + ci));
    return grad_in;
}

void Conv3DLayer::zero_grad()
{
    std::fill(kernel_grad_.begin(), kernel_grad_.end(), 0.0);
    std::fill(bias_grad_.begin(), bias_grad_.end(), 0.0);
}

void Conv3DLayer::init_uniform(Rng& rng)
{
    init_uniform(rng, 1.0 / std::sqrt(static_cast<double>(in_ * kTaps)));
}

void Conv3DLayer::init_uniform(Rng& rng, double bound)
{
    for (double& k : kernel_)
        k = rng.uniform(-bound, bound);
    for (double& b : bias_)
        b = rng.uniform(-bound, bound);
}

void Conv3DLayer::set_zero()
{
    std::fill(kernel_.begin(), kernel_.end(), 0.0);
    std::fill(bias_.begin(), bias_.end(), 0.0);
}

ConvNet::ConvNet(bool residual) : residual_(residual)
{
    layers_.emplace_back(1, kWidth);
    layers_.emplace_back(kWidth, kWidth);
    layers_.emplace_back(kWidth, 1);
}

Volume3D ConvNet::forward(const Volume3D& in, NetCache* cache) const
{
    FeatureMap x = FeatureMap::from_volume(in);
    FeatureMap a1 = layers_[0].forward(x);
    for (double& v : a1.data)
        v = std::tanh(v);
    FeatureMap a2 = layers_[1].forward(a1);
    for (double& v : a2.data)
        v = std::tanh(v);
    FeatureMap y = layers_[2].forward(a2);
    Volume3D out(in.shape(), std::move(y.data));
    if (residual_)
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += in[i];
    if (cache != nullptr) {
        cache->input = in;
        cache->hidden1 = std::move(a1);
        cache->hidden2 = std::move(a2);
    }
    return out;
}

Volume3D ConvNet::backward(const NetCache& cache, const Volume3D& grad_out)
{
    if (cache.hidden2.channels != kWidth || !(cache.hidden2.shape == grad_out.shape()))
        throw StateError("network backward without a matching cached forward");
    auto tanh_grad = [this](FeatureMap& g, const FeatureMap& act) {
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double t = act.data[i];
            g.data[i] *= corrupt_tanh_ ? (1.0 - t) : (1.0 - t * t);
        }
    };
    FeatureMap g = FeatureMap::from_volume(grad_out);
    FeatureMap g2 = layers_[2].backward(cache.hidden2, g);
    tanh_grad(g2, cache.hidden2);
    FeatureMap g1 = layers_[1].backward(cache.hidden1, g2);
    tanh_grad(g1, cache.hidden1);
    FeatureMap gx = layers_[0].backward(FeatureMap::from_volume(cache.input), g1);
    Volume3D grad_in(grad_out.shape(), std::move(gx.data));
    if (residual_)
        for (std::size_t i = 0; i < grad_in.size(); ++i)
            grad_in[i] += grad_out[i];
    return grad_in;
}

Volume3D ConvNet::forward(const Volume3D& in)
{
    NetCache cache;
    Volume3D out = forward(in, &cache);
    last_ = std::move(cache);
    return out;
}

Volume3D ConvNet::backward(const Volume3D& grad_out)
{
    if (!last_)
        throw StateError("network backward called without a cached forward");
    const NetCache cache = std::move(*last_);
    last_.reset();
    return backward(cache, grad_out);
}

std::size_t ConvNet::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers_)
        n += l.kernel().size() + l.bias().size();
    return n;
}

void ConvNet::init(Rng& rng)
{
    layers_[0].init_uniform(rng);
    layers_[1].init_uniform(rng);
    layers_[2].set_zero();
}

void ConvNet::randomize(Rng& rng, double final_scale)
{
    layers_[0].init_uniform(rng);
    layers_[1].init_uniform(rng);
    layers_[2].init_uniform(rng, final_scale / std::sqrt(static_cast<double>(kWidth * Conv3DLayer::kTaps)));
}

void ConvNet::set_zero()
{
    for (auto& l : layers_)
        l.set_zero();
}

void ConvNet::zero_grad()
{
    for (auto& l : layers_)
        l.zero_grad();
}

} // namespace volift
