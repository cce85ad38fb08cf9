#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "volift/rng.h"
#include "volift/volume.h"

namespace volift {

// Multichannel volume, channel index fastest: data[voxel * channels + c].
struct FeatureMap {
    std::size_t channels = 0;
    Shape shape{0, 0, 0};
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(std::size_t c, Shape s) : channels(c), shape(s), data(c * s.voxels(), 0.0) {}

    static FeatureMap from_volume(const Volume3D& v);
    Volume3D to_volume() const;
};

// 3x3x3 convolution with reflect (no edge repeat) boundary, same-size output.
// Kernel layout is (C_out, C_in, kd, kh, kw), row-major.
class Conv3DLayer {
public:
    static constexpr std::size_t kTaps = 27;

    Conv3DLayer(std::size_t in_channels, std::size_t out_channels);

    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }

    std::span<double> kernel() { return kernel_; }
    std::span<const double> kernel() const { return kernel_; }
    std::span<double> bias() { return bias_; }
    std::span<const double> bias() const { return bias_; }
    std::span<double> kernel_grad() { return kernel_grad_; }
    std::span<const double> kernel_grad() const { return kernel_grad_; }
    std::span<double> bias_grad() { return bias_grad_; }
    std::span<const double> bias_grad() const { return bias_grad_; }

    double& weight(std::size_t co, std::size_t ci, int kd, int kh, int kw)
    {
        return kernel_[(co * in_ + ci) * kTaps + static_cast<std::size_t>((kd * 3 + kh) * 3 + kw)];
    }

    FeatureMap forward(const FeatureMap& in) const;

    // Returns the input gradient and accumulates (+=) kernel and bias gradients.
    FeatureMap backward(const FeatureMap& in, const FeatureMap& grad_out);

    void zero_grad();
    // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for kernel and bias.
    void init_uniform(Rng& rng);
    void init_uniform(Rng& rng, double bound);
    void set_zero();

private:
    std::size_t in_;
    std::size_t out_;
    std::vector<double> kernel_;
    std::vector<double> bias_;
    std::vector<double> kernel_grad_;
    std::vector<double> bias_grad_;
};

// Activations kept from a forward pass for the matching backward pass.
struct NetCache {
    Volume3D input;
    FeatureMap hidden1; // tanh(conv1(input))
    FeatureMap hidden2; // tanh(conv2(hidden1))
};

// conv(1->16) tanh conv(16->16) tanh conv(16->1). With residual = true the
// input is added to the output (post-processing network).
class ConvNet {
public:
    static constexpr std::size_t kWidth = 16;

    explicit ConvNet(bool residual);

    bool residual() const { return residual_; }

    Volume3D forward(const Volume3D& in, NetCache* cache) const;
    Volume3D backward(const NetCache& cache, const Volume3D& grad_out);

    // Stateful convenience pair: forward caches, backward consumes the cache.
    Volume3D forward(const Volume3D& in);
    Volume3D backward(const Volume3D& grad_out);

    std::vector<Conv3DLayer>& layers() { return layers_; }
    const std::vector<Conv3DLayer>& layers() const { return layers_; }
    std::size_t parameter_count() const;

    // Uniform fan-in init for the first two layers, final layer zeroed.
    void init(Rng& rng);
    // Every layer (including the last) drawn uniformly; used for tests.
    void randomize(Rng& rng, double final_scale = 1.0);
    void set_zero();
    void zero_grad();

    // Fault injection for the gradient-check negative control: replaces the
    // tanh derivative (1 - t^2) with (1 - t).
    void corrupt_tanh_backward(bool on) { corrupt_tanh_ = on; }

private:
    bool residual_;
    bool corrupt_tanh_ = false;
    std::vector<Conv3DLayer> layers_;
    std::optional<NetCache> last_;
};

// Predict / update operator of the lifting scheme.
class LiftNet : public ConvNet {
public:
    LiftNet() : ConvNet(false) {}
};

// Decoder-side residual enhancement network.
class PostNet : public ConvNet {
public:
    PostNet() : ConvNet(true) {}
};

} // namespace volift
