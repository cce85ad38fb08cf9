#include <doctest.h>

#include <cmath>

#include "fd.h"
#include "support.h"
#include "volift/errors.h"
#include "volift/nn3d.h"

using namespace volift;

namespace {

// Straightforward reference convolution: explicit mirror indexing per tap.
long mirror(long i, long n)
{
    if (n == 1)
        return 0;
    if (i < 0)
        return -i;
    if (i >= n)
        return 2 * n - 2 - i;
    return i;
}

std::vector<double> naive_conv(const Conv3DLayer& layer, const std::vector<double>& in, Shape s)
{
    const std::size_t ci_n = layer.in_channels();
    const std::size_t co_n = layer.out_channels();
    std::vector<double> out(co_n * s.voxels(), 0.0);
    const long D = static_cast<long>(s.d), H = static_cast<long>(s.h), W = static_cast<long>(s.w);
    for (long d = 0; d < D; ++d)
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w) {
                const std::size_t p = static_cast<std::size_t>((d * H + h) * W + w);
                for (std::size_t co = 0; co < co_n; ++co) {
                    double acc = layer.bias()[co];
                    for (std::size_t ci = 0; ci < ci_n; ++ci)
                        for (int kd = 0; kd < 3; ++kd)
                            for (int kh = 0; kh < 3; ++kh)
                                for (int kw = 0; kw < 3; ++kw) {
                                    const long sd = mirror(d + kd - 1, D), sh = mirror(h + kh - 1, H),
                                               sw = mirror(w + kw - 1, W);
                                    const std::size_t q = static_cast<std::size_t>((sd * H + sh) * W + sw);
                                    acc += layer.kernel()[(co * ci_n + ci) * 27 + static_cast<std::size_t>(kd * 9 + kh * 3 + kw)] *
                                           in[q * ci_n + ci];
                                }
                    out[p * co_n + co] = acc;
                }
            }
    return out;
}

std::vector<double> naive_net(const ConvNet& net, const Volume3D& x)
{
    const Shape s = x.shape();
    std::vector<double> a(x.data().begin(), x.data().end());
    for (std::size_t l = 0; l < 3; ++l) {
        a = naive_conv(net.layers()[l], a, s);
        if (l < 2)
            for (double& v : a)
                v = std::tanh(v);
    }
    if (net.residual())
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] += x[i];
    return a;
}

FeatureMap random_map(std::size_t c, Shape s, Rng& rng)
{
    FeatureMap f(c, s);
    for (double& v : f.data)
        v = rng.uniform(-1.0, 1.0);
    return f;
}

double weighted_sum(std::span<const double> a, std::span<const double> w)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * w[i];
    return s;
}

} // namespace

TEST_CASE("conv3d with zero parameters outputs zeros")
{
    Rng rng(1);
    Conv3DLayer layer(2, 3);
    const FeatureMap out = layer.forward(random_map(2, {4, 3, 5}, rng));
    CHECK(out.channels == 3);
    CHECK(out.shape == Shape{4, 3, 5});
    CHECK(std::all_of(out.data.begin(), out.data.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("conv3d with a centered delta kernel is the identity")
{
    Rng rng(2);
    Conv3DLayer layer(1, 1);
    layer.weight(0, 0, 1, 1, 1) = 1.0;
    const FeatureMap in = random_map(1, {5, 4, 3}, rng);
    CHECK(layer.forward(in).data == in.data);
}

TEST_CASE("conv3d of ones with an all-ones kernel sums 27 taps")
{
    Conv3DLayer layer(1, 1);
    std::fill(layer.kernel().begin(), layer.kernel().end(), 1.0);
    FeatureMap in(1, {3, 3, 3});
    std::fill(in.data.begin(), in.data.end(), 1.0);
    const FeatureMap out = layer.forward(in);
    CHECK(out.data[13] == 27.0);
}

TEST_CASE("conv3d matches a naive reference with mirror boundaries")
{
    Rng rng(3);
    for (const Shape s : {Shape{4, 5, 6}, Shape{1, 3, 2}, Shape{2, 1, 1}}) {
        Conv3DLayer layer(3, 2);
        layer.init_uniform(rng, 0.7);
        const FeatureMap in = random_map(3, s, rng);
        const auto ref = naive_conv(layer, in.data, s);
        const FeatureMap out = layer.forward(in);
        for (std::size_t i = 0; i < ref.size(); ++i)
            REQUIRE(out.data[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv3d rejects channel mismatches")
{
    Rng rng(4);
    Conv3DLayer layer(2, 1);
    CHECK_THROWS_AS(layer.forward(random_map(3, {2, 2, 2}, rng)), ArgumentError);
    const FeatureMap in = random_map(2, {2, 2, 2}, rng);
    CHECK_THROWS_AS(layer.backward(in, FeatureMap(2, {2, 2, 2})), ArgumentError);
    CHECK_THROWS_AS(layer.backward(in, FeatureMap(1, {2, 2, 3})), ArgumentError);
}

TEST_CASE("conv3d is linear in its input without bias")
{
    Rng rng(5);
    Conv3DLayer layer(2, 2);
    layer.init_uniform(rng);
    std::fill(layer.bias().begin(), layer.bias().end(), 0.0);
    const Shape s{3, 4, 5};
    const FeatureMap x = random_map(2, s, rng), y = random_map(2, s, rng);
    FeatureMap mix(2, s);
    for (std::size_t i = 0; i < mix.data.size(); ++i)
        mix.data[i] = 1.5 * x.data[i] - 0.25 * y.data[i];
    const auto fx = layer.forward(x).data, fy = layer.forward(y).data, fm = layer.forward(mix).data;
    for (std::size_t i = 0; i < fm.size(); ++i)
        REQUIRE(fm[i] == doctest::Approx(1.5 * fx[i] - 0.25 * fy[i]).epsilon(1e-12));
}

TEST_CASE("conv3d backward of zero gradient is zero and leaves parameter gradients")
{
    Rng rng(6);
    Conv3DLayer layer(2, 3);
    layer.init_uniform(rng);
    layer.kernel_grad()[5] = 0.125;
    const FeatureMap in = random_map(2, {3, 3, 3}, rng);
    const FeatureMap g = layer.backward(in, FeatureMap(3, {3, 3, 3}));
    CHECK(std::all_of(g.data.begin(), g.data.end(), [](double v) { return v == 0.0; }));
    CHECK(layer.kernel_grad()[5] == 0.125);
    CHECK(std::count(layer.kernel_grad().begin(), layer.kernel_grad().end(), 0.0) ==
          static_cast<long>(layer.kernel_grad().size()) - 1);
}

TEST_CASE("conv3d backward of the identity kernel passes the gradient through")
{
    Rng rng(7);
    Conv3DLayer layer(1, 1);
    layer.weight(0, 0, 1, 1, 1) = 1.0;
    const FeatureMap in = random_map(1, {4, 4, 4}, rng);
    const FeatureMap g = random_map(1, {4, 4, 4}, rng);
    CHECK(layer.backward(in, g).data == g.data);
}

TEST_CASE("conv3d gradients match central differences")
{
    Rng rng(8);
    Conv3DLayer layer(1, 2);
    layer.init_uniform(rng, 1.0);
    const Shape s{4, 4, 4};
    FeatureMap in = random_map(1, s, rng);
    const FeatureMap w = random_map(2, s, rng);
    auto f = [&] { return weighted_sum(layer.forward(in).data, w.data); };
    layer.zero_grad();
    const FeatureMap gin = layer.backward(in, w);
    CHECK(test::fd_max_rel_error(in.data, gin.data, f) < 1e-6);
    const std::vector<double> gk(layer.kernel_grad().begin(), layer.kernel_grad().end());
    const std::vector<double> gb(layer.bias_grad().begin(), layer.bias_grad().end());
    CHECK(test::fd_max_rel_error(layer.kernel(), gk, f) < 1e-6);
    CHECK(test::fd_max_rel_error(layer.bias(), gb, f) < 1e-6);
}

TEST_CASE("LiftNet with a zero final layer outputs zeros")
{
    Rng rng(9);
    LiftNet net;
    net.init(rng);
    const Volume3D out = net.forward(test::random_real({4, 4, 4}, rng), nullptr);
    CHECK(std::all_of(out.data().begin(), out.data().end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("PostNet with zero parameters is the identity, forward and backward")
{
    Rng rng(10);
    PostNet net;
    const Volume3D x = test::random_real({3, 4, 5}, rng);
    NetCache cache;
    CHECK(net.forward(x, &cache) == x);
    const Volume3D g = test::random_real({3, 4, 5}, rng);
    CHECK(net.backward(cache, g) == g);
}

TEST_CASE("network forward matches an independent evaluator")
{
    Rng rng(11);
    LiftNet lift;
    lift.randomize(rng);
    PostNet post;
    post.randomize(rng);
    const Volume3D x = test::random_real({2, 2, 2}, rng);
    for (const ConvNet* net : {static_cast<const ConvNet*>(&lift), static_cast<const ConvNet*>(&post)}) {
        const auto ref = naive_net(*net, x);
        const Volume3D out = net->forward(x, nullptr);
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("network backward: zero gradient and missing cache")
{
    Rng rng(12);
    LiftNet net;
    net.randomize(rng);
    const Volume3D x = test::random_real({3, 3, 3}, rng);
    CHECK_THROWS_AS(net.backward(Volume3D({3, 3, 3})), StateError);
    net.forward(x);
    const Volume3D g = net.backward(Volume3D({3, 3, 3}));
    CHECK(std::all_of(g.data().begin(), g.data().end(), [](double v) { return v == 0.0; }));
    CHECK_THROWS_AS(net.backward(Volume3D({3, 3, 3})), StateError);

    NetCache cache;
    net.forward(x, &cache);
    CHECK_THROWS_AS(net.backward(cache, Volume3D({3, 3, 4})), StateError);
}

TEST_CASE("network gradients match central differences on a 3^3 input")
{
    Rng rng(13);
    for (bool residual : {false, true}) {
        ConvNet net(residual);
        net.randomize(rng);
        const Shape s{3, 3, 3};
        Volume3D x = test::random_real(s, rng);
        const Volume3D w = test::random_real(s, rng);
        auto f = [&] { return weighted_sum(net.forward(x, nullptr).data(), w.data()); };
        NetCache cache;
        net.forward(x, &cache);
        net.zero_grad();
        const Volume3D gx = net.backward(cache, w);
        CHECK(test::fd_max_rel_error(x.data(), gx.data(), f) < 1e-6);
        for (auto& layer : net.layers()) {
            const std::vector<double> gk(layer.kernel_grad().begin(), layer.kernel_grad().end());
            const std::vector<double> gb(layer.bias_grad().begin(), layer.bias_grad().end());
            CHECK(test::fd_max_rel_error(layer.kernel(), gk, f) < 1e-6);
            CHECK(test::fd_max_rel_error(layer.bias(), gb, f) < 1e-6);
        }
    }
}

TEST_CASE("network output is bounded by the final layer's absolute weights")
{
    Rng rng(14);
    LiftNet net;
    net.randomize(rng);
    const auto& last = net.layers()[2];
    double bound = std::abs(last.bias()[0]);
    for (double k : last.kernel())
        bound += std::abs(k);
    const Volume3D out = net.forward(test::random_real({4, 4, 4}, rng, 50.0), nullptr);
    for (double v : out.data())
        CHECK(std::abs(v) <= bound);
}

TEST_CASE("tanh fault injection changes the backward pass only")
{
    Rng rng(15);
    LiftNet net;
    net.randomize(rng);
    const Volume3D x = test::random_real({3, 3, 3}, rng);
    const Volume3D w = test::random_real({3, 3, 3}, rng);
    NetCache cache;
    const Volume3D y = net.forward(x, &cache);
    const Volume3D good = net.backward(cache, w);
    net.corrupt_tanh_backward(true);
    CHECK(net.forward(x, nullptr) == y);
    CHECK(test::max_abs_diff(net.backward(cache, w), good) > 1e-6);
}

TEST_CASE("init draws hidden layers and zeroes the last layer")
{
    Rng rng(16);
    LiftNet net;
    net.init(rng);
    CHECK(net.parameter_count() == (16 * 27 + 16) + (16 * 16 * 27 + 16) + (16 * 27 + 1));
    const double bound = 1.0 / std::sqrt(27.0);
    for (double k : net.layers()[0].kernel())
        CHECK(std::abs(k) <= bound);
    CHECK(std::any_of(net.layers()[1].kernel().begin(), net.layers()[1].kernel().end(),
                      [](double v) { return v != 0.0; }));
    for (double k : net.layers()[2].kernel())
        CHECK(k == 0.0);
}
