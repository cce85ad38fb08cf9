#include <doctest.h>

#include <cmath>
#include <set>

#include "fd.h"
#include "support.h"
#include "volift/errors.h"
#include "volift/lifting.h"

using namespace volift;

namespace {

// Linear stub operator: x -> k * x.
class LinearOp : public LiftOperator {
public:
    explicit LinearOp(double k) : k_(k) {}
    Volume3D apply(const Volume3D& in, NetCache*) const override
    {
        Volume3D out = in;
        for (double& v : out.data())
            v *= k_;
        return out;
    }
    Volume3D adjoint(const NetCache&, const Volume3D& g) override
    {
        Volume3D out = g;
        for (double& v : out.data())
            v *= k_;
        return out;
    }

private:
    double k_;
};

class CountingOp : public LiftOperator {
public:
    mutable int calls = 0;
    Volume3D apply(const Volume3D& in, NetCache*) const override
    {
        ++calls;
        return Volume3D(in.shape());
    }
    Volume3D adjoint(const NetCache&, const Volume3D& g) override { return Volume3D(g.shape()); }
};

Volume3D line(std::vector<double> values)
{
    const std::size_t n = values.size();
    return Volume3D({1, 1, n}, std::move(values));
}

// Random networks with a small final layer so the transform stays well conditioned.
struct RandomNets {
    LiftNet p, u;
    explicit RandomNets(std::uint64_t seed, double final_scale = 0.3)
    {
        Rng rng(seed);
        p.randomize(rng, final_scale);
        u.randomize(rng, final_scale);
    }
};

// Sample of voxel (d, h, w) of the source for a band at `level` with
// high-pass bits (v, h, a) under the lazy wavelet.
double lazy_oracle(const Volume3D& x, int level, int label, std::size_t d, std::size_t h, std::size_t w)
{
    const std::size_t step = std::size_t{1} << level;
    const std::size_t off = step / 2;
    const std::size_t bv = label & 1, bh = (label >> 1) & 1, ba = (label >> 2) & 1;
    return x(d * step + ba * off, h * step + bv * off, w * step + bh * off);
}

double band_energy(const SubbandPyramid& p, const std::vector<double>& weights)
{
    double e = 0.0;
    for (std::size_t b = 0; b < p.bands.size(); ++b)
        for (double v : p.bands[b].data.data())
            e += weights[b] * v * v;
    return e;
}

} // namespace

TEST_CASE("split and merge along each axis")
{
    const Volume3D v = line({0, 1, 2, 3, 4, 5});
    auto [e, o] = split_axis(v, kHorizontal);
    CHECK(e.data()[0] == 0);
    CHECK(e.data()[2] == 4);
    CHECK(o.data()[1] == 3);
    CHECK(merge_axis(e, o, kHorizontal) == v);
    CHECK_THROWS_AS(split_axis(line({1, 2, 3}), kHorizontal), ArgumentError);
    CHECK_THROWS_AS(split_axis(v, 3), ArgumentError);
    CHECK_THROWS_AS(merge_axis(e, line({1}), kHorizontal), ArgumentError);

    const Volume3D cube = test::random_u8({4, 6, 2}, 1);
    for (int axis : {kAxial, kVertical, kHorizontal}) {
        auto [a, b] = split_axis(cube, axis);
        CHECK(a.shape()[axis] == cube.shape()[axis] / 2);
        CHECK(merge_axis(a, b, axis) == cube);
    }
}

TEST_CASE("one predict/update pair on a short line")
{
    LinearOp p(1.0), u(0.5);
    LiftConfig cfg;
    cfg.steps = 1;
    auto [low, high] = lift_axis_forward(line({2, 3, 4, 5}), kHorizontal, p, u, cfg);
    CHECK(high == line({1, 1}));
    CHECK(low == line({2.5, 4.5}));
    CHECK(lift_axis_inverse(low, high, kHorizontal, p, u, cfg) == line({2, 3, 4, 5}));
}

TEST_CASE("integer lifting rounds the operator output half away from zero")
{
    LinearOp p(0.5), u(0.25);
    LiftConfig cfg;
    cfg.steps = 1;
    cfg.mode = LiftMode::Integer;
    auto [low, high] = lift_axis_forward(line({3, 5, -3, -6}), kHorizontal, p, u, cfg);
    // high = odd - round(even / 2) = [5 - 2, -6 - (-2)], low = even + round(high / 4)
    CHECK(high == line({3, -4}));
    CHECK(low == line({4, -4}));
    CHECK(lift_axis_inverse(low, high, kHorizontal, p, u, cfg) == line({3, 5, -3, -6}));
    CHECK(round_half_away(2.5) == 3.0);
    CHECK(round_half_away(-2.5) == -3.0);
    CHECK_THROWS_AS(lift_axis_forward(line({0.5, 1}), kHorizontal, p, u, cfg), ArgumentError);
}

TEST_CASE("band layout: 15 bands, shapes and critical sampling")
{
    CHECK(band_count_for_levels(2) == 15);
    CHECK(band_position(2, 2, 0) == 0);
    CHECK(band_position(2, 2, 7) == 7);
    CHECK(band_position(2, 1, 1) == 8);
    CHECK(band_position(2, 1, 7) == 14);
    CHECK_THROWS_AS(band_position(2, 1, 0), ArgumentError);

    LiftNet zp, zu;
    ScaledNetOperator p(zp, 1.0), u(zu, 1.0);
    const Shape s{8, 12, 16};
    const auto pyr = dwt3d_forward(test::random_u8(s, 2), LiftConfig{}, p, u);
    CHECK(pyr.band_count() == 15);
    CHECK(pyr.voxel_count() == s.voxels());
    std::set<std::string> level1;
    for (const auto& b : pyr.bands) {
        const std::size_t f = std::size_t{1} << b.level;
        CHECK(b.data.shape() == Shape{s.d / f, s.h / f, s.w / f});
        if (b.level == 1)
            level1.insert(b.label);
    }
    CHECK(level1.size() == 7);
    CHECK(pyr.bands[0].label == "LLL");
    CHECK_THROWS_AS(dwt3d_forward(test::random_u8({6, 8, 8}, 3), LiftConfig{}, p, u), ArgumentError);
}

TEST_CASE("zero networks give the lazy wavelet, a pure permutation")
{
    LiftNet zp, zu;
    for (const double scale : {1.0, 255.0}) {
        ScaledNetOperator p(zp, scale), u(zu, scale);
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const Volume3D x = test::random_u8({8, 8, 16}, seed);
            const auto pyr = dwt3d_forward(x, LiftConfig{}, p, u);
            std::multiset<double> in(x.data().begin(), x.data().end()), out;
            for (std::size_t b = 0; b < pyr.bands.size(); ++b) {
                const Subband& band = pyr.bands[b];
                const int label = static_cast<int>(std::find(kBandLabels.begin(), kBandLabels.end(),
                                                             std::string_view(band.label)) -
                                                   kBandLabels.begin());
                const Shape bs = band.data.shape();
                for (std::size_t d = 0; d < bs.d; ++d)
                    for (std::size_t h = 0; h < bs.h; ++h)
                        for (std::size_t w = 0; w < bs.w; ++w)
                            REQUIRE(band.data(d, h, w) == lazy_oracle(x, band.level, label, d, h, w));
                out.insert(band.data.data().begin(), band.data.data().end());
            }
            CHECK(in == out);
        }
    }
}

TEST_CASE("float transform round trip is accurate for random networks")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RandomNets nets(seed);
        ScaledNetOperator p(nets.p, 1.0), u(nets.u, 1.0);
        Rng rng(seed);
        const Volume3D x = test::random_real({8, 8, 8}, rng, 0.5);
        const Volume3D r = dwt3d_inverse(dwt3d_forward(x, LiftConfig{}, p, u), LiftConfig{}, p, u);
        CHECK(test::max_abs_diff(x, r) < 1e-9);
    }
}

TEST_CASE("integer transform round trip is exact for random networks and levels")
{
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        RandomNets nets(seed + 10, 1.0);
        ScaledNetOperator p(nets.p, 255.0), u(nets.u, 255.0);
        for (int levels : {1, 2, 3}) {
            LiftConfig cfg;
            cfg.mode = LiftMode::Integer;
            cfg.levels = levels;
            Volume3D x = test::random_u8({8, 8, 8}, seed);
            for (double& v : x.data())
                v -= 128.0;
            const auto pyr = dwt3d_forward(x, cfg, p, u);
            for (const auto& b : pyr.bands)
                CHECK(is_integer_valued(b.data));
            CHECK(dwt3d_inverse(pyr, cfg, p, u) == x);
        }
    }
}

TEST_CASE("the same two operators serve every axis and level")
{
    CountingOp p, u;
    const auto pyr = dwt3d_forward(test::random_u8({8, 8, 8}, 4), LiftConfig{}, p, u);
    // 2 levels x 7 axis passes x 2 lifting pairs.
    CHECK(p.calls == 28);
    CHECK(u.calls == 28);
    dwt3d_inverse(pyr, LiftConfig{}, p, u);
    CHECK(p.calls == 56);
    CHECK(u.calls == 56);
}

TEST_CASE("adjoint requires a recorded pass")
{
    LiftNet zp, zu;
    ScaledNetOperator p(zp, 1.0), u(zu, 1.0);
    LiftingTransform t(p, u, LiftConfig{});
    const Volume3D x({4, 4, 4});
    const auto pyr = t.forward(x);
    CHECK_THROWS_AS(t.forward_adjoint(pyr), StateError);
    CHECK_THROWS_AS(t.inverse_adjoint(x), StateError);
    LiftConfig bad;
    bad.levels = 0;
    CHECK_THROWS_AS(LiftingTransform(p, u, bad), ArgumentError);
}

TEST_CASE("zero-network gradient of the LLL sum reaches exactly its own voxels")
{
    LiftNet zp, zu;
    ScaledNetOperator p(zp, 1.0), u(zu, 1.0);
    LiftingTransform t(p, u, LiftConfig{});
    t.set_recording(true);
    const Volume3D x({8, 8, 8});
    const auto pyr = t.forward(x);
    auto g = pyr.zeros_like();
    std::fill(g.bands[0].data.data().begin(), g.bands[0].data.data().end(), 1.0);
    const Volume3D gx = t.forward_adjoint(g);
    for (std::size_t d = 0; d < 8; ++d)
        for (std::size_t h = 0; h < 8; ++h)
            for (std::size_t w = 0; w < 8; ++w)
                CHECK(gx(d, h, w) == ((d % 4 == 0 && h % 4 == 0 && w % 4 == 0) ? 1.0 : 0.0));
}

TEST_CASE("transform gradients match central differences")
{
    RandomNets nets(21, 1.0);
    Rng rng(21);
    for (const double scale : {1.0, 255.0}) {
        ScaledNetOperator p(nets.p, scale), u(nets.u, scale);
        LiftingTransform t(p, u, LiftConfig{});
        t.set_recording(true);
        Volume3D x = test::random_real({4, 4, 8}, rng, scale == 1.0 ? 0.5 : 100.0);
        std::vector<double> weights(15);
        for (double& w : weights)
            w = rng.uniform(0.1, 1.0);

        auto f = [&] { return band_energy(dwt3d_forward(x, LiftConfig{}, p, u), weights); };
        const auto pyr = t.forward(x);
        auto g = pyr;
        for (std::size_t b = 0; b < g.bands.size(); ++b)
            for (double& v : g.bands[b].data.data())
                v *= 2.0 * weights[b];
        nets.p.zero_grad();
        nets.u.zero_grad();
        const Volume3D gx = t.forward_adjoint(g);
        CHECK(test::fd_max_rel_error(x.data(), gx.data(), f, 1e-5 * scale, 1e-6) < 1e-5);

        // A sample of kernel entries from each network.
        for (LiftNet* net : {&nets.p, &nets.u}) {
            auto k = net->layers()[1].kernel().first(40);
            const std::vector<double> gk(net->layers()[1].kernel_grad().begin(),
                                         net->layers()[1].kernel_grad().begin() + 40);
            CHECK(test::fd_max_rel_error(k, gk, f, 1e-6, 1e-6) < 1e-4);
        }
    }
}

TEST_CASE("inverse adjoint matches central differences")
{
    RandomNets nets(22, 1.0);
    ScaledNetOperator p(nets.p, 1.0), u(nets.u, 1.0);
    LiftingTransform t(p, u, LiftConfig{});
    t.set_recording(true);
    Rng rng(22);
    auto pyr = dwt3d_forward(test::random_real({4, 4, 4}, rng, 0.5), LiftConfig{}, p, u);
    const Volume3D w = test::random_real({4, 4, 4}, rng);
    auto f = [&] {
        const Volume3D r = dwt3d_inverse(pyr, LiftConfig{}, p, u);
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            s += r[i] * w[i];
        return s;
    };
    t.inverse(pyr);
    const auto g = t.inverse_adjoint(w);
    for (std::size_t b = 0; b < pyr.bands.size(); ++b)
        CHECK(test::fd_max_rel_error(pyr.bands[b].data.data(), g.bands[b].data.data(), f, 1e-5, 1e-6) < 1e-5);
}
