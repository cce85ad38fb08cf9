#include <doctest.h>

#include <cmath>

#include "support.h"
#include "volift/codec.h"
#include "volift/errors.h"
#include "volift/metrics.h"
#include "volift/synth.h"

using namespace volift;

namespace {

ParamStore random_model(std::uint64_t seed, double final_scale)
{
    ParamStore s = ParamStore::initial(seed);
    Rng rng(seed);
    s.predict.randomize(rng, final_scale);
    s.update.randomize(rng, final_scale);
    return s;
}

CodecConfig lossless()
{
    CodecConfig c;
    c.mode = CodecMode::Lossless;
    return c;
}

CodecConfig lossy(double qs)
{
    CodecConfig c;
    c.qs = qs;
    return c;
}

} // namespace

TEST_CASE("quantize rounds half away from zero")
{
    const Volume3D y({1, 1, 6}, {0.5, -0.5, 1.49, -1.51, 0.0, 7.2});
    const Volume3D q = quantize(y, 1.0);
    CHECK(q == Volume3D({1, 1, 6}, {1, -1, 1, -2, 0, 7}));
    CHECK(quantize(Volume3D({1, 1, 2}, {0.75, -0.25}), 0.5) == Volume3D({1, 1, 2}, {2, -1}));
    CHECK_THROWS_AS(quantize(y, 0.0), ArgumentError);
    CHECK_THROWS_AS(dequantize(y, -1.0), ArgumentError);
}

TEST_CASE("dequantize scales symbols by the step")
{
    CHECK(dequantize(Volume3D({1, 1, 3}, {-2, 0, 3}), 0.25) == Volume3D({1, 1, 3}, {-0.5, 0, 0.75}));
}

TEST_CASE("quantization error is at most half a step")
{
    Rng rng(1);
    for (double qs : {1e-3, 0.03125, 0.7, 5.0}) {
        const Volume3D y = test::random_real({4, 4, 4}, rng, 3.0);
        const Volume3D r = dequantize(quantize(y, qs), qs);
        CHECK(test::max_abs_diff(y, r) <= qs / 2 * (1 + 1e-12));
    }
}

TEST_CASE("working domains")
{
    const Volume3D v({1, 1, 3}, {0, 128, 255}, ValueDomain::U8Raw);
    CHECK(to_working_domain(v, CodecMode::Lossless) == Volume3D({1, 1, 3}, {-128, 0, 127}));
    const Volume3D w = to_working_domain(v, CodecMode::Lossy);
    CHECK(w[0] == -0.5);
    CHECK(w[2] == 0.5);
    CHECK(lossy_to_u8(w) == v);
    CHECK(lossy_to_u8(Volume3D({1, 1, 2}, {-3.0, 9.0})) == Volume3D({1, 1, 2}, {0, 255}));
    CHECK_THROWS_AS(to_working_domain(Volume3D({1, 1, 1}), CodecMode::Lossy), DomainError);
}

TEST_CASE("lossless round trip is exact for initial and random models")
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const ParamStore models[] = {ParamStore::initial(seed), random_model(seed, 0.5), random_model(seed, 2.0)};
        for (const ParamStore& m : models) {
            for (const Shape s : {Shape{16, 16, 16}, Shape{5, 9, 13}, Shape{1, 1, 1}}) {
                const Volume3D v = test::random_u8(s, seed + 100);
                const auto bytes = encode(v, m, lossless());
                REQUIRE(decode(bytes, m) == v);
            }
            const Volume3D em = synth_cube({16, 16, 16}, seed);
            REQUIRE(decode(encode(em, m, lossless()), m) == em);
        }
    }
}

TEST_CASE("lossless round trip keeps extreme volumes exact")
{
    const ParamStore m = random_model(9, 3.0);
    for (double c : {0.0, 255.0}) {
        const Volume3D v({8, 8, 8}, std::vector<double>(512, c), ValueDomain::U8Raw);
        CHECK(decode(encode(v, m, lossless()), m) == v);
    }
    Volume3D checker({8, 8, 8}, ValueDomain::U8Raw);
    for (std::size_t i = 0; i < checker.size(); ++i)
        checker[i] = ((i + i / 8 + i / 64) % 2) ? 255.0 : 0.0;
    CHECK(decode(encode(checker, m, lossless()), m) == checker);
}

TEST_CASE("initial model codes constant cubes cheaply relative to noise")
{
    const ParamStore m = ParamStore::initial(1);
    const Volume3D flat({16, 16, 16}, std::vector<double>(4096, 128.0), ValueDomain::U8Raw);
    const auto a = encode(flat, m, lossless());
    const auto b = encode(test::random_u8({16, 16, 16}, 2), m, lossless());
    CHECK(a.size() < b.size() / 2);
}

TEST_CASE("bits per voxel counts the whole stream against the original shape")
{
    const ParamStore m = ParamStore::initial(1);
    const Volume3D v = test::random_u8({5, 6, 7}, 3);
    const auto bytes = encode(v, m, lossy(0.05));
    CHECK(bits_per_voxel(bytes.size(), v.shape()) == doctest::Approx(bytes.size() * 8.0 / 210.0));
    CHECK(read_header(bytes).original_shape == v.shape());
    CHECK(read_header(bytes).padded_shape == Shape{8, 8, 8});
    CHECK(read_header(bytes).payload_length == bytes.size() - kHeaderSize);
}

TEST_CASE("a tiny quantization step is near lossless")
{
    const ParamStore m = random_model(4, 0.3);
    const Volume3D v = test::random_u8({16, 16, 16}, 4);
    const auto bytes = encode(v, m, lossy(1e-6));
    CHECK(psnr(v, decode(bytes, m)) > 80.0);
}

TEST_CASE("larger steps cost fewer bits and lose quality")
{
    const ParamStore m = ParamStore::initial(5);
    const Volume3D v = synth_cube({16, 16, 16}, 5);
    double prev_bytes = 1e300, prev_psnr = 1e300;
    for (double qs : {0.02, 0.05, 0.1, 0.3}) {
        const auto bytes = encode(v, m, lossy(qs));
        const double p = psnr(v, decode(bytes, m));
        CHECK(static_cast<double>(bytes.size()) < prev_bytes);
        CHECK(p < prev_psnr);
        prev_bytes = static_cast<double>(bytes.size());
        prev_psnr = p;
    }
}

TEST_CASE("the model's own step is used unless overridden")
{
    ParamStore m = ParamStore::initial(6);
    m.log_qs = std::log(0.1);
    const Volume3D v = test::random_u8({8, 8, 8}, 6);
    CHECK(read_header(encode(v, m, CodecConfig{})).qs == doctest::Approx(0.1));
    CHECK(read_header(encode(v, m, lossy(0.3))).qs == 0.3);
    CHECK(read_header(encode(v, m, lossless())).qs == 0.0);
    CHECK_THROWS_AS(encode(v, m, lossy(0.0)), ArgumentError);
}

TEST_CASE("decoding with another model is refused")
{
    const ParamStore a = ParamStore::initial(1);
    const ParamStore b = random_model(2, 0.1);
    const auto bytes = encode(test::random_u8({8, 8, 8}, 7), a, lossless());
    CHECK_THROWS_AS(decode(bytes, b), WrongModelError);
}

TEST_CASE("a zero post-filter leaves the reconstruction unchanged")
{
    const ParamStore m = random_model(8, 0.3);
    const auto bytes = encode(synth_cube({8, 8, 8}, 8), m, lossy(0.02));
    CHECK(decode(bytes, m) == decode_without_postprocessing(bytes, m));

    ParamStore pm = m;
    Rng rng(8);
    pm.post.randomize(rng, 0.5);
    const auto bytes2 = encode(synth_cube({8, 8, 8}, 8), pm, lossy(0.02));
    CHECK_FALSE(decode(bytes2, pm) == decode_without_postprocessing(bytes2, pm));
    const auto ll = encode(synth_cube({8, 8, 8}, 8), pm, lossless());
    CHECK_THROWS_AS(decode_without_postprocessing(ll, pm), ArgumentError);
}

TEST_CASE("encoding and decoding are deterministic")
{
    const ParamStore m = random_model(10, 0.5);
    const Volume3D v = synth_cube({12, 12, 12}, 10);
    for (const CodecConfig& c : {lossless(), lossy(0.01)}) {
        const auto a = encode(v, m, c);
        CHECK(a == encode(v, m, c));
        CHECK(decode(a, m) == decode(a, m));
    }
}

TEST_CASE("damaged streams are rejected")
{
    const ParamStore m = ParamStore::initial(11);
    const auto bytes = encode(synth_cube({8, 8, 8}, 11), m, lossless());
    SUBCASE("truncated payload")
    {
        CHECK_THROWS_AS(decode(std::span(bytes).first(bytes.size() - 1), m), CorruptStreamError);
    }
    SUBCASE("extra bytes")
    {
        auto b = bytes;
        b.push_back(0);
        CHECK_THROWS_AS(decode(b, m), CorruptStreamError);
    }
    SUBCASE("not a bitstream")
    {
        const std::vector<std::uint8_t> junk(300, 0x41);
        CHECK_THROWS_AS(decode(junk, m), NotIw3Error);
    }
}

TEST_CASE("encoder input validation")
{
    const ParamStore m = ParamStore::initial(12);
    CHECK_THROWS_AS(encode(Volume3D({4, 4, 4}), m, lossless()), DomainError);
    CodecConfig c = lossless();
    c.levels = 3;
    CHECK_THROWS_AS(encode(test::random_u8({8, 8, 8}, 1), m, c), ArgumentError);
}
