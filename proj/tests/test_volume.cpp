#include <doctest.h>

#include <cmath>
#include <fstream>

#include "support.h"
#include "volift/bytes.h"
#include "volift/errors.h"
#include "volift/volume.h"

using namespace volift;

namespace {

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) { write_file(path, bytes); }

std::size_t ceil_to(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

} // namespace

TEST_CASE("Volume3D rejects empty shapes and mismatched data")
{
    CHECK_THROWS_AS(Volume3D(Shape{0, 4, 4}), ArgumentError);
    CHECK_THROWS_AS(Volume3D(Shape{2, 2, 2}, std::vector<double>(7, 0.0)), ArgumentError);
}

TEST_CASE("u8-raw volumes only hold integers in 0..255")
{
    CHECK_THROWS_AS(Volume3D(Shape{1, 1, 2}, {0.0, 256.0}, ValueDomain::U8Raw), DomainError);
    CHECK_THROWS_AS(Volume3D(Shape{1, 1, 2}, {0.5, 1.0}, ValueDomain::U8Raw), DomainError);
    CHECK_THROWS_AS(Volume3D(Shape{1, 1, 1}, {-1.0}, ValueDomain::U8Raw), DomainError);
    CHECK_NOTHROW(Volume3D(Shape{1, 1, 2}, {0.0, 255.0}, ValueDomain::U8Raw));
}

TEST_CASE("load_raw maps bytes with W fastest and D slowest")
{
    test::TempDir dir;
    write_bytes(dir.file("a.raw"), {0, 1, 2, 3, 4, 5, 6, 7});
    const Volume3D v = load_raw(dir.file("a.raw"), {2, 2, 2});
    CHECK(v.domain() == ValueDomain::U8Raw);
    CHECK(v(0, 0, 0) == 0.0);
    CHECK(v(0, 0, 1) == 1.0);
    CHECK(v(0, 1, 0) == 2.0);
    CHECK(v(1, 0, 0) == 4.0);
    CHECK(v(1, 1, 1) == 7.0);
}

TEST_CASE("load_raw of an all-zero 64^3 file is a constant volume")
{
    test::TempDir dir;
    write_bytes(dir.file("z.raw"), std::vector<std::uint8_t>(64 * 64 * 64, 0));
    const Volume3D v = load_raw(dir.file("z.raw"), {64, 64, 64});
    CHECK(v.size() == 64u * 64u * 64u);
    CHECK(std::all_of(v.data().begin(), v.data().end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("load_raw names expected and actual sizes on mismatch")
{
    test::TempDir dir;
    write_bytes(dir.file("b.raw"), std::vector<std::uint8_t>(100, 1));
    try {
        load_raw(dir.file("b.raw"), {2, 2, 2});
        FAIL("expected an I/O error");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('8') != std::string::npos);
        CHECK(msg.find("100") != std::string::npos);
    }
    CHECK_THROWS_AS(load_raw(dir.file("missing.raw"), {2, 2, 2}), IoError);
}

TEST_CASE("save_raw and load_raw are inverse")
{
    test::TempDir dir;
    const Volume3D v = test::random_u8({4, 4, 4}, 11);
    save_raw(v, dir.file("r.raw"));
    CHECK(read_file(dir.file("r.raw")).size() == 64);
    CHECK(load_raw(dir.file("r.raw"), {4, 4, 4}) == v);

    // load then save reproduces the file bytes.
    const auto bytes = read_file(dir.file("r.raw"));
    save_raw(load_raw(dir.file("r.raw"), {4, 4, 4}), dir.file("r2.raw"));
    CHECK(read_file(dir.file("r2.raw")) == bytes);
}

TEST_CASE("constant-255 volume saves as 0xFF bytes")
{
    test::TempDir dir;
    save_raw(Volume3D({2, 2, 2}, std::vector<double>(8, 255.0), ValueDomain::U8Raw), dir.file("f.raw"));
    CHECK(read_file(dir.file("f.raw")) == std::vector<std::uint8_t>(8, 0xFF));
}

TEST_CASE("save_raw rejects coefficient volumes")
{
    test::TempDir dir;
    CHECK_THROWS_AS(save_raw(Volume3D({2, 2, 2}, std::vector<double>(8, 1.0)), dir.file("c.raw")), DomainError);
}

TEST_CASE("v3d files carry their shape")
{
    test::TempDir dir;
    const Volume3D v = test::random_u8({3, 5, 7}, 2);
    save_v3d(v, dir.file("v.v3d"));
    const auto bytes = read_file(dir.file("v.v3d"));
    REQUIRE(bytes.size() == 16 + 105);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "V3D1");
    CHECK(bytes[4] == 3);
    CHECK(bytes[8] == 5);
    CHECK(bytes[12] == 7);
    CHECK(load_v3d(dir.file("v.v3d")) == v);
    CHECK(load_volume(dir.file("v.v3d"), nullptr) == v);

    write_bytes(dir.file("bad.v3d"), {'X', 'X', 'X', 'X', 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 9});
    CHECK_THROWS_AS(load_v3d(dir.file("bad.v3d")), IoError);
    write_bytes(dir.file("short.v3d"), {'V', '3', 'D', '1', 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 9});
    CHECK_THROWS_AS(load_v3d(dir.file("short.v3d")), IoError);
}

TEST_CASE("raw input needs a shape")
{
    test::TempDir dir;
    write_bytes(dir.file("a.raw"), {1, 2});
    CHECK_THROWS_AS(load_volume(dir.file("a.raw"), nullptr), ArgumentError);
}

TEST_CASE("pad_to_multiple examples")
{
    Rng rng(3);
    const Volume3D big = test::random_u8({64, 64, 64}, 4);
    CHECK(pad_to_multiple(big, 4) == big);

    const Volume3D v = test::random_u8({3, 4, 4}, 5);
    const Volume3D p = pad_to_multiple(v, 4);
    REQUIRE(p.shape() == Shape{4, 4, 4});
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 4; ++w)
            CHECK(p(3, h, w) == p(2, h, w));

    CHECK(pad_to_multiple(test::random_u8({5, 6, 7}, 6), 4).shape() == Shape{8, 8, 8});
    CHECK_THROWS_AS(pad_to_multiple(v, 0), ArgumentError);
}

TEST_CASE("pad_to_multiple property: ceiling shape and clamp-to-edge values")
{
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const Shape s{1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(9)};
        const std::size_t m = 1 + rng.below(5);
        const Volume3D v = test::random_u8(s, 100 + static_cast<std::uint64_t>(trial));
        const Volume3D p = pad_to_multiple(v, m);
        REQUIRE(p.shape() == Shape{ceil_to(s.d, m), ceil_to(s.h, m), ceil_to(s.w, m)});
        for (std::size_t d = 0; d < p.shape().d; ++d)
            for (std::size_t h = 0; h < p.shape().h; ++h)
                for (std::size_t w = 0; w < p.shape().w; ++w)
                    REQUIRE(p(d, h, w) == v(std::min(d, s.d - 1), std::min(h, s.h - 1), std::min(w, s.w - 1)));
        CHECK(crop(p, s) == v);
    }
}

TEST_CASE("crop examples")
{
    const Volume3D v = test::random_u8({3, 4, 4}, 8);
    CHECK(crop(v, v.shape()) == v);
    CHECK(crop(pad_to_multiple(v, 4), {3, 4, 4}) == v);
    CHECK_THROWS_AS(crop(test::random_u8({2, 2, 2}, 1), {4, 4, 4}), ArgumentError);
}

TEST_CASE("extract takes the block at an origin")
{
    const Volume3D v = test::random_u8({6, 5, 4}, 9);
    const Volume3D b = extract(v, {2, 1, 3}, {3, 2, 1});
    for (std::size_t d = 0; d < 3; ++d)
        for (std::size_t h = 0; h < 2; ++h)
            CHECK(b(d, h, 0) == v(d + 2, h + 1, 3));
    CHECK_THROWS_AS(extract(v, {4, 0, 0}, {3, 1, 1}), ArgumentError);
}
