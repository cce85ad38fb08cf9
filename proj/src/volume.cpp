#include "volift/volume.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "volift/bytes.h"
#include "volift/errors.h"

namespace volift {

std::string Shape::str() const
{
    return std::to_string(d) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Volume3D::Volume3D(Shape shape, ValueDomain domain)
    : shape_(shape), data_(shape.voxels(), 0.0), domain_(domain)
{
    if (shape.d == 0 || shape.h == 0 || shape.w == 0)
        throw ArgumentError("volume shape components must be >= 1, got " + shape.str());
}

Volume3D::Volume3D(Shape shape, std::vector<double> data, ValueDomain domain)
    : shape_(shape), data_(std::move(data)), domain_(domain)
{
    if (shape.d == 0 || shape.h == 0 || shape.w == 0)
        throw ArgumentError("volume shape components must be >= 1, got " + shape.str());
    if (data_.size() != shape.voxels())
        throw ArgumentError("volume data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape.str());
    if (domain == ValueDomain::U8Raw && !is_u8_valued(*this))
        throw DomainError("u8-raw volume holds values outside the integers 0..255");
}

bool is_u8_valued(const Volume3D& v)
{
    return std::all_of(v.data().begin(), v.data().end(), [](double x) {
        return x >= 0.0 && x <= 255.0 && x == std::floor(x);
    });
}

bool is_integer_valued(const Volume3D& v)
{
    return std::all_of(v.data().begin(), v.data().end(),
                       [](double x) { return std::isfinite(x) && x == std::floor(x); });
}

std::vector<std::uint8_t> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IoError("read failed: " + path);
    return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed: " + path);
}

namespace {

Volume3D from_bytes(std::span<const std::uint8_t> bytes, Shape shape)
{
    std::vector<double> data(bytes.begin(), bytes.end());
    return Volume3D(shape, std::move(data), ValueDomain::U8Raw);
}

std::vector<std::uint8_t> to_bytes(const Volume3D& v)
{
    if (v.domain() != ValueDomain::U8Raw)
        throw DomainError("only u8-raw volumes can be written as bytes");
    if (!is_u8_valued(v))
        throw DomainError("u8-raw volume holds values outside the integers 0..255");
    std::vector<std::uint8_t> out(v.size());
    std::transform(v.data().begin(), v.data().end(), out.begin(),
                   [](double x) { return static_cast<std::uint8_t>(x); });
    return out;
}

} // namespace

Volume3D load_raw(const std::string& path, Shape shape)
{
    const auto bytes = read_file(path);
    if (bytes.size() != shape.voxels())
        throw IoError(path + ": expected " + std::to_string(shape.voxels()) + " bytes for shape " +
                      shape.str() + ", found " + std::to_string(bytes.size()));
    return from_bytes(bytes, shape);
}

void save_raw(const Volume3D& v, const std::string& path)
{
    write_file(path, to_bytes(v));
}

Volume3D load_v3d(const std::string& path)
{
    const auto bytes = read_file(path);
    ByteReader<IoError> r(bytes);
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), "V3D1"))
        throw IoError(path + ": missing V3D1 magic");
    Shape shape;
    shape.d = r.get_u32();
    shape.h = r.get_u32();
    shape.w = r.get_u32();
    if (r.remaining() != shape.voxels())
        throw IoError(path + ": expected " + std::to_string(shape.voxels()) + " payload bytes, found " +
                      std::to_string(r.remaining()));
    return from_bytes(r.get_bytes(shape.voxels()), shape);
}

void save_v3d(const Volume3D& v, const std::string& path)
{
    ByteWriter w;
    w.put_tag("V3D1");
    w.put_u32(static_cast<std::uint32_t>(v.shape().d));
    w.put_u32(static_cast<std::uint32_t>(v.shape().h));
    w.put_u32(static_cast<std::uint32_t>(v.shape().w));
    w.put_bytes(to_bytes(v));
    write_file(path, w.bytes());
}

Volume3D load_volume(const std::string& path, const Shape* raw_shape)
{
    if (std::filesystem::path(path).extension() == ".v3d")
        return load_v3d(path);
    if (raw_shape == nullptr)
        throw ArgumentError(path + ": raw volume needs an explicit shape");
    return load_raw(path, *raw_shape);
}

void save_volume(const Volume3D& v, const std::string& path)
{
    if (std::filesystem::path(path).extension() == ".v3d")
        save_v3d(v, path);
    else
        save_raw(v, path);
}

Volume3D pad_to_multiple(const Volume3D& v, std::size_t m)
{
    if (m == 0)
        throw ArgumentError("pad multiple must be >= 1");
    const Shape& s = v.shape();
    auto up = [m](std::size_t n) { return (n + m - 1) / m * m; };
    const Shape padded{up(s.d), up(s.h), up(s.w)};
    if (padded == s)
        return v;

    Volume3D out(padded, v.domain());
    for (std::size_t d = 0; d < padded.d; ++d) {
        const std::size_t sd = std::min(d, s.d - 1);
        for (std::size_t h = 0; h < padded.h; ++h) {
            const std::size_t sh = std::min(h, s.h - 1);
            for (std::size_t w = 0; w < padded.w; ++w)
                out(d, h, w) = v(sd, sh, std::min(w, s.w - 1));
        }
    }
    return out;
}

Volume3D extract(const Volume3D& v, std::array<std::size_t, 3> origin, Shape shape)
{
    const Shape& s = v.shape();
    if (origin[0] + shape.d > s.d || origin[1] + shape.h > s.h || origin[2] + shape.w > s.w)
        throw ArgumentError("block " + shape.str() + " does not fit inside " + s.str());
    Volume3D out(shape, v.domain());
    for (std::size_t d = 0; d < shape.d; ++d)
        for (std::size_t h = 0; h < shape.h; ++h) {
            const double* src = &v.data()[v.index(origin[0] + d, origin[1] + h, origin[2])];
            std::copy(src, src + shape.w, &out(d, h, 0));
        }
    return out;
}

Volume3D crop(const Volume3D& v, Shape shape)
{
    if (shape == v.shape())
        return v;
    return extract(v, {0, 0, 0}, shape);
}

} // namespace volift
