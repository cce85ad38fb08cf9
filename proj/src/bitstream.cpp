#include "volift/bytes.h"
#include "volift/coder.h"
#include "volift/errors.h"

namespace volift {

std::string hex(std::span<const std::uint8_t> bytes)
{
    static const char* digits = "0123456789abcdef";
    std::string s;
    for (std::uint8_t b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 15]);
    }
    return s;
}

namespace {

void check_padded(const Shape& padded, int levels)
{
    if (levels < 1 || levels > 4)
        throw CorruptStreamError("header levels " + std::to_string(levels) + " outside 1..4");
    const std::size_t m = std::size_t{1} << levels;
    if (padded.d % m != 0 || padded.h % m != 0 || padded.w % m != 0 || padded.voxels() == 0)
        throw CorruptStreamError("padded dims " + padded.str() + " not divisible by " + std::to_string(m));
}

void put_shape(ByteWriter& w, const Shape& s)
{
    w.put_u32(static_cast<std::uint32_t>(s.d));
    w.put_u32(static_cast<std::uint32_t>(s.h));
    w.put_u32(static_cast<std::uint32_t>(s.w));
}

Shape get_shape(ByteReader<CorruptStreamError>& r)
{
    Shape s;
    s.d = r.get_u32();
    s.h = r.get_u32();
    s.w = r.get_u32();
    return s;
}

} // namespace

std::vector<std::uint8_t> write_header(const BitstreamHeader& h)
{
    try {
        check_padded(h.padded_shape, h.levels);
    } catch (const CorruptStreamError& e) {
        throw ArgumentError(e.what());
    }
    ByteWriter w;
    w.put_tag("IW3D");
    w.put_u8(kBitstreamVersion);
    w.put_u8(h.lossless ? 1 : 0);
    put_shape(w, h.original_shape);
    put_shape(w, h.padded_shape);
    w.put_u8(h.levels);
    w.put_f64(h.lossless ? 0.0 : h.qs);
    w.put_bytes(h.model_hash);
    for (std::size_t c = 0; c < kBandClasses; ++c) {
        w.put_i32(h.s_min[c]);
        w.put_i32(h.s_max[c]);
    }
    w.put_u64(h.payload_length);
    return w.take();
}

BitstreamHeader read_header(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "IW3D"))
        throw NotIw3Error();
    ByteReader<CorruptStreamError> r(bytes);
    r.get_bytes(4);
    const std::uint8_t version = r.get_u8();
    if (version != kBitstreamVersion)
        throw UnsupportedVersionError(version);
    BitstreamHeader h;
    const std::uint8_t flags = r.get_u8();
    h.lossless = (flags & 1u) != 0;
    h.original_shape = get_shape(r);
    h.padded_shape = get_shape(r);
    h.levels = r.get_u8();
    h.qs = r.get_f64();
    const auto hash = r.get_bytes(8);
    std::copy(hash.begin(), hash.end(), h.model_hash.begin());
    for (std::size_t c = 0; c < kBandClasses; ++c) {
        h.s_min[c] = r.get_i32();
        h.s_max[c] = r.get_i32();
        if (h.s_min[c] > h.s_max[c])
            throw CorruptStreamError("empty symbol range for band class " + std::to_string(c));
    }
    h.payload_length = r.get_u64();
    check_padded(h.padded_shape, h.levels);
    if (h.original_shape.d > h.padded_shape.d || h.original_shape.h > h.padded_shape.h ||
        h.original_shape.w > h.padded_shape.w || h.original_shape.voxels() == 0)
        throw CorruptStreamError("original dims " + h.original_shape.str() + " exceed padded dims");
    if (!h.lossless && !(h.qs > 0.0))
        throw CorruptStreamError("lossy stream with non-positive quantization step");
    return h;
}

void check_model_hash(const BitstreamHeader& h, const std::array<std::uint8_t, 8>& model_hash)
{
    if (h.model_hash != model_hash)
        throw WrongModelError("wrong model: stream expects model hash " + hex(h.model_hash) + ", found " +
                              hex(model_hash));
}

} // namespace volift
