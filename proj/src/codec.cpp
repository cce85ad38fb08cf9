#include "volift/codec.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "volift/errors.h"

namespace volift {

namespace {

constexpr std::int64_t kMaxTableSymbols = CdfTable::kTotal - 1;

void check_qs(double qs)
{
    if (!(qs > 0.0) || !std::isfinite(qs))
        throw ArgumentError("quantization step must be positive, got " + std::to_string(qs));
}

// Table range for a band: the observed range, narrowed to the table budget
// (values outside are escaped) around zero when possible.
std::pair<std::int32_t, std::int32_t> table_range(const Volume3D& band)
{
    const auto [lo_it, hi_it] = std::minmax_element(band.data().begin(), band.data().end());
    const double lo_d = *lo_it;
    const double hi_d = *hi_it;
    constexpr double i32min = std::numeric_limits<std::int32_t>::min();
    constexpr double i32max = std::numeric_limits<std::int32_t>::max();
    if (lo_d < i32min || hi_d > i32max)
        throw RangeError("quantized coefficient does not fit in 32 bits; quantization step too small");
    auto lo = static_cast<std::int64_t>(lo_d);
    auto hi = static_cast<std::int64_t>(hi_d);
    if (hi - lo + 1 > kMaxTableSymbols) {
        const std::int64_t center = std::clamp<std::int64_t>(0, lo, hi);
        lo = std::max(lo, center - kMaxTableSymbols / 2);
        hi = lo + kMaxTableSymbols - 1;
    }
    return {static_cast<std::int32_t>(lo), static_cast<std::int32_t>(hi)};
}

std::vector<std::int64_t> to_symbols(const Volume3D& band)
{
    std::vector<std::int64_t> s(band.size());
    std::transform(band.data().begin(), band.data().end(), s.begin(),
                   [](double q) { return static_cast<std::int64_t>(q); });
    return s;
}

struct DecodedStream {
    BitstreamHeader header;
    SubbandPyramid bands;
};

DecodedStream decode_bands(std::span<const std::uint8_t> bytes, const ParamStore& model)
{
    const BitstreamHeader h = read_header(bytes);
    check_model_hash(h, model_hash(model));
    if (h.levels != 2)
        throw CorruptStreamError("stream uses " + std::to_string(h.levels) + " levels; only 2 are supported");
    if (bytes.size() - kHeaderSize != h.payload_length)
        throw CorruptStreamError("payload is " + std::to_string(bytes.size() - kHeaderSize) +
                                 " bytes, header declares " + std::to_string(h.payload_length));

    DecodedStream out;
    out.header = h;
    out.bands.levels = h.levels;
    out.bands.original_shape = h.original_shape;
    out.bands.padded_shape = h.padded_shape;
    RangeDecoder dec(bytes.subspan(kHeaderSize));
    for (std::size_t b = 0; b < kBandClasses; ++b) {
        const int level = b < 8 ? 2 : 1;
        const int label = b < 8 ? static_cast<int>(b) : static_cast<int>(b - 8 + 1);
        const Shape s{h.padded_shape.d >> level, h.padded_shape.h >> level, h.padded_shape.w >> level};
        const CdfTable table = build_cdf_table(model.entropy, b, h.s_min[b], h.s_max[b]);
        const auto symbols = decode_symbols(dec, table, s.voxels());
        std::vector<double> values(symbols.begin(), symbols.end());
        out.bands.bands.push_back({kBandLabels[static_cast<std::size_t>(label)], level, Volume3D(s, std::move(values))});
    }
    if (dec.position() != h.payload_length)
        throw CorruptStreamError("payload has " + std::to_string(h.payload_length - dec.position()) +
                                 " trailing bytes");
    return out;
}

Volume3D reconstruct_working(const DecodedStream& s, const ParamStore& model)
{
    const CodecMode mode = s.header.lossless ? CodecMode::Lossless : CodecMode::Lossy;
    const LiftConfig cfg = lift_config_for(mode, s.header.levels);
    const ScaledNetOperator p(model.predict, cfg.value_scale);
    const ScaledNetOperator u(model.update, cfg.value_scale);
    SubbandPyramid coeffs = s.bands;
    if (!s.header.lossless)
        for (auto& b : coeffs.bands)
            b.data = dequantize(b.data, s.header.qs);
    return crop(dwt3d_inverse(coeffs, cfg, p, u), s.header.original_shape);
}

} // namespace

Volume3D quantize(const Volume3D& band, double qs)
{
    check_qs(qs);
    Volume3D q(band.shape());
    for (std::size_t i = 0; i < band.size(); ++i)
        q[i] = round_half_away(band[i] / qs);
    return q;
}

Volume3D dequantize(const Volume3D& q, double qs)
{
    check_qs(qs);
    Volume3D y(q.shape());
    for (std::size_t i = 0; i < q.size(); ++i)
        y[i] = q[i] * qs;
    return y;
}

Volume3D to_working_domain(const Volume3D& u8, CodecMode mode)
{
    if (u8.domain() != ValueDomain::U8Raw)
        throw DomainError("codec input must be an 8-bit volume");
    Volume3D x(u8.shape(), mode == CodecMode::Lossy ? ValueDomain::Normalized : ValueDomain::Coefficient);
    for (std::size_t i = 0; i < u8.size(); ++i)
        x[i] = mode == CodecMode::Lossy ? u8[i] / 255.0 - 0.5 : u8[i] - 128.0;
    return x;
}

Volume3D lossy_to_u8(const Volume3D& working)
{
    std::vector<double> out(working.size());
    for (std::size_t i = 0; i < working.size(); ++i)
        out[i] = std::round(std::clamp(working[i] + 0.5, 0.0, 1.0) * 255.0);
    return Volume3D(working.shape(), std::move(out), ValueDomain::U8Raw);
}

LiftConfig lift_config_for(CodecMode mode, int levels)
{
    LiftConfig cfg;
    cfg.levels = levels;
    cfg.steps = 2;
    cfg.mode = mode == CodecMode::Lossless ? LiftMode::Integer : LiftMode::Float;
    cfg.value_scale = mode == CodecMode::Lossless ? 255.0 : 1.0;
    return cfg;
}

std::vector<std::uint8_t> encode(const Volume3D& v, const ParamStore& model, const CodecConfig& cfg)
{
    if (cfg.levels != 2)
        throw ArgumentError("the bitstream container carries exactly 2 decomposition levels");
    if (v.domain() != ValueDomain::U8Raw || !is_u8_valued(v))
        throw DomainError("codec input must be an 8-bit volume");
    const bool lossless = cfg.mode == CodecMode::Lossless;
    const double qs = lossless ? 1.0 : cfg.qs.value_or(model.qs());
    check_qs(qs);

    const LiftConfig lift = lift_config_for(cfg.mode, cfg.levels);
    const Volume3D padded = pad_to_multiple(to_working_domain(v, cfg.mode), std::size_t{1} << cfg.levels);
    const ScaledNetOperator p(model.predict, lift.value_scale);
    const ScaledNetOperator u(model.update, lift.value_scale);
    SubbandPyramid pyr = dwt3d_forward(padded, lift, p, u);
    if (!lossless)
        for (auto& b : pyr.bands)
            b.data = quantize(b.data, qs);

    BitstreamHeader h;
    h.lossless = lossless;
    h.original_shape = v.shape();
    h.padded_shape = padded.shape();
    h.levels = static_cast<std::uint8_t>(cfg.levels);
    h.qs = lossless ? 0.0 : qs;
    h.model_hash = model_hash(model);

    RangeEncoder enc;
    for (std::size_t b = 0; b < kBandClasses; ++b) {
        const auto [lo, hi] = table_range(pyr.bands[b].data);
        h.s_min[b] = lo;
        h.s_max[b] = hi;
        const CdfTable table = build_cdf_table(model.entropy, b, lo, hi);
        const auto symbols = to_symbols(pyr.bands[b].data);
        encode_symbols(enc, table, symbols);
    }
    const auto payload = enc.finish();
    h.payload_length = payload.size();
    auto out = write_header(h);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Volume3D decode(std::span<const std::uint8_t> bytes, const ParamStore& model)
{
    const DecodedStream s = decode_bands(bytes, model);
    Volume3D x = reconstruct_working(s, model);
    if (s.header.lossless) {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = x[i] + 128.0;
        try {
            return Volume3D(x.shape(), std::move(out), ValueDomain::U8Raw);
        } catch (const DomainError&) {
            throw CorruptStreamError("lossless stream decodes outside the 8-bit range");
        }
    }
    return lossy_to_u8(model.post.forward(x, nullptr));
}

Volume3D decode_without_postprocessing(std::span<const std::uint8_t> bytes, const ParamStore& model)
{
    const DecodedStream s = decode_bands(bytes, model);
    Volume3D x = reconstruct_working(s, model);
    if (s.header.lossless)
        throw ArgumentError("lossless streams have no post-processing stage");
    return lossy_to_u8(x);
}

double bits_per_voxel(std::size_t stream_bytes, const Shape& original)
{
    return static_cast<double>(stream_bytes) * 8.0 / static_cast<double>(original.voxels());
}

} // namespace volift
