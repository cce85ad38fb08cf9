#include "volift/coder.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "volift/errors.h"

namespace volift {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::encode(std::uint32_t start, std::uint32_t freq)
{
    const std::uint32_t r = range_ >> CdfTable::kTotalBits;
    low_ += static_cast<std::uint64_t>(r) * start;
    range_ = r * freq;
    while (range_ < kTop) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::shift_low()
{
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 32);
        std::uint8_t temp = cache_;
        do {
            out_.push_back(static_cast<std::uint8_t>(temp + carry));
            temp = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish()
{
    for (int i = 0; i < 5; ++i)
        shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> in) : in_(in)
{
    for (int i = 0; i < 5; ++i)
        code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte()
{
    if (pos_ >= in_.size())
        throw CorruptStreamError("range decoder ran past the end of the payload");
    return in_[pos_++];
}

std::uint32_t RangeDecoder::peek()
{
    step_ = range_ >> CdfTable::kTotalBits;
    const std::uint32_t v = code_ / step_;
    if (v >= CdfTable::kTotal)
        throw CorruptStreamError("range decoder state out of bounds");
    return v;
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t freq)
{
    code_ -= step_ * start;
    range_ = step_ * freq;
    while (range_ < kTop) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

std::uint32_t RangeDecoder::decode_raw16()
{
    const std::uint32_t v = peek();
    consume(v, 1);
    return v;
}

void encode_symbols(RangeEncoder& enc, const CdfTable& table, std::span<const std::int64_t> symbols)
{
    const std::uint32_t esc = table.escape_index();
    for (const std::int64_t s : symbols) {
        if (table.contains(s)) {
            const auto i = static_cast<std::uint32_t>(s - table.s_min);
            enc.encode(table.cum[i], table.freq(i));
            continue;
        }
        if (s < std::numeric_limits<std::int32_t>::min() || s > std::numeric_limits<std::int32_t>::max())
            throw RangeError("symbol " + std::to_string(s) + " does not fit in 32 bits");
        enc.encode(table.cum[esc], table.freq(esc));
        const auto raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(s));
        enc.encode_raw16(raw >> 16);
        enc.encode_raw16(raw);
    }
}

std::vector<std::int64_t> decode_symbols(RangeDecoder& dec, const CdfTable& table, std::size_t count)
{
    std::vector<std::int64_t> out;
    out.reserve(count);
    const std::uint32_t esc = table.escape_index();
    for (std::size_t n = 0; n < count; ++n) {
        const std::uint32_t target = dec.peek();
        // Last cum entry <= target.
        const auto it = std::upper_bound(table.cum.begin(), table.cum.end(), target);
        const auto i = static_cast<std::uint32_t>(it - table.cum.begin() - 1);
        dec.consume(table.cum[i], table.freq(i));
        if (i != esc) {
            out.push_back(static_cast<std::int64_t>(table.s_min) + i);
            continue;
        }
        const std::uint32_t hi = dec.decode_raw16();
        const std::uint32_t lo = dec.decode_raw16();
        out.push_back(static_cast<std::int32_t>((hi << 16) | lo));
    }
    return out;
}

double table_cross_entropy(const CdfTable& table, std::span<const std::int64_t> symbols)
{
    double bits = 0.0;
    for (const std::int64_t s : symbols) {
        if (table.contains(s))
            bits -= std::log2(table.probability(static_cast<std::uint32_t>(s - table.s_min)));
        else
            bits += 32.0 - std::log2(table.probability(table.escape_index()));
    }
    return bits;
}

} // namespace volift
