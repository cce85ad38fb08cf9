#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "volift/entropy.h"
#include "volift/volume.h"

namespace volift {

// Byte-oriented range coder (carry-propagating, LZMA-style low/cache scheme)
// over 16-bit cumulative frequency tables.
class RangeEncoder {
public:
    void encode(std::uint32_t start, std::uint32_t freq);
    // 16 raw bits at uniform probability.
    void encode_raw16(std::uint32_t value) { encode(value & 0xFFFFu, 1); }
    std::vector<std::uint8_t> finish();

private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const std::uint8_t> in);

    // Cumulative-frequency target of the next symbol; follow with consume().
    std::uint32_t peek();
    void consume(std::uint32_t start, std::uint32_t freq);
    std::uint32_t decode_raw16();

    // Bytes read so far.
    std::size_t position() const { return pos_; }

private:
    std::uint8_t next_byte();

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    std::uint32_t code_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t step_ = 0;
};

// In-range symbols use the table; others are the escape symbol followed by
// their 32-bit two's-complement value.
void encode_symbols(RangeEncoder& enc, const CdfTable& table, std::span<const std::int64_t> symbols);
std::vector<std::int64_t> decode_symbols(RangeDecoder& dec, const CdfTable& table, std::size_t count);

// Ideal code length of a sequence under a table, in bits.
double table_cross_entropy(const CdfTable& table, std::span<const std::int64_t> symbols);

inline constexpr std::size_t kBandClasses = 15;
inline constexpr std::size_t kHeaderSize = 175;
inline constexpr std::uint8_t kBitstreamVersion = 1;

struct BitstreamHeader {
    bool lossless = false;
    Shape original_shape{1, 1, 1};
    Shape padded_shape{4, 4, 4};
    std::uint8_t levels = 2;
    double qs = 0.0;
    std::array<std::uint8_t, 8> model_hash{};
    std::array<std::int32_t, kBandClasses> s_min{};
    std::array<std::int32_t, kBandClasses> s_max{};
    std::uint64_t payload_length = 0;

    bool operator==(const BitstreamHeader&) const = default;
};

std::vector<std::uint8_t> write_header(const BitstreamHeader& h);
// Throws NotIw3Error / UnsupportedVersionError / CorruptStreamError.
BitstreamHeader read_header(std::span<const std::uint8_t> bytes);
// WrongModelError naming expected and found hash prefixes.
void check_model_hash(const BitstreamHeader& h, const std::array<std::uint8_t, 8>& model_hash);

std::string hex(std::span<const std::uint8_t> bytes);

} // namespace volift
