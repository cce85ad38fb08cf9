#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "volift/errors.h"

namespace volift {

// Little-endian serialization helpers shared by the model, volume and bitstream formats.
class ByteWriter {
public:
    void put_u8(std::uint8_t v) { buf_.push_back(v); }
    void put_u32(std::uint32_t v) { put_le(v, 4); }
    void put_i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v), 4); }
    void put_u64(std::uint64_t v) { put_le(v, 8); }
    void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
    void put_bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void put_tag(std::string_view tag) { buf_.insert(buf_.end(), tag.begin(), tag.end()); }

    std::vector<std::uint8_t>& bytes() { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put_le(std::uint64_t v, int n)
    {
        for (int i = 0; i < n; ++i)
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> buf_;
};

// Reader over a borrowed buffer. Running past the end throws E (constructed from a message).
template <typename E>
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> buf) : buf_(buf) {}

    std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
    std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
    std::int32_t get_i32() { return static_cast<std::int32_t>(get_u32()); }
    std::uint64_t get_u64() { return get_le(8); }
    double get_f64() { return std::bit_cast<double>(get_le(8)); }

    std::span<const std::uint8_t> get_bytes(std::size_t n)
    {
        need(n);
        auto out = buf_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (buf_.size() - pos_ < n)
            throw E("truncated input: needed " + std::to_string(n) + " more bytes, " +
                    std::to_string(buf_.size() - pos_) + " available");
    }

    std::uint64_t get_le(int n)
    {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace volift
