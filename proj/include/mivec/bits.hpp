#pragma once

#include <cstdint>
#include <vector>

#include "mivec/errors.hpp"

namespace mivec {

// MSB-first bit packer. Bytes are emitted most-significant bit first.
class BitWriter {
public:
    void put_bit(int b) {
        if (nbits_ % 8 == 0) bytes_.push_back(0);
        if (b) bytes_.back() |= static_cast<uint8_t>(0x80u >> (nbits_ % 8));
        ++nbits_;
    }

    // Writes the low `n` bits of v, most significant first. n <= 64.
    void put_bits(uint64_t v, int n) {
        for (int i = n - 1; i >= 0; --i) put_bit(static_cast<int>((v >> i) & 1u));
    }

    uint64_t bit_count() const { return nbits_; }
    const std::vector<uint8_t>& bytes() const { return bytes_; }
    std::vector<uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<uint8_t> bytes_;
    uint64_t nbits_ = 0;
};

class BitReader {
public:
    BitReader(const uint8_t* data, uint64_t bit_len) : data_(data), bit_len_(bit_len) {}

    bool exhausted() const { return pos_ >= bit_len_; }
    uint64_t bits_left() const { return bit_len_ - pos_; }

    int get_bit() {
        if (pos_ >= bit_len_) throw CorruptStreamError("bits", "read past end of bitstream");
        uint8_t byte = data_[pos_ >> 3];
        int b = (byte >> (7 - (pos_ & 7))) & 1;
        ++pos_;
        return b;
    }

    uint64_t get_bits(int n) {
        uint64_t v = 0;
        for (int i = 0; i < n; ++i) v = (v << 1) | static_cast<uint64_t>(get_bit());
        return v;
    }

private:
    const uint8_t* data_;
    uint64_t bit_len_;
    uint64_t pos_ = 0;
};

// Order-0 Exp-Golomb: v+1 written in binary with (bitlen-1) leading zeros.
void eg_put_unsigned(BitWriter& bw, uint64_t v);
uint64_t eg_get_unsigned(BitReader& br);

// Signed mapping: v > 0 -> 2v-1, v <= 0 -> -2v.
void eg_put_signed(BitWriter& bw, int64_t v);
int64_t eg_get_signed(BitReader& br);

uint32_t crc32(const uint8_t* data, size_t len);

// Big-endian scalar append/read helpers for container layouts.
void be_put_u8(std::vector<uint8_t>& out, uint8_t v);
void be_put_u16(std::vector<uint8_t>& out, uint16_t v);
void be_put_u32(std::vector<uint8_t>& out, uint32_t v);
void be_put_u64(std::vector<uint8_t>& out, uint64_t v);
void be_put_f32(std::vector<uint8_t>& out, float v);

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t len, std::string stage)
        : data_(data), len_(len), stage_(std::move(stage)) {}

    size_t pos() const { return pos_; }
    size_t remaining() const { return len_ - pos_; }

    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    uint64_t u64();
    float f32();
    const uint8_t* bytes(size_t n);

private:
    void need(size_t n) const {
        if (pos_ + n > len_) throw CorruptStreamError(stage_, "truncated data");
    }
    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
    std::string stage_;
};

} // namespace mivec
