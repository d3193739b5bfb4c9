#include "mivec/bits.hpp"

#include <bit>
#include <cstring>

#include <zlib.h>

namespace mivec {

void eg_put_unsigned(BitWriter& bw, uint64_t v) {
    uint64_t x = v + 1;
    int len = 64 - std::countl_zero(x);
    for (int i = 0; i < len - 1; ++i) bw.put_bit(0);
    bw.put_bits(x, len);
}

uint64_t eg_get_unsigned(BitReader& br) {
    int zeros = 0;
    while (br.get_bit() == 0) {
        if (++zeros > 63) throw CorruptStreamError("bits", "exp-golomb prefix too long");
    }
    uint64_t x = 1;
    for (int i = 0; i < zeros; ++i) x = (x << 1) | static_cast<uint64_t>(br.get_bit());
    return x - 1;
}

void eg_put_signed(BitWriter& bw, int64_t v) {
    uint64_t u = v > 0 ? static_cast<uint64_t>(2 * v - 1) : static_cast<uint64_t>(-2 * v);
    eg_put_unsigned(bw, u);
}

int64_t eg_get_signed(BitReader& br) {
    uint64_t u = eg_get_unsigned(br);
    if (u & 1) return static_cast<int64_t>((u + 1) / 2);
    return -static_cast<int64_t>(u / 2);
}

uint32_t crc32(const uint8_t* data, size_t len) {
    return static_cast<uint32_t>(::crc32(0L, data, static_cast<uInt>(len)));
}

void be_put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void be_put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void be_put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void be_put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void be_put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    be_put_u32(out, bits);
}

uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

uint16_t ByteReader::u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
}

uint32_t ByteReader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
}

uint64_t ByteReader::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 8;
    return v;
}

float ByteReader::f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

const uint8_t* ByteReader::bytes(size_t n) {
    need(n);
    const uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
}

} // namespace mivec
