#pragma once

#include "svdq/error.hpp"

#include <cstdint>
#include <cstddef>
#include <vector>

namespace svdq {

// Little-endian bit streams for quantized codes.
//
// Codes are appended in index order; each code contributes its `bits` low bits
// LSB-first, so the first code occupies the low bits of byte 0. The stream is
// zero-padded up to a byte boundary.
//
//   bits = 1, codes 1,0,1,1,0,0,0,0  ->  0x0D
//   bits = 8                         ->  plain byte copy
//   bits = 3                         ->  codes straddle byte boundaries

inline bool valid_code_width(int bits) {
    return bits == 1 || bits == 2 || bits == 3 || bits == 4 || bits == 8;
}

inline std::size_t packed_bytes(std::size_t count, int bits) {
    return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

inline void pack_codes(const std::uint32_t * codes, std::size_t count, int bits,
                       std::vector<std::uint8_t> & out) {
    if (!valid_code_width(bits)) {
        throw ConfigError("pack_codes: unsupported code width");
    }
    const std::uint32_t maxcode = (1u << bits) - 1u;
    out.reserve(out.size() + packed_bytes(count, bits));
    std::uint64_t acc = 0;
    int pending = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (codes[i] > maxcode) {
            throw DataError("pack_codes: code out of range for width");
        }
        acc |= static_cast<std::uint64_t>(codes[i]) << pending;
        pending += bits;
        while (pending >= 8) {
            out.push_back(static_cast<std::uint8_t>(acc & 0xFFu));
            acc >>= 8;
            pending -= 8;
        }
    }
    if (pending > 0) {
        out.push_back(static_cast<std::uint8_t>(acc & 0xFFu));
    }
}

inline std::vector<std::uint8_t> pack_codes(const std::vector<std::uint32_t> & codes, int bits) {
    std::vector<std::uint8_t> out;
    pack_codes(codes.data(), codes.size(), bits, out);
    return out;
}

// Strict inverse of pack_codes: the stream must be exactly ceil(count*bits/8)
// bytes and the padding bits must be zero.
inline std::vector<std::uint32_t> unpack_codes(const std::uint8_t * bytes, std::size_t nbytes,
                                               int bits, std::size_t count) {
    if (!valid_code_width(bits)) {
        throw ConfigError("unpack_codes: unsupported code width");
    }
    if (nbytes != packed_bytes(count, bits)) {
        throw DataError("unpack_codes: packed stream length mismatch");
    }
    std::vector<std::uint32_t> codes(count);
    const std::uint32_t mask = (1u << bits) - 1u;
    std::uint64_t acc = 0;
    int avail = 0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < count; ++i) {
        while (avail < bits) {
            acc |= static_cast<std::uint64_t>(bytes[pos++]) << avail;
            avail += 8;
        }
        codes[i] = static_cast<std::uint32_t>(acc & mask);
        acc >>= bits;
        avail -= bits;
    }
    if (acc != 0) {
        throw DataError("unpack_codes: nonzero padding bits");
    }
    return codes;
}

inline std::vector<std::uint32_t> unpack_codes(const std::vector<std::uint8_t> & bytes,
                                               int bits, std::size_t count) {
    return unpack_codes(bytes.data(), bytes.size(), bits, count);
}

} // namespace svdq
