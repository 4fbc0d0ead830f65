#pragma once

// Binary interchange formats. Both are little-endian with IEEE-754 floats.
//
//   kmat:  "KMAT" | u32 version=1 | u64 s | u64 d | u8 dtype (0 = f32)
//          | s*d f32, row-major
//
//   svdq:  "SVDQ" | u32 version=1 | u64 s | u64 d | u32 G | G x u8 group widths
//          | d f32 mean | d*d f32 basis, column-major (basis vectors contiguous)
//          | one f32 channel min per retained channel, channel order
//          | one f32 channel max per retained channel, channel order
//          | packed codes (channel-major, LSB-first, channels byte-padded)
//
// Decoding validates every field before allocating payload-sized storage and
// rejects trailing bytes, so decode(encode(x)) == x and encode(decode(bytes))
// reproduces bytes exactly.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "svdq/error.hpp"
#include "svdq/pipeline.hpp"
#include "svdq/quant.hpp"
#include "svdq/types.hpp"

namespace svdq {

namespace detail {

inline void put_magic(std::vector<std::uint8_t> & out, const char * tag) {
    for (const char * p = tag; *p != '\0'; ++p) {
        out.push_back(static_cast<std::uint8_t>(*p));
    }
}

inline void put_u32(std::vector<std::uint8_t> & out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

inline void put_u64(std::vector<std::uint8_t> & out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

inline void put_f32(std::vector<std::uint8_t> & out, double v, const char * what) {
    const float narrowed = static_cast<float>(v);
    if (!std::isfinite(narrowed)) {
        throw DataError(std::string(what) + ": value not representable as f32");
    }
    std::uint32_t bits;
    std::memcpy(&bits, &narrowed, sizeof bits);
    put_u32(out, bits);
}

class ByteReader {
  public:
    ByteReader(const std::uint8_t * data, std::size_t size, const char * what)
        : data_(data), size_(size), what_(what) {}

    std::size_t remaining() const { return size_ - pos_; }

    const std::uint8_t * take(std::size_t n) {
        if (remaining() < n) {
            throw DataError(std::string(what_) + ": truncated file");
        }
        const std::uint8_t * p = data_ + pos_;
        pos_ += n;
        return p;
    }

    std::uint8_t u8() { return *take(1); }

    std::uint32_t u32() {
        const std::uint8_t * p = take(4);
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    std::uint64_t u64() {
        const std::uint8_t * p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        }
        return v;
    }

    double f32(const char * field) {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) {
            throw DataError(std::string(what_) + ": non-finite " + field);
        }
        return static_cast<double>(v);
    }

    void expect_magic(const char magic[4]) {
        const std::uint8_t * p = take(4);
        if (std::memcmp(p, magic, 4) != 0) {
            throw DataError(std::string(what_) + ": bad magic");
        }
    }

    void expect_end() {
        if (remaining() != 0) {
            throw DataError(std::string(what_) + ": trailing bytes");
        }
    }

  private:
    const std::uint8_t * data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    const char * what_;
};

// dims are attacker-supplied; the cap keeps every size product exact in
// 64 bits, so no allocation happens before an honest length check passes
inline Index checked_dim(std::uint64_t v, const char * what) {
    if (v < 1 || v > (std::uint64_t{1} << 24)) {
        throw DataError(std::string(what) + ": dimension out of range");
    }
    return static_cast<Index>(v);
}

}  // namespace detail

inline constexpr std::uint32_t kFormatVersion = 1;

// --------------------------------------------------------------------------
// kmat
// --------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_kmat(const Matrix & m) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw DataError("kmat: empty matrix");
    }
    require_finite(m, "kmat");
    std::vector<std::uint8_t> out;
    out.reserve(29 + static_cast<std::size_t>(m.size()) * 4);
    detail::put_magic(out, "KMAT");
    detail::put_u32(out, kFormatVersion);
    detail::put_u64(out, static_cast<std::uint64_t>(m.rows()));
    detail::put_u64(out, static_cast<std::uint64_t>(m.cols()));
    out.push_back(0);  // dtype: f32
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            detail::put_f32(out, m(i, j), "kmat");
        }
    }
    return out;
}

inline Matrix decode_kmat(const std::uint8_t * data, std::size_t size) {
    detail::ByteReader in(data, size, "kmat");
    in.expect_magic("KMAT");
    if (in.u32() != kFormatVersion) {
        throw DataError("kmat: unsupported version");
    }
    const Index s = detail::checked_dim(in.u64(), "kmat rows");
    const Index d = detail::checked_dim(in.u64(), "kmat cols");
    if (in.u8() != 0) {
        throw DataError("kmat: unsupported dtype");
    }
    const std::uint64_t need = static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(d) * 4;
    if (in.remaining() != need) {
        throw DataError("kmat: payload length mismatch");
    }
    Matrix m(s, d);
    for (Index i = 0; i < s; ++i) {
        for (Index j = 0; j < d; ++j) {
            m(i, j) = in.f32("payload value");
        }
    }
    in.expect_end();
    return m;
}

inline Matrix decode_kmat(const std::vector<std::uint8_t> & bytes) {
    return decode_kmat(bytes.data(), bytes.size());
}

// --------------------------------------------------------------------------
// svdq
// --------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_svdq(const CompressedKeyCache & cache) {
    const Index d = cache.dim;
    const Index s = cache.rows;
    const BitSchedule & schedule = cache.q.schedule;
    if (s < 1 || d < 1 || schedule.channel_dim != d || cache.q.rows != s) {
        throw DataError("svdq: inconsistent cache");
    }
    if (cache.mean.size() != d || cache.basis.rows() != d || cache.basis.cols() != d) {
        throw DataError("svdq: side data shape mismatch");
    }
    const Index retained = schedule.retained_channels();
    if (cache.q.ch_min.size() != retained || cache.q.ch_max.size() != retained) {
        throw DataError("svdq: range vector length mismatch");
    }
    if (cache.q.payload.size() != expected_payload_bytes(schedule, s)) {
        throw DataError("svdq: payload length mismatch");
    }
    require_finite(cache.mean, "svdq mean");
    require_finite(cache.basis, "svdq basis");

    std::vector<std::uint8_t> out;
    out.reserve(32 + schedule.group_bits.size() +
                static_cast<std::size_t>(d) * 4 + static_cast<std::size_t>(d) * d * 4 +
                static_cast<std::size_t>(retained) * 8 + cache.q.payload.size());
    detail::put_magic(out, "SVDQ");
    detail::put_u32(out, kFormatVersion);
    detail::put_u64(out, static_cast<std::uint64_t>(s));
    detail::put_u64(out, static_cast<std::uint64_t>(d));
    detail::put_u32(out, static_cast<std::uint32_t>(schedule.group_count()));
    for (int b : schedule.group_bits) {
        out.push_back(static_cast<std::uint8_t>(b));
    }
    for (Index i = 0; i < d; ++i) {
        detail::put_f32(out, cache.mean(i), "svdq mean");
    }
    for (Index j = 0; j < d; ++j) {
        for (Index i = 0; i < d; ++i) {
            detail::put_f32(out, cache.basis(i, j), "svdq basis");
        }
    }
    for (Index r = 0; r < retained; ++r) {
        detail::put_f32(out, cache.q.ch_min(r), "svdq channel min");
    }
    for (Index r = 0; r < retained; ++r) {
        detail::put_f32(out, cache.q.ch_max(r), "svdq channel max");
    }
    out.insert(out.end(), cache.q.payload.begin(), cache.q.payload.end());
    return out;
}

inline CompressedKeyCache decode_svdq(const std::uint8_t * data, std::size_t size) {
    detail::ByteReader in(data, size, "svdq");
    in.expect_magic("SVDQ");
    if (in.u32() != kFormatVersion) {
        throw DataError("svdq: unsupported version");
    }
    const Index s = detail::checked_dim(in.u64(), "svdq rows");
    const Index d = detail::checked_dim(in.u64(), "svdq cols");
    const std::uint32_t groups = in.u32();
    if (groups < 1 || static_cast<Index>(groups) > d || d % static_cast<Index>(groups) != 0) {
        throw DataError("svdq: invalid group count");
    }
    std::vector<int> widths(groups);
    for (std::uint32_t g = 0; g < groups; ++g) {
        widths[g] = in.u8();
    }
    BitSchedule schedule;
    try {
        schedule = make_schedule(widths, d);
    } catch (const ConfigError & e) {
        // schedule bytes came from the file, so a bad schedule is bad data
        throw DataError(std::string("svdq: ") + e.what());
    }

    CompressedKeyCache cache;
    cache.rows = s;
    cache.dim = d;
    cache.mean.resize(d);
    for (Index i = 0; i < d; ++i) {
        cache.mean(i) = in.f32("mean value");
    }
    cache.basis.resize(d, d);
    for (Index j = 0; j < d; ++j) {
        for (Index i = 0; i < d; ++i) {
            cache.basis(i, j) = in.f32("basis value");
        }
    }
    const Index retained = schedule.retained_channels();
    cache.q.schedule = schedule;
    cache.q.rows = s;
    cache.q.ch_min.resize(retained);
    cache.q.ch_max.resize(retained);
    for (Index r = 0; r < retained; ++r) {
        cache.q.ch_min(r) = in.f32("channel min");
    }
    for (Index r = 0; r < retained; ++r) {
        cache.q.ch_max(r) = in.f32("channel max");
    }
    for (Index r = 0; r < retained; ++r) {
        if (cache.q.ch_min(r) > cache.q.ch_max(r)) {
            throw DataError("svdq: channel range inverted");
        }
    }

    const std::size_t expected = expected_payload_bytes(schedule, s);
    if (in.remaining() != expected) {
        throw DataError("svdq: payload length mismatch");
    }
    const std::uint8_t * payload = in.take(expected);
    cache.q.payload.assign(payload, payload + expected);
    in.expect_end();

    // per-channel byte padding must be zero so re-encoding is bit-faithful
    std::size_t offset = 0;
    for (Index j = 0; j < d; ++j) {
        const int b = schedule.bits_for_channel(j);
        if (b == 0) {
            continue;
        }
        const std::size_t nbytes = packed_bytes(static_cast<std::size_t>(s), b);
        const unsigned used = static_cast<unsigned>((static_cast<std::uint64_t>(s) * b) % 8);
        if (used != 0) {
            const std::uint8_t tail = cache.q.payload[offset + nbytes - 1];
            if ((tail >> used) != 0) {
                throw DataError("svdq: nonzero padding bits");
            }
        }
        offset += nbytes;
    }
    return cache;
}

inline CompressedKeyCache decode_svdq(const std::vector<std::uint8_t> & bytes) {
    return decode_svdq(bytes.data(), bytes.size());
}

// --------------------------------------------------------------------------
// files
// --------------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    if (size < 0) {
        throw DataError("cannot stat file: " + path);
    }
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0 && !in.read(reinterpret_cast<char *>(bytes.data()), size)) {
        throw DataError("cannot read file: " + path);
    }
    return bytes;
}

// temp + rename so a failed write never leaves a half-written artifact
inline void write_file_atomic(const std::string & path, const std::vector<std::uint8_t> & bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot create file: " + tmp);
        }
        if (!bytes.empty()) {
            out.write(reinterpret_cast<const char *>(bytes.data()),
                      static_cast<std::streamsize>(bytes.size()));
        }
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw DataError("cannot write file: " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw DataError("cannot move file into place: " + path);
    }
}

inline Matrix read_kmat(const std::string & path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    return decode_kmat(bytes);
}

inline void write_kmat(const std::string & path, const Matrix & m) {
    write_file_atomic(path, encode_kmat(m));
}

inline CompressedKeyCache read_svdq(const std::string & path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    return decode_svdq(bytes);
}

inline void write_svdq(const std::string & path, const CompressedKeyCache & cache) {
    write_file_atomic(path, encode_svdq(cache));
}

}  // namespace svdq
