#pragma once

#include "svdq/types.hpp"
#include "svdq/bitpack.hpp"
#include "svdq/keycore.hpp"

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace svdq {

// Per-group bit widths over equal-sized blocks of latent channels. Channel j is
// stored at group_bits[j / (d / G)] bits; width 0 truncates the channel. Widths
// are restricted to {0,1,2,3,4,8} and must be non-increasing so precision follows
// the non-increasing latent channel energies.
struct BitSchedule {
    std::vector<int> group_bits;
    Index channel_dim = 0;

    Index group_count() const { return static_cast<Index>(group_bits.size()); }
    Index group_size() const { return channel_dim / group_count(); }

    int bits_for_channel(Index j) const {
        return group_bits[static_cast<std::size_t>(j / group_size())];
    }

    double equivalent_bits() const {
        double sum = 0.0;
        for (int b : group_bits) {
            sum += b;
        }
        return sum / static_cast<double>(group_bits.size());
    }

    // Channels with a nonzero width, always a prefix of 0..d-1 by monotonicity.
    Index retained_channels() const {
        Index n = 0;
        for (int b : group_bits) {
            if (b > 0) {
                n += group_size();
            }
        }
        return n;
    }
};

inline BitSchedule make_schedule(std::vector<int> group_bits, Index channel_dim) {
    if (group_bits.empty()) {
        throw ConfigError("schedule: no groups");
    }
    if (channel_dim < 1 || channel_dim % static_cast<Index>(group_bits.size()) != 0) {
        throw ConfigError("schedule: channel count not divisible into groups");
    }
    for (std::size_t g = 0; g < group_bits.size(); ++g) {
        const int b = group_bits[g];
        if (b != 0 && !valid_code_width(b)) {
            throw ConfigError("schedule: width must be one of 0,1,2,3,4,8");
        }
        if (g > 0 && b > group_bits[g - 1]) {
            throw ConfigError("schedule: widths must be non-increasing");
        }
    }
    return BitSchedule{std::move(group_bits), channel_dim};
}

inline double equivalent_bits(const BitSchedule & schedule) {
    return schedule.equivalent_bits();
}

// ---------------------------------------------------------------------------
// Scalar channel quantization (asymmetric min-max affine map)
//
//   Q_b(x) = clamp(round((x - lo) * (2^b - 1) / (hi - lo)), 0, 2^b - 1)
//   D_b(q) = q * (hi - lo) / (2^b - 1) + lo
//
// Rounding is half-to-even (default FE_TONEAREST mode). A degenerate range
// (hi = lo) stores lo and emits all-zero codes that dequantize back to lo.
// ---------------------------------------------------------------------------

struct ChannelQuant {
    std::vector<std::uint32_t> codes;
    double lo = 0.0;
    double hi = 0.0;
};

inline ChannelQuant quantize_channel(const double * values, std::size_t n, int bits) {
    if (!valid_code_width(bits)) {
        throw ConfigError("quantize_channel: unsupported width");
    }
    if (n == 0) {
        throw DataError("quantize_channel: empty input");
    }
    double lo = values[0];
    double hi = values[0];
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(values[i])) {
            throw DataError("quantize_channel: non-finite value");
        }
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    ChannelQuant out;
    out.lo = lo;
    out.hi = hi;
    out.codes.assign(n, 0u);
    if (hi == lo) {
        return out;
    }
    const auto maxcode = static_cast<std::uint32_t>((1u << bits) - 1u);
    const double scale = static_cast<double>(maxcode) / (hi - lo);
    for (std::size_t i = 0; i < n; ++i) {
        double q = std::nearbyint((values[i] - lo) * scale);
        if (q < 0.0) {
            q = 0.0;
        }
        if (q > static_cast<double>(maxcode)) {
            q = static_cast<double>(maxcode);
        }
        out.codes[i] = static_cast<std::uint32_t>(q);
    }
    return out;
}

inline ChannelQuant quantize_channel(const std::vector<double> & values, int bits) {
    return quantize_channel(values.data(), values.size(), bits);
}

inline void dequantize_channel(const std::uint32_t * codes, std::size_t n, int bits,
                               double lo, double hi, double * out) {
    if (!valid_code_width(bits)) {
        throw ConfigError("dequantize_channel: unsupported width");
    }
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
        throw DataError("dequantize_channel: bad range");
    }
    const auto maxcode = static_cast<std::uint32_t>((1u << bits) - 1u);
    if (hi == lo) {
        for (std::size_t i = 0; i < n; ++i) {
            if (codes[i] > maxcode) {
                throw DataError("dequantize_channel: code out of range");
            }
            out[i] = lo;
        }
        return;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
        if (codes[i] > maxcode) {
            throw DataError("dequantize_channel: code out of range");
        }
        // Multiply before dividing so the top code lands on hi exactly; clamp
        // the odd last-ulp spill back into [lo, hi].
        double v = static_cast<double>(codes[i]) * range / static_cast<double>(maxcode) + lo;
        v = std::min(hi, std::max(lo, v));
        out[i] = v;
    }
}

inline std::vector<double> dequantize_channel(const std::vector<std::uint32_t> & codes,
                                              int bits, double lo, double hi) {
    std::vector<double> out(codes.size());
    dequantize_channel(codes.data(), codes.size(), bits, lo, hi, out.data());
    return out;
}

// ---------------------------------------------------------------------------
// Latent-matrix quantization under a bit schedule
// ---------------------------------------------------------------------------

// Packed code streams for the retained latent channels, channel-major: channel
// j's s codes are one contiguous stream, zero-padded to a byte boundary, streams
// concatenated in channel order. ch_min/ch_max hold the per-channel ranges of
// the retained channels only.
struct QuantizedChannels {
    BitSchedule schedule;
    Index rows = 0;
    Vector ch_min;
    Vector ch_max;
    std::vector<std::uint8_t> payload;
};

inline std::size_t expected_payload_bytes(const BitSchedule & schedule, Index rows) {
    std::size_t total = 0;
    for (Index j = 0; j < schedule.channel_dim; ++j) {
        const int b = schedule.bits_for_channel(j);
        if (b > 0) {
            total += packed_bytes(static_cast<std::size_t>(rows), b);
        }
    }
    return total;
}

inline QuantizedChannels quantize_latent(const LatentMatrix & latent, const BitSchedule & schedule) {
    const Index s = latent.data.rows();
    const Index d = latent.data.cols();
    if (d != schedule.channel_dim) {
        throw ConfigError("quantize_latent: schedule dimension mismatch");
    }
    if (s < 1) {
        throw DataError("quantize_latent: empty latent matrix");
    }
    require_finite(latent.data, "quantize_latent");

    QuantizedChannels out;
    out.schedule = schedule;
    out.rows = s;
    const Index nret = schedule.retained_channels();
    out.ch_min.resize(nret);
    out.ch_max.resize(nret);
    out.payload.reserve(expected_payload_bytes(schedule, s));

    Index r = 0;
    for (Index j = 0; j < d; ++j) {
        const int b = schedule.bits_for_channel(j);
        if (b == 0) {
            continue;
        }
        // MatrixXd is column-major, so a latent channel is contiguous.
        ChannelQuant cq = quantize_channel(latent.data.col(j).data(), static_cast<std::size_t>(s), b);
        out.ch_min(r) = cq.lo;
        out.ch_max(r) = cq.hi;
        pack_codes(cq.codes.data(), cq.codes.size(), b, out.payload);
        ++r;
    }
    return out;
}

inline LatentMatrix dequantize_latent(const QuantizedChannels & q) {
    const Index d = q.schedule.channel_dim;
    const Index s = q.rows;
    if (d < 1 || s < 1) {
        throw DataError("dequantize_latent: empty cache");
    }
    const Index nret = q.schedule.retained_channels();
    if (q.ch_min.size() != nret || q.ch_max.size() != nret) {
        throw DataError("dequantize_latent: range vector length mismatch");
    }
    if (q.payload.size() != expected_payload_bytes(q.schedule, s)) {
        throw DataError("dequantize_latent: packed stream length mismatch");
    }

    LatentMatrix out;
    out.data = Matrix::Zero(s, d);
    out.source_dim = d;

    std::size_t offset = 0;
    Index r = 0;
    for (Index j = 0; j < d; ++j) {
        const int b = q.schedule.bits_for_channel(j);
        if (b == 0) {
            continue;
        }
        const std::size_t nbytes = packed_bytes(static_cast<std::size_t>(s), b);
        std::vector<std::uint32_t> codes =
            unpack_codes(q.payload.data() + offset, nbytes, b, static_cast<std::size_t>(s));
        dequantize_channel(codes.data(), codes.size(), b, q.ch_min(r), q.ch_max(r),
                           out.data.col(j).data());
        offset += nbytes;
        ++r;
    }
    return out;
}

// Uniform per-channel quantize/dequantize of a matrix in its original basis.
// This is the baseline the latent-schedule path is compared against.
inline Matrix direct_quant_roundtrip(const Matrix & m, int bits) {
    if (!valid_code_width(bits)) {
        throw ConfigError("direct_quant_roundtrip: unsupported width");
    }
    if (m.rows() < 1 || m.cols() < 1) {
        throw DataError("direct_quant_roundtrip: empty matrix");
    }
    Matrix out(m.rows(), m.cols());
    std::vector<double> column(static_cast<std::size_t>(m.rows()));
    for (Index j = 0; j < m.cols(); ++j) {
        for (Index i = 0; i < m.rows(); ++i) {
            column[static_cast<std::size_t>(i)] = m(i, j);
        }
        ChannelQuant cq = quantize_channel(column.data(), column.size(), bits);
        dequantize_channel(cq.codes.data(), cq.codes.size(), bits, cq.lo, cq.hi,
                           out.col(j).data());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-token value-cache quantization (rows instead of channels, default 4 bits)
// ---------------------------------------------------------------------------

struct QuantizedValueCache {
    int bits = 4;
    Index rows = 0;
    Index cols = 0;
    Vector row_min;
    Vector row_max;
    std::vector<std::uint8_t> payload; // per-row packed streams, row order
};

inline QuantizedValueCache quantize_values_per_token(const Matrix & v, int bits = 4) {
    if (!valid_code_width(bits)) {
        throw ConfigError("quantize_values_per_token: unsupported width");
    }
    if (v.rows() < 1 || v.cols() < 1) {
        throw DataError("quantize_values_per_token: empty matrix");
    }
    require_finite(v, "quantize_values_per_token");

    QuantizedValueCache out;
    out.bits = bits;
    out.rows = v.rows();
    out.cols = v.cols();
    out.row_min.resize(v.rows());
    out.row_max.resize(v.rows());
    out.payload.reserve(static_cast<std::size_t>(v.rows()) *
                        packed_bytes(static_cast<std::size_t>(v.cols()), bits));

    std::vector<double> row(static_cast<std::size_t>(v.cols()));
    for (Index i = 0; i < v.rows(); ++i) {
        for (Index j = 0; j < v.cols(); ++j) {
            row[static_cast<std::size_t>(j)] = v(i, j);
        }
        ChannelQuant cq = quantize_channel(row.data(), row.size(), bits);
        out.row_min(i) = cq.lo;
        out.row_max(i) = cq.hi;
        pack_codes(cq.codes.data(), cq.codes.size(), bits, out.payload);
    }
    return out;
}

inline Matrix dequantize_values_per_token(const QuantizedValueCache & q) {
    if (q.rows < 1 || q.cols < 1) {
        throw DataError("dequantize_values_per_token: empty cache");
    }
    if (q.row_min.size() != q.rows || q.row_max.size() != q.rows) {
        throw DataError("dequantize_values_per_token: range vector length mismatch");
    }
    const std::size_t stride = packed_bytes(static_cast<std::size_t>(q.cols), q.bits);
    if (q.payload.size() != static_cast<std::size_t>(q.rows) * stride) {
        throw DataError("dequantize_values_per_token: packed stream length mismatch");
    }
    Matrix out(q.rows, q.cols);
    std::vector<double> row(static_cast<std::size_t>(q.cols));
    for (Index i = 0; i < q.rows; ++i) {
        std::vector<std::uint32_t> codes =
            unpack_codes(q.payload.data() + static_cast<std::size_t>(i) * stride, stride,
                         q.bits, static_cast<std::size_t>(q.cols));
        dequantize_channel(codes.data(), codes.size(), q.bits, q.row_min(i), q.row_max(i), row.data());
        for (Index j = 0; j < q.cols; ++j) {
            out(i, j) = row[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

} // namespace svdq
