#pragma once

#include "svdq/keycore.hpp"
#include "svdq/quant.hpp"

#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

namespace svdq {

// Everything needed to rebuild an approximation of K: the channel means, the
// latent basis, and the quantized latent channels. Payload storage scales with
// s*d*bbar bits; mean/basis/ranges depend only on d.
struct CompressedKeyCache {
    Vector mean;
    Matrix basis;
    QuantizedChannels q;
    Index rows = 0;
    Index dim = 0;
};

inline CompressedKeyCache compress(const Matrix & k, const BitSchedule & schedule) {
    if (k.cols() != schedule.channel_dim) {
        throw ConfigError("compress: schedule dimension mismatch");
    }
    if (k.rows() < k.cols()) {
        throw DataError("compress: need at least as many rows as channels");
    }
    auto [mean, centered] = center(k);
    CenteredSvd fac = svd(centered, std::move(mean));
    LatentMatrix latent = project(centered, fac.basis);

    CompressedKeyCache out;
    out.mean = std::move(fac.mean);
    out.basis = std::move(fac.basis);
    out.q = quantize_latent(latent, schedule);
    out.rows = k.rows();
    out.dim = k.cols();
    return out;
}

inline Matrix decompress(const CompressedKeyCache & c) {
    if (c.rows < 1 || c.dim < 1 || c.q.rows != c.rows || c.q.schedule.channel_dim != c.dim) {
        throw DataError("decompress: inconsistent cache dimensions");
    }
    LatentMatrix latent = dequantize_latent(c.q);
    return reconstruct(latent, c.basis, c.mean);
}

// CR = 16/bbar, times the sparsity ratio when only selected tokens attend.
inline double compression_ratio(double bits, double sparsity_ratio = 1.0) {
    if (!(bits > 0.0)) {
        throw ConfigError("compression_ratio: equivalent bits must be positive");
    }
    if (!(sparsity_ratio >= 1.0)) {
        throw ConfigError("compression_ratio: sparsity ratio must be >= 1");
    }
    return 16.0 / bits * sparsity_ratio;
}

// Parses "8,4,4,2,0,0,0,0" style schedule text with exactly `groups` entries.
inline BitSchedule parse_schedule(const std::string & text, Index channel_dim, Index groups = 8) {
    if (groups < 1) {
        throw ConfigError("parse_schedule: group count must be positive");
    }
    std::vector<int> widths;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = text.find(',', pos);
        const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                             : comma - pos);
        if (item.empty()) {
            throw ConfigError("parse_schedule: empty entry");
        }
        char * end = nullptr;
        const long value = std::strtol(item.c_str(), &end, 10);
        if (end == nullptr || *end != '\0') {
            throw ConfigError("parse_schedule: not an integer: '" + item + "'");
        }
        if (value < 0 || value > 8) {
            throw ConfigError("parse_schedule: width out of range: '" + item + "'");
        }
        widths.push_back(static_cast<int>(value));
        if (comma == std::string::npos) {
            break;
        }
        pos = comma + 1;
    }
    if (static_cast<Index>(widths.size()) != groups) {
        throw ConfigError("parse_schedule: expected " + std::to_string(groups) + " entries, got " +
                          std::to_string(widths.size()));
    }
    return make_schedule(std::move(widths), channel_dim);
}

} // namespace svdq
