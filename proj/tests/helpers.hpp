#pragma once

// Shared fixtures for the test suite.

#include <cstdint>

#include "svdq/harness.hpp"
#include "svdq/types.hpp"

namespace testutil {

inline svdq::Matrix gaussian(svdq::Index rows, svdq::Index cols, std::uint64_t seed) {
    svdq::GaussianSource rng(seed);
    return rng.matrix(rows, cols);
}

// Every entry rounded through f32 so kmat serialization is lossless.
inline svdq::Matrix gaussian_f32(svdq::Index rows, svdq::Index cols, std::uint64_t seed) {
    svdq::Matrix m = gaussian(rows, cols, seed);
    for (svdq::Index j = 0; j < cols; ++j) {
        for (svdq::Index i = 0; i < rows; ++i) {
            m(i, j) = static_cast<double>(static_cast<float>(m(i, j)));
        }
    }
    return m;
}

// Single two-valued integer column plus an integer offset. The latent basis
// is exactly [1], the 8-bit grid hits both values exactly, and the f32 file
// round trip is lossless, so compress -> reconstruct -> compress reproduces
// the archive byte for byte.
inline svdq::Matrix lossless_column() {
    const double pattern[8] = {1, -1, 1, 1, -1, -1, 1, -1};
    svdq::Matrix k(8, 1);
    for (svdq::Index i = 0; i < 8; ++i) {
        k(i, 0) = 3.0 + 8.0 * pattern[i];
    }
    return k;
}

// Rows all equal: centering removes everything and the archive stores only
// side data, which is exact for small integers.
inline svdq::Matrix constant_rows(svdq::Index rows, svdq::Index cols) {
    svdq::Matrix k(rows, cols);
    for (svdq::Index i = 0; i < rows; ++i) {
        for (svdq::Index j = 0; j < cols; ++j) {
            k(i, j) = static_cast<double>(j + 1);
        }
    }
    return k;
}

}  // namespace testutil
