#pragma once

#include "svdq/types.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

namespace svdq {

// Chunk-landmark sparsity over the prefill key cache. Tokens are grouped into
// fixed-size chunks (a trailing partial chunk is kept whole); each chunk's
// landmark is the mean of its rows. A chunk whose minimum token-to-landmark
// cosine similarity falls below tau is flagged as an outlier and always
// survives selection.
struct SparsityIndex {
    Index chunk_size = 0;
    Index total_rows = 0;
    double tau = 0.0;
    Matrix landmarks;                  // chunk_count x d
    std::vector<double> min_cosine;    // per chunk
    std::vector<std::uint8_t> outlier; // per chunk

    Index chunk_count() const { return landmarks.rows(); }

    Index chunk_begin(Index g) const { return g * chunk_size; }
    Index chunk_end(Index g) const { return std::min(total_rows, (g + 1) * chunk_size); }
};

namespace detail {

inline double cosine(const Vector & a, const Vector & b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 && nb == 0.0) {
        return 1.0;
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return a.dot(b) / (na * nb);
}

} // namespace detail

inline SparsityIndex build_index(const Matrix & k, Index chunk_size = 8, double tau = 0.7) {
    if (chunk_size < 1) {
        throw ConfigError("build_index: chunk size must be positive");
    }
    if (k.rows() < 1 || k.cols() < 1) {
        throw DataError("build_index: empty matrix");
    }
    require_finite(k, "build_index");

    const Index s = k.rows();
    const Index nchunks = (s + chunk_size - 1) / chunk_size;

    SparsityIndex out;
    out.chunk_size = chunk_size;
    out.total_rows = s;
    out.tau = tau;
    out.landmarks.resize(nchunks, k.cols());
    out.min_cosine.resize(static_cast<std::size_t>(nchunks));
    out.outlier.resize(static_cast<std::size_t>(nchunks));

    for (Index g = 0; g < nchunks; ++g) {
        const Index lo = out.chunk_begin(g);
        const Index hi = out.chunk_end(g);
        const auto block = k.middleRows(lo, hi - lo);
        out.landmarks.row(g) = block.colwise().mean();

        const Vector landmark = out.landmarks.row(g).transpose();
        double mincos = 1.0;
        for (Index i = lo; i < hi; ++i) {
            mincos = std::min(mincos, detail::cosine(k.row(i).transpose(), landmark));
        }
        out.min_cosine[static_cast<std::size_t>(g)] = mincos;
        out.outlier[static_cast<std::size_t>(g)] = mincos < tau ? 1 : 0;
    }
    return out;
}

// Pre-softmax attention logit of the query against each landmark.
inline Vector score_chunks(const Vector & query, const SparsityIndex & index) {
    if (query.size() != index.landmarks.cols()) {
        throw DataError("score_chunks: dimension mismatch");
    }
    require_finite(query, "score_chunks");
    return index.landmarks * query;
}

// Union of the k best-scoring chunks (ties to the lower index) and every
// outlier chunk, ascending. Outliers extend the budget rather than consuming it.
inline std::vector<Index> select_chunks(const Vector & scores, Index k, const SparsityIndex & index) {
    const Index n = index.chunk_count();
    if (scores.size() != n) {
        throw DataError("select_chunks: score count mismatch");
    }
    if (k < 1 || k > n) {
        throw ConfigError("select_chunks: k out of range");
    }
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (scores(a) != scores(b)) {
            return scores(a) > scores(b);
        }
        return a < b;
    });

    std::vector<std::uint8_t> take(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < k; ++i) {
        take[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    }
    for (Index g = 0; g < n; ++g) {
        if (index.outlier[static_cast<std::size_t>(g)]) {
            take[static_cast<std::size_t>(g)] = 1;
        }
    }
    std::vector<Index> selected;
    for (Index g = 0; g < n; ++g) {
        if (take[static_cast<std::size_t>(g)]) {
            selected.push_back(g);
        }
    }
    return selected;
}

struct GatherResult {
    Matrix rows;
    std::vector<Index> tokens; // original row index of each gathered row
};

// Copies the tokens of the selected chunks, original order preserved bit-exactly.
inline GatherResult gather(const Matrix & m, const std::vector<Index> & selected,
                           const SparsityIndex & index) {
    if (m.rows() != index.total_rows) {
        throw DataError("gather: row count does not match the index");
    }
    Index retained = 0;
    for (Index g : selected) {
        if (g < 0 || g >= index.chunk_count()) {
            throw DataError("gather: chunk index out of range");
        }
        retained += index.chunk_end(g) - index.chunk_begin(g);
    }
    GatherResult out;
    out.rows.resize(retained, m.cols());
    out.tokens.reserve(static_cast<std::size_t>(retained));
    Index at = 0;
    for (Index g : selected) {
        for (Index i = index.chunk_begin(g); i < index.chunk_end(g); ++i) {
            out.rows.row(at++) = m.row(i);
            out.tokens.push_back(i);
        }
    }
    return out;
}

// retained_rows may be fractional (a mean over queries)
inline double sparsity_ratio(double total_rows, double retained_rows) {
    if (!(total_rows >= 1.0) || !(retained_rows >= 1.0)) {
        throw ConfigError("sparsity_ratio: counts must be at least 1");
    }
    return total_rows / retained_rows;
}

} // namespace svdq
