#pragma once

#include "svdq/types.hpp"

#include <Eigen/SVD>

#include <utility>

namespace svdq {

// Thin SVD of a per-channel centered key matrix:
//
//   K - mean = left * diag(singulars) * basis^T
//
// left is s x d with orthonormal columns, basis is d x d orthonormal, singulars
// are non-negative and non-increasing. Sign convention: the largest-magnitude
// entry of every basis column is made positive (first such entry on ties), with
// the paired left column flipped, so factorizations are reproducible.
struct CenteredSvd {
    Vector mean;      // per-channel means removed before factorization
    Matrix left;      // s x d
    Vector singulars; // length d, descending
    Matrix basis;     // d x d
};

// Projection of a centered matrix onto basis columns, one column per latent
// channel. source_dim remembers the full channel count so truncated channels
// can be refilled with zeros at reconstruction.
struct LatentMatrix {
    Matrix data;
    Index source_dim = 0;
};

// Removes per-channel (column) means.
inline std::pair<Vector, Matrix> center(const Matrix & k) {
    if (k.rows() < 1 || k.cols() < 1) {
        throw DataError("center: empty matrix");
    }
    require_finite(k, "center");
    Vector mean = k.colwise().mean();
    Matrix centered = k.rowwise() - mean.transpose();
    return {std::move(mean), std::move(centered)};
}

// Thin SVD with the sign convention above. The mean is carried through
// untouched (pass the vector from center(); defaults to zeros).
inline CenteredSvd svd(const Matrix & centered, Vector mean) {
    const Index s = centered.rows();
    const Index d = centered.cols();
    if (s < 1 || d < 1) {
        throw DataError("svd: empty matrix");
    }
    if (s < d) {
        throw DataError("svd: need at least as many rows as channels");
    }
    require_finite(centered, "svd");
    if (mean.size() == 0) {
        mean = Vector::Zero(d);
    }
    if (mean.size() != d) {
        throw DataError("svd: mean length mismatch");
    }

    CenteredSvd out;
    out.mean = std::move(mean);

    if (centered.isZero(0.0)) {
        // All-zero input: zero spectrum with the identity basis keeps
        // downstream truncation well-defined.
        out.left = Matrix::Identity(s, d);
        out.singulars = Vector::Zero(d);
        out.basis = Matrix::Identity(d, d);
        return out;
    }

    Eigen::BDCSVD<Matrix> dec(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) {
        throw NumericError("svd: factorization did not converge");
    }
    out.left = dec.matrixU();
    out.singulars = dec.singularValues();
    out.basis = dec.matrixV();

    for (Index j = 0; j < d; ++j) {
        Index imax = 0;
        out.basis.col(j).cwiseAbs().maxCoeff(&imax);
        if (out.basis(imax, j) < 0.0) {
            out.basis.col(j) = -out.basis.col(j);
            out.left.col(j) = -out.left.col(j);
        }
    }
    return out;
}

inline CenteredSvd svd(const Matrix & centered) {
    return svd(centered, Vector());
}

inline LatentMatrix project(const Matrix & centered, const Matrix & basis) {
    if (basis.rows() != basis.cols()) {
        throw DataError("project: basis must be square");
    }
    if (centered.cols() != basis.rows()) {
        throw DataError("project: dimension mismatch");
    }
    require_finite(centered, "project");
    LatentMatrix out;
    out.data = centered * basis;
    out.source_dim = basis.cols();
    return out;
}

// Inverse of project with zero-fill for truncated latent columns:
//   K_hat = latent * basis(:, 0:kept)^T + mean
inline Matrix reconstruct(const LatentMatrix & latent, const Matrix & basis, const Vector & mean) {
    const Index d = basis.rows();
    if (basis.cols() != d) {
        throw DataError("reconstruct: basis must be square");
    }
    if (latent.data.cols() > d) {
        throw DataError("reconstruct: latent wider than basis");
    }
    if (latent.source_dim != 0 && latent.source_dim != d) {
        throw DataError("reconstruct: latent came from a different channel count");
    }
    if (mean.size() != d) {
        throw DataError("reconstruct: mean length mismatch");
    }
    Matrix out = latent.data * basis.leftCols(latent.data.cols()).transpose();
    out.rowwise() += mean.transpose();
    return out;
}

} // namespace svdq
