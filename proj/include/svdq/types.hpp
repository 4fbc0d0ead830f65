#pragma once

#include "svdq/error.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace svdq {

using Index  = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require_finite(const Matrix & m, const char * what) {
    if (!m.allFinite()) {
        throw DataError(std::string(what) + ": non-finite entries");
    }
}

inline void require_finite(const Vector & v, const char * what) {
    if (!v.allFinite()) {
        throw DataError(std::string(what) + ": non-finite entries");
    }
}

} // namespace svdq
