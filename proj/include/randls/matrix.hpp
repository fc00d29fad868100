#pragma once

#include <Eigen/Dense>

#include "randls/errors.hpp"

namespace randls {

// Dense matrices are stored row-major so that in-memory layout matches the
// serialized formats (see matrix_io.hpp).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void require_finite(const Matrix& m, const char* name) {
    if (!m.allFinite()) throw ArgumentError(std::string(name) + " contains non-finite entries");
}

/// Max-abs deviation of q from having orthonormal columns.
inline double orthogonality_defect(const Matrix& q) {
    Matrix g = q.transpose() * q;
    g.diagonal().array() -= 1.0;
    return max_abs(g);
}

} // namespace randls
