#pragma once

#include <vector>

#include "gse/matrix.hpp"

namespace gse {

/// Thin SVD of an m x n matrix: u (m x r), sigma descending, v (n x r), r = min(m, n).
struct SpectralDecomposition {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;

    std::size_t rank() const { return sigma.size(); }

    /// u * diag(sigma) * v^T.
    Matrix reconstruct() const;
};

/// Deterministic one-sided Jacobi SVD.
///
/// Conventions pinned for reproducibility:
///  - singular values sorted descending, ties kept in discovery order (stable sort,
///    fixed cyclic sweep order);
///  - each u-column sign-fixed so its largest-magnitude entry is positive, ties
///    broken toward the lowest row index (v flips with u);
///  - bit-identical output for identical input.
SpectralDecomposition svd(const Matrix& w);

}  // namespace gse
