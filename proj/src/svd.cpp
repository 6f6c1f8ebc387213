#include "gse/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gse {
namespace {

constexpr double kRotTol = 1e-15;
constexpr int kMaxSweeps = 100;

double col_dot(const Matrix& b, std::size_t p, std::size_t q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < b.rows(); ++i) acc += b(i, p) * b(i, q);
    return acc;
}

// SVD for m >= n via one-sided Jacobi: orthogonalize the columns of a working
// copy of w; accumulated rotations form V, normalized columns form U.
SpectralDecomposition svd_tall(const Matrix& w) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    Matrix b = w;
    Matrix v = Matrix::identity(n);

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = col_dot(b, p, p);
                const double beta = col_dot(b, q, q);
                const double gamma = col_dot(b, p, q);
                if (std::abs(gamma) <= kRotTol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p);
                    const double bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(col_dot(b, j, j));

    // descending order; stable so equal values keep sweep-discovery order
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t c) { return norms[a] > norms[c]; });

    SpectralDecomposition out;
    out.sigma.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    const double sigma_max = norms.empty() ? 0.0 : norms[order[0]];
    const double zero_cut = sigma_max * 1e-14;

    std::size_t filled = 0;  // columns of u holding valid directions so far
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = norms[src];
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
        if (norms[src] > zero_cut && norms[src] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, j) = b(i, src) / norms[src];
            ++filled;
        }
    }

    // complete null-space u-columns orthonormally from the standard basis
    for (std::size_t j = filled; j < n; ++j) {
        out.sigma[j] = 0.0;
        for (std::size_t cand = 0; cand < m; ++cand) {
            Vector e(m, 0.0);
            e[cand] = 1.0;
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < m; ++i) proj += out.u(i, k) * e[i];
                for (std::size_t i = 0; i < m; ++i) e[i] -= proj * out.u(i, k);
            }
            double nrm = 0.0;
            for (double x : e) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) out.u(i, j) = e[i] / nrm;
                break;
            }
        }
    }

    // sign convention: largest-magnitude entry of each u-column positive,
    // ties toward the lowest row index
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t best = 0;
        double best_mag = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double mag = std::abs(out.u(i, j));
            if (mag > best_mag) {
                best_mag = mag;
                best = i;
            }
        }
        if (out.u(best, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, j) = -out.u(i, j);
            for (std::size_t i = 0; i < n; ++i) out.v(i, j) = -out.v(i, j);
        }
    }
    return out;
}

}  // namespace

Matrix SpectralDecomposition::reconstruct() const {
    Matrix w(u.rows(), v.rows());
    for (std::size_t k = 0; k < sigma.size(); ++k)
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double us = u(i, k) * sigma[k];
            if (us == 0.0) continue;
            for (std::size_t j = 0; j < v.rows(); ++j) w(i, j) += us * v(j, k);
        }
    return w;
}

SpectralDecomposition svd(const Matrix& w) {
    if (w.empty()) throw std::invalid_argument("svd: empty matrix");
    ensure_finite(w, "svd");
    if (w.rows() >= w.cols()) return svd_tall(w);
    SpectralDecomposition t = svd_tall(w.transpose());
    std::swap(t.u, t.v);
    // re-apply the sign convention to the swapped factors
    const std::size_t m = t.u.rows();
    const std::size_t n = t.v.rows();
    for (std::size_t j = 0; j < t.sigma.size(); ++j) {
        std::size_t best = 0;
        double best_mag = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double mag = std::abs(t.u(i, j));
            if (mag > best_mag) {
                best_mag = mag;
                best = i;
            }
        }
        if (t.u(best, j) < 0.0) {
            for (std::size_t i = 0; i < m; ++i) t.u(i, j) = -t.u(i, j);
            for (std::size_t i = 0; i < n; ++i) t.v(i, j) = -t.v(i, j);
        }
    }
    return t;
}

}  // namespace gse
