#pragma once

// Thin SVD through LAPACK's dgesvd. The factorization is checked against the
// input; Eigen's JacobiSVD is used when LAPACK fails or the check does not hold.

#include "blab/types.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>

namespace blab {

struct SvdFactors {
    Matrix U;      // rows x q
    Vector D;      // q, nonincreasing
    Matrix V;      // cols x q
};

namespace detail {

inline SvdFactors jacobi_svd(const Matrix& m, bool with_vectors)
{
    const unsigned opts = with_vectors ? (Eigen::ComputeThinU | Eigen::ComputeThinV) : 0u;
    Eigen::JacobiSVD<Matrix> svd(m, opts);
    SvdFactors out;
    out.D = svd.singularValues();
    if (with_vectors) {
        out.U = svd.matrixU();
        out.V = svd.matrixV();
    }
    return out;
}

} // namespace detail

inline SvdFactors compute_svd(const Matrix& m, bool with_vectors = true)
{
    const Index rows = m.rows();
    const Index cols = m.cols();
    const Index q = std::min(rows, cols);
    SvdFactors out;
    out.D.resize(q);
    if (q == 0) {
        out.U.resize(rows, 0);
        out.V.resize(cols, 0);
        return out;
    }

    const auto r = static_cast<lapack_int>(rows);
    const auto c = static_cast<lapack_int>(cols);
    const auto qq = static_cast<lapack_int>(q);
    Matrix a = m; // overwritten by LAPACK
    Matrix vt;
    Vector superb(std::max<Index>(q - 1, 1));
    lapack_int info = 0;
    if (with_vectors) {
        out.U.resize(rows, q);
        vt.resize(q, cols);
        info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'S', 'S', r, c, a.data(), r, out.D.data(), out.U.data(), r,
                              vt.data(), qq, superb.data());
    } else {
        double dummy = 0.0;
        info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'N', 'N', r, c, a.data(), r, out.D.data(), &dummy, 1, &dummy, 1,
                              superb.data());
    }
    if (info != 0 || !out.D.allFinite()) return detail::jacobi_svd(m, with_vectors);
    if (with_vectors) {
        out.V = vt.transpose();
        const double scale = std::max(1.0, out.D(0));
        const double resid = (out.U * out.D.asDiagonal() * vt - m).cwiseAbs().maxCoeff();
        if (!(resid <= 1e-9 * scale * static_cast<double>(q))) return detail::jacobi_svd(m, true);
    } else {
        const double fro = m.norm();
        const double check = out.D.norm();
        if (!(std::abs(check - fro) <= 1e-9 * std::max(1.0, fro))) return detail::jacobi_svd(m, false);
    }
    return out;
}

inline Vector singular_values(const Matrix& m) { return compute_svd(m, false).D; }

} // namespace blab
