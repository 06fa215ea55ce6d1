#pragma once

#include "lyapframe/types.hpp"

namespace lyapframe {

/// An l-tuple of vectors in R^n stored as the columns of an n x l matrix.
struct Frame {
    Mat vectors;

    int dim() const { return static_cast<int>(vectors.rows()); }
    int count() const { return static_cast<int>(vectors.cols()); }
    /// Smallest singular value above 1e-12 times the largest.
    bool is_independent() const;
};

/// Result of orthonormalizing a frame alpha:
///   alpha * Gamma has mutually orthogonal columns with norms zeta, and
///   Q = alpha * Gamma * diag(zeta)^-1.
/// Gamma is upper triangular with an exact unit diagonal.
struct GramSchmidtResult {
    Mat Q;
    Mat Gamma;
    Vec zeta;
};

/// Classical Gram-Schmidt with one re-orthogonalization pass.
/// Throws DegenerateFrameError naming the first dependent column.
GramSchmidtResult gram_schmidt(const Frame& frame);

/// In-place variant used by the frame flow: replaces q by its orthonormalized
/// version and writes the column norms to `norms`. Returns false instead of
/// throwing when a column is degenerate.
bool orthonormalize(Eigen::Ref<Mat> q, Eigen::Ref<Vec> norms);

/// Max-norm of Q^T Q - I.
double orthonormality_defect(const Eigen::Ref<const Mat>& q);

/// Seeded random n x l frame with orthonormal columns.
Mat random_orthonormal_frame(int n, int l, unsigned long long seed);

} // namespace lyapframe
