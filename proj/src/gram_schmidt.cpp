#include "lyapframe/gram_schmidt.hpp"

#include <random>
#include <string>

#include "lyapframe/errors.hpp"

namespace lyapframe {

namespace {

// Returns the index of the first degenerate column, or -1. `r` receives the
// upper-triangular factor with q_in = q_out * r.
int cgs2(Eigen::Ref<Mat> q, Mat& r)
{
    const auto n = q.rows();
    const auto l = q.cols();
    r.setZero(l, l);
    double scale = 0.0;
    for (Eigen::Index k = 0; k < l; ++k) scale = std::max(scale, q.col(k).norm());
    if (scale == 0.0) return 0;
    Vec c(n), proj;
    for (Eigen::Index k = 0; k < l; ++k) {
        c = q.col(k);
        for (int pass = 0; pass < 2; ++pass) {
            if (k == 0) break;
            proj = q.leftCols(k).transpose() * c;
            c.noalias() -= q.leftCols(k) * proj;
            r.col(k).head(k) += proj;
        }
        const double norm = c.norm();
        if (!(norm > 1e-12 * scale)) return static_cast<int>(k);
        r(k, k) = norm;
        q.col(k) = c / norm;
    }
    return -1;
}

} // namespace

bool Frame::is_independent() const
{
    if (vectors.cols() == 0 || vectors.cols() > vectors.rows()) return false;
    Eigen::JacobiSVD<Mat> svd(vectors);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 1e-12 * s(0);
}

GramSchmidtResult gram_schmidt(const Frame& frame)
{
    const auto l = frame.vectors.cols();
    if (l == 0 || l > frame.vectors.rows())
        throw DegenerateFrameError(static_cast<int>(l), "gram_schmidt: frame must have between 1 and n columns");
    GramSchmidtResult out;
    out.Q = frame.vectors;
    Mat r;
    if (int bad = cgs2(out.Q, r); bad >= 0)
        throw DegenerateFrameError(bad, "gram_schmidt: column " + std::to_string(bad) +
                                            " is linearly dependent on the preceding columns");
    out.zeta = r.diagonal();
    // Gamma = R^-1 diag(zeta).
    Mat rinv = r.triangularView<Eigen::Upper>().solve(Mat::Identity(l, l));
    out.Gamma = rinv * out.zeta.asDiagonal();
    out.Gamma.triangularView<Eigen::StrictlyLower>().setZero();
    out.Gamma.diagonal().setOnes();
    return out;
}

bool orthonormalize(Eigen::Ref<Mat> q, Eigen::Ref<Vec> norms)
{
    Mat r;
    if (cgs2(q, r) >= 0) return false;
    norms = r.diagonal();
    return true;
}

double orthonormality_defect(const Eigen::Ref<const Mat>& q)
{
    const auto l = q.cols();
    return (q.transpose() * q - Mat::Identity(l, l)).cwiseAbs().maxCoeff();
}

Mat random_orthonormal_frame(int n, int l, unsigned long long seed)
{
    if (l < 1 || l > n) throw DimensionError("random_orthonormal_frame: need 1 <= l <= n");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        Mat a(n, l);
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = normal(rng);
        Vec norms(l);
        if (orthonormalize(a, norms)) return a;
    }
}

} // namespace lyapframe
