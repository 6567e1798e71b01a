#include "lsi/geometry.hpp"

#include <cmath>

namespace lsi {

namespace {
void check_gradient(const DerivBundle& b, double floor) {
    if (b.grad_norm < floor)
        throw NumericalError("degenerate gradient: |grad f| = " +
                             std::to_string(b.grad_norm) + " < floor " +
                             std::to_string(floor));
}
}  // namespace

Mat adjugate(const Mat& m) {
    int d = static_cast<int>(m.rows());
    require(d == 2 || d == 3, "adjugate: only d in {2,3}");
    Mat a(d, d);
    if (d == 2) {
        a << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
        return a;
    }
    // transpose of the cofactor matrix
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            int r0 = (i + 1) % 3, r1 = (i + 2) % 3;
            int c0 = (j + 1) % 3, c1 = (j + 2) % 3;
            a(j, i) = m(r0, c0) * m(r1, c1) - m(r0, c1) * m(r1, c0);
        }
    return a;
}

CurvatureBundle curvature_bundle(const DerivBundle& b, double gradient_floor) {
    check_gradient(b, gradient_floor);
    int d = static_cast<int>(b.grad.size());
    require(d == 2 || d == 3, "curvature_bundle: only d in {2,3}");

    CurvatureBundle cb;
    Vec n_in = b.grad / b.grad_norm;  // gradient direction
    cb.normal = -n_in;                // outward normal
    cb.projector = Mat::Identity(d, d) - cb.normal * cb.normal.transpose();
    cb.shape_op =
        -(cb.projector * b.hess * cb.projector) / b.grad_norm;

    Eigen::SelfAdjointEigenSolver<Mat> es(cb.shape_op);
    // The structural zero eigenvalue is the one whose eigenvector aligns
    // with the normal, not the one smallest in magnitude.
    int zero_idx = 0;
    double best = -1.0;
    for (int i = 0; i < d; ++i) {
        double a = std::abs(es.eigenvectors().col(i).dot(cb.normal));
        if (a > best) {
            best = a;
            zero_idx = i;
        }
    }
    cb.principal.resize(d - 1);
    int k = 0;
    for (int i = 0; i < d; ++i)
        if (i != zero_idx) cb.principal(k++) = es.eigenvalues()(i);

    cb.mean = cb.principal.mean();
    cb.gauss = cb.principal.prod();

    // F_j = e_{j-1}(kappa), coefficients of prod_i (x + kappa_i).
    std::vector<double> e(d, 0.0);
    e[0] = 1.0;
    for (int i = 0; i < d - 1; ++i)
        for (int j = std::min(i + 1, d - 1); j >= 1; --j)
            e[j] += cb.principal(i) * e[j - 1];
    cb.Fj.resize(d);
    for (int j = 0; j < d; ++j) cb.Fj(j) = e[j];
    return cb;
}

double mean_curvature(const DerivBundle& b, double gradient_floor) {
    check_gradient(b, gradient_floor);
    int d = static_cast<int>(b.grad.size());
    Vec n = b.grad / b.grad_norm;
    double tr = b.hess.trace() - n.dot(b.hess * n);
    return -tr / ((d - 1) * b.grad_norm);
}

double gauss_curvature_adjugate(const DerivBundle& b, double gradient_floor) {
    check_gradient(b, gradient_floor);
    int d = static_cast<int>(b.grad.size());
    Vec n = b.grad / b.grad_norm;
    double sign = (d % 2 == 0) ? -1.0 : 1.0;  // (-1)^{d-1}
    return sign * n.dot(adjugate(b.hess) * n) / std::pow(b.grad_norm, d - 1);
}

double weight_wg(const DerivBundle& b, double g_val, const Vec& g_grad,
                 double gradient_floor) {
    check_gradient(b, gradient_floor);
    int d = static_cast<int>(b.grad.size());
    Vec n = -b.grad / b.grad_norm;  // outward
    double h = mean_curvature(b, gradient_floor);
    return (n.dot(g_grad) + (d - 1) * h * g_val) / b.grad_norm;
}

ParallelCurvature parallel_curvature(const Vec& principal_at_foot, double eps) {
    ParallelCurvature pc;
    int m = static_cast<int>(principal_at_foot.size());
    pc.principal_sharp.resize(m);
    pc.gauss_sharp = 1.0;
    for (int i = 0; i < m; ++i) {
        double denom = 1.0 + eps * principal_at_foot(i);
        if (std::abs(denom) < 1e-8)
            throw NumericalError("parallel_curvature: focal point at offset " +
                                 std::to_string(eps));
        pc.principal_sharp(i) = principal_at_foot(i) / denom;
        pc.gauss_sharp *= pc.principal_sharp(i);
    }
    return pc;
}

}  // namespace lsi
