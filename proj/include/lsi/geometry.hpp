#pragma once

#include "lsi/density.hpp"

namespace lsi {

/// Pointwise differential geometry of the implicit level set through a
/// derivative bundle.
///
/// Sign convention: `normal` is the outward normal of the super level set,
/// n = -grad f / |grad f|, and curvatures are taken with respect to n. A
/// standard Gaussian's level circles/spheres then get H = +1/r and
/// principal curvatures +1/r. (The shape operator in this convention is
/// the negative of |grad f|^{-1} G hess(f) G; both signs square to the
/// same Willmore/variance quantities.)
struct CurvatureBundle {
    Vec normal;      // unit outward normal
    Mat projector;   // G = I - N N^T
    Mat shape_op;    // S, symmetric, S N = 0
    Vec principal;   // d-1 principal curvatures
    double mean = 0.0;   // H
    double gauss = 0.0;  // product of principal curvatures
    Vec Fj;              // F_1..F_d, elementary symmetric polynomials e_{j-1}
};

CurvatureBundle curvature_bundle(const DerivBundle& b,
                                 double gradient_floor = kGradientFloor);

// Gaussian curvature through the adjugate of the Hessian; independent
// second route to CurvatureBundle::gauss.
double gauss_curvature_adjugate(const DerivBundle& b,
                                double gradient_floor = kGradientFloor);

// Mean curvature only (no eigensolve): H = -tr(G hess G) / ((d-1)|grad|).
double mean_curvature(const DerivBundle& b, double gradient_floor = kGradientFloor);

// w_g(x) = |grad f|^{-1} [ n^T grad g + (d-1) H g ] with n, H as above.
double weight_wg(const DerivBundle& b, double g_val, const Vec& g_grad,
                 double gradient_floor = kGradientFloor);

// Principal curvatures of the parallel surface at signed offset eps along
// the outward normal: kappa_i / (1 + eps kappa_i). Throws on focal points.
struct ParallelCurvature {
    double gauss_sharp;
    Vec principal_sharp;
};
ParallelCurvature parallel_curvature(const Vec& principal_at_foot, double eps);

Mat adjugate(const Mat& m);  // d <= 3, explicit cofactors

}  // namespace lsi
