#include <cmath>
#include <random>

#include "doctest.h"
#include "lsi/phi_expr.hpp"

using namespace lsi;

namespace {

DerivBundle gaussian_bundle(int d, double r) {
    GaussianField f(Vec::Zero(d), 1.0);
    Vec x = Vec::Zero(d);
    x(0) = r;
    return deriv_bundle(f, x);
}

Mat random_rotation(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = nd(rng);
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ();
    if (q.determinant() < 0) q.col(0) *= -1.0;
    return q;
}

DerivBundle rotate_bundle(const DerivBundle& b, const Mat& q) {
    DerivBundle out = b;
    out.grad = q * b.grad;
    out.hess = q * b.hess * q.transpose();
    out.hess_vech = vech_lower(out.hess);
    out.grad_norm = out.grad.norm();
    return out;
}

DerivBundle scale_bundle(const DerivBundle& b, double a) {
    DerivBundle out = b;
    out.value *= a;
    out.grad *= a;
    out.hess *= a;
    out.hess_vech *= a;
    out.grad_norm *= a;
    return out;
}

}  // namespace

TEST_CASE("circle and sphere curvature oracles") {
    for (double r : {0.8, 1.5217}) {
        DerivBundle b2 = gaussian_bundle(2, r);
        CurvatureBundle c2 = curvature_bundle(b2);
        CHECK(c2.mean == doctest::Approx(1.0 / r).epsilon(1e-10));
        REQUIRE(c2.principal.size() == 1);
        CHECK(c2.principal(0) == doctest::Approx(1.0 / r).epsilon(1e-10));

        DerivBundle b3 = gaussian_bundle(3, r);
        CurvatureBundle c3 = curvature_bundle(b3);
        CHECK(c3.mean == doctest::Approx(1.0 / r).epsilon(1e-10));
        CHECK(c3.gauss == doctest::Approx(1.0 / (r * r)).epsilon(1e-10));
        CHECK(gauss_curvature_adjugate(b3) == doctest::Approx(1.0 / (r * r)).epsilon(1e-8));
        CHECK(gauss_curvature_adjugate(b2) == doctest::Approx(1.0 / r).epsilon(1e-8));
        CHECK(mean_curvature(b3) == doctest::Approx(c3.mean).epsilon(1e-12));
    }
}

TEST_CASE("structural identities of the curvature bundle") {
    std::mt19937_64 rng(11);
    GaussianMixtureField mix({0.6, 0.4}, {Vec::Zero(3), Vec::Constant(3, 1.0)}, {1.0, 0.8});
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    int tested = 0;
    while (tested < 60) {
        Vec x(3);
        for (int a = 0; a < 3; ++a) x(a) = unif(rng);
        DerivBundle b = deriv_bundle(mix, x);
        if (b.degenerate) continue;
        ++tested;
        CurvatureBundle c = curvature_bundle(b);
        CHECK(std::abs(c.normal.norm() - 1.0) < 1e-12);
        // outward normal of the super level set points against the gradient
        CHECK((c.normal + b.grad / b.grad_norm).norm() < 1e-12);
        Mat g = c.projector;
        CHECK((g - (Mat::Identity(3, 3) - c.normal * c.normal.transpose())).norm() < 1e-12);
        CHECK((g * g - g).norm() < 1e-12);
        CHECK((g * c.normal).norm() < 1e-12);
        CHECK((c.shape_op * c.normal).norm() < 1e-12);
        // H is the average and gauss the product of the principal curvatures
        CHECK(c.mean == doctest::Approx(c.principal.mean()).epsilon(1e-10));
        CHECK(c.gauss == doctest::Approx(c.principal.prod()).epsilon(1e-10));
        // F_1 = 1, F_2 = sum, F_d = product
        REQUIRE(c.Fj.size() == 3);
        CHECK(c.Fj(0) == doctest::Approx(1.0));
        CHECK(c.Fj(1) == doctest::Approx(c.principal.sum()).epsilon(1e-10));
        CHECK(c.Fj(2) == doctest::Approx(c.principal.prod()).epsilon(1e-10));
    }
}

TEST_CASE("two gauss curvature routes agree on a mixture") {
    std::mt19937_64 rng(13);
    GaussianMixtureField mix({0.5, 0.5}, {Vec::Zero(3), Vec::Constant(3, 1.2)}, {1.0, 0.7});
    std::uniform_real_distribution<double> unif(-2.5, 2.5);
    int tested = 0;
    while (tested < 100) {
        Vec x(3);
        for (int a = 0; a < 3; ++a) x(a) = unif(rng);
        DerivBundle b = deriv_bundle(mix, x);
        if (b.degenerate || b.grad_norm < 1e-4) continue;
        ++tested;
        double g1 = curvature_bundle(b).gauss;
        double g2 = gauss_curvature_adjugate(b);
        CHECK(std::abs(g1 - g2) <= 1e-8 * std::max(1.0, std::abs(g2)));
    }
}

TEST_CASE("rotation equivariance and f-scaling invariance") {
    std::mt19937_64 rng(17);
    GaussianMixtureField mix({0.6, 0.4}, {Vec::Zero(3), Vec::Constant(3, 1.0)}, {1.0, 0.8});
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    int tested = 0;
    while (tested < 40) {
        Vec x(3);
        for (int a = 0; a < 3; ++a) x(a) = unif(rng);
        DerivBundle b = deriv_bundle(mix, x);
        if (b.degenerate || b.grad_norm < 1e-4) continue;
        ++tested;
        CurvatureBundle c = curvature_bundle(b);

        Mat q = random_rotation(3, rng);
        CurvatureBundle cr = curvature_bundle(rotate_bundle(b, q));
        CHECK(std::abs(cr.mean - c.mean) < 1e-10 * std::max(1.0, std::abs(c.mean)));
        CHECK(std::abs(cr.gauss - c.gauss) < 1e-10 * std::max(1.0, std::abs(c.gauss)));
        CHECK((cr.normal - q * c.normal).norm() < 1e-10);
        Vec ps = cr.principal, po = c.principal;
        std::sort(ps.data(), ps.data() + ps.size());
        std::sort(po.data(), po.data() + po.size());
        CHECK((ps - po).cwiseAbs().maxCoeff() < 1e-10);

        CurvatureBundle cs = curvature_bundle(scale_bundle(b, 3.7));
        CHECK(std::abs(cs.mean - c.mean) < 1e-10 * std::max(1.0, std::abs(c.mean)));
        CHECK(std::abs(cs.gauss - c.gauss) < 1e-10 * std::max(1.0, std::abs(c.gauss)));
        CHECK((cs.normal - c.normal).norm() < 1e-12);
        CHECK((cs.Fj - c.Fj).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("characteristic polynomial of S reproduces the F_j") {
    GaussianMixtureField mix({0.5, 0.5}, {Vec::Zero(3), Vec::Constant(3, 1.1)}, {1.0, 0.9});
    Vec x(3);
    x << 1.3, -0.4, 0.8;
    DerivBundle b = deriv_bundle(mix, x);
    REQUIRE(!b.degenerate);
    CurvatureBundle c = curvature_bundle(b);
    // det(tI - S) = t(t - k1)(t - k2) = t^3 - (k1+k2)t^2 + k1 k2 t
    double k1 = c.principal(0), k2 = c.principal(1);
    for (double t : {0.3, -0.7, 1.9}) {
        double det = (Mat(t * Mat::Identity(3, 3) - c.shape_op)).determinant();
        double poly = t * (t - k1) * (t - k2);
        CHECK(det == doctest::Approx(poly).epsilon(1e-8));
    }
    CHECK(c.Fj(1) == doctest::Approx(k1 + k2).epsilon(1e-10));
    CHECK(c.Fj(2) == doctest::Approx(k1 * k2).epsilon(1e-10));
}

TEST_CASE("parallel curvature") {
    Vec flat = Vec::Zero(2);
    ParallelCurvature p0 = parallel_curvature(flat, 0.5);
    CHECK(p0.principal_sharp.norm() == 0.0);
    CHECK(p0.gauss_sharp == 0.0);

    Vec sphere = Vec::Constant(2, 1.0 / 1.5);  // kappa_i = 1/r, r = 1.5
    ParallelCurvature pe = parallel_curvature(sphere, 0.0);
    CHECK((pe.principal_sharp - sphere).norm() < 1e-14);
    ParallelCurvature ps = parallel_curvature(sphere, 0.2);
    for (int i = 0; i < 2; ++i)
        CHECK(ps.principal_sharp(i) == doctest::Approx(1.0 / 1.7).epsilon(1e-12));
    CHECK(ps.gauss_sharp == doctest::Approx(1.0 / (1.7 * 1.7)).epsilon(1e-12));

    // focal point: 1 + eps*kappa == 0
    CHECK_THROWS_AS(parallel_curvature(sphere, -1.5), NumericalError);
}

TEST_CASE("w_g weight") {
    double r = 1.5217;
    DerivBundle b = gaussian_bundle(2, r);
    double c = b.value;
    // g == 1: w = (d-1) H / |grad f| = (1/r) / (r c) = 1/(r^2 c)
    CHECK(weight_wg(b, 1.0, Vec::Zero(2)) ==
          doctest::Approx(1.0 / (r * r * c)).epsilon(1e-10));
    CHECK(weight_wg(b, 0.0, Vec::Zero(2)) == 0.0);
    // g(x) = 1/|x| makes N^T grad g cancel (d-1) H g on the circle
    Vec gg(2);
    gg << -1.0 / (r * r), 0.0;  // grad 1/|x| at (r, 0)
    CHECK(std::abs(weight_wg(b, 1.0 / r, gg)) < 1e-12);
}

TEST_CASE("phi expressions evaluate and round trip through json") {
    DerivBundle b = gaussian_bundle(3, 1.2);
    CHECK(PhiExpr::named(PhiExpr::Builtin::Unity).eval(b) == 1.0);
    CHECK(PhiExpr::named(PhiExpr::Builtin::MeanCurvature).eval(b) ==
          doctest::Approx(1.0 / 1.2).epsilon(1e-10));
    CHECK(PhiExpr::named(PhiExpr::Builtin::Willmore).eval(b) ==
          doctest::Approx(1.0 / 1.44).epsilon(1e-10));
    CHECK(PhiExpr::named(PhiExpr::Builtin::GaussCurvature).eval(b) ==
          doctest::Approx(gauss_curvature_adjugate(b)).epsilon(1e-8));
    CHECK(PhiExpr::named(PhiExpr::Builtin::MinkowskiFj, 1).eval(b) == doctest::Approx(1.0));
    double w = weight_wg(b, 1.0, Vec::Zero(3));
    CHECK(PhiExpr::named(PhiExpr::Builtin::WgSquared).eval(b) ==
          doctest::Approx(w * w).epsilon(1e-10));

    PhiExpr c5 = PhiExpr::constant(5.0);
    CHECK(c5.eval(b) == 5.0);
    CHECK(!c5.uses_second_derivatives());
    CHECK(PhiExpr::named(PhiExpr::Builtin::MeanCurvature).uses_second_derivatives());

    for (const PhiExpr& e :
         {PhiExpr::named(PhiExpr::Builtin::Willmore), PhiExpr::constant(2.5),
          PhiExpr::named(PhiExpr::Builtin::MinkowskiFj, 2)}) {
        PhiExpr back = PhiExpr::from_json(e.to_json());
        CHECK(back.eval(b) == doctest::Approx(e.eval(b)).epsilon(1e-12));
    }
    CHECK(PhiExpr::from_json("willmore").eval(b) == doctest::Approx(1.0 / 1.44).epsilon(1e-10));
    CHECK_THROWS(PhiExpr::from_json("no_such_integrand"));
    CHECK_THROWS(PhiExpr::from_json("{\"op\":\"frobnicate\"}"));
}

TEST_CASE("degenerate gradients are refused") {
    GaussianField f(Vec::Zero(2), 1.0);
    DerivBundle at_mode = deriv_bundle(f, Vec::Zero(2));
    REQUIRE(at_mode.degenerate);
    CHECK_THROWS_AS(curvature_bundle(at_mode), NumericalError);
    CHECK_THROWS_AS(gauss_curvature_adjugate(at_mode), NumericalError);
    CHECK_THROWS_AS(weight_wg(at_mode, 1.0, Vec::Zero(2)), NumericalError);
}

TEST_CASE("adjugate by cofactors") {
    Mat m(3, 3);
    m << 2, 1, 0, 1, 3, 1, 0, 1, 4;
    Mat adj = adjugate(m);
    CHECK((m * adj - m.determinant() * Mat::Identity(3, 3)).norm() < 1e-12);
    Mat m2(2, 2);
    m2 << 3, 1, 2, 5;
    CHECK((m2 * adjugate(m2) - m2.determinant() * Mat::Identity(2, 2)).norm() < 1e-12);
}
