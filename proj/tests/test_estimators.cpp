#include <cmath>
#include <memory>

#include "doctest.h"
#include "lsi/estimators.hpp"
#include "lsi/montecarlo.hpp"

using namespace lsi;

namespace {

// standard Gaussian density value on the sphere of radius r
double gauss_level(int d, double r) {
    return std::exp(-0.5 * r * r) / std::pow(2.0 * M_PI, d / 2.0);
}

GridSpec box(int d, double half, int res) {
    return grid_from_bounds(Vec::Constant(d, -half), Vec::Constant(d, half), res, d);
}

std::shared_ptr<const SamplePoints> gauss_sample(int n, int d, std::uint64_t seed) {
    GaussianField f(Vec::Zero(d), 1.0);
    return std::make_shared<SamplePoints>(f.sample(n, seed));
}

}  // namespace

TEST_CASE("estimators are linear in the integrand") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double c = gauss_level(2, 1.0);
    GridSpec grid = box(2, 3.0, 256);
    auto g1 = Integrand::known([](const Vec& x) { return x(0) * x(0); });
    auto g2 = Integrand::known([](const Vec& x) { return std::exp(x(1)); });
    const double a = 2.5, b = -1.25;
    auto gsum = Integrand::known(
        [&](const Vec& x) { return a * x(0) * x(0) + b * std::exp(x(1)); });
    auto gzero = Integrand::known([](const Vec&) { return 0.0; });

    std::vector<EstimatorKind> kinds = {EstimatorKind::plugin(),
                                        EstimatorKind::band(0.25 * c),
                                        EstimatorKind::tube(0.1)};
    for (const auto& kind : kinds) {
        CAPTURE(kind.name());
        double v1 = estimate(f, g1, c, kind, grid).value;
        double v2 = estimate(f, g2, c, kind, grid).value;
        double vs = estimate(f, gsum, c, kind, grid).value;
        CHECK(vs == doctest::Approx(a * v1 + b * v2).epsilon(1e-10));
        CHECK(estimate(f, gzero, c, kind, grid).value == doctest::Approx(0.0));
    }
}

TEST_CASE("plugin estimator recovers the circle perimeter") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double r = 1.0, c = gauss_level(2, r);
    auto rep = estimate(f, Integrand::unity(), c, EstimatorKind::plugin(),
                        box(2, 3.0, 512));
    CHECK(rep.value == doctest::Approx(2.0 * M_PI * r).epsilon(0.003));
    CHECK(rep.kind.tag == EstimatorKind::Tag::Plugin);
    CHECK(rep.n == 0);  // analytic field
    CHECK(rep.diagnostics.mesh_measure > 0.0);
    CHECK(rep.diagnostics.min_grad_on_mesh > 0.0);
}

TEST_CASE("tube estimator matches the annulus volume average") {
    // for a circle the tube of half-width eps has area exactly 2 pi r * 2 eps,
    // so the unity tube value must equal the perimeter
    GaussianField f(Vec::Zero(2), 1.0);
    const double r = 1.0, c = gauss_level(2, r);
    auto rep = estimate(f, Integrand::unity(), c, EstimatorKind::tube(0.1),
                        box(2, 3.0, 512));
    CHECK(rep.value == doctest::Approx(2.0 * M_PI * r).epsilon(0.01));
    CHECK(rep.diagnostics.band_cell_count > 0);
}

TEST_CASE("band estimator equals the coarea average of plugin values") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double c = gauss_level(2, 1.0);
    const double eps = 0.25 * c;
    GridSpec grid = box(2, 3.0, 256);
    auto g = Integrand::known([](const Vec& x) { return 1.0 + 0.5 * x(0); });
    double band = estimate(f, g, c, EstimatorKind::band(eps), grid).value;

    // (1 / 2eps) int_{c-eps}^{c+eps} lambda(t) dt by Gauss-Legendre
    std::vector<double> qn, qw;
    gauss_legendre(16, qn, qw);
    double avg = 0.0;
    for (std::size_t i = 0; i < qn.size(); ++i) {
        double t = c + eps * qn[i];
        avg += 0.5 * qw[i] *
               estimate(f, g, t, EstimatorKind::plugin(), grid).value;
    }
    CHECK(band == doctest::Approx(avg).epsilon(0.01));
}

TEST_CASE("small-eps band and tube values approach the plugin value") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double c = gauss_level(2, 1.0);
    GridSpec grid = box(2, 3.0, 512);
    auto g = Integrand::known([](const Vec& x) { return 1.0 + x(1) * x(1); });
    double plug = estimate(f, g, c, EstimatorKind::plugin(), grid).value;
    double band = estimate(f, g, c, EstimatorKind::band(0.05 * c), grid).value;
    double tube =
        estimate(f, g, c, EstimatorKind::tube(2.5 * grid.min_step()), grid).value;
    CHECK(band == doctest::Approx(plug).epsilon(0.02));
    CHECK(tube == doctest::Approx(plug).epsilon(0.02));
}

TEST_CASE("estimator input validation and eps defaults") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double c = gauss_level(2, 1.0);
    GridSpec grid = box(2, 3.0, 128);
    CHECK_THROWS_AS(
        estimate(f, Integrand::unity(), c, EstimatorKind::band(0.0), grid),
        InvalidArgument);
    CHECK_THROWS_AS(
        estimate(f, Integrand::unity(), c, EstimatorKind::tube(0.0), grid),
        InvalidArgument);
    // resolvable defaults
    CHECK(default_band_eps(f, c, grid) > 0.0);
    CHECK(default_tube_eps(grid) > 0.0);
    // windows the grid cannot resolve
    CHECK_THROWS_AS(
        estimate(f, Integrand::unity(), c, EstimatorKind::band(1e-12), grid),
        NumericalError);
    CHECK_THROWS_AS(
        estimate(f, Integrand::unity(), c, EstimatorKind::tube(1e-6), grid),
        NumericalError);
    // unbracketed level propagates
    CHECK_THROWS_AS(
        estimate(f, Integrand::unity(), 10.0, EstimatorKind::plugin(), grid),
        NumericalError);
}

TEST_CASE("variance of the unity integrand matches the closed form") {
    // on the circle of radius r: w_1 = H / |grad f| = 1 / (r^2 c), so
    // sigma^2 = c R(K) * 2 pi r / (r^4 c^2) = 2 pi R(K) / (r^3 c)
    GaussianField f(Vec::Zero(2), 1.0);
    const double r = 1.0, c = gauss_level(2, r);
    GridSpec grid = box(2, 3.0, 512);
    KernelSpec k = make_kernel(2, 2, 5);
    double s2 = variance_hat(f, Integrand::unity(), c, 0.0, grid, k);
    double oracle = 2.0 * M_PI * roughness_RK(k) / (r * r * r * c);
    CHECK(s2 == doctest::Approx(oracle).epsilon(0.02));

    // a thin level window only perturbs the value mildly
    double s2_band = variance_hat(f, Integrand::unity(), c, 0.25 * c, grid, k);
    CHECK(s2_band == doctest::Approx(s2).epsilon(0.10));

    // g = 1/|x| with its exact gradient makes w_g vanish identically on every
    // centered circle, so the variance estimate collapses to zero
    auto g = Integrand::known([](const Vec& x) { return 1.0 / x.norm(); },
                              [](const Vec& x) {
                                  return Vec(-x / std::pow(x.norm(), 3));
                              });
    double s2_null = variance_hat(f, g, c, 0.0, grid, k);
    CHECK(std::abs(s2_null) < 1e-12 * s2);

    auto rep = estimate(f, Integrand::unity(), c, EstimatorKind::plugin(), grid);
    rep.n = 1000;
    CHECK_THROWS_AS(confidence_interval(rep, 0.0, 0.05, 0.5), InvalidArgument);
    CHECK_THROWS_AS(confidence_interval(rep, -1.0, 0.05, 0.5), InvalidArgument);
}

TEST_CASE("confidence interval widths follow the normal quantile") {
    EstimateReport rep;
    rep.value = 5.0;
    rep.n = 1000;
    const double s2 = 2.0, h = 0.3;

    auto width = [&](long n, double alpha) {
        EstimateReport r2 = rep;
        r2.n = n;
        auto out = confidence_interval(r2, s2, alpha, h);
        REQUIRE(out.ci.has_value());
        CHECK(out.std_err.has_value());
        CHECK(out.ci->first < rep.value);
        CHECK(out.ci->second > rep.value);
        return out.ci->second - out.ci->first;
    };

    // z_{0.025} = 1.959964; half-width = z sigma / sqrt(n h)
    double w = width(1000, 0.05);
    double expect = 2.0 * 1.959963985 * std::sqrt(s2 / (1000.0 * h));
    CHECK(w == doctest::Approx(expect).epsilon(1e-6));
    // doubling n shrinks the width by sqrt(2)
    CHECK(width(2000, 0.05) == doctest::Approx(w / std::sqrt(2.0)).epsilon(1e-12));
    // larger alpha means a narrower interval, vanishing as alpha -> 1
    CHECK(width(1000, 0.5) < w);
    CHECK(width(1000, 0.9999) < 1e-3 * w);

    EstimateReport bad = rep;
    bad.n = 0;
    CHECK_THROWS_AS(confidence_interval(bad, s2, 0.05, h), InvalidArgument);
    CHECK_THROWS_AS(confidence_interval(rep, s2, 0.0, h), InvalidArgument);
    CHECK_THROWS_AS(confidence_interval(rep, s2, 1.0, h), InvalidArgument);
    CHECK_THROWS_AS(confidence_interval(rep, s2, 0.05, 0.0), InvalidArgument);
}

TEST_CASE("euler characteristic estimators agree on the sphere") {
    GaussianField f2(Vec::Zero(2), 1.0);
    CHECK_THROWS_AS(euler_characteristic(f2, gauss_level(2, 1.0),
                                         EulerMethod::plugin_gb(), box(2, 3.0, 64)),
                    InvalidArgument);

    GaussianField f(Vec::Zero(3), 1.0);
    const double c = gauss_level(3, 1.0);
    GridSpec grid = box(3, 2.5, 96);

    auto plug = euler_characteristic(f, c, EulerMethod::plugin_gb(), grid);
    CHECK(plug.snapped == 2);
    CHECK(plug.raw == doctest::Approx(2.0).epsilon(0.05));

    auto band = euler_characteristic(f, c, EulerMethod::band_gb(0.2 * c), grid);
    CHECK(band.snapped == 2);
    CHECK(band.raw == doctest::Approx(2.0).epsilon(0.08));

    auto par = euler_characteristic(f, c, EulerMethod::parallel_gb(0.1), grid);
    CHECK(par.snapped == 2);
    CHECK(par.raw == doctest::Approx(2.0).epsilon(0.15));

    auto comb = euler_characteristic(f, c, EulerMethod::combinatorial(), grid);
    CHECK(comb.snapped == 2);
    CHECK(comb.raw == doctest::Approx(2.0));

    CHECK_THROWS_AS(euler_characteristic(f, c, EulerMethod::band_gb(0.0), grid),
                    InvalidArgument);
}

TEST_CASE("minkowski functionals of the disk and the ball") {
    GaussianField f2(Vec::Zero(2), 1.0);
    const double r = 1.0;
    Vec v2 = minkowski_functionals(f2, gauss_level(2, r), box(2, 3.0, 512));
    REQUIRE(v2.size() == 3);
    CHECK(v2(0) == doctest::Approx(M_PI * r * r).epsilon(0.01));  // area
    CHECK(v2(1) == doctest::Approx(M_PI * r / 2.0).epsilon(0.01));  // perimeter / 4
    CHECK(v2(2) == doctest::Approx(2.0).epsilon(0.02));  // curvature integral / omega_2

    // the top functional is a multiple of chi: invariant under radius changes
    GaussianField f3(Vec::Zero(3), 1.0);
    GridSpec g3 = box(3, 2.5, 96);
    Vec a = minkowski_functionals(f3, gauss_level(3, 0.9), g3);
    Vec b = minkowski_functionals(f3, gauss_level(3, 1.2), g3);
    REQUIRE(a.size() == 4);
    CHECK(a(3) == doctest::Approx(b(3)).epsilon(0.02));
}

TEST_CASE("willmore energy of the circle and the sphere") {
    GaussianField f2(Vec::Zero(2), 1.0);
    const double r = 1.0;
    CHECK(willmore_energy(f2, gauss_level(2, r), box(2, 3.0, 512)) ==
          doctest::Approx(2.0 * M_PI / r).epsilon(0.01));

    GaussianField f3(Vec::Zero(3), 1.0);
    CHECK(willmore_energy(f3, gauss_level(3, r), box(3, 2.5, 96)) ==
          doctest::Approx(4.0 * M_PI).epsilon(0.01));
}

TEST_CASE("pair-averaged second-derivative integrand estimate") {
    KernelSpec k = make_kernel(2, 2, 5);
    GaussianField truth(Vec::Zero(2), 1.0);
    const double c = gauss_level(2, 1.0);
    LevelMesh ref = extract_level_mesh(truth, c, box(2, 3.0, 256));
    auto phi1 = [](const Vec&) { return 1.0; };

    // needs at least three points for leave-two-out
    auto tiny = std::make_shared<SamplePoints>();
    tiny->coords = Mat::Zero(2, 2);
    KdeField ftiny(tiny, 0.5, k);
    CHECK_THROWS_AS(ustat_integrand_estimate(ftiny, phi1, 0, 0, ref, 1),
                    InvalidArgument);

    // samples far from the mesh contribute nothing (compact kernel support)
    auto far = std::make_shared<SamplePoints>();
    far->coords = Mat::Constant(10, 2, 25.0);
    KdeField ffar(far, 0.5, k);
    CHECK(ustat_integrand_estimate(ffar, phi1, 0, 0, ref, 1) == doctest::Approx(0.0));

    // agreement with the plug-in product of the same KDE derivatives
    const double h = 0.5 / kernel_axis_sd(k);
    KdeField kde(gauss_sample(1000, 2, 5), h, k);
    double us = ustat_integrand_estimate(kde, phi1, 0, 0, ref, 7);
    double plug = mesh_integral(ref, [&](const Vec& x) {
        Vec v = vech_lower(kde.hessian(x));
        return v(0) * v(0);
    });
    CHECK(us == doctest::Approx(plug).epsilon(0.10));

    CHECK_THROWS_AS(ustat_integrand_estimate(kde, phi1, -1, 0, ref, 1),
                    InvalidArgument);
    CHECK_THROWS_AS(ustat_integrand_estimate(kde, phi1, 0, 5, ref, 1),
                    InvalidArgument);
}

TEST_CASE("variance propagation for expression integrands") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double r = 1.0, c = gauss_level(2, r);
    GridSpec grid = box(2, 3.0, 512);
    KernelSpec k = make_kernel(2, 2, 5);

    // phi with no derivative dependence has nothing to propagate
    CHECK_THROWS_AS(
        variance_hat_unknown(f, PhiExpr::constant(2.0), c, grid, k, 1),
        InvalidArgument);

    // first-derivative-only phi contributes nothing at order two
    PhiExpr d1;
    d1.op = PhiExpr::Op::D1;
    d1.index = 0;
    CHECK(variance_hat_unknown(f, d1, c, grid, k, 2) == doctest::Approx(0.0));

    // l = 1 oracle for phi = d1[0]: grad_1 phi = e0, so
    // sigma_1^2 = c * int_M (e0 . N)^2 dH * int_{-1}^{1} A'(t)^2 dt
    // with A the hyperplane-slice integral of K (independent quadrature here)
    const double dt = 1e-5;
    auto aprime = [&](double t) {
        return (kernel_slice_integral(k, t + dt) - kernel_slice_integral(k, t - dt)) /
               (2.0 * dt);
    };
    const int m = 2000;
    double iap = 0.0;  // Simpson over [-1, 1]
    for (int i = 0; i <= m; ++i) {
        double t = -1.0 + 2.0 * i / m;
        double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        double a = aprime(t);
        iap += w * a * a;
    }
    iap *= (2.0 / m) / 3.0;
    double oracle = c * (M_PI * r) * iap;
    CHECK(variance_hat_unknown(f, d1, c, grid, k, 1) ==
          doctest::Approx(oracle).epsilon(0.01));

    // two routes to the known-g variance must coincide: the direct estimate
    // and c R(K) times the band estimate of the built-in squared weight
    const double tau = 0.25 * c;
    double direct = variance_hat(f, Integrand::unity(), c, tau, grid, k);
    double via_band =
        c * roughness_RK(k) *
        estimate(f, Integrand::phi(PhiExpr::named(PhiExpr::Builtin::WgSquared)), c,
                 EstimatorKind::band(std::min(tau, c / 2)), grid)
            .value;
    CHECK(direct == doctest::Approx(via_band).epsilon(1e-9));
}

TEST_CASE("plug-in bandwidth rule scaling and risk shape") {
    GaussianField f(Vec::Zero(2), 1.0);
    const double c = gauss_level(2, 1.0);
    GridSpec grid = box(2, 3.0, 256);
    KernelSpec k = make_kernel(2, 2, 5);

    auto sel = bandwidth_opt(f, c, grid, k, 1000);
    CHECK(sel.h_opt > 0.0);
    CHECK(sel.A > 0.0);
    CHECK(sel.B > 0.0);

    // h_opt scales as n^{-1/(d+4)}
    auto sel2 = bandwidth_opt(f, c, grid, k, 2000);
    CHECK(sel2.h_opt / sel.h_opt ==
          doctest::Approx(std::pow(2.0, -1.0 / 6.0)).epsilon(1e-12));

    // h_opt minimizes the stated risk proxy
    CHECK(sel.risk(sel.h_opt, 1000, 2) < sel.risk(sel.h_opt * 1.25, 1000, 2));
    CHECK(sel.risk(sel.h_opt, 1000, 2) < sel.risk(sel.h_opt / 1.25, 1000, 2));

    KernelSpec k4 = make_kernel(2, 4, 5);
    CHECK_THROWS_AS(bandwidth_opt(f, c, grid, k4, 1000), InvalidArgument);
    CHECK_THROWS_AS(bandwidth_opt(f, c, grid, k, 1), InvalidArgument);
}
