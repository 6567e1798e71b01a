#include "lsi/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace lsi {

namespace {

// measure of S^{d-2} (the slice sphere): 2 points for d=2, unit circle for d=3
double slice_sphere_measure(int d) { return d == 2 ? 2.0 : 2.0 * M_PI; }

double ball_volume(int j) {  // omega_j, volume of the unit j-ball
    return std::pow(M_PI, 0.5 * j) / std::tgamma(0.5 * j + 1.0);
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
    return r;
}

// sweep all cell centers in index order; visit(x, i_flat) for each
template <typename Visit>
void sweep_cells(const GridSpec& grid, Visit&& visit) {
    const int d = grid.dim();
    Vec x(d);
    const int nz = d == 3 ? grid.res[2] : 1;
    for (int i = 0; i < grid.res[0]; ++i) {
        x(0) = grid.lower(0) + (i + 0.5) * grid.step(0);
        for (int j = 0; j < grid.res[1]; ++j) {
            x(1) = grid.lower(1) + (j + 0.5) * grid.step(1);
            for (int k = 0; k < nz; ++k) {
                if (d == 3) x(2) = grid.lower(2) + (k + 0.5) * grid.step(2);
                visit(x);
            }
        }
    }
}

void fill_field_info(const DensityField& F, EstimateReport& rep) {
    if (const auto* kde = dynamic_cast<const KdeField*>(&F)) {
        rep.bandwidth = kde->bandwidth();
        rep.n = kde->effective_n();
    }
}

double integrand_at(const DensityField& F, const Integrand& g, const Vec& x,
                    const DerivBundle* b) {
    if (!g.is_expr()) return g.func(x);
    return b ? g.expr->eval(*b) : g.expr->eval(deriv_bundle(F, x));
}

}  // namespace

double default_band_eps(const DensityField& F, double c, const GridSpec& grid) {
    double h = 0.0;
    if (const auto* kde = dynamic_cast<const KdeField*>(&F)) h = kde->bandwidth();
    // level window must span a few grid cells' worth of field variation
    LevelMesh m = extract_level_mesh(F, c, grid);
    require(!m.vertices.empty(), "level " + std::to_string(c) + " not bracketed on grid");
    double gsum = 0.0;
    for (double gn : m.vertex_gradnorm) gsum += gn;
    double gmean = gsum / static_cast<double>(m.vertex_gradnorm.size());
    double floor_eps = 3.0 * grid.min_step() * gmean;
    return std::max(10.0 * c * h * h, floor_eps);
}

double default_tube_eps(const GridSpec& grid) { return 3.0 * grid.min_step(); }

EstimateReport estimate(const DensityField& F, const Integrand& g, double c,
                        EstimatorKind kind, const GridSpec& grid) {
    grid.validate();
    require(F.dim() == grid.dim(), "field / grid dimension mismatch");
    require(kind.tag == EstimatorKind::Tag::Plugin || kind.eps > 0,
            "band/tube half-width must be positive");

    EstimateReport rep;
    rep.kind = kind;
    rep.level = c;
    rep.diagnostics.grid_res = grid.res[0];
    fill_field_info(F, rep);

    if (kind.tag == EstimatorKind::Tag::Plugin) {
        LevelMesh m = extract_level_mesh(F, c, grid);
        require(!m.vertices.empty(), "level " + std::to_string(c) + " not bracketed on grid");
        std::vector<double> vals(m.vertices.size());
        double min_grad = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m.vertices.size(); ++i) {
            if (g.is_expr()) {
                DerivBundle b = deriv_bundle(F, m.vertices[i]);
                vals[i] = g.expr->eval(b);
            } else {
                vals[i] = g.func(m.vertices[i]);
            }
            min_grad = std::min(min_grad, m.vertex_gradnorm[i]);
        }
        double total = 0.0;
        const int nv = m.dim == 2 ? 2 : 3;
        for (std::size_t cidx = 0; cidx < m.cells.size(); ++cidx) {
            double avg = 0.0;
            for (int a = 0; a < nv; ++a) avg += vals[m.cells[cidx][a]];
            total += m.cell_measures[cidx] * avg / nv;
        }
        rep.value = total;
        rep.diagnostics.mesh_measure = m.total_measure();
        rep.diagnostics.min_grad_on_mesh = min_grad;
        return rep;
    }

    if (kind.tag == EstimatorKind::Tag::Band) {
        const double eps = kind.eps;
        double sum = 0.0;
        long count = 0;
        double min_grad = std::numeric_limits<double>::infinity();
        const double vol = grid.cell_volume();
        sweep_cells(grid, [&](const Vec& x) {
            double v = F.value(x);
            if (v < c - eps || v > c + eps) return;
            DerivBundle b = deriv_bundle(F, x);
            sum += integrand_at(F, g, x, &b) * b.grad_norm * vol;
            min_grad = std::min(min_grad, b.grad_norm);
            ++count;
        });
        if (count == 0)
            throw NumericalError("band estimator: no grid cells fall in the level window "
                                 "(eps too small for the grid, or level not bracketed)");
        rep.value = sum / (2.0 * eps);
        rep.diagnostics.band_cell_count = count;
        rep.diagnostics.min_grad_on_mesh = min_grad;
        return rep;
    }

    // Tube
    const double eps = kind.eps;
    LevelMesh m = extract_level_mesh(F, c, grid);
    require(!m.vertices.empty(), "level " + std::to_string(c) + " not bracketed on grid");
    MeshDistance dist(m);
    const double vol = grid.cell_volume();
    const double reject = eps + grid.min_step() * std::sqrt(double(grid.dim()));
    Vec lo = m.bbox_lower().array() - reject;
    Vec hi = m.bbox_upper().array() + reject;
    double sum = 0.0;
    long count = 0;
    sweep_cells(grid, [&](const Vec& x) {
        for (int a = 0; a < grid.dim(); ++a)
            if (x(a) < lo(a) || x(a) > hi(a)) return;
        if (!dist.within(x, eps)) return;
        sum += integrand_at(F, g, x, nullptr) * vol;
        ++count;
    });
    if (count == 0)
        throw NumericalError("tube estimator: eps smaller than the grid can resolve");
    rep.value = sum / (2.0 * eps);
    rep.diagnostics.band_cell_count = count;
    rep.diagnostics.mesh_measure = m.total_measure();
    double min_grad = std::numeric_limits<double>::infinity();
    for (double gn : m.vertex_gradnorm) min_grad = std::min(min_grad, gn);
    rep.diagnostics.min_grad_on_mesh = min_grad;
    return rep;
}

double variance_hat(const DensityField& F, const Integrand& g, double c,
                    double tau, const GridSpec& grid, const KernelSpec& kernel) {
    require(tau >= 0, "tau must be nonnegative");
    require(kernel.dim == F.dim(), "kernel / field dimension mismatch");
    const double fd_step = grid.min_step() / 4.0;

    long degenerate = 0, total = 0;
    auto wg2 = [&](const Vec& x) {
        DerivBundle b = deriv_bundle(F, x);
        ++total;
        if (b.degenerate) {
            ++degenerate;
            return 0.0;
        }
        double gv;
        Vec gg(x.size());
        if (g.is_expr()) {
            gv = g.expr->eval(b);
            for (int a = 0; a < x.size(); ++a) {
                Vec xp = x, xm = x;
                xp(a) += fd_step;
                xm(a) -= fd_step;
                gg(a) = (g.expr->eval(deriv_bundle(F, xp)) -
                         g.expr->eval(deriv_bundle(F, xm))) / (2.0 * fd_step);
            }
        } else {
            gv = g.func(x);
            if (g.grad) {
                gg = g.grad(x);
            } else {
                for (int a = 0; a < x.size(); ++a) {
                    Vec xp = x, xm = x;
                    xp(a) += fd_step;
                    xm(a) -= fd_step;
                    gg(a) = (g.func(xp) - g.func(xm)) / (2.0 * fd_step);
                }
            }
        }
        double w = weight_wg(b, gv, gg);
        return w * w;
    };

    // tau is a level half-width; anything past c/2 would leak into far tails
    double tau_eff = std::min(tau, 0.5 * c);
    EstimatorKind kind = tau_eff > 0 ? EstimatorKind::band(tau_eff) : EstimatorKind::plugin();
    double lam = estimate(F, Integrand::known(wg2), c, kind, grid).value;

    if (total > 0 && degenerate * 100 > total)
        throw NumericalError("variance estimate: degenerate gradient at " +
                             std::to_string(degenerate) + " of " + std::to_string(total) +
                             " quadrature points");
    return c * roughness_RK(kernel) * lam;
}

EstimateReport confidence_interval(EstimateReport rep, double sigma2, double alpha,
                                   double kernel_h) {
    require(sigma2 > 0, "variance estimate must be positive");
    require(alpha > 0 && alpha < 1, "alpha must lie in (0,1)");
    require(rep.n > 0, "confidence interval needs a sample-backed estimate");
    require(kernel_h > 0, "bandwidth must be positive");
    double z = inverse_normal_cdf(1.0 - 0.5 * alpha);
    double se = std::sqrt(sigma2) / std::sqrt(static_cast<double>(rep.n) * kernel_h);
    rep.std_err = se;
    rep.ci = std::make_pair(rep.value - z * se, rep.value + z * se);
    return rep;
}

EulerReport euler_characteristic(const DensityField& F, double c, EulerMethod method,
                                 const GridSpec& grid) {
    require(F.dim() == 3, "Euler characteristic estimators require d = 3 (odd d)");
    const double s_d = 1.0 / (2.0 * M_PI);  // s_3
    EulerReport out;

    switch (method.tag) {
        case EulerMethod::Tag::PluginGB: {
            auto rep = estimate(F, Integrand::phi(PhiExpr::named(PhiExpr::Builtin::GaussCurvature)),
                                c, EstimatorKind::plugin(), grid);
            out.raw = s_d * rep.value;
            break;
        }
        case EulerMethod::Tag::BandGB: {
            require(method.eps > 0, "band half-width must be positive");
            auto rep = estimate(F, Integrand::phi(PhiExpr::named(PhiExpr::Builtin::GaussCurvature)),
                                c, EstimatorKind::band(method.eps), grid);
            out.raw = s_d * rep.value;
            break;
        }
        case EulerMethod::Tag::ParallelGB: {
            const double eps = method.eps;
            require(eps > 0, "tube half-width must be positive");
            LevelMesh m = extract_level_mesh(F, c, grid);
            require(!m.vertices.empty(), "level not bracketed on grid");
            MeshDistance dist(m);
            const double vol = grid.cell_volume();
            const double reject = eps + grid.min_step() * std::sqrt(3.0);
            Vec lo = m.bbox_lower().array() - reject;
            Vec hi = m.bbox_upper().array() + reject;
            double sum = 0.0;
            sweep_cells(grid, [&](const Vec& x) {
                for (int a = 0; a < 3; ++a)
                    if (x(a) < lo(a) || x(a) > hi(a)) return;
                if (!dist.within(x, eps)) return;
                Vec foot;
                double dd = dist.distance_closest(x, foot);
                // offset from the surface along the outward normal: positive
                // where the field has dropped below the level
                double offset = (F.value(x) < c ? 1.0 : -1.0) * dd;
                CurvatureBundle cb = curvature_bundle(deriv_bundle(F, foot));
                sum += parallel_curvature(cb.principal, offset).gauss_sharp * vol;
            });
            out.raw = s_d * sum / (2.0 * eps);
            break;
        }
        case EulerMethod::Tag::Combinatorial: {
            LevelMesh m = extract_level_mesh(F, c, grid);
            require(!m.vertices.empty(), "level not bracketed on grid");
            out.raw = static_cast<double>(mesh_euler_characteristic(m).chi);
            break;
        }
    }
    out.snapped = static_cast<int>(std::lround(out.raw));
    return out;
}

Vec minkowski_functionals(const DensityField& F, double c, const GridSpec& grid) {
    grid.validate();
    const int d = F.dim();
    Vec V = Vec::Zero(d + 1);
    const double vol = grid.cell_volume();
    double v0 = 0.0;
    sweep_cells(grid, [&](const Vec& x) {
        if (F.value(x) >= c) v0 += vol;
    });
    V(0) = v0;

    // one mesh pass reused for all curvature orders
    LevelMesh m = extract_level_mesh(F, c, grid);
    require(!m.vertices.empty(), "level not bracketed on grid");
    Mat fj(m.vertices.size(), d);
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        CurvatureBundle cb = curvature_bundle(deriv_bundle(F, m.vertices[i]));
        fj.row(i) = cb.Fj.transpose();
    }
    const int nv = d == 2 ? 2 : 3;
    for (int j = 1; j <= d; ++j) {
        double total = 0.0;
        for (std::size_t cidx = 0; cidx < m.cells.size(); ++cidx) {
            double avg = 0.0;
            for (int a = 0; a < nv; ++a) avg += fj(m.cells[cidx][a], j - 1);
            total += m.cell_measures[cidx] * avg / nv;
        }
        V(j) = total / (ball_volume(j) * binomial(d, j));
    }
    return V;
}

double willmore_energy(const DensityField& F, double c, const GridSpec& grid) {
    return estimate(F, Integrand::phi(PhiExpr::named(PhiExpr::Builtin::Willmore)), c,
                    EstimatorKind::plugin(), grid).value;
}

double ustat_integrand_estimate(const KdeField& F,
                                const std::function<double(const Vec&)>& phi_tilde,
                                int beta1, int beta2, const LevelMesh& ref_mesh,
                                std::uint64_t seed, int max_pairs) {
    const int d = F.dim();
    const long n = F.effective_n();
    require(n >= 3, "pair-averaged integrand estimate needs n >= 3");
    const int nvech = d * (d + 1) / 2;
    require(beta1 >= 0 && beta1 < nvech && beta2 >= 0 && beta2 < nvech,
            "second-derivative component index out of range");
    // vech index -> matrix entry (lower triangle, column-major)
    auto vech_entry = [&](int idx) {
        int col = 0, base = 0;
        while (idx >= base + (d - col)) {
            base += d - col;
            ++col;
        }
        return std::pair<int, int>{col + (idx - base), col};
    };
    auto [r1, c1] = vech_entry(beta1);
    auto [r2, c2] = vech_entry(beta2);

    const double h = F.bandwidth();
    const Mat& X = F.sample().coords;
    const double norm = static_cast<double>(n) * (n - 1.0) * std::pow(h, 2.0 * (d + 2));

    std::vector<int> nb;
    std::vector<Vec> grad_term;  // per-neighbor gradient contribution at x
    std::vector<double> k1, k2;

    auto ghat = [&](const Vec& x) {
        F.neighbors(x, nb);
        const int m = static_cast<int>(nb.size());
        if (m < 2) return 0.0;
        grad_term.assign(m, Vec());
        k1.assign(m, 0.0);
        k2.assign(m, 0.0);
        Vec gsum = Vec::Zero(d);
        const double gscale = 1.0 / std::pow(h, d + 1);
        for (int a = 0; a < m; ++a) {
            Vec u = (x - X.row(nb[a]).transpose()) / h;
            grad_term[a] = gscale * eval_kernel_grad(F.kernel(), u);
            gsum += grad_term[a];
            k1[a] = eval_kernel_hess_entry(F.kernel(), u, r1, c1);
            k2[a] = eval_kernel_hess_entry(F.kernel(), u, r2, c2);
        }
        const long npairs = static_cast<long>(m) * (m - 1);
        double acc = 0.0;
        auto term = [&](int a, int b) {
            Vec g2 = (gsum - grad_term[a] - grad_term[b]) / static_cast<double>(n - 2);
            return phi_tilde(g2) * k1[a] * k2[b];
        };
        if (npairs <= max_pairs) {
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    if (a != b) acc += term(a, b);
        } else {
            // seeded subsample of ordered pairs; scale back up to the full sum
            std::uint64_t st = seed;
            for (int ax = 0; ax < d; ++ax) {
                std::uint64_t bits;
                double v = x(ax);
                std::memcpy(&bits, &v, sizeof bits);
                st ^= splitmix64(st) ^ bits;
            }
            std::mt19937_64 rng(splitmix64(st));
            std::uniform_int_distribution<int> pick(0, m - 1);
            double sub = 0.0;
            for (int it = 0; it < max_pairs; ++it) {
                int a = pick(rng), b = pick(rng);
                while (b == a) b = pick(rng);
                sub += term(a, b);
            }
            acc = sub * static_cast<double>(npairs) / max_pairs;
        }
        return acc / norm;
    };

    return mesh_integral(ref_mesh, ghat);
}

namespace {

// d/d(bundle component) of phi by central differences; l = 1 perturbs the
// gradient, l = 2 perturbs vech(hess) (rebuilding the symmetric Hessian).
Vec phi_partials(const PhiExpr& expr, const DerivBundle& b, int l, double step) {
    const int d = static_cast<int>(b.grad.size());
    const int ncomp = l == 1 ? d : d * (d + 1) / 2;
    Vec out(ncomp);
    for (int i = 0; i < ncomp; ++i) {
        DerivBundle bp = b, bm = b;
        if (l == 1) {
            bp.grad(i) += step;
            bm.grad(i) -= step;
            bp.grad_norm = bp.grad.norm();
            bm.grad_norm = bm.grad.norm();
        } else {
            bp.hess_vech(i) += step;
            bm.hess_vech(i) -= step;
            bp.hess = unvech_lower(bp.hess_vech, d);
            bm.hess = unvech_lower(bm.hess_vech, d);
        }
        out(i) = (expr.eval(bp) - expr.eval(bm)) / (2.0 * step);
    }
    return out;
}

}  // namespace

double variance_hat_unknown(const DensityField& F, const PhiExpr& expr, double c,
                            const GridSpec& grid, const KernelSpec& kernel, int l) {
    require(l == 1 || l == 2, "derivative order l must be 1 or 2");
    const int d = F.dim();
    require(kernel.dim == d, "kernel / field dimension mismatch");
    {
        // a phi with no derivative dependence has nothing to propagate
        PhiExpr probe = expr;
        bool has_deps = probe.uses_second_derivatives();
        if (!has_deps) {
            // check gradient dependence numerically at a generic bundle
            DerivBundle b;
            b.grad = Vec::Constant(d, 0.3);
            b.grad_norm = b.grad.norm();
            b.hess = Mat::Identity(d, d) * 0.1;
            b.hess_vech = vech_lower(b.hess);
            b.value = c;
            Vec p = phi_partials(expr, b, 1, 1e-5);
            require(p.norm() > 0, "integrand expression uses no density derivatives");
        }
        if (l == 2 && !expr.uses_second_derivatives()) return 0.0;
    }

    // slice integrals of the radial profile derivatives at offset t
    std::vector<double> qn, qw;
    gauss_legendre(64, qn, qw);
    const double sigma = slice_sphere_measure(d);
    auto radial = [&](double t, int which, int rho_pow) {
        // int_0^{sqrt(1-t^2)} f(t^2 + rho^2) rho^{rho_pow} drho
        double rmax = std::sqrt(std::max(0.0, 1.0 - t * t));
        if (rmax <= 0) return 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < qn.size(); ++i) {
            double rho = 0.5 * rmax * (qn[i] + 1.0);
            double tt = t * t + rho * rho;
            double fv = which == 1 ? kernel.profile_d1(tt) : kernel.profile_d2(tt);
            acc += qw[i] * fv * std::pow(rho, rho_pow) * 0.5 * rmax;
        }
        return acc;
    };

    std::vector<double> tn, tw;
    gauss_legendre(96, tn, tw);
    const double fd = 1e-6;

    LevelMesh mesh = extract_level_mesh(F, c, grid);
    require(!mesh.vertices.empty(), "level not bracketed on grid");

    auto m_hat = [&](const Vec& x) {
        DerivBundle b = deriv_bundle(F, x);
        if (b.degenerate)
            throw NumericalError("variance estimate: degenerate gradient on the mesh");
        Vec N = b.grad / b.grad_norm;
        Vec dphi = phi_partials(expr, b, l, fd);
        double acc = 0.0;
        for (std::size_t i = 0; i < tn.size(); ++i) {
            // t = sin(theta) removes the sqrt kink at |t| = 1
            double theta = 0.5 * M_PI * tn[i];
            double t = std::sin(theta), jac = 0.5 * M_PI * std::cos(theta);
            double inner;
            if (l == 1) {
                // slice integral of grad K: only the normal component survives
                inner = dphi.dot(N) * 2.0 * t * sigma * radial(t, 1, d - 2);
            } else {
                double j0 = radial(t, 1, d - 2);
                double j2a = radial(t, 2, d - 2);
                double j2b = radial(t, 2, d);
                Mat M2 = 2.0 * sigma * j0 * Mat::Identity(d, d) +
                         4.0 * (t * t * sigma * j2a * (N * N.transpose()) +
                                sigma / (d - 1.0) * j2b *
                                    (Mat::Identity(d, d) - N * N.transpose()));
                inner = dphi.dot(vech_lower(M2));
            }
            acc += tw[i] * jac * inner * inner;
        }
        return acc;
    };

    return c * mesh_integral(mesh, m_hat);
}

BandwidthSelection bandwidth_opt(const DensityField& pilot, double c,
                                 const GridSpec& grid, const KernelSpec& kernel,
                                 long n) {
    require(kernel.order == 2, "bandwidth rule assumes a second-order kernel");
    require(n >= 2, "sample size must be at least 2");
    const int d = pilot.dim();
    require(kernel.dim == d, "kernel / field dimension mismatch");
    const double rk2 = kernel_square_integral(kernel);
    const double m2 = kernel_second_moment_scalar(kernel);

    LevelMesh mesh = extract_level_mesh(pilot, c, grid);
    require(!mesh.vertices.empty(), "level not bracketed on grid");

    double A = 0.0, B = 0.0;
    std::vector<double> va(mesh.vertices.size()), vb(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        DerivBundle b = deriv_bundle(pilot, mesh.vertices[i]);
        if (b.degenerate)
            throw NumericalError("bandwidth rule: degenerate gradient on the mesh");
        double bias = 0.5 * m2 * b.hess.trace();
        va[i] = c * rk2 / b.grad_norm;
        vb[i] = bias * bias / b.grad_norm;
    }
    const int nv = d == 2 ? 2 : 3;
    for (std::size_t cidx = 0; cidx < mesh.cells.size(); ++cidx) {
        double aavg = 0.0, bavg = 0.0;
        for (int a = 0; a < nv; ++a) {
            aavg += va[mesh.cells[cidx][a]];
            bavg += vb[mesh.cells[cidx][a]];
        }
        A += mesh.cell_measures[cidx] * aavg / nv;
        B += mesh.cell_measures[cidx] * bavg / nv;
    }
    if (B <= 0)
        throw NumericalError("bandwidth rule: bias term vanishes on the mesh "
                             "(flat Hessian everywhere)");
    BandwidthSelection sel;
    sel.A = A;
    sel.B = B;
    sel.h_opt = std::pow(d * A / (4.0 * B * static_cast<double>(n)), 1.0 / (d + 4.0));
    return sel;
}

}  // namespace lsi
