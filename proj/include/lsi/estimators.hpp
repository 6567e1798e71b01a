#pragma once

#include <optional>

#include "lsi/phi_expr.hpp"
#include "lsi/surface.hpp"

namespace lsi {

/// Plugin integrates over the extracted level mesh (the eps == 0 convention).
/// Band averages surface integrals over the level window [c-eps, c+eps] as a
/// gradient-weighted volume integral; Tube averages g over the set of points
/// within distance eps of the mesh.  eps > 0 for Band/Tube.
struct EstimatorKind {
    enum class Tag { Plugin, Band, Tube };
    Tag tag = Tag::Plugin;
    double eps = 0.0;

    static EstimatorKind plugin() { return {Tag::Plugin, 0.0}; }
    static EstimatorKind band(double eps) { return {Tag::Band, eps}; }
    static EstimatorKind tube(double eps) { return {Tag::Tube, eps}; }
    const char* name() const {
        switch (tag) {
            case Tag::Plugin: return "plugin";
            case Tag::Band: return "band";
            default: return "tube";
        }
    }
};

///// Surface integrand: either a user function g (with optional gradient), or
/// a composition of the field's own derivatives evaluated pointwise.
struct Integrand {
    std::function<double(const Vec&)> func;
    std::function<Vec(const Vec&)> grad;  // may be empty
    std::optional<PhiExpr> expr;

    static Integrand known(std::function<double(const Vec&)> f,
                           std::function<Vec(const Vec&)> g = {}) {
        Integrand out;
        out.func = std::move(f);
        out.grad = std::move(g);
        return out;
    }
    static Integrand unity() {
        Integrand out;
        out.func = [](const Vec&) { return 1.0; };
        out.grad = [](const Vec& x) { return Vec(Vec::Zero(x.size())); };
        return out;
    }
    static Integrand phi(PhiExpr e) {
        Integrand out;
        out.expr = std::move(e);
        return out;
    }
    bool is_expr() const { return expr.has_value(); }
    double eval(const DensityField& F, const Vec& x) const {
        return is_expr() ? expr->eval(deriv_bundle(F, x)) : func(x);
    }
};

struct EstimateDiagnostics {
    double mesh_measure = 0.0;
    double min_grad_on_mesh = 0.0;
    int grid_res = 0;
    long band_cell_count = 0;
};

struct EstimateReport {
    EstimatorKind kind;
    double value = 0.0;
    double level = 0.0;
    double bandwidth = 0.0;  // 0 for analytic fields
    long n = 0;              // 0 for analytic fields
    std::optional<double> std_err;
    std::optional<std::pair<double, double>> ci;
    EstimateDiagnostics diagnostics;
};

EstimateReport estimate(const DensityField& F, const Integrand& g, double c,
                        EstimatorKind kind, const GridSpec& grid);

// Context-driven eps defaults; both overridable at the call site.
double default_band_eps(const DensityField& F, double c, const GridSpec& grid);
double default_tube_eps(const GridSpec& grid);

/// Asymptotic-variance estimate sigma^2 = c R(K) lambda_tau(F, w_g^2), with
/// w_g built from the field's own normal and mean curvature.  tau is a level
/// half-width (density units); it is clamped to c/2, and tau == 0 integrates
/// over the extracted mesh directly.  For expression integrands grad g falls
/// back to central differences with step = grid step / 4.
double variance_hat(const DensityField& F, const Integrand& g, double c,
                    double tau, const GridSpec& grid, const KernelSpec& kernel);

// ci = value -/+ z_{alpha/2} sigma / sqrt(n h); needs a KDE-backed report.
EstimateReport confidence_interval(EstimateReport rep, double sigma2,
                                   double alpha, double kernel_h);

struct EulerMethod {
    enum class Tag { PluginGB, BandGB, ParallelGB, Combinatorial };
    Tag tag = Tag::PluginGB;
    double eps = 0.0;  // BandGB / ParallelGB window

    static EulerMethod plugin_gb() { return {Tag::PluginGB, 0.0}; }
    static EulerMethod band_gb(double eps) { return {Tag::BandGB, eps}; }
    static EulerMethod parallel_gb(double eps) { return {Tag::ParallelGB, eps}; }
    static EulerMethod combinatorial() { return {Tag::Combinatorial, 0.0}; }
};

struct EulerReport {
    double raw = 0.0;
    int snapped = 0;  // nearest integer; |raw - snapped| is the quality signal
};

// Gauss-Bonnet estimate of the Euler characteristic; d = 3 only.
EulerReport euler_characteristic(const DensityField& F, double c,
                                 EulerMethod method, const GridSpec& grid);

// V_0 (super-level-set volume) through V_d; curvature integrals normalized
// with ball-volume constants omega_j = pi^{j/2} / Gamma(j/2 + 1).
Vec minkowski_functionals(const DensityField& F, double c, const GridSpec& grid);

double willmore_energy(const DensityField& F, double c, const GridSpec& grid);

/// Pair-averaged (U-statistic, Q = 2) estimate of lambda(f, g) where g is a
/// product of two second-derivative components weighted by phi_tilde of the
/// leave-two-out KDE gradient.  beta1/beta2 index vech(hess) components.
/// The integration mesh comes from a reference field (known-surface regime).
/// Ordered neighbor pairs are subsampled to max_pairs per quadrature point.
double ustat_integrand_estimate(const KdeField& F,
                                const std::function<double(const Vec&)>& phi_tilde,
                                int beta1, int beta2, const LevelMesh& ref_mesh,
                                std::uint64_t seed, int max_pairs = 200);

/// Variance of the plug-in lambda(F, phi(d_F)) contributed by the order-l
///// derivative estimate (l = 1 gradient, l = 2 Hessian): c times the mesh
/// integral of the squared kernel-slice functional paired with grad_l phi.
double variance_hat_unknown(const DensityField& F, const PhiExpr& expr, double c,
                            const GridSpec& grid, const KernelSpec& kernel, int l);

struct BandwidthSelection {
    double h_opt = 0.0;
    double A = 0.0;  // variance-term surface integral
    double B = 0.0;  // squared-bias-term surface integral
    // plug-in risk proxy at bandwidth h for sample size n
    double risk(double h, long n, int d) const {
        return h * h * h * h * B + A / (static_cast<double>(n) * std::pow(h, d));
    }
};

// h_opt = [d A / (4 B n)]^{1/(d+4)} from a pilot field; order-2 kernel only.
BandwidthSelection bandwidth_opt(const DensityField& pilot, double c,
                                 const GridSpec& grid, const KernelSpec& kernel,
                                 long n);

}  // namespace lsi
