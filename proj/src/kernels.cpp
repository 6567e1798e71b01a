#include "lsi/kernels.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace lsi {

void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    // Newton iteration on Legendre polynomials.
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double z1 = z;
            z = z1 - p0 / pp;
            if (std::abs(z - z1) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
}

double inverse_normal_cdf(double p) {
    require(p > 0.0 && p < 1.0, "inverse_normal_cdf: p must be in (0,1)");
    // Acklam's rational approximation, then one Halley refinement.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
    } else if (p <= phigh) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1);
    }
    // Halley refinement against the exact CDF via erfc.
    double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
    x = x - u / (1 + x * u / 2);
    return x;
}

namespace {

// Surface area of the unit sphere S^{m-1} in R^m.
double sphere_area(int m) {
    return 2.0 * std::pow(std::numbers::pi, m / 2.0) / std::tgamma(m / 2.0);
}

// int_{unit ball in R^d} (|u|^2)^j (1-|u|^2)^s du
//   = S_{d-1}/2 * Beta(j + d/2, s+1).
double ball_beta_moment(int d, int j, int s) {
    double lb = std::lgamma(j + d / 2.0) + std::lgamma(s + 1.0) -
                std::lgamma(j + d / 2.0 + s + 1.0);
    return sphere_area(d) / 2.0 * std::exp(lb);
}

std::vector<double> poly_derivative(const std::vector<double>& p) {
    std::vector<double> r;
    for (size_t i = 1; i < p.size(); ++i) r.push_back(p[i] * static_cast<double>(i));
    if (r.empty()) r.push_back(0.0);
    return r;
}

double poly_eval(const std::vector<double>& p, double t) {
    double v = 0.0;
    for (size_t i = p.size(); i-- > 0;) v = v * t + p[i];
    return v;
}

}  // namespace

double KernelSpec::profile(double t) const { return poly_eval(q, t); }
double KernelSpec::profile_d1(double t) const { return poly_eval(dq, t); }
double KernelSpec::profile_d2(double t) const { return poly_eval(ddq, t); }

KernelSpec make_kernel(int d, int nu, int s) {
    require(d >= 2, "make_kernel: d must be >= 2");
    require(nu >= 2 && nu % 2 == 0, "make_kernel: order must be even and >= 2");
    require(s >= 5, "make_kernel: smoothness exponent must be >= 5");

    KernelSpec k;
    k.dim = d;
    k.order = nu;
    k.smoothness_exp = s;

    // p(t) = 1 + a_1 t + ... + a_{m-1} t^{m-1}, m = nu/2, chosen so the
    // even moments 2,...,nu-2 vanish:  sum_i a_i M(i+m') = -M(m') for
    // m' = 1..m-1 with M(j) the beta-type radial moment above.
    int m = nu / 2;
    k.radial_coeffs.assign(m, 0.0);
    k.radial_coeffs[0] = 1.0;
    if (m > 1) {
        Mat A(m - 1, m - 1);
        Vec rhs(m - 1);
        for (int row = 1; row <= m - 1; ++row) {
            for (int col = 1; col <= m - 1; ++col)
                A(row - 1, col - 1) = ball_beta_moment(d, col + row, s);
            rhs(row - 1) = -ball_beta_moment(d, row, s);
        }
        Eigen::FullPivLU<Mat> lu(A);
        if (!lu.isInvertible())
            throw NumericalError("make_kernel: vanishing-moment system is singular");
        Vec a = lu.solve(rhs);
        for (int i = 1; i <= m - 1; ++i) k.radial_coeffs[i] = a(i - 1);
    }

    double mass = 0.0;
    for (int i = 0; i < m; ++i) mass += k.radial_coeffs[i] * ball_beta_moment(d, i, s);
    if (std::abs(mass) < 1e-300)
        throw NumericalError("make_kernel: degenerate normalization");
    k.norm_const = 1.0 / mass;

    // Expand q(t) = norm_const * p(t) * (1-t)^s.
    std::vector<double> onemt(s + 1, 0.0);
    onemt[0] = 1.0;
    for (int i = 0; i < s; ++i) {
        // multiply by (1 - t)
        for (int j = s; j >= 1; --j) onemt[j] = onemt[j] - onemt[j - 1];
        // note: in-place reverse convolution; onemt[0] stays 1
    }
    k.q.assign(m + s, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j <= s; ++j)
            k.q[i + j] += k.norm_const * k.radial_coeffs[i] * onemt[j];
    k.dq = poly_derivative(k.q);
    k.ddq = poly_derivative(k.dq);
    return k;
}

double eval_kernel(const KernelSpec& k, const Vec& u) {
    double t = u.squaredNorm();
    return t > 1.0 ? 0.0 : k.profile(t);
}

Vec eval_kernel_grad(const KernelSpec& k, const Vec& u) {
    double t = u.squaredNorm();
    if (t > 1.0) return Vec::Zero(u.size());
    return 2.0 * k.profile_d1(t) * u;
}

Mat eval_kernel_hess(const KernelSpec& k, const Vec& u) {
    double t = u.squaredNorm();
    int d = static_cast<int>(u.size());
    if (t > 1.0) return Mat::Zero(d, d);
    Mat h = 4.0 * k.profile_d2(t) * (u * u.transpose());
    h.diagonal().array() += 2.0 * k.profile_d1(t);
    return h;
}

double eval_kernel_hess_entry(const KernelSpec& k, const Vec& u, int a, int b) {
    double t = u.squaredNorm();
    if (t > 1.0) return 0.0;
    double v = 4.0 * k.profile_d2(t) * u(a) * u(b);
    if (a == b) v += 2.0 * k.profile_d1(t);
    return v;
}

double kernel_moment(const KernelSpec& k, int l) {
    require(l >= 0, "kernel_moment: l must be >= 0");
    int d = k.dim;
    const int nq = 64;
    std::vector<double> x, w;
    gauss_legendre(nq, x, w);

    // Enumerate all monomials u1^{i1}...ud^{id} with i1+...+id = l and take
    // the max |integral|.
    std::vector<std::vector<int>> monomials;
    std::vector<int> cur(d, 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == d - 1) {
            cur[pos] = left;
            monomials.push_back(cur);
            return;
        }
        for (int i = 0; i <= left; ++i) {
            cur[pos] = i;
            rec(pos + 1, left - i);
        }
    };
    rec(0, l);

    std::vector<double> acc(monomials.size(), 0.0);
    Vec u(d);
    std::vector<int> idx(d, 0);
    while (true) {
        double wt = 1.0;
        for (int a = 0; a < d; ++a) {
            u(a) = x[idx[a]];
            wt *= w[idx[a]];
        }
        double kv = eval_kernel(k, u);
        if (kv != 0.0) {
            for (size_t mi = 0; mi < monomials.size(); ++mi) {
                double mono = 1.0;
                for (int a = 0; a < d; ++a)
                    for (int p = 0; p < monomials[mi][a]; ++p) mono *= u(a);
                acc[mi] += wt * mono * kv;
            }
        }
        int a = 0;
        while (a < d && ++idx[a] == nq) idx[a++] = 0;
        if (a == d) break;
    }
    double mx = 0.0;
    for (double v : acc) mx = std::max(mx, std::abs(v));
    return mx;
}

double kernel_slice_integral(const KernelSpec& k, double t) {
    int d = k.dim;
    if (std::abs(t) >= 1.0) return 0.0;
    double a = std::sqrt(1.0 - t * t);
    const int nq = 64;
    static thread_local std::vector<double> x, w;
    if (x.size() != nq) gauss_legendre(nq, x, w);
    // sigma_{d-2}: counting measure factor 2 for d=2, circle 2*pi for d=3.
    double sigma = (d == 2) ? 2.0 : sphere_area(d - 1);
    double s = 0.0;
    for (int i = 0; i < nq; ++i) {
        double rho = 0.5 * a * (x[i] + 1.0);
        double wt = 0.5 * a * w[i];
        double val = k.profile(t * t + rho * rho);
        s += wt * val * std::pow(rho, d - 2);
    }
    return sigma * s;
}

double roughness_RK(const KernelSpec& k) {
    const int nq = 128;
    std::vector<double> x, w;
    gauss_legendre(nq, x, w);
    // Substitute t = sin(theta) so the integrand is smooth at t = +-1.
    double s = 0.0;
    for (int i = 0; i < nq; ++i) {
        double theta = 0.5 * std::numbers::pi * x[i];
        double t = std::sin(theta);
        double wt = 0.5 * std::numbers::pi * w[i] * std::cos(theta);
        double sl = kernel_slice_integral(k, t);
        s += wt * sl * sl;
    }
    return s;
}

double kernel_square_integral(const KernelSpec& k) {
    const int nq = 96;
    std::vector<double> x, w;
    gauss_legendre(nq, x, w);
    double s = 0.0;
    for (int i = 0; i < nq; ++i) {
        double r = 0.5 * (x[i] + 1.0);
        double wt = 0.5 * w[i];
        double v = k.profile(r * r);
        s += wt * v * v * std::pow(r, k.dim - 1);
    }
    return sphere_area(k.dim) * s;
}

double kernel_second_moment_scalar(const KernelSpec& k) {
    const int nq = 96;
    std::vector<double> x, w;
    gauss_legendre(nq, x, w);
    double s = 0.0;
    for (int i = 0; i < nq; ++i) {
        double r = 0.5 * (x[i] + 1.0);
        double wt = 0.5 * w[i];
        s += wt * r * r * k.profile(r * r) * std::pow(r, k.dim - 1);
    }
    return sphere_area(k.dim) * s / k.dim;
}

}  // namespace lsi
