#pragma once

#include <cmath>

#include "lsi/common.hpp"

namespace lsi {

/// Compactly supported, spherically symmetric kernel of even order nu.
///
/// K(u) = norm_const * p(t) * (1-t)^s with t = |u|^2, supported on the
/// closed unit ball. p is the degree-(nu/2-1) polynomial that kills the
/// even radial moments 2,...,nu-2; the (1-t)^s factor (s>=5) makes K at
/// least C^4 across the support boundary.
struct KernelSpec {
    int dim = 2;
    int order = 2;          // even, >= 2
    int smoothness_exp = 5; // s
    std::vector<double> radial_coeffs;  // p(t), p(0)=1
    double norm_const = 0.0;

    // q(t) = norm_const * p(t)*(1-t)^s and its first two derivatives,
    // expanded once at construction.
    std::vector<double> q, dq, ddq;

    double profile(double t) const;    // norm_const * p(t)(1-t)^s on [0,1]
    double profile_d1(double t) const;
    double profile_d2(double t) const;
};

KernelSpec make_kernel(int d, int nu, int s);

double eval_kernel(const KernelSpec& k, const Vec& u);
Vec eval_kernel_grad(const KernelSpec& k, const Vec& u);
Mat eval_kernel_hess(const KernelSpec& k, const Vec& u);

// Second partial d^2K/du_a du_b; cheap single-entry version of the Hessian.
double eval_kernel_hess_entry(const KernelSpec& k, const Vec& u, int a, int b);

// Max-norm of the l-th moment tensor, by tensor-product Gauss quadrature.
double kernel_moment(const KernelSpec& k, int l);

// R(K) = int_R ( int_{hyperplane at offset t} K dH )^2 dt.
double roughness_RK(const KernelSpec& k);

// int K(u)^2 du (used by the plug-in bandwidth rule).
double kernel_square_integral(const KernelSpec& k);

// m2 with int y y^T K(y) dy = m2 * I (second-order kernels).
double kernel_second_moment_scalar(const KernelSpec& k);

// Per-axis standard deviation of the kernel viewed as a density (order-2
// kernels).  Bandwidth rules quoted in sd units convert to this family's
// support-radius scale via h_support = h_sd / kernel_axis_sd(k).
inline double kernel_axis_sd(const KernelSpec& k) {
    return std::sqrt(kernel_second_moment_scalar(k));
}

// Integral of K over the affine hyperplane at signed offset t from the
// center (the slice integral whose square integrates to R(K)).
double kernel_slice_integral(const KernelSpec& k, double t);

}  // namespace lsi
