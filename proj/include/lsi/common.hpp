#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Validation failures (bad arguments, malformed config).
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical failures at runtime (level not bracketed, degenerate
// gradient, focal point, empty band, ...).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

// Gauss-Legendre nodes/weights on [-1,1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// splitmix64 step; used for deterministic seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Inverse standard normal CDF, |error| < 1e-8 after one Halley step.
double inverse_normal_cdf(double p);

}  // namespace lsi
