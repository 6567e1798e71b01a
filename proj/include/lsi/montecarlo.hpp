#pragma once

#include "lsi/estimators.hpp"

namespace lsi {

/// Replicated sampling study: draw n points from a known density, build the
/// KDE, run the configured estimators, and compare against a high-resolution
/// reference value computed from the analytic field.
struct McConfig {
    const DensityField* truth = nullptr;  // analytic reference field
    std::function<SamplePoints(int n, std::uint64_t seed)> sampler;
    double level = 0.0;
    Integrand integrand = Integrand::unity();
    std::vector<EstimatorKind> kinds = {EstimatorKind::plugin()};
    std::vector<int> n_list;
    // h = h_scale * n^{-h_power}; h_power == 0 makes the bandwidth fixed
    double h_scale = 1.0;
    double h_power = 0.0;
    int replicates = 1;
    std::uint64_t base_seed = 1;
    GridSpec grid;
    double alpha = 0.10;
    KernelSpec kernel;
    bool with_ci = false;
    double tau = -1.0;  // CI variance band half-width; < 0 means tau = h

    double bandwidth_for(int n) const {
        return h_scale * std::pow(static_cast<double>(n), -h_power);
    }
    void validate() const;
};

struct McReplicate {
    int n = 0;
    int kind_index = 0;
    int replicate = 0;
    std::uint64_t seed = 0;
    double value = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    bool has_ci = false;
    bool covered = false;
    bool ok = true;
    std::string fail_reason;
    double runtime_sec = 0.0;
};

struct McRow {
    int n = 0;
    int kind_index = 0;
    int replicates = 0;
    int failures = 0;
    double mean = 0.0;
    double variance = 0.0;
    double bias = 0.0;  // mean - truth
    double coverage = -1.0;  // -1 when no CIs were produced
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    double mean_runtime_sec = 0.0;
};

struct McResult {
    McConfig config;  // as run
    double truth_value = 0.0;
    double truth_refinement_delta = 0.0;  // |4x res - 2x res| reference gap
    std::vector<McReplicate> replicates;
    std::vector<McRow> rows;
};

McResult run_study(const McConfig& cfg);

struct RateFit {
    int kind_index = 0;
    double slope = 0.0;
    double intercept = 0.0;
    double theoretical_slope = 0.0;
};

// |mean error| vs n on log-log axes, per estimator kind; needs >= 3 sizes.
std::vector<RateFit> rate_report(const McResult& res);

// Exponent of the dominant error term in n when h = scale * n^{-a}:
// max of -1 + a(d+2) (derivative variance), -a*nu (bias), -(1-a)/2 (CLT).
double theoretical_rate_slope(int d, int nu, double a);

void write_study_csv(const McResult& res, const std::string& path);
void write_summary_csv(const McResult& res, const std::string& path);
void write_rate_csv(const McResult& res, const std::string& path);
// standardized-value histogram with a standard-normal overlay
void write_hist_svg(const McResult& res, int n, int kind_index, const std::string& path);

}  // namespace lsi
