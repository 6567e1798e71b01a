#pragma once

#include <array>
#include <memory>

#include "lsi/kernels.hpp"

namespace lsi {

struct SamplePoints {
    Mat coords;  // n x d
    int n() const { return static_cast<int>(coords.rows()); }
    int dim() const { return static_cast<int>(coords.cols()); }
};

SamplePoints read_samples_csv(const std::string& path);
SamplePoints read_samples_ndjson(const std::string& path);
SamplePoints read_samples(const std::string& path);  // dispatch on extension
void write_samples_csv(const SamplePoints& s, const std::string& path);
void write_samples_ndjson(const SamplePoints& s, const std::string& path);

/// f, grad f, hess f at a point, plus the half-vectorized Hessian and
/// gradient norm (the derivative bundle d_f).
struct DerivBundle {
    double value = 0.0;
    Vec grad;
    Mat hess;
    Vec hess_vech;  // lower-triangular half-vectorization, length d(d+1)/2
    double grad_norm = 0.0;
    bool degenerate = false;  // grad_norm below the gradient floor
};

Vec vech_lower(const Mat& m);
Mat unvech_lower(const Vec& v, int d);

constexpr double kGradientFloor = 1e-8;

/// An evaluable scalar field with analytic gradient and Hessian.
class DensityField {
public:
    virtual ~DensityField() = default;
    virtual int dim() const = 0;
    virtual double value(const Vec& x) const = 0;
    virtual Vec gradient(const Vec& x) const = 0;
    virtual Mat hessian(const Vec& x) const = 0;
    // One-pass evaluation; the default composes the virtuals.
    virtual DerivBundle bundle(const Vec& x) const;
};

DerivBundle deriv_bundle(const DensityField& f, const Vec& x,
                         double gradient_floor = kGradientFloor);

/// Isotropic Gaussian N(mean, sigma^2 I).
class GaussianField final : public DensityField {
public:
    GaussianField(Vec mean, double sigma);
    int dim() const override { return static_cast<int>(mean_.size()); }
    double value(const Vec& x) const override;
    Vec gradient(const Vec& x) const override;
    Mat hessian(const Vec& x) const override;
    SamplePoints sample(int n, std::uint64_t seed) const;
    const Vec& mean() const { return mean_; }
    double sigma() const { return sigma_; }
    // Radius of the level-c sphere about the mean (standard case sigma=1).
    double level_radius(double c) const;

private:
    Vec mean_;
    double sigma_;
    double norm_;
};

/// Mixture of isotropic Gaussians.
class GaussianMixtureField final : public DensityField {
public:
    GaussianMixtureField(std::vector<double> weights, std::vector<Vec> means,
                         std::vector<double> sigmas);
    int dim() const override { return static_cast<int>(means_[0].size()); }
    double value(const Vec& x) const override;
    Vec gradient(const Vec& x) const override;
    Mat hessian(const Vec& x) const override;
    SamplePoints sample(int n, std::uint64_t seed) const;

private:
    std::vector<double> weights_;
    std::vector<Vec> means_;
    std::vector<double> sigmas_;
    std::vector<double> norms_;
};

/// Product of 1-D Gaussians (diagonal covariance).
class ProductGaussianField final : public DensityField {
public:
    ProductGaussianField(Vec mean, Vec sigmas);
    int dim() const override { return static_cast<int>(mean_.size()); }
    double value(const Vec& x) const override;
    Vec gradient(const Vec& x) const override;
    Mat hessian(const Vec& x) const override;
    SamplePoints sample(int n, std::uint64_t seed) const;

private:
    Vec mean_, sigmas_;
    double norm_;
};

/// Kernel density estimate over a sample, with analytic derivatives.
/// Compact kernel support gives a bin-grid neighbor prefilter: only points
/// with |x - X_i| <= h contribute.
class KdeField final : public DensityField {
public:
    KdeField(std::shared_ptr<const SamplePoints> sample, double bandwidth,
             KernelSpec kernel, std::vector<int> excluded = {});
    int dim() const override { return sample_->dim(); }
    double value(const Vec& x) const override;
    Vec gradient(const Vec& x) const override;
    Mat hessian(const Vec& x) const override;
    DerivBundle bundle(const Vec& x) const override;

    double bandwidth() const { return h_; }
    const KernelSpec& kernel() const { return kernel_; }
    const SamplePoints& sample() const { return *sample_; }
    int effective_n() const { return n_eff_; }

    // Indices of sample points within bandwidth of x (excluded ones omitted).
    void neighbors(const Vec& x, std::vector<int>& out) const;
    bool is_excluded(int i) const { return excluded_flag_[i] != 0; }

    // KDE over the remaining points, renormalized.
    std::shared_ptr<KdeField> leave_out(const std::vector<int>& idx) const;

private:
    std::shared_ptr<const SamplePoints> sample_;
    double h_;
    KernelSpec kernel_;
    std::vector<char> excluded_flag_;
    int n_eff_;

    // uniform bin grid over the sample bounding box, cell size h;
    // point coordinates are packed contiguously per bin (CSR layout)
    Vec bin_lower_;
    std::array<int, 3> bin_res_{1, 1, 1};
    std::vector<int> bin_start_;   // size total_bins + 1
    std::vector<double> pts_;      // packed coords, row-major, grouped by bin
    std::vector<int> pt_id_;       // original sample index per packed point
    double inv_h_ = 1.0, norm_v_ = 1.0;
    void build_bins();
    template <class Fn>
    void scan(const Vec& x, Fn&& fn) const;
};

// Reference-rate default bandwidth: n^{-1/(d+4)} scaled by the average
// per-axis sample standard deviation.
double default_bandwidth(const SamplePoints& s);

}  // namespace lsi
