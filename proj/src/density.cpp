#include "lsi/density.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace lsi {

Vec vech_lower(const Mat& m) {
    int d = static_cast<int>(m.rows());
    Vec v(d * (d + 1) / 2);
    int k = 0;
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) v(k++) = m(i, j);
    return v;
}

Mat unvech_lower(const Vec& v, int d) {
    Mat m(d, d);
    int k = 0;
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
            m(i, j) = v(k);
            m(j, i) = v(k);
            ++k;
        }
    return m;
}

DerivBundle DensityField::bundle(const Vec& x) const {
    DerivBundle b;
    b.value = value(x);
    b.grad = gradient(x);
    b.hess = hessian(x);
    b.hess_vech = vech_lower(b.hess);
    b.grad_norm = b.grad.norm();
    return b;
}

DerivBundle deriv_bundle(const DensityField& f, const Vec& x, double gradient_floor) {
    DerivBundle b = f.bundle(x);
    b.degenerate = b.grad_norm < gradient_floor;
    return b;
}

// ---------------------------------------------------------------- sampling IO

SamplePoints read_samples_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open sample file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        bool bad = false;
        while (std::getline(ss, tok, ',')) {
            try {
                row.push_back(std::stod(tok));
            } catch (...) {
                bad = true;
                break;
            }
        }
        if (bad) {
            if (first) { first = false; continue; }  // header line
            throw InvalidArgument("malformed CSV row: " + line);
        }
        first = false;
        if (!rows.empty() && row.size() != rows[0].size())
            throw InvalidArgument("inconsistent CSV column count");
        rows.push_back(std::move(row));
    }
    require(!rows.empty(), "empty sample file: " + path);
    SamplePoints s;
    s.coords.resize(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            s.coords(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    for (int i = 0; i < s.coords.size(); ++i)
        require(std::isfinite(s.coords.data()[i]), "non-finite sample coordinate");
    return s;
}

SamplePoints read_samples_ndjson(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open sample file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        require(j.contains("x"), "NDJSON row missing \"x\"");
        rows.push_back(j["x"].get<std::vector<double>>());
        if (rows.size() > 1 && rows.back().size() != rows[0].size())
            throw InvalidArgument("inconsistent NDJSON dimension");
    }
    require(!rows.empty(), "empty sample file: " + path);
    SamplePoints s;
    s.coords.resize(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            s.coords(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    return s;
}

SamplePoints read_samples(const std::string& path) {
    if (path.size() >= 7 && path.substr(path.size() - 7) == ".ndjson")
        return read_samples_ndjson(path);
    if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl")
        return read_samples_ndjson(path);
    return read_samples_csv(path);
}

void write_samples_csv(const SamplePoints& s, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot write sample file: " + path);
    out.precision(17);
    for (int i = 0; i < s.n(); ++i) {
        for (int j = 0; j < s.dim(); ++j) {
            if (j) out << ',';
            out << s.coords(i, j);
        }
        out << '\n';
    }
}

void write_samples_ndjson(const SamplePoints& s, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot write sample file: " + path);
    out.precision(17);
    for (int i = 0; i < s.n(); ++i) {
        out << "{\"x\":[";
        for (int j = 0; j < s.dim(); ++j) {
            if (j) out << ',';
            out << s.coords(i, j);
        }
        out << "]}\n";
    }
}

// ------------------------------------------------------------ analytic fields

namespace {

// Coarse quadrature check that an analytic density integrates to 1.
void check_mass(const DensityField& f, const Vec& lo, const Vec& hi) {
    int d = f.dim();
    int nq = (d == 2) ? 48 : 24;
    std::vector<double> x, w;
    gauss_legendre(nq, x, w);
    double total = 0.0;
    std::vector<int> idx(d, 0);
    Vec p(d);
    while (true) {
        double wt = 1.0;
        for (int a = 0; a < d; ++a) {
            double half = 0.5 * (hi(a) - lo(a));
            p(a) = lo(a) + half * (x[idx[a]] + 1.0);
            wt *= half * w[idx[a]];
        }
        total += wt * f.value(p);
        int a = 0;
        while (a < d && ++idx[a] == nq) idx[a++] = 0;
        if (a == d) break;
    }
    if (std::abs(total - 1.0) > 1e-3)
        throw NumericalError("analytic density does not integrate to 1 (got " +
                             std::to_string(total) + ")");
}

SamplePoints gaussian_draws(int n, int d, std::uint64_t seed,
                            const std::function<void(std::mt19937_64&, Vec&)>& draw) {
    SamplePoints s;
    s.coords.resize(n, d);
    std::mt19937_64 rng(seed);
    Vec p(d);
    for (int i = 0; i < n; ++i) {
        draw(rng, p);
        for (int j = 0; j < d; ++j) s.coords(i, j) = p(j);
    }
    return s;
}

// Deterministic standard normal via Box-Muller on the raw engine; avoids
// libstdc++-specific std::normal_distribution state.
double std_normal(std::mt19937_64& rng) {
    static constexpr double kTwoPi = 2.0 * std::numbers::pi;
    double u1 = (rng() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    double u2 = (rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace

GaussianField::GaussianField(Vec mean, double sigma) : mean_(std::move(mean)), sigma_(sigma) {
    require(sigma_ > 0.0, "GaussianField: sigma must be positive");
    require(mean_.size() >= 2, "GaussianField: d must be >= 2");
    norm_ = std::pow(2.0 * std::numbers::pi * sigma_ * sigma_, -dim() / 2.0);
    Vec lo = mean_.array() - 8.5 * sigma_;
    Vec hi = mean_.array() + 8.5 * sigma_;
    check_mass(*this, lo, hi);
}

double GaussianField::value(const Vec& x) const {
    return norm_ * std::exp(-(x - mean_).squaredNorm() / (2.0 * sigma_ * sigma_));
}

Vec GaussianField::gradient(const Vec& x) const {
    return -(x - mean_) / (sigma_ * sigma_) * value(x);
}

Mat GaussianField::hessian(const Vec& x) const {
    Vec z = (x - mean_) / (sigma_ * sigma_);
    Mat h = z * z.transpose();
    h.diagonal().array() -= 1.0 / (sigma_ * sigma_);
    return h * value(x);
}

double GaussianField::level_radius(double c) const {
    double t = -2.0 * sigma_ * sigma_ * std::log(c / norm_);
    require(t > 0.0, "level above the density maximum");
    return std::sqrt(t);
}

SamplePoints GaussianField::sample(int n, std::uint64_t seed) const {
    return gaussian_draws(n, dim(), seed, [this](std::mt19937_64& rng, Vec& p) {
        for (int j = 0; j < dim(); ++j) p(j) = mean_(j) + sigma_ * std_normal(rng);
    });
}

GaussianMixtureField::GaussianMixtureField(std::vector<double> weights,
                                           std::vector<Vec> means,
                                           std::vector<double> sigmas)
    : weights_(std::move(weights)), means_(std::move(means)), sigmas_(std::move(sigmas)) {
    require(!weights_.empty() && weights_.size() == means_.size() &&
                weights_.size() == sigmas_.size(),
            "GaussianMixtureField: component count mismatch");
    double wsum = 0.0;
    for (double w : weights_) {
        require(w > 0.0, "mixture weights must be positive");
        wsum += w;
    }
    for (double& w : weights_) w /= wsum;
    for (size_t i = 0; i < means_.size(); ++i) {
        require(means_[i].size() == means_[0].size(), "mixture dimension mismatch");
        require(sigmas_[i] > 0.0, "mixture sigma must be positive");
        norms_.push_back(std::pow(2.0 * std::numbers::pi * sigmas_[i] * sigmas_[i],
                                  -static_cast<double>(means_[0].size()) / 2.0));
    }
    Vec lo = means_[0], hi = means_[0];
    for (size_t i = 0; i < means_.size(); ++i) {
        lo = lo.cwiseMin(Vec(means_[i].array() - 8.5 * sigmas_[i]));
        hi = hi.cwiseMax(Vec(means_[i].array() + 8.5 * sigmas_[i]));
    }
    check_mass(*this, lo, hi);
}

double GaussianMixtureField::value(const Vec& x) const {
    double v = 0.0;
    for (size_t i = 0; i < weights_.size(); ++i)
        v += weights_[i] * norms_[i] *
             std::exp(-(x - means_[i]).squaredNorm() / (2.0 * sigmas_[i] * sigmas_[i]));
    return v;
}

Vec GaussianMixtureField::gradient(const Vec& x) const {
    Vec g = Vec::Zero(dim());
    for (size_t i = 0; i < weights_.size(); ++i) {
        double s2 = sigmas_[i] * sigmas_[i];
        double vi = weights_[i] * norms_[i] *
                    std::exp(-(x - means_[i]).squaredNorm() / (2.0 * s2));
        g -= (x - means_[i]) / s2 * vi;
    }
    return g;
}

Mat GaussianMixtureField::hessian(const Vec& x) const {
    Mat h = Mat::Zero(dim(), dim());
    for (size_t i = 0; i < weights_.size(); ++i) {
        double s2 = sigmas_[i] * sigmas_[i];
        double vi = weights_[i] * norms_[i] *
                    std::exp(-(x - means_[i]).squaredNorm() / (2.0 * s2));
        Vec z = (x - means_[i]) / s2;
        Mat hi = z * z.transpose();
        hi.diagonal().array() -= 1.0 / s2;
        h += hi * vi;
    }
    return h;
}

SamplePoints GaussianMixtureField::sample(int n, std::uint64_t seed) const {
    std::vector<double> cum(weights_.size());
    double acc = 0.0;
    for (size_t i = 0; i < weights_.size(); ++i) cum[i] = (acc += weights_[i]);
    return gaussian_draws(n, dim(), seed, [&](std::mt19937_64& rng, Vec& p) {
        double u = (rng() >> 11) * 0x1.0p-53;
        size_t comp = 0;
        while (comp + 1 < cum.size() && u > cum[comp]) ++comp;
        for (int j = 0; j < dim(); ++j)
            p(j) = means_[comp](j) + sigmas_[comp] * std_normal(rng);
    });
}

ProductGaussianField::ProductGaussianField(Vec mean, Vec sigmas)
    : mean_(std::move(mean)), sigmas_(std::move(sigmas)) {
    require(mean_.size() == sigmas_.size(), "ProductGaussianField: size mismatch");
    norm_ = 1.0;
    for (int j = 0; j < dim(); ++j) {
        require(sigmas_(j) > 0.0, "sigma must be positive");
        norm_ /= std::sqrt(2.0 * std::numbers::pi) * sigmas_(j);
    }
    Vec lo = mean_ - 8.5 * sigmas_;
    Vec hi = mean_ + 8.5 * sigmas_;
    check_mass(*this, lo, hi);
}

double ProductGaussianField::value(const Vec& x) const {
    double e = 0.0;
    for (int j = 0; j < dim(); ++j) {
        double z = (x(j) - mean_(j)) / sigmas_(j);
        e += z * z;
    }
    return norm_ * std::exp(-0.5 * e);
}

Vec ProductGaussianField::gradient(const Vec& x) const {
    double v = value(x);
    Vec g(dim());
    for (int j = 0; j < dim(); ++j)
        g(j) = -(x(j) - mean_(j)) / (sigmas_(j) * sigmas_(j)) * v;
    return g;
}

Mat ProductGaussianField::hessian(const Vec& x) const {
    double v = value(x);
    Vec z(dim());
    for (int j = 0; j < dim(); ++j) z(j) = (x(j) - mean_(j)) / (sigmas_(j) * sigmas_(j));
    Mat h = z * z.transpose();
    for (int j = 0; j < dim(); ++j) h(j, j) -= 1.0 / (sigmas_(j) * sigmas_(j));
    return h * v;
}

SamplePoints ProductGaussianField::sample(int n, std::uint64_t seed) const {
    return gaussian_draws(n, dim(), seed, [this](std::mt19937_64& rng, Vec& p) {
        for (int j = 0; j < dim(); ++j) p(j) = mean_(j) + sigmas_(j) * std_normal(rng);
    });
}

// --------------------------------------------------------------------- KDE

KdeField::KdeField(std::shared_ptr<const SamplePoints> sample, double bandwidth,
                   KernelSpec kernel, std::vector<int> excluded)
    : sample_(std::move(sample)), h_(bandwidth), kernel_(std::move(kernel)) {
    require(sample_ != nullptr && sample_->n() >= 1, "KDE needs at least one point");
    require(h_ > 0.0, "bandwidth must be positive");
    require(kernel_.dim == sample_->dim(), "kernel/sample dimension mismatch");
    require(sample_->dim() == 2 || sample_->dim() == 3, "KDE supports d in {2,3}");
    excluded_flag_.assign(sample_->n(), 0);
    for (int i : excluded) {
        require(i >= 0 && i < sample_->n(), "excluded index out of range");
        excluded_flag_[i] = 1;
    }
    n_eff_ = 0;
    for (char f : excluded_flag_) n_eff_ += (f == 0);
    require(n_eff_ >= 1, "all points excluded from KDE");
    build_bins();
}

void KdeField::build_bins() {
    int d = dim();
    Vec lo = sample_->coords.colwise().minCoeff();
    Vec hi = sample_->coords.colwise().maxCoeff();
    bin_lower_ = lo;
    long total = 1;
    for (int a = 0; a < d; ++a) {
        int r = std::max(1, static_cast<int>(std::floor((hi(a) - lo(a)) / h_)) + 1);
        r = std::min(r, 1024);
        bin_res_[a] = r;
        total *= r;
    }
    for (int a = d; a < 3; ++a) bin_res_[a] = 1;
    inv_h_ = 1.0 / h_;
    norm_v_ = 1.0 / (n_eff_ * std::pow(h_, d));

    auto bin_of = [&](int i) {
        int idx = 0;
        for (int a = 0; a < d; ++a) {
            int c = static_cast<int>(std::floor((sample_->coords(i, a) - lo(a)) * inv_h_));
            c = std::clamp(c, 0, bin_res_[a] - 1);
            idx = idx * bin_res_[a] + c;
        }
        // flatten with the padded z axis so 2d and 3d index identically
        for (int a = d; a < 3; ++a) idx *= bin_res_[a];
        return idx;
    };

    // CSR layout: counting pass, prefix sum, then scatter packed coords
    std::vector<int> count(static_cast<size_t>(total), 0);
    for (int i = 0; i < sample_->n(); ++i)
        if (!excluded_flag_[i]) ++count[bin_of(i)];
    bin_start_.assign(static_cast<size_t>(total) + 1, 0);
    for (long b = 0; b < total; ++b) bin_start_[b + 1] = bin_start_[b] + count[b];
    pts_.assign(static_cast<size_t>(bin_start_[total]) * d, 0.0);
    pt_id_.assign(static_cast<size_t>(bin_start_[total]), 0);
    std::vector<int> cursor(bin_start_.begin(), bin_start_.end() - 1);
    for (int i = 0; i < sample_->n(); ++i) {
        if (excluded_flag_[i]) continue;
        int at = cursor[bin_of(i)]++;
        pt_id_[at] = i;
        for (int a = 0; a < d; ++a) pts_[static_cast<size_t>(at) * d + a] = sample_->coords(i, a);
    }
}

// Visits every packed point within bandwidth of x; fn(packed_index, t, du)
// receives t = ||x - X_i||^2 / h^2 and du[a] = (x(a) - X_i(a)) / h.
template <class Fn>
void KdeField::scan(const Vec& x, Fn&& fn) const {
    const int d = dim();
    int c[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a)
        c[a] = static_cast<int>(std::floor((x(a) - bin_lower_(a)) * inv_h_));
    double xl[3] = {x(0), x(1), d == 3 ? x(2) : 0.0};
    int lo2 = (d == 3) ? c[2] - 1 : 0, hi2 = (d == 3) ? c[2] + 1 : 0;
    for (int i0 = std::max(0, c[0] - 1); i0 <= std::min(bin_res_[0] - 1, c[0] + 1); ++i0) {
        for (int i1 = std::max(0, c[1] - 1); i1 <= std::min(bin_res_[1] - 1, c[1] + 1); ++i1) {
            for (int i2 = std::max(0, lo2); i2 <= std::min(bin_res_[2] - 1, hi2); ++i2) {
                int idx = (i0 * bin_res_[1] + i1) * bin_res_[2] + i2;
                const double* p = pts_.data() + static_cast<size_t>(bin_start_[idx]) * d;
                const double* end = pts_.data() + static_cast<size_t>(bin_start_[idx + 1]) * d;
                for (int at = bin_start_[idx]; p != end; p += d, ++at) {
                    double du[3] = {0.0, 0.0, 0.0};
                    double t = 0.0;
                    for (int a = 0; a < d; ++a) {
                        du[a] = (xl[a] - p[a]) * inv_h_;
                        t += du[a] * du[a];
                    }
                    if (t <= 1.0) fn(at, t, du);
                }
            }
        }
    }
}

void KdeField::neighbors(const Vec& x, std::vector<int>& out) const {
    out.clear();
    scan(x, [&](int at, double, const double*) { out.push_back(pt_id_[at]); });
}

double KdeField::value(const Vec& x) const {
    double s = 0.0;
    scan(x, [&](int, double t, const double*) { s += kernel_.profile(t); });
    return s * norm_v_;
}

Vec KdeField::gradient(const Vec& x) const {
    int d = dim();
    double g[3] = {0.0, 0.0, 0.0};
    scan(x, [&](int, double t, const double* du) {
        double w = 2.0 * kernel_.profile_d1(t);
        for (int a = 0; a < d; ++a) g[a] += w * du[a];
    });
    Vec out(d);
    for (int a = 0; a < d; ++a) out(a) = g[a] * norm_v_ * inv_h_;
    return out;
}

Mat KdeField::hessian(const Vec& x) const {
    int d = dim();
    double hm[9] = {0};
    double diag = 0.0;
    scan(x, [&](int, double t, const double* du) {
        double w2 = 4.0 * kernel_.profile_d2(t);
        diag += 2.0 * kernel_.profile_d1(t);
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) hm[a * 3 + b] += w2 * du[a] * du[b];
    });
    Mat out(d, d);
    double nh2 = norm_v_ * inv_h_ * inv_h_;
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b)
            out(a, b) = out(b, a) = (hm[a * 3 + b] + (a == b ? diag : 0.0)) * nh2;
    return out;
}

DerivBundle KdeField::bundle(const Vec& x) const {
    int d = dim();
    double v = 0.0, diag = 0.0;
    double g[3] = {0.0, 0.0, 0.0};
    double hm[9] = {0};
    scan(x, [&](int, double t, const double* du) {
        v += kernel_.profile(t);
        double w1 = 2.0 * kernel_.profile_d1(t);
        double w2 = 4.0 * kernel_.profile_d2(t);
        diag += w1;
        for (int a = 0; a < d; ++a) {
            g[a] += w1 * du[a];
            for (int b = a; b < d; ++b) hm[a * 3 + b] += w2 * du[a] * du[b];
        }
    });
    DerivBundle b;
    b.value = v * norm_v_;
    b.grad = Vec(d);
    b.hess = Mat(d, d);
    double nh2 = norm_v_ * inv_h_ * inv_h_;
    for (int a = 0; a < d; ++a) {
        b.grad(a) = g[a] * norm_v_ * inv_h_;
        for (int bb = a; bb < d; ++bb)
            b.hess(a, bb) = b.hess(bb, a) = (hm[a * 3 + bb] + (a == bb ? diag : 0.0)) * nh2;
    }
    b.hess_vech = vech_lower(b.hess);
    b.grad_norm = b.grad.norm();
    return b;
}

std::shared_ptr<KdeField> KdeField::leave_out(const std::vector<int>& idx) const {
    std::vector<int> all;
    for (int i = 0; i < sample_->n(); ++i)
        if (excluded_flag_[i]) all.push_back(i);
    all.insert(all.end(), idx.begin(), idx.end());
    int remaining = sample_->n();
    {
        std::vector<char> f(sample_->n(), 0);
        for (int i : all) {
            require(i >= 0 && i < sample_->n(), "leave_out index out of range");
            f[i] = 1;
        }
        remaining = 0;
        for (char c : f) remaining += (c == 0);
    }
    if (remaining < 1) throw NumericalError("leave_out: empty remainder");
    return std::make_shared<KdeField>(sample_, h_, kernel_, all);
}

double default_bandwidth(const SamplePoints& s) {
    int d = s.dim();
    double sd = 0.0;
    for (int a = 0; a < d; ++a) {
        double mean = s.coords.col(a).mean();
        double var = (s.coords.col(a).array() - mean).square().sum() /
                     std::max(1, s.n() - 1);
        sd += std::sqrt(var);
    }
    sd /= d;
    return std::pow(static_cast<double>(s.n()), -1.0 / (d + 4)) * std::max(sd, 1e-12);
}

}  // namespace lsi
