#include "lsi/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace lsi {

void McConfig::validate() const {
    require(truth != nullptr, "study needs a reference field");
    require(static_cast<bool>(sampler), "study needs a sampler");
    require(replicates >= 1, "replicates must be >= 1");
    require(!n_list.empty(), "n_list must be nonempty");
    require(std::is_sorted(n_list.begin(), n_list.end()), "n_list must be ascending");
    require(alpha > 0 && alpha < 1, "alpha must lie in (0,1)");
    require(!kinds.empty(), "at least one estimator kind required");
    grid.validate();
}

namespace {

std::uint64_t mix_seed(std::uint64_t base, int n_index, int replicate) {
    std::uint64_t st = base;
    splitmix64(st);
    st ^= static_cast<std::uint64_t>(n_index) * 0x9e3779b97f4a7c15ULL;
    splitmix64(st);
    st ^= static_cast<std::uint64_t>(replicate) + 0x6a09e667f3bcc909ULL;
    return splitmix64(st);
}

GridSpec refined(const GridSpec& g, int factor) {
    GridSpec out = g;
    out.res[0] *= factor;
    out.res[1] *= factor;
    if (g.dim() == 3) out.res[2] *= factor;
    return out;
}

}  // namespace

McResult run_study(const McConfig& cfg) {
    cfg.validate();
    McResult res;
    res.config = cfg;

    // reference value from the analytic field at 4x resolution; the 2x vs 4x
    // gap quantifies the remaining discretization error
    double truth4 = estimate(*cfg.truth, cfg.integrand, cfg.level,
                             EstimatorKind::plugin(), refined(cfg.grid, 4)).value;
    double truth2 = estimate(*cfg.truth, cfg.integrand, cfg.level,
                             EstimatorKind::plugin(), refined(cfg.grid, 2)).value;
    res.truth_value = truth4;
    res.truth_refinement_delta = std::abs(truth4 - truth2);

    int total = 0, failed = 0;
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const int n = cfg.n_list[ni];
        const double h = cfg.bandwidth_for(n);
        for (int r = 0; r < cfg.replicates; ++r) {
            const std::uint64_t seed = mix_seed(cfg.base_seed, static_cast<int>(ni), r);
            std::shared_ptr<KdeField> kde;
            std::string build_fail;
            try {
                auto sample = std::make_shared<SamplePoints>(cfg.sampler(n, seed));
                kde = std::make_shared<KdeField>(sample, h, cfg.kernel);
            } catch (const std::exception& e) {
                build_fail = e.what();
            }
            for (std::size_t ki = 0; ki < cfg.kinds.size(); ++ki) {
                McReplicate rec;
                rec.n = n;
                rec.kind_index = static_cast<int>(ki);
                rec.replicate = r;
                rec.seed = seed;
                ++total;
                auto t0 = std::chrono::steady_clock::now();
                try {
                    if (!build_fail.empty()) throw NumericalError(build_fail);
                    EstimateReport rep = estimate(*kde, cfg.integrand, cfg.level,
                                                  cfg.kinds[ki], cfg.grid);
                    rec.value = rep.value;
                    if (cfg.with_ci) {
                        double tau = cfg.tau < 0 ? h : cfg.tau;
                        double s2 = variance_hat(*kde, cfg.integrand, cfg.level, tau,
                                                 cfg.grid, cfg.kernel);
                        rep = confidence_interval(rep, s2, cfg.alpha, h);
                        rec.ci_lo = rep.ci->first;
                        rec.ci_hi = rep.ci->second;
                        rec.has_ci = true;
                        rec.covered = rec.ci_lo <= res.truth_value &&
                                      res.truth_value <= rec.ci_hi;
                    }
                } catch (const std::exception& e) {
                    rec.ok = false;
                    rec.fail_reason = e.what();
                    ++failed;
                }
                rec.runtime_sec = std::chrono::duration<double>(
                                      std::chrono::steady_clock::now() - t0).count();
                res.replicates.push_back(rec);
            }
        }
    }
    if (failed * 10 > total)
        throw NumericalError("study aborted: " + std::to_string(failed) + " of " +
                             std::to_string(total) + " replicate runs failed");

    // aggregate in (n, kind) order; replicate order is fixed by index
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni)
        for (std::size_t ki = 0; ki < cfg.kinds.size(); ++ki) {
            McRow row;
            row.n = cfg.n_list[ni];
            row.kind_index = static_cast<int>(ki);
            std::vector<double> vals;
            int covered = 0, with_ci = 0;
            double rt = 0.0;
            for (const auto& rec : res.replicates) {
                if (rec.n != row.n || rec.kind_index != row.kind_index) continue;
                ++row.replicates;
                rt += rec.runtime_sec;
                if (!rec.ok) {
                    ++row.failures;
                    continue;
                }
                vals.push_back(rec.value);
                if (rec.has_ci) {
                    ++with_ci;
                    covered += rec.covered ? 1 : 0;
                }
            }
            if (!vals.empty()) {
                double mean = 0.0;
                for (double v : vals) mean += v;
                mean /= vals.size();
                double m2 = 0.0, m3 = 0.0, m4 = 0.0;
                for (double v : vals) {
                    double dd = v - mean;
                    m2 += dd * dd;
                    m3 += dd * dd * dd;
                    m4 += dd * dd * dd * dd;
                }
                m2 /= vals.size();
                m3 /= vals.size();
                m4 /= vals.size();
                row.mean = mean;
                row.variance = vals.size() > 1 ? m2 * vals.size() / (vals.size() - 1.0) : 0.0;
                row.bias = mean - res.truth_value;
                if (m2 > 0) {
                    row.skewness = m3 / std::pow(m2, 1.5);
                    row.excess_kurtosis = m4 / (m2 * m2) - 3.0;
                }
            }
            if (with_ci > 0) row.coverage = static_cast<double>(covered) / with_ci;
            row.mean_runtime_sec = row.replicates > 0 ? rt / row.replicates : 0.0;
            res.rows.push_back(row);
        }
    return res;
}

double theoretical_rate_slope(int d, int nu, double a) {
    double deriv_var = -1.0 + a * (d + 2);
    double bias = -a * nu;
    double clt = -0.5 * (1.0 - a);
    return std::max({deriv_var, bias, clt});
}

std::vector<RateFit> rate_report(const McResult& res) {
    std::vector<int> ns = res.config.n_list;
    require(ns.size() >= 3, "rate fit needs at least 3 sample sizes");
    std::vector<RateFit> fits;
    for (std::size_t ki = 0; ki < res.config.kinds.size(); ++ki) {
        std::vector<double> lx, ly;
        for (const auto& row : res.rows) {
            if (row.kind_index != static_cast<int>(ki) || row.replicates == row.failures)
                continue;
            double err = std::abs(row.bias);
            if (err <= 0) continue;
            lx.push_back(std::log(static_cast<double>(row.n)));
            ly.push_back(std::log(err));
        }
        require(lx.size() >= 3, "rate fit needs at least 3 usable error points");
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) { mx += lx[i]; my += ly[i]; }
        mx /= lx.size();
        my /= ly.size();
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxx += (lx[i] - mx) * (lx[i] - mx);
            sxy += (lx[i] - mx) * (ly[i] - my);
        }
        RateFit fit;
        fit.kind_index = static_cast<int>(ki);
        fit.slope = sxy / sxx;
        fit.intercept = my - fit.slope * mx;
        fit.theoretical_slope = theoretical_rate_slope(
            res.config.truth->dim(), res.config.kernel.order, res.config.h_power);
        fits.push_back(fit);
    }
    return fits;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    require(out.good(), "cannot open " + path + " for writing");
    out.precision(12);
    return out;
}

}  // namespace

void write_study_csv(const McResult& res, const std::string& path) {
    auto out = open_out(path);
    out << "n,estimator,replicate,seed,value,ci_lo,ci_hi,covered,ok,runtime_sec,fail_reason\n";
    for (const auto& r : res.replicates)
        out << r.n << ',' << res.config.kinds[r.kind_index].name() << ',' << r.replicate
            << ',' << r.seed << ',' << r.value << ',' << (r.has_ci ? r.ci_lo : 0.0) << ','
            << (r.has_ci ? r.ci_hi : 0.0) << ',' << (r.has_ci ? (r.covered ? 1 : 0) : -1)
            << ',' << (r.ok ? 1 : 0) << ',' << r.runtime_sec << ',' << r.fail_reason
            << '\n';
}

void write_summary_csv(const McResult& res, const std::string& path) {
    auto out = open_out(path);
    out << "n,estimator,replicates,failures,mean,variance,bias,coverage,skewness,"
           "excess_kurtosis,mean_runtime_sec,truth,truth_refinement_delta\n";
    for (const auto& row : res.rows)
        out << row.n << ',' << res.config.kinds[row.kind_index].name() << ','
            << row.replicates << ',' << row.failures << ',' << row.mean << ','
            << row.variance << ',' << row.bias << ',' << row.coverage << ','
            << row.skewness << ',' << row.excess_kurtosis << ',' << row.mean_runtime_sec
            << ',' << res.truth_value << ',' << res.truth_refinement_delta << '\n';
}

void write_rate_csv(const McResult& res, const std::string& path) {
    auto fits = rate_report(res);
    auto out = open_out(path);
    out << "estimator,fitted_slope,intercept,theoretical_slope\n";
    for (const auto& f : fits)
        out << res.config.kinds[f.kind_index].name() << ',' << f.slope << ','
            << f.intercept << ',' << f.theoretical_slope << '\n';
}

void write_hist_svg(const McResult& res, int n, int kind_index, const std::string& path) {
    std::vector<double> vals;
    for (const auto& r : res.replicates)
        if (r.n == n && r.kind_index == kind_index && r.ok) vals.push_back(r.value);
    require(vals.size() >= 2, "histogram needs at least 2 successful replicates");
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= (vals.size() - 1.0);
    double sd = std::sqrt(std::max(var, 1e-300));
    for (double& v : vals) v = (v - mean) / sd;

    const int nbins = 24;
    const double lo = -4.0, hi = 4.0;
    std::vector<int> bins(nbins, 0);
    for (double v : vals) {
        int b = static_cast<int>((v - lo) / (hi - lo) * nbins);
        if (b >= 0 && b < nbins) ++bins[b];
    }
    const double binw = (hi - lo) / nbins;
    // densities so the normal curve overlays on the same scale
    double peak = 0.45;
    std::vector<double> dens(nbins);
    for (int b = 0; b < nbins; ++b) {
        dens[b] = bins[b] / (vals.size() * binw);
        peak = std::max(peak, dens[b]);
    }

    const double W = 640, H = 420, ml = 50, mr = 20, mt = 20, mb = 40;
    auto px = [&](double v) { return ml + (v - lo) / (hi - lo) * (W - ml - mr); };
    auto py = [&](double dd) { return H - mb - dd / peak * (H - mt - mb); };

    auto out = open_out(path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    for (int b = 0; b < nbins; ++b) {
        if (bins[b] == 0) continue;
        double x0 = px(lo + b * binw), x1 = px(lo + (b + 1) * binw);
        double y = py(dens[b]);
        out << "<rect x='" << x0 << "' y='" << y << "' width='" << x1 - x0
            << "' height='" << (H - mb) - y << "' fill='#7aa6c2' stroke='#456'/>\n";
    }
    out << "<polyline fill='none' stroke='#c0392b' stroke-width='2' points='";
    for (int i = 0; i <= 160; ++i) {
        double v = lo + (hi - lo) * i / 160.0;
        double dd = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
        out << px(v) << ',' << py(dd) << ' ';
    }
    out << "'/>\n<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr
        << "' y2='" << H - mb << "' stroke='black'/>\n"
        << "<text x='" << W / 2 << "' y='" << H - 10
        << "' text-anchor='middle' font-size='13'>standardized estimate (n=" << n << ", "
        << res.config.kinds[kind_index].name() << ")</text>\n</svg>\n";
}

}  // namespace lsi
