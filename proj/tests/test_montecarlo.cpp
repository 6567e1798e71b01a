#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lsi/montecarlo.hpp"

using namespace lsi;

namespace {

double gauss_level(int d, double r) {
    return std::exp(-0.5 * r * r) / std::pow(2.0 * M_PI, d / 2.0);
}

McConfig small_study(const GaussianField& truth) {
    McConfig cfg;
    cfg.truth = &truth;
    cfg.sampler = [&truth](int n, std::uint64_t seed) {
        return truth.sample(n, seed);
    };
    cfg.level = gauss_level(2, 1.0);
    cfg.kinds = {EstimatorKind::plugin()};
    cfg.n_list = {200, 400};
    cfg.h_scale = 1.3;
    cfg.h_power = 1.0 / 6.0;
    cfg.replicates = 5;
    cfg.base_seed = 17;
    cfg.grid = grid_from_bounds(Vec::Constant(2, -4.0), Vec::Constant(2, 4.0),
                                128, 2);
    cfg.kernel = make_kernel(2, 2, 5);
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("study is deterministic and rows aggregate the replicates") {
    GaussianField truth(Vec::Zero(2), 1.0);
    McConfig cfg = small_study(truth);
    McResult a = run_study(cfg);
    McResult b = run_study(cfg);

    // truth reference and every replicate value repeat exactly
    CHECK(a.truth_value == b.truth_value);
    CHECK(a.truth_value == doctest::Approx(2.0 * M_PI).epsilon(0.01));
    CHECK(a.truth_refinement_delta < 1e-3 * a.truth_value);
    REQUIRE(a.replicates.size() == b.replicates.size());
    REQUIRE(a.replicates.size() == 2 * 5);
    for (std::size_t i = 0; i < a.replicates.size(); ++i) {
        CHECK(a.replicates[i].value == b.replicates[i].value);
        CHECK(a.replicates[i].seed == b.replicates[i].seed);
        CHECK(a.replicates[i].ok);
    }

    // per-(n, kind) rows match a direct recomputation over the replicates
    REQUIRE(a.rows.size() == 2);
    for (const auto& row : a.rows) {
        CHECK(row.replicates == 5);
        CHECK(row.failures == 0);
        double mean = 0.0;
        int count = 0;
        for (const auto& rep : a.replicates)
            if (rep.n == row.n && rep.kind_index == row.kind_index) {
                mean += rep.value;
                ++count;
            }
        REQUIRE(count == 5);
        mean /= count;
        CHECK(row.mean == doctest::Approx(mean).epsilon(1e-12));
        CHECK(row.bias == doctest::Approx(mean - a.truth_value).epsilon(1e-9));
        CHECK(row.variance >= 0.0);
        CHECK(row.coverage == -1.0);  // no CIs requested
    }
}

TEST_CASE("a single replicate reproduces the direct estimator call") {
    GaussianField truth(Vec::Zero(2), 1.0);
    McConfig cfg = small_study(truth);
    cfg.n_list = {300};
    cfg.replicates = 1;
    McResult res = run_study(cfg);
    REQUIRE(res.replicates.size() == 1);
    const McReplicate& rep = res.replicates[0];

    auto sp = std::make_shared<SamplePoints>(truth.sample(300, rep.seed));
    KdeField kde(sp, cfg.bandwidth_for(300), cfg.kernel);
    double direct =
        estimate(kde, cfg.integrand, cfg.level, cfg.kinds[0], cfg.grid).value;
    CHECK(rep.value == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("coverage bookkeeping with confidence intervals enabled") {
    GaussianField truth(Vec::Zero(2), 1.0);
    McConfig cfg = small_study(truth);
    cfg.n_list = {400};
    cfg.with_ci = true;
    cfg.alpha = 0.10;
    McResult res = run_study(cfg);
    int covered = 0, with_ci = 0;
    for (const auto& rep : res.replicates) {
        if (!rep.ok) continue;
        CHECK(rep.has_ci);
        ++with_ci;
        CHECK(rep.ci_lo < rep.ci_hi);
        bool inside = rep.ci_lo <= res.truth_value && res.truth_value <= rep.ci_hi;
        CHECK(rep.covered == inside);
        covered += rep.covered ? 1 : 0;
    }
    REQUIRE(with_ci > 0);
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].coverage ==
          doctest::Approx(double(covered) / with_ci).epsilon(1e-12));
}

TEST_CASE("theoretical rate slope spot checks") {
    // max(-1 + a(d+2), -a nu, -(1-a)/2)
    CHECK(theoretical_rate_slope(2, 2, 1.0 / 6.0) ==
          doctest::Approx(-1.0 / 3.0).epsilon(1e-12));
    CHECK(theoretical_rate_slope(2, 2, 1.0 / 8.0) ==
          doctest::Approx(-0.25).epsilon(1e-12));  // bias term dominates
    CHECK(theoretical_rate_slope(3, 4, 0.1) ==
          doctest::Approx(-0.4).epsilon(1e-12));  // bias term -a nu
    // at a = 1/4 (d = 2) the derivative-variance term -1 + a(d+2) hits zero
    CHECK(theoretical_rate_slope(2, 2, 0.25) == doctest::Approx(0.0));
}

TEST_CASE("rate fitter recovers the slope of synthetic error data") {
    GaussianField truth(Vec::Zero(2), 1.0);
    McConfig cfg = small_study(truth);
    McResult res = run_study(cfg);
    res.config.n_list = {100, 400, 1600, 6400};
    res.rows.clear();
    // synthesize |bias| = 10 * n^{-1/2} exactly
    for (int n : res.config.n_list) {
        McRow row;
        row.n = n;
        row.kind_index = 0;
        row.replicates = 1;
        row.mean = res.truth_value + 10.0 / std::sqrt(double(n));
        row.bias = 10.0 / std::sqrt(double(n));
        res.rows.push_back(row);
    }
    auto fits = rate_report(res);
    REQUIRE(fits.size() == 1);
    CHECK(fits[0].slope == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(fits[0].intercept == doctest::Approx(std::log(10.0)).epsilon(1e-9));
    CHECK(fits[0].theoretical_slope ==
          doctest::Approx(theoretical_rate_slope(2, 2, 1.0 / 6.0)).epsilon(1e-12));
}

TEST_CASE("csv and svg writers emit parseable files") {
    GaussianField truth(Vec::Zero(2), 1.0);
    McConfig cfg = small_study(truth);
    cfg.n_list = {100, 200, 400};  // rate table needs at least three sizes
    cfg.replicates = 3;
    McResult res = run_study(cfg);
    const std::string base = "mc_writer_test_";
    write_study_csv(res, base + "study.csv");
    write_summary_csv(res, base + "summary.csv");
    write_rate_csv(res, base + "rate.csv");
    write_hist_svg(res, 200, 0, base + "hist.svg");

    std::string study = slurp(base + "study.csv");
    CHECK(study.find("n,") != std::string::npos);  // header row
    // one line per replicate plus header
    CHECK(std::count(study.begin(), study.end(), '\n') ==
          long(res.replicates.size()) + 1);
    CHECK(slurp(base + "summary.csv").find("coverage") != std::string::npos);
    CHECK(slurp(base + "rate.csv").find("slope") != std::string::npos);
    std::string svg = slurp(base + "hist.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    // identical configs reproduce the study table up to the wall-clock column
    write_study_csv(run_study(cfg), base + "study2.csv");
    auto strip_runtime = [](const std::string& text) {
        std::istringstream in(text);
        std::string line, out;
        while (std::getline(in, line)) {
            // drop field 10 (runtime_sec) of 11
            std::istringstream ls(line);
            std::string field;
            int idx = 0;
            while (std::getline(ls, field, ',')) {
                if (idx++ != 9) out += field + ',';
            }
            out += '\n';
        }
        return out;
    };
    CHECK(strip_runtime(slurp(base + "study2.csv")) == strip_runtime(study));

    for (const char* suff : {"study.csv", "summary.csv", "rate.csv", "hist.svg",
                             "study2.csv"})
        std::remove((base + suff).c_str());
}

TEST_CASE("config validation rejects inconsistent studies") {
    GaussianField truth(Vec::Zero(2), 1.0);
    McConfig good = small_study(truth);
    CHECK_NOTHROW(good.validate());

    McConfig c1 = good;
    c1.truth = nullptr;
    CHECK_THROWS_AS(c1.validate(), InvalidArgument);

    McConfig c2 = good;
    c2.n_list.clear();
    CHECK_THROWS_AS(c2.validate(), InvalidArgument);

    McConfig c3 = good;
    c3.replicates = 0;
    CHECK_THROWS_AS(c3.validate(), InvalidArgument);

    McConfig c4 = good;
    c4.n_list = {400, 200};  // must be ascending
    CHECK_THROWS_AS(c4.validate(), InvalidArgument);

    McConfig c5 = good;
    c5.alpha = 1.5;
    CHECK_THROWS_AS(c5.validate(), InvalidArgument);

    McConfig c6 = good;
    c6.sampler = nullptr;
    CHECK_THROWS_AS(c6.validate(), InvalidArgument);
}
