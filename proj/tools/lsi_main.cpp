// lsi: surface-integral estimation on density level sets.
// Subcommands: estimate, curvature, euler, minkowski, simulate, selftest.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lsi/montecarlo.hpp"

using nlohmann::json;
using namespace lsi;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string input;
    std::string field_json;  // analytic field spec (JSON or shorthand)
    std::string out;
    double level = 0.05;
    double bandwidth = 0.0;  // 0 = data-driven default
    int kernel_order = 2;
    int kernel_smoothness = 5;
    int grid_res = 0;  // 0 = per-dimension default
    std::vector<double> bbox;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file; flags override its values");
    cmd->add_option("--input", o.input, "sample file (.csv or .ndjson)");
    cmd->add_option("--field", o.field_json, "analytic field spec (JSON)");
    cmd->add_option("--out", o.out, "output path (default: stdout)");
    cmd->add_option("--level,-c", o.level, "density level c");
    cmd->add_option("--bandwidth", o.bandwidth, "KDE bandwidth (0 = data-driven)");
    cmd->add_option("--kernel-order", o.kernel_order, "kernel order (even)");
    cmd->add_option("--kernel-smoothness", o.kernel_smoothness, "radial smoothness exponent");
    cmd->add_option("--grid-res", o.grid_res, "grid cells per axis");
    cmd->add_option("--bbox", o.bbox,
                    "grid bounds: lo,hi (uniform) or x0,x1,y0,y1[,z0,z1]")
        ->expected(-1);
    cmd->add_option("--threads", o.threads, "worker threads (default LSI_THREADS or 1)");
}

// flags keep their CLI values unless the config file provides one and the
// flag was left at its default
template <typename T>
void from_cfg(const json& cfg, const char* key, T& slot, const CLI::App* cmd,
              const std::string& flag) {
    if (cfg.contains(key) && cmd->count(flag) == 0) slot = cfg[key].get<T>();
}

json load_config(const CommonOpts& o) {
    if (o.config_path.empty()) return json::object();
    std::ifstream in(o.config_path);
    require(in.good(), "cannot open config file " + o.config_path);
    return json::parse(in);
}

std::unique_ptr<DensityField> make_field(const json& spec) {
    require(spec.contains("type"), "field spec needs a \"type\"");
    std::string type = spec["type"];
    if (type == "gaussian") {
        std::vector<double> mv;
        if (spec.contains("mean")) mv = spec["mean"].get<std::vector<double>>();
        else mv.assign(spec.value("dim", 2), 0.0);
        Vec mean = Eigen::Map<Vec>(mv.data(), static_cast<long>(mv.size()));
        return std::make_unique<GaussianField>(mean, spec.value("sigma", 1.0));
    }
    if (type == "mixture") {
        std::vector<double> w = spec["weights"];
        std::vector<double> s = spec["sigmas"];
        std::vector<Vec> means;
        for (const auto& mj : spec["means"]) {
            std::vector<double> mv = mj;
            means.push_back(Eigen::Map<Vec>(mv.data(), static_cast<long>(mv.size())));
        }
        return std::make_unique<GaussianMixtureField>(w, means, s);
    }
    if (type == "product") {
        std::vector<double> mv = spec["mean"];
        std::vector<double> sv = spec["sigmas"];
        Vec mean = Eigen::Map<Vec>(mv.data(), static_cast<long>(mv.size()));
        Vec sig = Eigen::Map<Vec>(sv.data(), static_cast<long>(sv.size()));
        return std::make_unique<ProductGaussianField>(mean, sig);
    }
    throw InvalidArgument("unknown field type: " + type);
}

std::function<SamplePoints(int, std::uint64_t)> field_sampler(const json& spec,
                                                              const DensityField& f) {
    std::string type = spec["type"];
    if (type == "gaussian") {
        const auto& g = dynamic_cast<const GaussianField&>(f);
        return [&g](int n, std::uint64_t seed) { return g.sample(n, seed); };
    }
    if (type == "mixture") {
        const auto& g = dynamic_cast<const GaussianMixtureField&>(f);
        return [&g](int n, std::uint64_t seed) { return g.sample(n, seed); };
    }
    const auto& g = dynamic_cast<const ProductGaussianField&>(f);
    return [&g](int n, std::uint64_t seed) { return g.sample(n, seed); };
}

struct ResolvedField {
    std::unique_ptr<DensityField> field;
    std::shared_ptr<SamplePoints> sample;  // null for analytic fields
    std::shared_ptr<KdeField> kde;         // alias of field when KDE-backed
    double bandwidth = 0.0;
    KernelSpec kernel;
};

ResolvedField resolve_field(const CommonOpts& o, int expect_dim = 0) {
    ResolvedField rf;
    rf.kernel = make_kernel(2, o.kernel_order, o.kernel_smoothness);  // dim fixed below
    if (!o.input.empty()) {
        rf.sample = std::make_shared<SamplePoints>(read_samples(o.input));
        if (expect_dim) require(rf.sample->dim() == expect_dim, "sample has wrong dimension");
        rf.bandwidth = o.bandwidth > 0 ? o.bandwidth : default_bandwidth(*rf.sample);
        rf.kernel = make_kernel(rf.sample->dim(), o.kernel_order, o.kernel_smoothness);
        rf.kde = std::make_shared<KdeField>(rf.sample, rf.bandwidth, rf.kernel);
        rf.field = nullptr;
        return rf;
    }
    require(!o.field_json.empty(), "either --input or --field is required");
    json spec = json::parse(o.field_json);
    rf.field = make_field(spec);
    if (expect_dim) require(rf.field->dim() == expect_dim, "field has wrong dimension");
    rf.kernel = make_kernel(rf.field->dim(), o.kernel_order, o.kernel_smoothness);
    return rf;
}

const DensityField& active_field(const ResolvedField& rf) {
    return rf.kde ? static_cast<const DensityField&>(*rf.kde) : *rf.field;
}

GridSpec resolve_grid(const CommonOpts& o, const ResolvedField& rf) {
    const DensityField& f = active_field(rf);
    const int d = f.dim();
    if (!o.bbox.empty()) {
        Vec lo(d), hi(d);
        if (o.bbox.size() == 2) {
            lo.setConstant(o.bbox[0]);
            hi.setConstant(o.bbox[1]);
        } else {
            require(static_cast<int>(o.bbox.size()) == 2 * d,
                    "--bbox needs 2 or 2*d values");
            for (int a = 0; a < d; ++a) {
                lo(a) = o.bbox[2 * a];
                hi(a) = o.bbox[2 * a + 1];
            }
        }
        int res = o.grid_res > 0 ? o.grid_res : (d == 2 ? 512 : 160);
        return grid_from_bounds(lo, hi, res, d);
    }
    if (rf.sample) return auto_grid(*rf.sample, rf.bandwidth, o.grid_res);
    // analytic default: generous symmetric box
    Vec lo = Vec::Constant(d, -4.0), hi = Vec::Constant(d, 4.0);
    int res = o.grid_res > 0 ? o.grid_res : (d == 2 ? 512 : 160);
    return grid_from_bounds(lo, hi, res, d);
}

json config_echo(const CommonOpts& o, const GridSpec& grid, const ResolvedField& rf) {
    json j;
    j["input"] = o.input;
    j["field"] = o.field_json;
    j["level"] = o.level;
    j["bandwidth"] = rf.bandwidth;
    j["kernel_order"] = o.kernel_order;
    j["kernel_smoothness"] = o.kernel_smoothness;
    j["grid_res"] = grid.res[0];
    j["bbox_lower"] = std::vector<double>(grid.lower.data(), grid.lower.data() + grid.dim());
    j["bbox_upper"] = std::vector<double>(grid.upper.data(), grid.upper.data() + grid.dim());
    j["threads"] = o.threads;
    return j;
}

void emit(const json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << std::endl;
    } else {
        std::ofstream out(out_path);
        require(out.good(), "cannot open " + out_path + " for writing");
        out << doc.dump(2) << '\n';
    }
}

json report_json(const EstimateReport& r) {
    json j;
    j["estimator"] = r.kind.name();
    j["eps"] = r.kind.eps;
    j["value"] = r.value;
    j["level"] = r.level;
    j["bandwidth"] = r.bandwidth;
    j["n"] = r.n;
    if (r.std_err) j["std_err"] = *r.std_err;
    if (r.ci) {
        j["ci_lo"] = r.ci->first;
        j["ci_hi"] = r.ci->second;
    }
    j["mesh_measure"] = r.diagnostics.mesh_measure;
    j["min_grad_on_mesh"] = r.diagnostics.min_grad_on_mesh;
    j["grid_res"] = r.diagnostics.grid_res;
    j["band_cell_count"] = r.diagnostics.band_cell_count;
    return j;
}

Integrand resolve_integrand(const std::string& name_or_json) {
    if (name_or_json.empty() || name_or_json == "unity") return Integrand::unity();
    return Integrand::phi(PhiExpr::from_json(name_or_json));
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("LSI_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

// ------------------------------------------------------------ subcommands --

int cmd_estimate(const CommonOpts& o, const std::string& estimator, double eps,
                 double tau, double alpha, const std::string& integrand_str,
                 const std::string& mesh_out) {
    require(!(estimator == "band" && eps == 0) && !(estimator == "tube" && eps == 0),
            "--eps must be positive for band/tube");
    ResolvedField rf = resolve_field(o);
    const DensityField& F = active_field(rf);
    GridSpec grid = resolve_grid(o, rf);
    Integrand g = resolve_integrand(integrand_str);

    EstimatorKind kind = EstimatorKind::plugin();
    if (estimator == "band")
        kind = EstimatorKind::band(eps > 0 ? eps : default_band_eps(F, o.level, grid));
    else if (estimator == "tube")
        kind = EstimatorKind::tube(eps > 0 ? eps : default_tube_eps(grid));
    else
        require(estimator == "plugin", "unknown estimator: " + estimator);

    EstimateReport rep = estimate(F, g, o.level, kind, grid);
    if (!mesh_out.empty()) {
        LevelMesh mesh = extract_level_mesh(F, o.level, grid);
        if (F.dim() == 3) write_mesh_obj(mesh, mesh_out);
        else write_mesh_csv_polyline(mesh, mesh_out);
    }
    if (rf.kde && alpha > 0 && alpha < 1) {
        double tau_eff = tau >= 0 ? tau : rf.bandwidth;
        double s2 = variance_hat(F, g, o.level, tau_eff, grid, rf.kernel);
        rep = confidence_interval(rep, s2, alpha, rf.bandwidth);
    }
    json doc = report_json(rep);
    doc["config"] = config_echo(o, grid, rf);
    doc["config"]["estimator"] = estimator;
    doc["config"]["eps"] = kind.eps;
    doc["config"]["tau"] = tau;
    doc["config"]["alpha"] = alpha;
    doc["config"]["integrand"] = integrand_str.empty() ? "unity" : integrand_str;
    emit(doc, o.out);
    return 0;
}

int cmd_curvature(const CommonOpts& o, const std::string& points_path) {
    ResolvedField rf = resolve_field(o);
    const DensityField& F = active_field(rf);
    SamplePoints pts = read_samples(points_path);
    require(pts.dim() == F.dim(), "point list has wrong dimension");

    std::ostringstream rows;
    rows.precision(12);
    rows << "x0,x1";
    if (F.dim() == 3) rows << ",x2";
    rows << ",f,grad_norm,mean_curv,gauss_curv";
    for (int j = 1; j <= F.dim(); ++j) rows << ",F" << j;
    rows << '\n';
    for (int i = 0; i < pts.n(); ++i) {
        Vec x = pts.coords.row(i).transpose();
        DerivBundle b = deriv_bundle(F, x);
        CurvatureBundle cb = curvature_bundle(b);
        rows << x(0) << ',' << x(1);
        if (F.dim() == 3) rows << ',' << x(2);
        rows << ',' << b.value << ',' << b.grad_norm << ',' << cb.mean << ',' << cb.gauss;
        for (int j = 0; j < F.dim(); ++j) rows << ',' << cb.Fj(j);
        rows << '\n';
    }
    if (o.out.empty()) {
        std::cout << rows.str();
    } else {
        std::ofstream out(o.out);
        require(out.good(), "cannot open " + o.out + " for writing");
        out << rows.str();
    }
    return 0;
}

int cmd_euler(const CommonOpts& o, const std::string& method, double eps) {
    ResolvedField rf = resolve_field(o, 3);
    const DensityField& F = active_field(rf);
    GridSpec grid = resolve_grid(o, rf);

    EulerMethod m = EulerMethod::plugin_gb();
    double e = eps > 0 ? eps : default_tube_eps(grid);
    if (method == "band") m = EulerMethod::band_gb(eps > 0 ? eps : default_band_eps(F, o.level, grid));
    else if (method == "parallel") m = EulerMethod::parallel_gb(e);
    else if (method == "combinatorial") m = EulerMethod::combinatorial();
    else require(method == "plugin", "unknown method: " + method);

    EulerReport er = euler_characteristic(F, o.level, m, grid);
    json doc;
    doc["method"] = method;
    doc["raw"] = er.raw;
    doc["snapped"] = er.snapped;
    doc["snap_gap"] = std::abs(er.raw - er.snapped);
    doc["config"] = config_echo(o, grid, rf);
    emit(doc, o.out);
    return 0;
}

int cmd_minkowski(const CommonOpts& o) {
    ResolvedField rf = resolve_field(o);
    const DensityField& F = active_field(rf);
    GridSpec grid = resolve_grid(o, rf);
    Vec V = minkowski_functionals(F, o.level, grid);
    json doc;
    doc["V"] = std::vector<double>(V.data(), V.data() + V.size());
    doc["config"] = config_echo(o, grid, rf);
    emit(doc, o.out);
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
    std::ifstream in(config_path);
    require(in.good(), "cannot open study config " + config_path);
    json cfg = json::parse(in);

    auto field = make_field(cfg.at("field"));
    McConfig mc;
    mc.truth = field.get();
    mc.sampler = field_sampler(cfg.at("field"), *field);
    mc.level = cfg.at("level");
    mc.integrand = resolve_integrand(cfg.value("integrand", "unity"));
    mc.n_list = cfg.at("n_list").get<std::vector<int>>();
    mc.h_scale = cfg.value("h_scale", 1.0);
    mc.h_power = cfg.value("h_power", 0.0);
    mc.replicates = cfg.value("replicates", 1);
    mc.base_seed = cfg.value("seed", 1ULL);
    mc.alpha = cfg.value("alpha", 0.10);
    mc.with_ci = cfg.value("with_ci", false);
    mc.tau = cfg.value("tau", -1.0);
    int order = cfg.value("kernel_order", 2);
    int smooth = cfg.value("kernel_smoothness", 5);
    mc.kernel = make_kernel(field->dim(), order, smooth);

    const int d = field->dim();
    double lo = cfg.value("bbox_lo", -4.0), hi = cfg.value("bbox_hi", 4.0);
    int res = cfg.value("grid_res", d == 2 ? 256 : 96);
    mc.grid = grid_from_bounds(Vec::Constant(d, lo), Vec::Constant(d, hi), res, d);

    mc.kinds.clear();
    for (const auto& kj : cfg.value("estimators", json::array({"plugin"}))) {
        std::string name =
            kj.is_string() ? kj.get<std::string>() : kj.at("kind").get<std::string>();
        double eps = kj.is_object() ? kj.value("eps", 0.0) : 0.0;
        if (name == "plugin") mc.kinds.push_back(EstimatorKind::plugin());
        else if (name == "band") mc.kinds.push_back(EstimatorKind::band(eps));
        else if (name == "tube") mc.kinds.push_back(EstimatorKind::tube(eps));
        else throw InvalidArgument("unknown estimator kind: " + name);
    }

    McResult res_study = run_study(mc);
    std::string dir = out_dir.empty() ? "." : out_dir;
    write_study_csv(res_study, dir + "/study.csv");
    write_summary_csv(res_study, dir + "/summary.csv");
    if (mc.n_list.size() >= 3) write_rate_csv(res_study, dir + "/rates.csv");
    if (cfg.value("histograms", false))
        for (std::size_t ki = 0; ki < mc.kinds.size(); ++ki)
            for (int n : mc.n_list)
                write_hist_svg(res_study, n, static_cast<int>(ki),
                               dir + "/hist_n" + std::to_string(n) + "_" +
                                   mc.kinds[ki].name() + ".svg");
    // resolved config echo for reproducibility
    json echo = cfg;
    echo["truth_value"] = res_study.truth_value;
    echo["truth_refinement_delta"] = res_study.truth_refinement_delta;
    std::ofstream eo(dir + "/config_resolved.json");
    eo << echo.dump(2) << '\n';
    std::cout << "study complete: truth=" << res_study.truth_value << ", rows="
              << res_study.rows.size() << ", outputs in " << dir << std::endl;
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << std::endl;
        if (!ok) ++failures;
    };

    KernelSpec k22 = make_kernel(2, 2, 5);
    KernelSpec k34 = make_kernel(3, 4, 5);
    check("kernel normalization (d=2)", std::abs(kernel_moment(k22, 0) - 1.0) < 1e-8);
    check("kernel odd moment vanishes", kernel_moment(k22, 1) < 1e-10);
    check("kernel order-4 moment vanishes (d=3)", kernel_moment(k34, 2) < 1e-8);
    check("kernel roughness positive", roughness_RK(k22) > 0);

    GaussianField g2(Vec::Zero(2), 1.0);
    double r = g2.level_radius(0.05);
    Vec x(2);
    x << r, 0.0;
    CurvatureBundle cb = curvature_bundle(deriv_bundle(g2, x));
    check("circle mean curvature 1/r", std::abs(cb.mean - 1.0 / r) < 1e-8);
    check("shape operator annihilates the normal",
          (cb.shape_op * cb.normal).norm() < 1e-10);

    GridSpec grid = grid_from_bounds(Vec::Constant(2, -4.0), Vec::Constant(2, 4.0), 512, 2);
    double per = estimate(g2, Integrand::unity(), 0.05, EstimatorKind::plugin(), grid).value;
    check("circle perimeter within 0.3%", std::abs(per - 2 * M_PI * r) < 0.003 * 2 * M_PI * r);

    GaussianField g3(Vec::Zero(3), 1.0);
    GridSpec grid3 = grid_from_bounds(Vec::Constant(3, -4.0), Vec::Constant(3, 4.0), 96, 3);
    EulerReport er = euler_characteristic(g3, 0.01, EulerMethod::plugin_gb(), grid3);
    check("Gauss-Bonnet sphere snaps to 2",
          er.snapped == 2 && std::abs(er.raw - 2.0) < 0.15);

    if (failures > 0) {
        std::cout << failures << " check(s) failed" << std::endl;
        return 3;
    }
    std::cout << "all checks passed" << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"surface-integral estimation on density level sets"};
    app.require_subcommand(1);

    CommonOpts est_o, cur_o, eul_o, mink_o;
    std::string estimator = "plugin", integrand_str, points_path, method = "plugin";
    double eps = 0.0, tau = -1.0, alpha = 0.0, eul_eps = 0.0;
    std::string sim_config, sim_out;

    auto* est = app.add_subcommand("estimate", "estimate a surface integral");
    add_common(est, est_o);
    est->add_option("--estimator", estimator, "plugin | band | tube");
    est->add_option("--eps", eps, "band/tube half-width (0 = default)")
        ->check(CLI::NonNegativeNumber);
    est->add_option("--tau", tau, "variance band half-width (default: bandwidth)");
    est->add_option("--alpha", alpha, "CI miscoverage level (0 disables the CI)");
    est->add_option("--integrand", integrand_str,
                    "integrand: unity | mean_curvature | gauss_curvature | willmore | JSON");
    std::string mesh_out;
    est->add_option("--mesh-out", mesh_out,
                    "export the level-set mesh (OBJ for d=3, CSV polyline for d=2)");

    auto* cur = app.add_subcommand("curvature", "curvature probe at listed points");
    add_common(cur, cur_o);
    cur->add_option("--points", points_path, "CSV/NDJSON point list")->required();

    auto* eul = app.add_subcommand("euler", "Euler characteristic (d=3)");
    add_common(eul, eul_o);
    eul->add_option("--method", method, "plugin | band | parallel | combinatorial");
    eul->add_option("--eps", eul_eps, "band/tube half-width for band/parallel");

    auto* mink = app.add_subcommand("minkowski", "Minkowski functionals V0..Vd");
    add_common(mink, mink_o);

    auto* sim = app.add_subcommand("simulate", "run a replicated sampling study");
    sim->add_option("--config", sim_config, "study config JSON")->required();
    sim->add_option("--out-dir", sim_out, "output directory (default: cwd)");

    app.add_subcommand("selftest", "run built-in correctness checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (est->parsed()) {
            // config-file values fill in anything the flags left at defaults
            json cfg = load_config(est_o);
            from_cfg(cfg, "input", est_o.input, est, "--input");
            from_cfg(cfg, "field", est_o.field_json, est, "--field");
            from_cfg(cfg, "level", est_o.level, est, "--level");
            from_cfg(cfg, "bandwidth", est_o.bandwidth, est, "--bandwidth");
            from_cfg(cfg, "kernel_order", est_o.kernel_order, est, "--kernel-order");
            from_cfg(cfg, "kernel_smoothness", est_o.kernel_smoothness, est,
                     "--kernel-smoothness");
            from_cfg(cfg, "grid_res", est_o.grid_res, est, "--grid-res");
            from_cfg(cfg, "estimator", estimator, est, "--estimator");
            from_cfg(cfg, "eps", eps, est, "--eps");
            from_cfg(cfg, "tau", tau, est, "--tau");
            from_cfg(cfg, "alpha", alpha, est, "--alpha");
            from_cfg(cfg, "integrand", integrand_str, est, "--integrand");
            resolve_threads(est_o.threads);
            return cmd_estimate(est_o, estimator, eps, tau, alpha, integrand_str,
                                mesh_out);
        }
        if (cur->parsed()) return cmd_curvature(cur_o, points_path);
        if (eul->parsed()) return cmd_euler(eul_o, method, eul_eps);
        if (mink->parsed()) return cmd_minkowski(mink_o);
        if (sim->parsed()) return cmd_simulate(sim_config, sim_out);
        return cmd_selftest();
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << std::endl;
        return 3;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    }
}
