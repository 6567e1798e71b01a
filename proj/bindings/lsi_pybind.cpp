#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lsi/montecarlo.hpp"

namespace py = pybind11;
using namespace lsi;

namespace {

struct KdeHandle {
    std::shared_ptr<KdeField> field;
    double bandwidth;
};

KdeHandle build_kde(const Mat& points, double bandwidth, int kernel_order,
                    int kernel_smoothness) {
    auto sample = std::make_shared<SamplePoints>(SamplePoints{points});
    double h = bandwidth > 0 ? bandwidth : default_bandwidth(*sample);
    KernelSpec k = make_kernel(sample->dim(), kernel_order, kernel_smoothness);
    return {std::make_shared<KdeField>(sample, h, k), h};
}

GridSpec grid_for(const DensityField& f, const SamplePoints* sample, double h,
                  int grid_res) {
    if (sample) return auto_grid(*sample, h, grid_res);
    int d = f.dim();
    int res = grid_res > 0 ? grid_res : (d == 2 ? 512 : 160);
    return grid_from_bounds(Vec::Constant(d, -4.0), Vec::Constant(d, 4.0), res, d);
}

py::dict report_dict(const EstimateReport& r) {
    py::dict d;
    d["estimator"] = r.kind.name();
    d["eps"] = r.kind.eps;
    d["value"] = r.value;
    d["level"] = r.level;
    d["bandwidth"] = r.bandwidth;
    d["n"] = r.n;
    if (r.std_err) d["std_err"] = *r.std_err;
    if (r.ci) {
        d["ci_lo"] = r.ci->first;
        d["ci_hi"] = r.ci->second;
    }
    d["mesh_measure"] = r.diagnostics.mesh_measure;
    d["min_grad_on_mesh"] = r.diagnostics.min_grad_on_mesh;
    return d;
}

EstimatorKind kind_of(const std::string& name, double eps) {
    if (name == "plugin") return EstimatorKind::plugin();
    if (name == "band") return EstimatorKind::band(eps);
    if (name == "tube") return EstimatorKind::tube(eps);
    throw InvalidArgument("unknown estimator: " + name);
}

}  // namespace

PYBIND11_MODULE(_lsi, m) {
    m.doc() = "surface-integral estimation on density level sets";

    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    m.def("default_bandwidth",
          [](const Mat& points) { return default_bandwidth(SamplePoints{points}); },
          py::arg("points"));

    m.def("gaussian_level_radius",
          [](double c, int d) {
              return GaussianField(Vec::Zero(d), 1.0).level_radius(c);
          },
          py::arg("level"), py::arg("dim") = 2,
          "radius of the standard Gaussian's level-c sphere");

    m.def("estimate",
          [](const Mat& points, double level, const std::string& estimator, double eps,
             double bandwidth, int grid_res, int kernel_order, int kernel_smoothness,
             const std::string& integrand, double alpha, double tau) {
              KdeHandle kde = build_kde(points, bandwidth, kernel_order, kernel_smoothness);
              GridSpec grid = grid_for(*kde.field, &kde.field->sample(), kde.bandwidth,
                                       grid_res);
              Integrand g = integrand.empty() || integrand == "unity"
                                ? Integrand::unity()
                                : Integrand::phi(PhiExpr::from_json(integrand));
              EstimatorKind kind = kind_of(
                  estimator,
                  eps > 0 ? eps
                          : (estimator == "band" ? default_band_eps(*kde.field, level, grid)
                                                 : default_tube_eps(grid)));
              EstimateReport rep = estimate(*kde.field, g, level, kind, grid);
              if (alpha > 0 && alpha < 1) {
                  double t = tau >= 0 ? tau : kde.bandwidth;
                  double s2 = variance_hat(*kde.field, g, level, t, grid,
                                           kde.field->kernel());
                  rep = confidence_interval(rep, s2, alpha, kde.bandwidth);
              }
              return report_dict(rep);
          },
          py::arg("points"), py::arg("level"), py::arg("estimator") = "plugin",
          py::arg("eps") = 0.0, py::arg("bandwidth") = 0.0, py::arg("grid_res") = 0,
          py::arg("kernel_order") = 2, py::arg("kernel_smoothness") = 5,
          py::arg("integrand") = "unity", py::arg("alpha") = 0.0, py::arg("tau") = -1.0,
          "KDE-based surface-integral estimate over the level set");

    m.def("estimate_gaussian",
          [](int dim, double level, const std::string& integrand, int grid_res) {
              GaussianField f(Vec::Zero(dim), 1.0);
              GridSpec grid = grid_for(f, nullptr, 0.0, grid_res);
              Integrand g = integrand.empty() || integrand == "unity"
                                ? Integrand::unity()
                                : Integrand::phi(PhiExpr::from_json(integrand));
              return report_dict(
                  estimate(f, g, level, EstimatorKind::plugin(), grid));
          },
          py::arg("dim"), py::arg("level"), py::arg("integrand") = "unity",
          py::arg("grid_res") = 0,
          "analytic-Gaussian reference estimate (oracle path)");

    m.def("minkowski",
          [](const Mat& points, double level, double bandwidth, int grid_res) {
              KdeHandle kde = build_kde(points, bandwidth, 2, 5);
              GridSpec grid = grid_for(*kde.field, &kde.field->sample(), kde.bandwidth,
                                       grid_res);
              Vec V = minkowski_functionals(*kde.field, level, grid);
              return std::vector<double>(V.data(), V.data() + V.size());
          },
          py::arg("points"), py::arg("level"), py::arg("bandwidth") = 0.0,
          py::arg("grid_res") = 0, "Minkowski functionals V0..Vd of the super level set");

    m.def("euler_characteristic",
          [](const Mat& points, double level, double bandwidth, int grid_res,
             const std::string& method) {
              KdeHandle kde = build_kde(points, bandwidth, 2, 5);
              GridSpec grid = grid_for(*kde.field, &kde.field->sample(), kde.bandwidth,
                                       grid_res);
              EulerMethod em = method == "combinatorial" ? EulerMethod::combinatorial()
                                                         : EulerMethod::plugin_gb();
              EulerReport er = euler_characteristic(*kde.field, level, em, grid);
              py::dict d;
              d["raw"] = er.raw;
              d["snapped"] = er.snapped;
              return d;
          },
          py::arg("points"), py::arg("level"), py::arg("bandwidth") = 0.0,
          py::arg("grid_res") = 0, py::arg("method") = "plugin");

    m.def("sample_gaussian",
          [](int n, int dim, std::uint64_t seed) {
              return GaussianField(Vec::Zero(dim), 1.0).sample(n, seed).coords;
          },
          py::arg("n"), py::arg("dim") = 2, py::arg("seed") = 1,
          "deterministic standard-Gaussian sample");
}
