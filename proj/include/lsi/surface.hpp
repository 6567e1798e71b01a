#pragma once

#include <functional>
#include <unordered_map>

#include "lsi/density.hpp"

namespace lsi {

struct GridSpec {
    Vec lower, upper;
    std::array<int, 3> res{64, 64, 1};  // cells per axis; res[2]=1 when d=2

    int dim() const { return static_cast<int>(lower.size()); }
    double step(int axis) const { return (upper(axis) - lower(axis)) / res[axis]; }
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim(); ++a) v *= step(a);
        return v;
    }
    double min_step() const {
        double s = step(0);
        for (int a = 1; a < dim(); ++a) s = std::min(s, step(a));
        return s;
    }
    Vec node(int i, int j, int k = 0) const;  // lattice corner position
    void validate() const;
};

// Bounding box of the sample inflated by 3h, default resolution per d.
GridSpec auto_grid(const SamplePoints& s, double h, int res = 0);
GridSpec grid_from_bounds(const Vec& lower, const Vec& upper, int res, int d);

/// Extracted iso-contour: segments for d=2, triangles for d=3.
struct LevelMesh {
    int dim = 2;
    double level = 0.0;
    std::vector<Vec> vertices;
    std::vector<std::array<int, 3>> cells;  // [a,b,-1] segments or [a,b,c] triangles
    std::vector<double> cell_measures;
    // per-vertex attributes from the field's derivative bundle
    std::vector<Vec> vertex_normals;     // outward unit normal
    std::vector<double> vertex_gradnorm;
    bool boundary_touched = false;  // level set reached the grid boundary

    double total_measure() const;
    Vec bbox_lower() const;
    Vec bbox_upper() const;
};

// level_tol for vertex polish.
inline double level_tolerance(double c) { return 1e-10 * std::max(std::abs(c), 1e-30); }

LevelMesh extract_level_mesh(const DensityField& f, double c, const GridSpec& grid);

double mesh_integral(const LevelMesh& m, const std::function<double(const Vec&)>& phi);

// chi: d=3 closed complex V-E+F; d=2 returns 0 with loop count.
struct EulerResult {
    int chi = 0;
    int loop_count = 0;  // d=2 only
};
EulerResult mesh_euler_characteristic(const LevelMesh& m);

/// Exact point-to-mesh distance with a uniform spatial hash over cells.
class MeshDistance {
public:
    explicit MeshDistance(const LevelMesh& mesh);
    double distance(const Vec& x) const;
    // Distance together with the closest point on the mesh.
    double distance_closest(const Vec& x, Vec& closest) const;
    // True if some mesh point lies within eps of x; exits as soon as one is
    // found, so it is much cheaper than a full distance query.
    bool within(const Vec& x, double eps) const;

private:
    const LevelMesh& mesh_;
    Vec lo_;
    double cell_ = 1.0;
    std::array<int, 3> res_{1, 1, 1};
    std::vector<std::vector<int>> table_;
    int flat(int i, int j, int k) const { return (i * res_[1] + j) * res_[2] + k; }
};

double distance_to_mesh(const LevelMesh& m, const Vec& x);

/// Root of F(x + t u) = c with smallest |t|, u = grad F(x)/|grad F(x)|
/// (the gradient direction; the line is normal to the level set through x).
struct Projection {
    double t = 0.0;
    Vec foot;
};
// t_max <= 0 picks a default search radius: 10h for KDE fields, 1 otherwise.
Projection project_to_level(const DensityField& f, const Vec& x, double c,
                            double t_max = 0.0, double gradient_floor = kGradientFloor);

void write_mesh_obj(const LevelMesh& m, const std::string& path);      // d=3
void write_mesh_csv_polyline(const LevelMesh& m, const std::string& path);  // d=2

}  // namespace lsi
