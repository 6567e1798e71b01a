#include "lsi/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace lsi {

namespace {

// Nodes of the refined lattice (corners, face centers, cube centers) live on a
// doubled integer grid; 21 bits per axis packed into one key.
inline std::uint64_t node_key(int x, int y, int z) {
    return (static_cast<std::uint64_t>(x) << 42) |
           (static_cast<std::uint64_t>(y) << 21) | static_cast<std::uint64_t>(z);
}

struct EdgeKey {
    std::uint64_t a, b;
    bool operator==(const EdgeKey& o) const { return a == o.a && b == o.b; }
};
inline EdgeKey make_edge(std::uint64_t p, std::uint64_t q) {
    return p < q ? EdgeKey{p, q} : EdgeKey{q, p};
}
struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& e) const {
        std::uint64_t h = e.a * 0x9e3779b97f4a7c15ULL;
        h ^= e.b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

struct VertIdxEdge {
    int a, b;
    bool operator==(const VertIdxEdge& o) const { return a == o.a && b == o.b; }
};
struct VertIdxEdgeHash {
    std::size_t operator()(const VertIdxEdge& e) const {
        return std::hash<std::uint64_t>()(
            (static_cast<std::uint64_t>(e.a) << 32) ^ static_cast<std::uint64_t>(e.b));
    }
};

}  // namespace

Vec GridSpec::node(int i, int j, int k) const {
    Vec x(dim());
    x(0) = lower(0) + i * step(0);
    x(1) = lower(1) + j * step(1);
    if (dim() == 3) x(2) = lower(2) + k * step(2);
    return x;
}

void GridSpec::validate() const {
    require(lower.size() == upper.size(), "grid bounds dimension mismatch");
    require(dim() == 2 || dim() == 3, "grid dimension must be 2 or 3");
    for (int a = 0; a < dim(); ++a) {
        require(upper(a) > lower(a), "grid upper bound must exceed lower bound");
        require(res[a] >= 8, "grid resolution must be at least 8 cells per axis");
    }
    if (dim() == 2) require(res[2] == 1, "2-d grid must have res[2] == 1");
}

GridSpec auto_grid(const SamplePoints& s, double h, int res) {
    const int d = s.dim();
    require(d == 2 || d == 3, "samples must be 2-d or 3-d");
    if (res == 0) res = (d == 2) ? 512 : 160;
    GridSpec g;
    g.lower = s.coords.colwise().minCoeff().transpose();
    g.upper = s.coords.colwise().maxCoeff().transpose();
    g.lower.array() -= 3.0 * h;
    g.upper.array() += 3.0 * h;
    g.res = {res, res, d == 3 ? res : 1};
    g.validate();
    return g;
}

GridSpec grid_from_bounds(const Vec& lower, const Vec& upper, int res, int d) {
    GridSpec g;
    g.lower = lower;
    g.upper = upper;
    g.res = {res, res, d == 3 ? res : 1};
    g.validate();
    return g;
}

double LevelMesh::total_measure() const {
    return std::accumulate(cell_measures.begin(), cell_measures.end(), 0.0);
}

Vec LevelMesh::bbox_lower() const {
    require(!vertices.empty(), "empty mesh has no bounding box");
    Vec lo = vertices[0];
    for (const auto& v : vertices) lo = lo.cwiseMin(v);
    return lo;
}

Vec LevelMesh::bbox_upper() const {
    require(!vertices.empty(), "empty mesh has no bounding box");
    Vec hi = vertices[0];
    for (const auto& v : vertices) hi = hi.cwiseMax(v);
    return hi;
}

namespace {

// Root of F - c on the segment [p, q]; F(p) - c and F(q) - c must not share a
// strict sign.  Bisection narrows the bracket, then Newton steps along the
// segment polish the root to level_tolerance(c).
Vec edge_root(const DensityField& f, double c, const Vec& p, double fp,
              const Vec& q, double fq) {
    double ta = 0.0, tb = 1.0;
    double fa = fp - c, fb = fq - c;
    if (fa == 0.0) return p;
    if (fb == 0.0) return q;
    require((fa > 0) != (fb > 0), "edge endpoints do not bracket the level");
    const Vec dir = q - p;
    double tm = 0.5, fm = 0.0;
    for (int it = 0; it < 60; ++it) {
        tm = 0.5 * (ta + tb);
        fm = f.value(p + tm * dir) - c;
        if (fm == 0.0) break;
        if ((fm > 0) == (fa > 0)) { ta = tm; fa = fm; }
        else { tb = tm; fb = fm; }
        if (tb - ta < 1e-6) break;
    }
    const double tol = level_tolerance(c);
    double t = tm;
    for (int it = 0; it < 40; ++it) {
        Vec x = p + t * dir;
        double v = f.value(x) - c;
        if (std::abs(v) <= tol) break;
        double slope = f.gradient(x).dot(dir);
        if (slope == 0.0) break;
        double tn = t - v / slope;
        if (tn < ta || tn > tb) {  // fall back to bisection inside the bracket
            tn = 0.5 * (ta + tb);
        }
        double vn = f.value(p + tn * dir) - c;
        if ((vn > 0) == (fa > 0)) ta = tn; else tb = tn;
        t = tn;
    }
    return p + t * dir;
}

struct MeshBuilder {
    const DensityField& f;
    double c;
    LevelMesh& mesh;
    std::unordered_map<EdgeKey, int, EdgeKeyHash> edge_vertex;
    // positions and values of refined-lattice nodes seen so far
    std::unordered_map<std::uint64_t, double> node_value;

    int vertex_on_edge(std::uint64_t ka, const Vec& pa, double fa,
                       std::uint64_t kb, const Vec& pb, double fb) {
        EdgeKey key = make_edge(ka, kb);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        Vec v = edge_root(f, c, pa, fa, pb, fb);
        int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(v);
        DerivBundle b = deriv_bundle(f, v);
        mesh.vertex_gradnorm.push_back(b.grad_norm);
        Vec nrm = b.degenerate ? Vec(Vec::Zero(v.size()))
                               : Vec(-b.grad / b.grad_norm);
        mesh.vertex_normals.push_back(nrm);
        edge_vertex.emplace(key, idx);
        return idx;
    }
};

inline bool sign_pos(double fv, double c) { return fv > c; }

// ---------------------------------------------------------------- d = 2 ----

void extract_2d(const DensityField& f, double c, const GridSpec& grid, LevelMesh& mesh) {
    const int nx = grid.res[0], ny = grid.res[1];
    std::vector<double> F(static_cast<std::size_t>(nx + 1) * (ny + 1));
    std::vector<Vec> P(F.size());
    auto idx = [&](int i, int j) { return static_cast<std::size_t>(i) * (ny + 1) + j; };
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= ny; ++j) {
            P[idx(i, j)] = grid.node(i, j);
            F[idx(i, j)] = f.value(P[idx(i, j)]);
        }

    MeshBuilder mb{f, c, mesh, {}, {}};
    auto key = [](int i, int j) { return node_key(2 * i, 2 * j, 0); };

    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j) {
            // corners in cyclic order: (i,j), (i+1,j), (i+1,j+1), (i,j+1)
            const int ci[4] = {i, i + 1, i + 1, i};
            const int cj[4] = {j, j, j + 1, j + 1};
            double fv[4];
            bool sp[4];
            int code = 0;
            for (int k = 0; k < 4; ++k) {
                fv[k] = F[idx(ci[k], cj[k])];
                sp[k] = sign_pos(fv[k], c);
                if (sp[k]) code |= (1 << k);
            }
            if (code == 0 || code == 15) continue;
            if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) mesh.boundary_touched = true;

            // crossing vertex on cyclic edge k: corners k, k+1
            int ev[4] = {-1, -1, -1, -1};
            for (int k = 0; k < 4; ++k) {
                int k2 = (k + 1) % 4;
                if (sp[k] != sp[k2])
                    ev[k] = mb.vertex_on_edge(key(ci[k], cj[k]), P[idx(ci[k], cj[k])], fv[k],
                                              key(ci[k2], cj[k2]), P[idx(ci[k2], cj[k2])], fv[k2]);
            }

            auto emit = [&](int a, int b) {
                mesh.cells.push_back({a, b, -1});
                mesh.cell_measures.push_back((mesh.vertices[a] - mesh.vertices[b]).norm());
            };

            if (code == 5 || code == 10) {
                // opposite corners share a sign; the cell-center value picks the pairing
                Vec center = 0.25 * (P[idx(ci[0], cj[0])] + P[idx(ci[1], cj[1])] +
                                     P[idx(ci[2], cj[2])] + P[idx(ci[3], cj[3])]);
                bool center_pos = sign_pos(f.value(center), c);
                // code 5: corners 0,2 positive.  If the center is positive the
                // positive corners connect diagonally and the contour hugs the
                // negative corners 1 and 3; otherwise it hugs corners 0 and 2.
                bool hug_13 = (code == 5) ? center_pos : !center_pos;
                if (hug_13) { emit(ev[0], ev[1]); emit(ev[2], ev[3]); }
                else { emit(ev[3], ev[0]); emit(ev[1], ev[2]); }
            } else {
                int got[4], m = 0;
                for (int k = 0; k < 4; ++k)
                    if (ev[k] >= 0) got[m++] = ev[k];
                require(m == 2, "marching squares: unexpected crossing count");
                emit(got[0], got[1]);
            }
        }
}

// ---------------------------------------------------------------- d = 3 ----

// Each cube splits into 24 tetrahedra: (cube center, face center, face edge).
// Iso-triangles are extracted per tetrahedron; shared tet edges weld through
// the refined-lattice edge keys, so the result is watertight.  Cells are
// processed from a queue: a cell enters when its corner signs are mixed, or
// when a neighbour finds a face-center sign flip on the shared face.
void extract_3d(const DensityField& f, double c, const GridSpec& grid, LevelMesh& mesh) {
    const int nx = grid.res[0], ny = grid.res[1], nz = grid.res[2];
    std::vector<double> F(static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1));
    auto idx = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(i) * (ny + 1) + j) * (nz + 1) + k;
    };
    for (int i = 0; i <= nx; ++i)
        for (int j = 0; j <= ny; ++j)
            for (int k = 0; k <= nz; ++k) F[idx(i, j, k)] = f.value(grid.node(i, j, k));

    MeshBuilder mb{f, c, mesh, {}, {}};

    // refined-lattice node helpers (doubled coordinates)
    auto pos_of = [&](int X, int Y, int Z) {
        Vec x(3);
        x(0) = grid.lower(0) + 0.5 * X * grid.step(0);
        x(1) = grid.lower(1) + 0.5 * Y * grid.step(1);
        x(2) = grid.lower(2) + 0.5 * Z * grid.step(2);
        return x;
    };
    auto value_of = [&](int X, int Y, int Z) {
        if (!(X & 1) && !(Y & 1) && !(Z & 1)) return F[idx(X / 2, Y / 2, Z / 2)];
        std::uint64_t k = node_key(X, Y, Z);
        auto it = mb.node_value.find(k);
        if (it != mb.node_value.end()) return it->second;
        double v = f.value(pos_of(X, Y, Z));
        mb.node_value.emplace(k, v);
        return v;
    };

    auto cell_flat = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(i) * ny + j) * nz + k;
    };
    std::vector<char> queued(static_cast<std::size_t>(nx) * ny * nz, 0);
    std::deque<std::array<int, 3>> work;
    auto push_cell = [&](int i, int j, int k) {
        if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) return;
        auto& q = queued[cell_flat(i, j, k)];
        if (q) return;
        q = 1;
        work.push_back({i, j, k});
    };

    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            for (int k = 0; k < nz; ++k) {
                bool any = false, all = true;
                for (int di = 0; di < 2 && (!any || all); ++di)
                    for (int dj = 0; dj < 2; ++dj)
                        for (int dk = 0; dk < 2; ++dk) {
                            bool s = sign_pos(F[idx(i + di, j + dj, k + dk)], c);
                            any = any || s;
                            all = all && s;
                        }
                if (any && !all) push_cell(i, j, k);
            }

    struct Node {
        int X, Y, Z;
        double val;
        bool pos;
    };
    auto get = [&](int X, int Y, int Z) {
        double v = value_of(X, Y, Z);
        return Node{X, Y, Z, v, sign_pos(v, c)};
    };

    auto tri_measure = [&](int a, int b, int cc) {
        Eigen::Vector3d u = mesh.vertices[b] - mesh.vertices[a];
        Eigen::Vector3d v = mesh.vertices[cc] - mesh.vertices[a];
        return 0.5 * u.cross(v).norm();
    };
    auto emit_tri = [&](int a, int b, int cc) {
        if (a == b || b == cc || a == cc) return;  // degenerate (root hit a shared node)
        mesh.cells.push_back({a, b, cc});
        mesh.cell_measures.push_back(tri_measure(a, b, cc));
    };
    auto cross_vertex = [&](const Node& a, const Node& b) {
        return mb.vertex_on_edge(node_key(a.X, a.Y, a.Z), pos_of(a.X, a.Y, a.Z), a.val,
                                 node_key(b.X, b.Y, b.Z), pos_of(b.X, b.Y, b.Z), b.val);
    };
    auto do_tet = [&](const Node& t0, const Node& t1, const Node& t2, const Node& t3) {
        const Node* v[4] = {&t0, &t1, &t2, &t3};
        int p = 0;
        for (auto* nd : v) p += nd->pos;
        if (p == 0 || p == 4) return;
        if (p == 1 || p == 3) {
            int lone = -1;
            for (int m = 0; m < 4; ++m)
                if (v[m]->pos == (p == 1)) lone = m;
            int a = cross_vertex(*v[lone], *v[(lone + 1) % 4]);
            int b = cross_vertex(*v[lone], *v[(lone + 2) % 4]);
            int cc = cross_vertex(*v[lone], *v[(lone + 3) % 4]);
            emit_tri(a, b, cc);
        } else {
            int P[2], N[2], np = 0, nn = 0;
            for (int m = 0; m < 4; ++m)
                (v[m]->pos ? P[np++] : N[nn++]) = m;
            int a = cross_vertex(*v[P[0]], *v[N[0]]);
            int b = cross_vertex(*v[P[0]], *v[N[1]]);
            int cc = cross_vertex(*v[P[1]], *v[N[1]]);
            int dd = cross_vertex(*v[P[1]], *v[N[0]]);
            emit_tri(a, b, cc);
            emit_tri(a, cc, dd);
        }
    };

    // face -> (axis, side); face corners and edges enumerated on the doubled grid
    while (!work.empty()) {
        auto [i, j, k] = work.front();
        work.pop_front();
        if (i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1)
            mesh.boundary_touched = true;

        const int X0 = 2 * i, Y0 = 2 * j, Z0 = 2 * k;
        Node center = get(X0 + 1, Y0 + 1, Z0 + 1);

        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                int base[3] = {X0, Y0, Z0};
                base[axis] += 2 * side;
                int u = (axis + 1) % 3, w = (axis + 2) % 3;
                int fc[3] = {base[0], base[1], base[2]};
                fc[u] += 1;
                fc[w] += 1;
                Node face = get(fc[0], fc[1], fc[2]);

                // 4 face corners in cyclic order
                Node corner[4];
                const int du[4] = {0, 2, 2, 0}, dw[4] = {0, 0, 2, 2};
                bool face_uniform_corners = true;
                for (int m = 0; m < 4; ++m) {
                    int p2[3] = {base[0], base[1], base[2]};
                    p2[u] += du[m];
                    p2[w] += dw[m];
                    corner[m] = get(p2[0], p2[1], p2[2]);
                    if (corner[m].pos != corner[0].pos) face_uniform_corners = false;
                }
                if (face_uniform_corners && face.pos != corner[0].pos) {
                    // the neighbour across this face would otherwise be skipped
                    int ni = i, nj = j, nk = k;
                    int delta = side == 0 ? -1 : 1;
                    if (axis == 0) ni += delta;
                    if (axis == 1) nj += delta;
                    if (axis == 2) nk += delta;
                    push_cell(ni, nj, nk);
                }
                for (int m = 0; m < 4; ++m)
                    do_tet(center, face, corner[m], corner[(m + 1) % 4]);
            }
    }
}

}  // namespace

LevelMesh extract_level_mesh(const DensityField& f, double c, const GridSpec& grid) {
    grid.validate();
    require(grid.dim() == f.dim(), "grid / field dimension mismatch");
    LevelMesh mesh;
    mesh.dim = f.dim();
    mesh.level = c;
    if (f.dim() == 2) extract_2d(f, c, grid, mesh);
    else extract_3d(f, c, grid, mesh);
    if (mesh.vertices.empty() || mesh.cells.empty())
        throw NumericalError("level not bracketed on grid: empty level set");
    return mesh;
}

double mesh_integral(const LevelMesh& m, const std::function<double(const Vec&)>& phi) {
    std::vector<double> vals(m.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i) vals[i] = phi(m.vertices[i]);
    double total = 0.0;
    const int nv = m.dim == 2 ? 2 : 3;
    for (std::size_t cidx = 0; cidx < m.cells.size(); ++cidx) {
        double avg = 0.0;
        for (int a = 0; a < nv; ++a) avg += vals[m.cells[cidx][a]];
        total += m.cell_measures[cidx] * avg / nv;
    }
    return total;
}

EulerResult mesh_euler_characteristic(const LevelMesh& m) {
    EulerResult r;
    if (m.dim == 2) {
        // closed 1-manifold: chi = 0; count connected loops via union-find
        r.chi = 0;
        std::vector<int> parent(m.vertices.size());
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int a) {
            while (parent[a] != a) a = parent[a] = parent[parent[a]];
            return a;
        };
        std::vector<char> used(m.vertices.size(), 0);
        for (const auto& cell : m.cells) {
            used[cell[0]] = used[cell[1]] = 1;
            parent[find(cell[0])] = find(cell[1]);
        }
        std::unordered_set<int> roots;
        for (std::size_t i = 0; i < m.vertices.size(); ++i)
            if (used[i]) roots.insert(find(static_cast<int>(i)));
        r.loop_count = static_cast<int>(roots.size());
        return r;
    }
    std::unordered_map<VertIdxEdge, int, VertIdxEdgeHash> edge_count;
    std::vector<char> used(m.vertices.size(), 0);
    for (const auto& tri : m.cells) {
        for (int a = 0; a < 3; ++a) {
            int p = tri[a], q = tri[(a + 1) % 3];
            used[p] = 1;
            edge_count[{std::min(p, q), std::max(p, q)}]++;
        }
    }
    for (const auto& [e, cnt] : edge_count)
        require(cnt == 2, "mesh is not a closed 2-manifold: edge shared by " +
                              std::to_string(cnt) + " triangles");
    long V = std::count(used.begin(), used.end(), 1);
    long E = static_cast<long>(edge_count.size());
    long Fc = static_cast<long>(m.cells.size());
    r.chi = static_cast<int>(V - E + Fc);
    return r;
}

// ---------------------------------------------------------------- distance --

namespace {

double point_segment_dist2(const Vec& x, const Vec& a, const Vec& b) {
    Vec ab = b - a;
    double den = ab.squaredNorm();
    double t = den > 0 ? std::clamp((x - a).dot(ab) / den, 0.0, 1.0) : 0.0;
    return (x - (a + t * ab)).squaredNorm();
}

Vec point_segment_closest(const Vec& x, const Vec& a, const Vec& b) {
    Vec ab = b - a;
    double den = ab.squaredNorm();
    double t = den > 0 ? std::clamp((x - a).dot(ab) / den, 0.0, 1.0) : 0.0;
    return a + t * ab;
}

// closest point on triangle abc (Ericson, Real-Time Collision Detection)
Vec point_triangle_closest(const Vec& p, const Vec& a, const Vec& b, const Vec& c) {
    Vec ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    Vec bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
    Vec cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
    double den = va + vb + vc;
    if (den <= 0) return a;  // degenerate triangle: fall back to a vertex
    return a + (vb / den) * ab + (vc / den) * ac;
}

}  // namespace

MeshDistance::MeshDistance(const LevelMesh& mesh) : mesh_(mesh) {
    require(!mesh.cells.empty(), "cannot build distance query over an empty mesh");
    Vec lo = mesh.bbox_lower(), hi = mesh.bbox_upper();
    const int d = mesh.dim;
    double extent = (hi - lo).maxCoeff();
    if (extent <= 0) extent = 1.0;
    int target = d == 2 ? 256 : 64;
    cell_ = extent / target;
    lo_ = lo;
    for (int a = 0; a < 3; ++a) res_[a] = 1;
    for (int a = 0; a < d; ++a)
        res_[a] = std::max(1, static_cast<int>(std::ceil((hi(a) - lo(a)) / cell_)) + 1);
    table_.assign(static_cast<std::size_t>(res_[0]) * res_[1] * res_[2], {});

    auto bin = [&](double v, int axis) {
        return std::clamp(static_cast<int>(std::floor((v - lo_(axis)) / cell_)), 0,
                          res_[axis] - 1);
    };
    const int nv = d == 2 ? 2 : 3;
    for (std::size_t cidx = 0; cidx < mesh.cells.size(); ++cidx) {
        Vec clo = mesh.vertices[mesh.cells[cidx][0]];
        Vec chi = clo;
        for (int a = 1; a < nv; ++a) {
            clo = clo.cwiseMin(mesh.vertices[mesh.cells[cidx][a]]);
            chi = chi.cwiseMax(mesh.vertices[mesh.cells[cidx][a]]);
        }
        int i0 = bin(clo(0), 0), i1 = bin(chi(0), 0);
        int j0 = bin(clo(1), 1), j1 = bin(chi(1), 1);
        int k0 = 0, k1 = 0;
        if (d == 3) { k0 = bin(clo(2), 2); k1 = bin(chi(2), 2); }
        for (int i = i0; i <= i1; ++i)
            for (int j = j0; j <= j1; ++j)
                for (int k = k0; k <= k1; ++k)
                    table_[flat(i, j, k)].push_back(static_cast<int>(cidx));
    }
}

double MeshDistance::distance_closest(const Vec& x, Vec& closest) const {
    const int d = mesh_.dim;
    auto bin = [&](double v, int axis) {
        return std::clamp(static_cast<int>(std::floor((v - lo_(axis)) / cell_)), 0,
                          res_[axis] - 1);
    };
    int ci = bin(x(0), 0), cj = bin(x(1), 1), ck = d == 3 ? bin(x(2), 2) : 0;

    double best2 = std::numeric_limits<double>::infinity();
    Vec bestp;
    auto scan_cell = [&](int i, int j, int k) {
        for (int cidx : table_[flat(i, j, k)]) {
            const auto& cell = mesh_.cells[cidx];
            Vec cp;
            if (d == 2)
                cp = point_segment_closest(x, mesh_.vertices[cell[0]], mesh_.vertices[cell[1]]);
            else
                cp = point_triangle_closest(x, mesh_.vertices[cell[0]],
                                            mesh_.vertices[cell[1]], mesh_.vertices[cell[2]]);
            double dd = (x - cp).squaredNorm();
            if (dd < best2) { best2 = dd; bestp = cp; }
        }
    };

    int max_ring = 0;
    for (int a = 0; a < d; ++a) max_ring = std::max(max_ring, res_[a]);
    for (int ring = 0; ring <= max_ring; ++ring) {
        // once a hit exists, stop when the ring can no longer contain anything closer
        if (std::isfinite(best2)) {
            double lower = (ring - 1) * cell_;
            if (lower > 0 && lower * lower > best2) break;
        }
        for (int i = ci - ring; i <= ci + ring; ++i) {
            if (i < 0 || i >= res_[0]) continue;
            for (int j = cj - ring; j <= cj + ring; ++j) {
                if (j < 0 || j >= res_[1]) continue;
                int kmin = d == 3 ? ck - ring : 0, kmax = d == 3 ? ck + ring : 0;
                for (int k = kmin; k <= kmax; ++k) {
                    if (k < 0 || k >= res_[2]) continue;
                    int ring_dist = std::max({std::abs(i - ci), std::abs(j - cj),
                                              std::abs(k - ck)});
                    if (ring_dist != ring) continue;  // shell only
                    scan_cell(i, j, k);
                }
            }
        }
    }
    require(std::isfinite(best2), "distance query found no mesh cells");
    closest = bestp;
    return std::sqrt(best2);
}

bool MeshDistance::within(const Vec& x, double eps) const {
    const int d = mesh_.dim;
    auto bin = [&](double v, int axis) {
        return std::clamp(static_cast<int>(std::floor((v - lo_(axis)) / cell_)), 0,
                          res_[axis] - 1);
    };
    int ci = bin(x(0), 0), cj = bin(x(1), 1), ck = d == 3 ? bin(x(2), 2) : 0;
    const double eps2 = eps * eps;
    const int cap = static_cast<int>(std::ceil(eps / cell_)) + 1;

    auto hit = [&](int i, int j, int k) {
        for (int cidx : table_[flat(i, j, k)]) {
            const auto& cell = mesh_.cells[cidx];
            Vec cp;
            if (d == 2)
                cp = point_segment_closest(x, mesh_.vertices[cell[0]], mesh_.vertices[cell[1]]);
            else
                cp = point_triangle_closest(x, mesh_.vertices[cell[0]],
                                            mesh_.vertices[cell[1]], mesh_.vertices[cell[2]]);
            if ((x - cp).squaredNorm() <= eps2) return true;
        }
        return false;
    };

    for (int ring = 0; ring <= cap; ++ring) {
        if ((ring - 1) * cell_ > eps) break;
        for (int i = std::max(0, ci - ring); i <= std::min(res_[0] - 1, ci + ring); ++i) {
            bool iface = (i == ci - ring || i == ci + ring);
            for (int j = std::max(0, cj - ring); j <= std::min(res_[1] - 1, cj + ring); ++j) {
                bool jface = (j == cj - ring || j == cj + ring);
                int kmin = d == 3 ? ck - ring : 0, kmax = d == 3 ? ck + ring : 0;
                for (int k = std::max(0, kmin); k <= std::min(res_[2] - 1, kmax); ++k) {
                    bool kface = d == 3 && (k == ck - ring || k == ck + ring);
                    if (ring > 0 && !iface && !jface && !kface)
                        continue;  // interior of the ring, already visited
                    if (hit(i, j, k)) return true;
                }
            }
        }
    }
    return false;
}

double MeshDistance::distance(const Vec& x) const {
    Vec tmp;
    return distance_closest(x, tmp);
}

double distance_to_mesh(const LevelMesh& m, const Vec& x) {
    return MeshDistance(m).distance(x);
}

// ---------------------------------------------------------------- project --

Projection project_to_level(const DensityField& f, const Vec& x, double c,
                            double t_max, double gradient_floor) {
    if (t_max <= 0) {
        const auto* kde = dynamic_cast<const KdeField*>(&f);
        t_max = kde ? 10.0 * kde->bandwidth() : 1.0;
    }
    DerivBundle b0 = deriv_bundle(f, x, gradient_floor);
    require(!b0.degenerate, "gradient too small to define a projection direction");
    Vec u = b0.grad / b0.grad_norm;

    auto g = [&](double t) { return f.value(x + t * u) - c; };
    double g0 = g(0.0);
    if (g0 == 0.0) return {0.0, x};

    // expand outward in both directions, keeping the bracket with smallest |t|
    const int steps = 64;
    const double dt = t_max / steps;
    double ta = 0.0, tb = 0.0;
    bool found = false;
    double prev_pos = g0, prev_neg = g0;
    for (int k = 1; k <= steps && !found; ++k) {
        double tp = k * dt, gp = g(tp);
        if ((gp > 0) != (prev_pos > 0) || gp == 0.0) {
            ta = (k - 1) * dt; tb = tp; found = true; break;
        }
        prev_pos = gp;
        double tn = -k * dt, gn = g(tn);
        if ((gn > 0) != (prev_neg > 0) || gn == 0.0) {
            ta = tn; tb = -(k - 1) * dt; found = true; break;
        }
        prev_neg = gn;
    }
    if (!found)
        throw NumericalError("projection: level " + std::to_string(c) +
                             " not bracketed within search radius");

    double fa = g(ta), fb = g(tb);
    double t = 0.5 * (ta + tb);
    for (int it = 0; it < 80; ++it) {
        t = 0.5 * (ta + tb);
        double ft = g(t);
        if (std::abs(ft) <= level_tolerance(c)) break;
        if ((ft > 0) == (fa > 0)) { ta = t; fa = ft; }
        else { tb = t; fb = ft; }
    }
    // Newton polish along the line
    for (int it = 0; it < 20; ++it) {
        Vec xt = x + t * u;
        double v = f.value(xt) - c;
        if (std::abs(v) <= level_tolerance(c)) break;
        double slope = f.gradient(xt).dot(u);
        if (slope == 0.0) break;
        t -= v / slope;
    }
    return {t, x + t * u};
}

// ---------------------------------------------------------------- export ---

void write_mesh_obj(const LevelMesh& m, const std::string& path) {
    require(m.dim == 3, "OBJ export requires a triangle mesh");
    std::ofstream out(path);
    require(out.good(), "cannot open " + path + " for writing");
    out.precision(12);
    for (const auto& v : m.vertices) out << "v " << v(0) << ' ' << v(1) << ' ' << v(2) << '\n';
    for (const auto& t : m.cells)
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void write_mesh_csv_polyline(const LevelMesh& m, const std::string& path) {
    require(m.dim == 2, "CSV polyline export requires a segment mesh");
    std::ofstream out(path);
    require(out.good(), "cannot open " + path + " for writing");
    out.precision(12);
    out << "x0,y0,x1,y1\n";
    for (const auto& s : m.cells) {
        const Vec& a = m.vertices[s[0]];
        const Vec& b = m.vertices[s[1]];
        out << a(0) << ',' << a(1) << ',' << b(0) << ',' << b(1) << '\n';
    }
}

}  // namespace lsi
