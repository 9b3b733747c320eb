#include "pfbv/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "pfbv/errors.hpp"

namespace pfbv {

namespace {

int index_of(const std::vector<double>& v, double x, double tol) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (std::abs(v[i] - x) <= tol) return static_cast<int>(i);
  return -1;
}

int count_levels(double coarse_h, double fine_h) {
  int levels = 0;
  while (coarse_h / std::ldexp(1.0, levels + 1) >= fine_h * (1.0 - 1e-12)) ++levels;
  return levels;
}

}  // namespace

const std::vector<int>& Mesh::boundary_set(const std::string& name) const {
  auto it = boundary_sets.find(name);
  if (it == boundary_sets.end()) throw ConfigError("unknown boundary set '" + name + "'");
  return it->second;
}

double Mesh::element_area(int e) const {
  const auto& el = elements[e];
  double a = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Point& p = nodes[el[i]];
    const Point& q = nodes[el[(i + 1) % 4]];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

double Mesh::area() const {
  double a = 0.0;
  for (int e = 0; e < num_elements(); ++e) a += element_area(e);
  return a;
}

std::vector<double> graded_breakpoints(double a, double b, double coarse_h, double fine_h,
                                       double c0, double c1) {
  if (!(b > a)) throw ConfigError("degenerate interval");
  if (!(coarse_h > 0.0) || !(fine_h > 0.0)) throw ConfigError("mesh sizes must be positive");
  if (fine_h > coarse_h * (1.0 + 1e-12)) throw ConfigError("fine_h must not exceed coarse_h");
  if (!(c1 > c0) || c0 < a - 1e-12 * (b - a) || c1 > b + 1e-12 * (b - a))
    throw ConfigError("degenerate refinement band");
  const double cells = (b - a) / coarse_h;
  const long n = std::lround(cells);
  if (n < 1 || std::abs(cells - static_cast<double>(n)) > 1e-9 * std::max(1.0, cells))
    throw ConfigError("non-conforming refinement: length is not a multiple of coarse_h");

  const int levels = count_levels(coarse_h, fine_h);
  const double eps = 1e-12 * coarse_h;
  std::vector<double> pts;
  std::function<void(double, int)> visit = [&](double lo, int l) {
    const double h = coarse_h / std::ldexp(1.0, l);
    const double margin = (levels - 1 - l) * h;
    const bool hit = l < levels && lo < c1 + margin - eps && lo + h > c0 - margin + eps;
    if (hit) {
      visit(lo, l + 1);
      visit(lo + 0.5 * h, l + 1);
    } else {
      pts.push_back(lo);
    }
  };
  for (long i = 0; i < n; ++i) visit(a + static_cast<double>(i) * coarse_h, 0);
  pts.push_back(b);
  return pts;
}

Mesh build_tensor_mesh(const std::vector<double>& xs, const std::vector<double>& ys) {
  Mesh m;
  const int nx = static_cast<int>(xs.size()) - 1;
  const int ny = static_cast<int>(ys.size()) - 1;
  if (nx < 1 || ny < 1) throw ConfigError("tensor mesh needs at least one cell per direction");
  m.nodes.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) m.nodes.push_back({xs[i], ys[j]});
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      m.elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
  return m;
}

Mesh build_ct_mesh(double side_len, double coarse_h, double fine_h, const CtMeshOptions& opts) {
  if (!(side_len > 0.0)) throw ConfigError("side length must be positive");
  RefineBand band = opts.band;
  if (!opts.band_given)
    band = {0.45 * side_len, side_len, 0.45 * side_len, 0.55 * side_len};
  auto xs = graded_breakpoints(0.0, side_len, coarse_h, fine_h, band.x0, band.x1);
  auto ys = graded_breakpoints(0.0, side_len, coarse_h, fine_h, band.y0, band.y1);
  Mesh m = build_tensor_mesh(xs, ys);
  const int nx = static_cast<int>(xs.size()) - 1;
  const int ny = static_cast<int>(ys.size()) - 1;
  auto id = [nx](int i, int j) { return j * (nx + 1) + i; };

  if (opts.notch) {
    const double tol = 1e-9 * side_len;
    const int jm = index_of(ys, 0.5 * side_len, tol);
    const int itip = index_of(xs, opts.notch_length * side_len, tol);
    if (jm < 0) throw ConfigError("notch line y = side/2 is not a mesh line");
    if (itip < 1 || itip >= nx) throw ConfigError("notch tip is not an interior mesh line");
    std::vector<int> dup(itip);
    for (int i = 0; i < itip; ++i) {
      dup[i] = m.num_nodes();
      m.nodes.push_back(m.nodes[id(i, jm)]);
    }
    for (int i = 0; i < itip; ++i) {
      auto& el = m.elements[jm * nx + i];
      el[0] = dup[i];
      if (i + 1 < itip) el[1] = dup[i + 1];
    }
    auto upper = [&](int i) { return i < itip ? dup[i] : id(i, jm); };
    for (int i = 0; i < itip; ++i)
      m.notch_faces.push_back({{id(i, jm), id(i + 1, jm)}, {upper(i), upper(i + 1)}});
  }
  auto& clamped = m.boundary_sets["clamped"];
  auto& loaded = m.boundary_sets["loaded"];
  for (int i = 0; i <= nx; ++i) {
    clamped.push_back(id(i, 0));
    loaded.push_back(id(i, ny));
  }
  return m;
}

Mesh build_lshape_mesh(double leg_len, double coarse_h, double fine_h) {
  if (!(leg_len > 0.0)) throw ConfigError("leg length must be positive");
  const double L = 2.0 * leg_len;
  auto xs = graded_breakpoints(0.0, L, coarse_h, fine_h, 0.6 * leg_len, 1.1 * leg_len);
  auto ys = graded_breakpoints(0.0, L, coarse_h, fine_h, 0.8 * leg_len, 1.2 * leg_len);
  const double tol = 1e-9 * L;
  if (index_of(xs, leg_len, tol) < 0 || index_of(ys, leg_len, tol) < 0)
    throw ConfigError("inner corner is not a mesh line");
  Mesh full = build_tensor_mesh(xs, ys);
  Mesh m;
  std::vector<int> map(full.nodes.size(), -1);
  for (const auto& el : full.elements) {
    double cx = 0.0, cy = 0.0;
    for (int n : el) {
      cx += 0.25 * full.nodes[n].x;
      cy += 0.25 * full.nodes[n].y;
    }
    if (cx > leg_len && cy > leg_len) continue;
    std::array<int, 4> e{};
    for (int a = 0; a < 4; ++a) {
      int& mapped = map[el[a]];
      if (mapped < 0) {
        mapped = m.num_nodes();
        m.nodes.push_back(full.nodes[el[a]]);
      }
      e[a] = mapped;
    }
    m.elements.push_back(e);
  }
  auto& clamped = m.boundary_sets["clamped"];
  auto& loaded = m.boundary_sets["loaded"];
  for (int n = 0; n < m.num_nodes(); ++n) {
    const Point& p = m.nodes[n];
    if (std::abs(p.y) > tol) continue;
    if (p.x <= leg_len + tol) clamped.push_back(n);
    else if (p.x >= L - coarse_h - tol) loaded.push_back(n);
  }
  return m;
}

std::vector<double> norm_quadrature_weights(const Mesh& mesh) {
  static const double g = 1.0 / std::sqrt(3.0);
  std::vector<double> w(mesh.nodes.size(), 0.0);
  for (const auto& el : mesh.elements) {
    for (double xi : {-g, g}) {
      for (double et : {-g, g}) {
        const double N[4] = {0.25 * (1 - xi) * (1 - et), 0.25 * (1 + xi) * (1 - et),
                             0.25 * (1 + xi) * (1 + et), 0.25 * (1 - xi) * (1 + et)};
        const double dxi[4] = {-0.25 * (1 - et), 0.25 * (1 - et), 0.25 * (1 + et), -0.25 * (1 + et)};
        const double det[4] = {-0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi)};
        double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
        for (int a = 0; a < 4; ++a) {
          const Point& p = mesh.nodes[el[a]];
          j11 += dxi[a] * p.x;
          j12 += dxi[a] * p.y;
          j21 += det[a] * p.x;
          j22 += det[a] * p.y;
        }
        const double J = j11 * j22 - j12 * j21;
        if (!(J > 0.0)) throw ConfigError("element with non-positive Jacobian");
        for (int a = 0; a < 4; ++a) w[el[a]] += N[a] * J;
      }
    }
  }
  return w;
}

std::vector<int> nodes_near_segment(const Mesh& mesh, Point a, Point b, double radius) {
  std::vector<int> out;
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const Point& p = mesh.nodes[n];
    double s = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    const double ex = p.x - (a.x + s * dx), ey = p.y - (a.y + s * dy);
    if (ex * ex + ey * ey <= radius * radius) out.push_back(n);
  }
  return out;
}

void write_vtk(std::ostream& os, const Mesh& mesh, const std::vector<VtkField>& point_fields,
               const std::string& title) {
  os.precision(17);
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_nodes() << " double\n";
  for (const auto& p : mesh.nodes) os << p.x << ' ' << p.y << " 0\n";
  os << "CELLS " << mesh.num_elements() << ' ' << 5 * mesh.num_elements() << '\n';
  for (const auto& e : mesh.elements)
    os << "4 " << e[0] << ' ' << e[1] << ' ' << e[2] << ' ' << e[3] << '\n';
  os << "CELL_TYPES " << mesh.num_elements() << '\n';
  for (int e = 0; e < mesh.num_elements(); ++e) os << "9\n";
  if (point_fields.empty()) return;
  os << "POINT_DATA " << mesh.num_nodes() << '\n';
  for (const auto& f : point_fields) {
    const auto& v = *f.values;
    if (static_cast<int>(v.size()) != f.components * mesh.num_nodes())
      throw DimensionError("VTK field '" + f.name + "' has wrong size");
    if (f.components == 1) {
      os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (double x : v) os << x << '\n';
    } else {
      os << "VECTORS " << f.name << " double\n";
      for (int n = 0; n < mesh.num_nodes(); ++n) os << v[2 * n] << ' ' << v[2 * n + 1] << " 0\n";
    }
  }
}

}  // namespace pfbv
