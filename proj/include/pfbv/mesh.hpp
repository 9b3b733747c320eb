#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pfbv {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Rectangular refinement region [x0,x1] x [y0,y1].
struct RefineBand {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
};

/// Two coincident edges on either side of the slit: lower (a,b) and upper (a,b).
struct NotchFace {
  std::array<int, 2> lower;
  std::array<int, 2> upper;
};

struct Mesh {
  std::vector<Point> nodes;
  std::vector<std::array<int, 4>> elements;  // counter-clockwise
  std::map<std::string, std::vector<int>> boundary_sets;
  std::vector<NotchFace> notch_faces;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  const std::vector<int>& boundary_set(const std::string& name) const;
  double area() const;
  double element_area(int e) const;
};

/// Graded 1D breakpoints on [a,b]: uniform coarse cells, bisected near [c0,c1].
std::vector<double> graded_breakpoints(double a, double b, double coarse_h, double fine_h,
                                       double c0, double c1);

Mesh build_tensor_mesh(const std::vector<double>& xs, const std::vector<double>& ys);

struct CtMeshOptions {
  bool notch = true;
  double notch_length = 0.5;  // fraction of side
  bool band_given = false;
  RefineBand band;  // absolute coordinates; default derived from side
};

Mesh build_ct_mesh(double side_len, double coarse_h, double fine_h,
                   const CtMeshOptions& opts = {});

Mesh build_lshape_mesh(double leg_len, double coarse_h, double fine_h);

/// Row sums of the consistent mass matrix (integral of each shape function).
std::vector<double> norm_quadrature_weights(const Mesh& mesh);

/// Nodes whose damage should start at zero (initial-damage notch alternative).
std::vector<int> nodes_near_segment(const Mesh& mesh, Point a, Point b, double radius);

struct VtkField {
  std::string name;
  int components = 1;  // 1 or 2 (2 is padded to 3 in the file)
  const std::vector<double>* values = nullptr;
};

void write_vtk(std::ostream& os, const Mesh& mesh, const std::vector<VtkField>& point_fields,
               const std::string& title = "pfbv");

}  // namespace pfbv
