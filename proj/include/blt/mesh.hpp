#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace blt {

using Point = Eigen::Vector2d;

/// Edge on the outer boundary Γ, oriented counterclockwise with respect to its element.
struct BoundaryEdge {
  std::array<int, 2> vertices;
  int element = -1;
  Point normal;  // outward unit normal
  double length = 0.0;
};

/// Area and constant P1 basis gradients of one affine triangle.
struct ElementGeometry {
  double area = 0.0;
  std::array<Point, 3> grad_basis;
};

/// Containing element plus barycentric coordinates of a located point.
struct PointLocation {
  int element = -1;
  std::array<double, 3> bary{};
};

/// Barycentric data of a triangle given by its corners. Throws InvalidArgument
/// for degenerate (zero or negative area) triangles.
ElementGeometry triangle_geometry(const Point& a, const Point& b, const Point& c);

/// Conforming triangulation of the square (-1,1)^2. Immutable after construction.
class TriMesh {
 public:
  TriMesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> elements);

  /// Crisscross triangulation: (n+1)^2 grid vertices, n^2 cell centers, 4n^2 triangles.
  static TriMesh square(int n);

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t element_count() const { return elements_.size(); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const Point& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
  const std::vector<std::array<int, 3>>& elements() const { return elements_; }
  const std::array<int, 3>& element(int e) const { return elements_[static_cast<std::size_t>(e)]; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }

  /// Sorted ids of the vertices lying on Γ.
  const std::vector<int>& boundary_vertices() const { return boundary_vertices_; }
  bool is_boundary_vertex(int i) const { return on_boundary_[static_cast<std::size_t>(i)]; }

  /// Elements sharing an edge with `e`; -1 marks a boundary edge. Entry k is
  /// the neighbour across the edge opposite local vertex k.
  const std::array<int, 3>& neighbors(int e) const { return neighbors_[static_cast<std::size_t>(e)]; }

  /// Elements incident to vertex `i`.
  const std::vector<int>& vertex_elements(int i) const { return vertex_elements_[static_cast<std::size_t>(i)]; }

  ElementGeometry geometry(int e) const;
  double area(int e) const { return geometry_[static_cast<std::size_t>(e)].area; }

  /// Containing element of `x`; ties on shared edges go to the lowest element index.
  /// Throws OutOfDomain when `x` is outside [-1,1]^2.
  PointLocation locate(const Point& x) const;

  double h_min() const { return h_min_; }
  double h_mean() const { return h_mean_; }
  double h_max() const { return h_max_; }

 private:
  void build_topology();
  void build_bins();

  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> elements_;
  std::vector<ElementGeometry> geometry_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<int> boundary_vertices_;
  std::vector<bool> on_boundary_;
  std::vector<std::array<int, 3>> neighbors_;
  std::vector<std::vector<int>> vertex_elements_;

  int bins_per_axis_ = 1;
  std::vector<std::vector<int>> bins_;

  double h_min_ = 0.0;
  double h_mean_ = 0.0;
  double h_max_ = 0.0;
};

/// Named nodal array written as VTK point data.
struct PointDataArray {
  std::string name;
  const Eigen::VectorXd* values;
};

/// Legacy ASCII VTK (UNSTRUCTURED_GRID, triangle cells) with optional point data.
void write_vtk(const std::string& path, const TriMesh& mesh,
               const std::vector<PointDataArray>& point_data = {});

/// Reads the named point-data array back from a file produced by write_vtk.
Eigen::VectorXd read_vtk_point_data(const std::string& path, const std::string& name);

}  // namespace blt
