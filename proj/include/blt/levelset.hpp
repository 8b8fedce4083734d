#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "blt/fem.hpp"
#include "blt/mesh.hpp"

namespace blt {

struct Disk {
  Point center{0.0, 0.0};
  double radius = 0.0;
};

struct Rectangle {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
};

struct Annulus {
  Point center{0.0, 0.0};
  double r_inner = 0.0;
  double r_outer = 0.0;
};

/// The quartic region 10(x+0.4−y²)² + x² + y² < 0.5.
struct Crescent {};

/// Analytic source support: a primitive or a union of shapes.
class Shape {
 public:
  using Union = std::vector<Shape>;
  using Variant = std::variant<Disk, Rectangle, Annulus, Crescent, Union>;

  Shape(Disk d) : v_(d) {}
  Shape(Rectangle r) : v_(r) {}
  Shape(Annulus a) : v_(a) {}
  Shape(Crescent c) : v_(c) {}
  Shape(Union u) : v_(std::move(u)) {}

  const Variant& variant() const { return v_; }

  /// Signed distance for disk/rectangle/annulus/union-of-those; the implicit
  /// quartic value for the crescent. Negative inside in every case.
  double level_value(const Point& p) const;
  bool contains(const Point& p) const { return level_value(p) < 0.0; }
  /// True when level_value is an exact signed distance.
  bool is_distance() const;
  /// Axis-aligned bounding box {xmin, xmax, ymin, ymax}.
  std::array<double, 4> bounds() const;
  /// Exact area when available in closed form (no crescent, no overlapping unions).
  std::optional<double> exact_area() const;
  /// Throws InvalidArgument unless the shape is nonempty and strictly inside the square.
  void validate() const;

 private:
  Variant v_;
};

/// Level-set function: the source support is {phi < 0} (nodal zero counts as inside).
struct LevelSetField {
  NodalField phi;
};

enum class CellTag { Outside, Inside, Cut };

struct Segment {
  Point a;
  Point b;
  double length() const { return (b - a).norm(); }
};

/// Element tags, inside fractions and interface chords for one level set.
struct ElementClassification {
  std::vector<CellTag> tag;
  std::vector<std::optional<Segment>> segment;
  RegionWeights weights;

  double fraction(std::size_t e) const { return weights.fraction[e]; }
};

/// Clip a triangle to the region where the linear interpolant of `values` is <= 0.
/// Returns the inside polygon (counterclockwise) and the zero-line chord when it exists.
struct ClipResult {
  std::vector<Point> polygon;
  std::optional<Segment> chord;
  double area = 0.0;
};
ClipResult clip_triangle(const std::array<Point, 3>& corners, const std::array<double, 3>& values);

/// Nodal level values of the shape (signed distance or implicit value), no reinitialization.
LevelSetField nodal_level_values(const TriMesh& mesh, const Shape& shape);

/// Signed distance initialisation; the crescent gets one reinitialization pass.
LevelSetField init_levelset(const TriMesh& mesh, const Shape& shape);

ElementClassification classify(const TriMesh& mesh, const LevelSetField& ls);

double volume(const TriMesh& mesh, const ElementClassification& cls);
double perimeter(const ElementClassification& cls);
double volume(const TriMesh& mesh, const LevelSetField& ls);
double perimeter(const TriMesh& mesh, const LevelSetField& ls);

/// Number of connected pieces of the support, using edge adjacency between
/// inside/cut elements whose shared edge touches the region.
int connected_components(const TriMesh& mesh, const LevelSetField& ls);

/// Per-vertex velocity; must vanish on Γ.
struct VelocityField {
  std::vector<Point> v;

  static VelocityField zero(const TriMesh& mesh) { return {std::vector<Point>(mesh.vertex_count(), Point::Zero())}; }
  double max_norm() const;
};

enum class AdvectionScheme {
  /// One semi-Lagrangian step with P1 interpolation at the foot.
  Plain,
  /// Back-and-forth error compensation around the plain step, clamped to the
  /// nodal range of the foot element. Removes the O(h) interpolation
  /// diffusion, which otherwise dominates small shape updates.
  Bfecc,
};

/// Semi-Lagrangian transport φ_new(x_i) = φ(x_i − dt V(x_i)), foot points clamped to the square.
LevelSetField advect(const TriMesh& mesh, const LevelSetField& ls, const VelocityField& V, double dt,
                     AdvectionScheme scheme = AdvectionScheme::Bfecc);

struct ReinitOptions {
  int max_steps = 50;
  double band_tolerance = 0.1;  // median | |∇φ|−1 | over |φ| < 3h
  double band_width = 3.0;      // in units of h_mean
  double cfl = 0.5;             // pseudo-step / h_min
};

struct ReinitReport {
  int steps = 0;
  double band_median = 0.0;
};

/// Redistancing by pseudo-time iteration of φ_t + sgn_η(φ0)(|∇φ|−1) = 0 with an
/// upwind (sup over incident triangles) Hamiltonian. Vertices of cut elements
/// are anchored to their exact distance from the piecewise-linear interface.
LevelSetField reinitialize(const TriMesh& mesh, const LevelSetField& ls, const ReinitOptions& opt = {},
                           ReinitReport* report = nullptr);

/// Median of | |∇φ|−1 | over vertices with |φ| < width·h_mean (area-weighted nodal gradient).
double band_gradient_defect(const TriMesh& mesh, const LevelSetField& ls, double width = 3.0);

}  // namespace blt
