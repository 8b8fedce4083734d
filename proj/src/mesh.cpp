#include "blt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "blt/errors.hpp"

namespace blt {

namespace {

constexpr double kDomainLo = -1.0;
constexpr double kDomainHi = 1.0;

double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

ElementGeometry triangle_geometry(const Point& a, const Point& b, const Point& c) {
  const double det = cross(b - a, c - a);
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
  if (!(det > 1e-14 * scale)) {
    throw InvalidArgument("degenerate or clockwise triangle");
  }
  ElementGeometry g;
  g.area = 0.5 * det;
  const double inv = 1.0 / det;
  g.grad_basis[0] = Point(b.y() - c.y(), c.x() - b.x()) * inv;
  g.grad_basis[1] = Point(c.y() - a.y(), a.x() - c.x()) * inv;
  g.grad_basis[2] = Point(a.y() - b.y(), b.x() - a.x()) * inv;
  return g;
}

TriMesh::TriMesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> elements)
    : vertices_(std::move(vertices)), elements_(std::move(elements)) {
  if (vertices_.empty() || elements_.empty()) {
    throw InvalidArgument("mesh needs vertices and elements");
  }
  const int nv = static_cast<int>(vertices_.size());
  geometry_.reserve(elements_.size());
  for (const auto& el : elements_) {
    for (int v : el) {
      if (v < 0 || v >= nv) throw InvalidArgument("element references a missing vertex");
    }
    geometry_.push_back(triangle_geometry(vertices_[el[0]], vertices_[el[1]], vertices_[el[2]]));
  }
  build_topology();
  build_bins();
}

TriMesh TriMesh::square(int n) {
  if (n < 2) throw InvalidArgument("square mesh needs n >= 2 subdivisions");
  const double h = (kDomainHi - kDomainLo) / n;
  std::vector<Point> verts;
  verts.reserve(static_cast<std::size_t>((n + 1) * (n + 1) + n * n));
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      // Snap the last row/column so the outer boundary is exactly +-1.
      const double x = (i == n) ? kDomainHi : kDomainLo + i * h;
      const double y = (j == n) ? kDomainHi : kDomainLo + j * h;
      verts.emplace_back(x, y);
    }
  }
  const int centers = (n + 1) * (n + 1);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      verts.emplace_back(kDomainLo + (i + 0.5) * h, kDomainLo + (j + 0.5) * h);
    }
  }
  std::vector<std::array<int, 3>> elems;
  elems.reserve(static_cast<std::size_t>(4 * n * n));
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int bl = j * (n + 1) + i;
      const int br = bl + 1;
      const int tl = bl + (n + 1);
      const int tr = tl + 1;
      const int c = centers + j * n + i;
      elems.push_back({bl, br, c});
      elems.push_back({br, tr, c});
      elems.push_back({tr, tl, c});
      elems.push_back({tl, bl, c});
    }
  }
  return TriMesh(std::move(verts), std::move(elems));
}

void TriMesh::build_topology() {
  const std::size_t ne = elements_.size();
  neighbors_.assign(ne, {-1, -1, -1});
  vertex_elements_.assign(vertices_.size(), {});
  on_boundary_.assign(vertices_.size(), false);

  // Edge opposite local vertex k joins local vertices (k+1)%3 and (k+2)%3.
  std::map<std::pair<int, int>, std::pair<int, int>> edge_owner;  // key -> (element, local k)
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = elements_[e];
    for (int v : el) vertex_elements_[static_cast<std::size_t>(v)].push_back(static_cast<int>(e));
    for (int k = 0; k < 3; ++k) {
      int a = el[(k + 1) % 3];
      int b = el[(k + 2) % 3];
      auto key = std::minmax(a, b);
      auto it = edge_owner.find({key.first, key.second});
      if (it == edge_owner.end()) {
        edge_owner.emplace(std::pair<int, int>{key.first, key.second}, std::pair<int, int>{static_cast<int>(e), k});
      } else {
        const auto [other, ko] = it->second;
        if (neighbors_[static_cast<std::size_t>(other)][static_cast<std::size_t>(ko)] != -1) {
          throw InvalidArgument("non-manifold edge: shared by more than two elements");
        }
        neighbors_[static_cast<std::size_t>(other)][static_cast<std::size_t>(ko)] = static_cast<int>(e);
        neighbors_[e][static_cast<std::size_t>(k)] = other;
      }
    }
  }

  double hsum = 0.0;
  h_min_ = std::numeric_limits<double>::infinity();
  h_max_ = 0.0;
  for (const auto& [key, owner] : edge_owner) {
    const double len = (vertices_[key.first] - vertices_[key.second]).norm();
    hsum += len;
    h_min_ = std::min(h_min_, len);
    h_max_ = std::max(h_max_, len);
    const auto [e, k] = owner;
    if (neighbors_[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] != -1) continue;
    const auto& el = elements_[static_cast<std::size_t>(e)];
    BoundaryEdge be;
    be.vertices = {el[(k + 1) % 3], el[(k + 2) % 3]};
    be.element = e;
    const Point d = vertices_[be.vertices[1]] - vertices_[be.vertices[0]];
    be.length = d.norm();
    be.normal = Point(d.y(), -d.x()) / be.length;
    boundary_edges_.push_back(be);
    on_boundary_[static_cast<std::size_t>(be.vertices[0])] = true;
    on_boundary_[static_cast<std::size_t>(be.vertices[1])] = true;
  }
  h_mean_ = hsum / static_cast<double>(edge_owner.size());
  std::sort(boundary_edges_.begin(), boundary_edges_.end(), [](const BoundaryEdge& a, const BoundaryEdge& b) {
    return a.element != b.element ? a.element < b.element : a.vertices < b.vertices;
  });
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (on_boundary_[i]) boundary_vertices_.push_back(static_cast<int>(i));
  }
}

void TriMesh::build_bins() {
  bins_per_axis_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(elements_.size()) / 2.0)));
  bins_.assign(static_cast<std::size_t>(bins_per_axis_ * bins_per_axis_), {});
  const double w = (kDomainHi - kDomainLo) / bins_per_axis_;
  auto bin_of = [&](double c) {
    return std::clamp(static_cast<int>(std::floor((c - kDomainLo) / w)), 0, bins_per_axis_ - 1);
  };
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    const auto& el = elements_[e];
    double x0 = vertices_[el[0]].x(), x1 = x0, y0 = vertices_[el[0]].y(), y1 = y0;
    for (int k = 1; k < 3; ++k) {
      x0 = std::min(x0, vertices_[el[k]].x());
      x1 = std::max(x1, vertices_[el[k]].x());
      y0 = std::min(y0, vertices_[el[k]].y());
      y1 = std::max(y1, vertices_[el[k]].y());
    }
    const double pad = 1e-12;
    for (int by = bin_of(y0 - pad); by <= bin_of(y1 + pad); ++by) {
      for (int bx = bin_of(x0 - pad); bx <= bin_of(x1 + pad); ++bx) {
        bins_[static_cast<std::size_t>(by * bins_per_axis_ + bx)].push_back(static_cast<int>(e));
      }
    }
  }
}

ElementGeometry TriMesh::geometry(int e) const {
  if (e < 0 || static_cast<std::size_t>(e) >= elements_.size()) {
    throw InvalidArgument("element index out of range");
  }
  return geometry_[static_cast<std::size_t>(e)];
}

PointLocation TriMesh::locate(const Point& x) const {
  const double tol = 1e-12;
  if (!(x.x() >= kDomainLo - tol && x.x() <= kDomainHi + tol && x.y() >= kDomainLo - tol &&
        x.y() <= kDomainHi + tol)) {
    throw OutOfDomain("point outside the square domain");
  }
  const double w = (kDomainHi - kDomainLo) / bins_per_axis_;
  const int bx = std::clamp(static_cast<int>(std::floor((x.x() - kDomainLo) / w)), 0, bins_per_axis_ - 1);
  const int by = std::clamp(static_cast<int>(std::floor((x.y() - kDomainLo) / w)), 0, bins_per_axis_ - 1);

  // Candidates are sorted by element index, so the first hit wins ties.
  PointLocation best;
  double best_violation = std::numeric_limits<double>::infinity();
  for (int e : bins_[static_cast<std::size_t>(by * bins_per_axis_ + bx)]) {
    const auto& el = elements_[static_cast<std::size_t>(e)];
    const auto& g = geometry_[static_cast<std::size_t>(e)];
    std::array<double, 3> lam{};
    double violation = 0.0;
    for (int k = 0; k < 3; ++k) {
      // lambda_k is affine with gradient grad_basis[k] and equals 1 at vertex k.
      lam[static_cast<std::size_t>(k)] = 1.0 + g.grad_basis[k].dot(x - vertices_[el[k]]);
      violation = std::max(violation, -lam[static_cast<std::size_t>(k)]);
    }
    if (violation <= 1e-13) {
      best.element = e;
      best.bary = lam;
      best_violation = violation;
      break;
    }
    if (violation < best_violation) {
      best_violation = violation;
      best.element = e;
      best.bary = lam;
    }
  }
  if (best.element < 0 || best_violation > 1e-9) {
    throw OutOfDomain("point location failed");
  }
  double s = 0.0;
  for (double& l : best.bary) {
    l = std::clamp(l, 0.0, 1.0);
    s += l;
  }
  for (double& l : best.bary) l /= s;
  return best;
}

void write_vtk(const std::string& path, const TriMesh& mesh, const std::vector<PointDataArray>& point_data) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(17);
  out << "# vtk DataFile Version 3.0\nblt triangulation\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.vertex_count() << " double\n";
  for (const auto& p : mesh.vertices()) out << p.x() << ' ' << p.y() << " 0\n";
  out << "CELLS " << mesh.element_count() << ' ' << 4 * mesh.element_count() << '\n';
  for (const auto& el : mesh.elements()) out << "3 " << el[0] << ' ' << el[1] << ' ' << el[2] << '\n';
  out << "CELL_TYPES " << mesh.element_count() << '\n';
  for (std::size_t e = 0; e < mesh.element_count(); ++e) out << "5\n";
  if (!point_data.empty()) {
    out << "POINT_DATA " << mesh.vertex_count() << '\n';
    for (const auto& arr : point_data) {
      if (static_cast<std::size_t>(arr.values->size()) != mesh.vertex_count()) {
        throw InvalidArgument("point data '" + arr.name + "' has wrong length");
      }
      out << "SCALARS " << arr.name << " double 1\nLOOKUP_TABLE default\n";
      for (Eigen::Index i = 0; i < arr.values->size(); ++i) out << (*arr.values)[i] << '\n';
    }
  }
}

Eigen::VectorXd read_vtk_point_data(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string token;
  long npoints = -1;
  while (in >> token) {
    if (token == "POINT_DATA") {
      in >> npoints;
    } else if (token == "SCALARS") {
      std::string arr_name, type, lut, lut_name;
      int ncomp = 1;
      in >> arr_name >> type;
      std::string rest;
      std::getline(in, rest);
      std::istringstream rs(rest);
      if (rs >> ncomp) {
      }
      in >> lut >> lut_name;
      if (arr_name == name) {
        if (npoints < 0) throw InvalidArgument("SCALARS before POINT_DATA in " + path);
        Eigen::VectorXd v(npoints);
        for (long i = 0; i < npoints; ++i) {
          if (!(in >> v[i])) throw InvalidArgument("truncated point data in " + path);
        }
        return v;
      }
    }
  }
  throw InvalidArgument("point data '" + name + "' not found in " + path);
}

}  // namespace blt
