#include "blt/levelset.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>

#include "blt/errors.hpp"

namespace blt {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double rect_distance(const Rectangle& r, const Point& p) {
  const double cx = 0.5 * (r.x0 + r.x1), cy = 0.5 * (r.y0 + r.y1);
  const double dx = std::abs(p.x() - cx) - 0.5 * (r.x1 - r.x0);
  const double dy = std::abs(p.y() - cy) - 0.5 * (r.y1 - r.y0);
  const double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
  const double inside = std::min(std::max(dx, dy), 0.0);
  return outside + inside;
}

constexpr double kZeroSnap = 1e-13;

bool boxes_overlap(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  return a[0] < b[1] && b[0] < a[1] && a[2] < b[3] && b[2] < a[3];
}

}  // namespace

double Shape::level_value(const Point& p) const {
  return std::visit(Overloaded{
                        [&](const Disk& d) { return (p - d.center).norm() - d.radius; },
                        [&](const Rectangle& r) { return rect_distance(r, p); },
                        [&](const Annulus& a) {
                          const double mid = 0.5 * (a.r_inner + a.r_outer);
                          const double half = 0.5 * (a.r_outer - a.r_inner);
                          return std::abs((p - a.center).norm() - mid) - half;
                        },
                        [&](const Crescent&) {
                          const double x = p.x(), y = p.y();
                          const double t = x + 0.4 - y * y;
                          return 10.0 * t * t + x * x + y * y - 0.5;
                        },
                        [&](const Union& u) {
                          double v = std::numeric_limits<double>::infinity();
                          for (const auto& s : u) v = std::min(v, s.level_value(p));
                          return v;
                        },
                    },
                    v_);
}

bool Shape::is_distance() const {
  return std::visit(Overloaded{
                        [](const Crescent&) { return false; },
                        [](const Union& u) {
                          return std::all_of(u.begin(), u.end(), [](const Shape& s) { return s.is_distance(); });
                        },
                        [](const auto&) { return true; },
                    },
                    v_);
}

std::array<double, 4> Shape::bounds() const {
  return std::visit(Overloaded{
                        [](const Disk& d) {
                          return std::array<double, 4>{d.center.x() - d.radius, d.center.x() + d.radius,
                                                       d.center.y() - d.radius, d.center.y() + d.radius};
                        },
                        [](const Rectangle& r) { return std::array<double, 4>{r.x0, r.x1, r.y0, r.y1}; },
                        [](const Annulus& a) {
                          return std::array<double, 4>{a.center.x() - a.r_outer, a.center.x() + a.r_outer,
                                                       a.center.y() - a.r_outer, a.center.y() + a.r_outer};
                        },
                        [](const Crescent&) {
                          // x² + y² < 0.5 on the whole region.
                          const double r = std::sqrt(0.5);
                          return std::array<double, 4>{-r, r, -r, r};
                        },
                        [](const Union& u) {
                          std::array<double, 4> b{1e300, -1e300, 1e300, -1e300};
                          for (const auto& s : u) {
                            const auto c = s.bounds();
                            b = {std::min(b[0], c[0]), std::max(b[1], c[1]), std::min(b[2], c[2]),
                                 std::max(b[3], c[3])};
                          }
                          return b;
                        },
                    },
                    v_);
}

std::optional<double> Shape::exact_area() const {
  using std::numbers::pi;
  return std::visit(Overloaded{
                        [](const Disk& d) -> std::optional<double> { return pi * d.radius * d.radius; },
                        [](const Rectangle& r) -> std::optional<double> { return (r.x1 - r.x0) * (r.y1 - r.y0); },
                        [](const Annulus& a) -> std::optional<double> {
                          return pi * (a.r_outer * a.r_outer - a.r_inner * a.r_inner);
                        },
                        [](const Crescent&) -> std::optional<double> { return std::nullopt; },
                        [](const Union& u) -> std::optional<double> {
                          double total = 0.0;
                          for (std::size_t i = 0; i < u.size(); ++i) {
                            for (std::size_t j = i + 1; j < u.size(); ++j) {
                              if (boxes_overlap(u[i].bounds(), u[j].bounds())) return std::nullopt;
                            }
                            auto a = u[i].exact_area();
                            if (!a) return std::nullopt;
                            total += *a;
                          }
                          return total;
                        },
                    },
                    v_);
}

void Shape::validate() const {
  std::visit(Overloaded{
                 [](const Disk& d) {
                   if (!(d.radius > 0.0)) throw InvalidArgument("disk radius must be positive");
                 },
                 [](const Rectangle& r) {
                   if (!(r.x1 > r.x0 && r.y1 > r.y0)) throw InvalidArgument("rectangle must have positive extent");
                 },
                 [](const Annulus& a) {
                   if (!(a.r_inner >= 0.0 && a.r_outer > a.r_inner)) {
                     throw InvalidArgument("annulus radii must satisfy 0 <= r_inner < r_outer");
                   }
                 },
                 [](const Crescent&) {},
                 [](const Union& u) {
                   if (u.empty()) throw InvalidArgument("empty shape union");
                   for (const auto& s : u) s.validate();
                 },
             },
             v_);
  const auto b = bounds();
  if (!(b[0] > -1.0 && b[1] < 1.0 && b[2] > -1.0 && b[3] < 1.0)) {
    throw InvalidArgument("shape must lie strictly inside the domain");
  }
}

ClipResult clip_triangle(const std::array<Point, 3>& corners, const std::array<double, 3>& values) {
  ClipResult r;
  std::vector<bool> on_zero;
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const double fi = values[static_cast<std::size_t>(i)];
    const double fj = values[static_cast<std::size_t>(j)];
    if (fi <= 0.0) {
      r.polygon.push_back(corners[static_cast<std::size_t>(i)]);
      on_zero.push_back(fi == 0.0);
    }
    if ((fi < 0.0 && fj > 0.0) || (fi > 0.0 && fj < 0.0)) {
      const double t = fi / (fi - fj);
      r.polygon.push_back(corners[static_cast<std::size_t>(i)] +
                          t * (corners[static_cast<std::size_t>(j)] - corners[static_cast<std::size_t>(i)]));
      on_zero.push_back(true);
    }
  }
  for (std::size_t i = 0; i < r.polygon.size(); ++i) {
    const Point& a = r.polygon[i];
    const Point& b = r.polygon[(i + 1) % r.polygon.size()];
    r.area += 0.5 * (a.x() * b.y() - a.y() * b.x());
  }
  std::vector<Point> zeros;
  for (std::size_t i = 0; i < r.polygon.size(); ++i) {
    if (on_zero[i]) zeros.push_back(r.polygon[i]);
  }
  if (zeros.size() == 2 && (zeros[0] - zeros[1]).norm() > 0.0) r.chord = Segment{zeros[0], zeros[1]};
  return r;
}

LevelSetField nodal_level_values(const TriMesh& mesh, const Shape& shape) {
  shape.validate();
  return {interpolate(mesh, [&](const Point& p) { return shape.level_value(p); })};
}

LevelSetField init_levelset(const TriMesh& mesh, const Shape& shape) {
  LevelSetField ls = nodal_level_values(mesh, shape);
  if (!shape.is_distance()) ls = reinitialize(mesh, ls);
  return ls;
}

ElementClassification classify(const TriMesh& mesh, const LevelSetField& ls) {
  if (static_cast<std::size_t>(ls.phi.size()) != mesh.vertex_count()) {
    throw InvalidArgument("level set length does not match the mesh");
  }
  const std::size_t ne = mesh.element_count();
  ElementClassification c;
  c.tag.assign(ne, CellTag::Outside);
  c.segment.assign(ne, std::nullopt);
  c.weights = RegionWeights::empty(mesh);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = mesh.element(static_cast<int>(e));
    std::array<double, 3> f{ls.phi[el[0]], ls.phi[el[1]], ls.phi[el[2]]};
    // Round-off zeros (e.g. a straight interface through grid vertices) are snapped
    // so both neighbours of an interface edge agree on its ownership.
    for (double& v : f) {
      if (std::abs(v) < kZeroSnap) v = 0.0;
    }
    const int inside = static_cast<int>(std::count_if(f.begin(), f.end(), [](double v) { return v <= 0.0; }));
    if (inside == 3) {
      c.tag[e] = CellTag::Inside;
      c.weights.fraction[e] = 1.0;
      continue;
    }
    if (inside == 0) continue;
    const std::array<Point, 3> pts{mesh.vertex(el[0]), mesh.vertex(el[1]), mesh.vertex(el[2])};
    auto clip = clip_triangle(pts, f);
    const double area = mesh.area(static_cast<int>(e));
    const double frac = clip.area / area;
    if (frac <= 0.0 || !clip.chord) {
      // Degenerate contact: two zero vertices and a positive third. The zero
      // edge is interface only if the element across it lies inside.
      const int zeros = static_cast<int>(std::count(f.begin(), f.end(), 0.0));
      if (zeros == 2) {
        const int k = static_cast<int>(std::find_if(f.begin(), f.end(), [](double v) { return v > 0.0; }) - f.begin());
        const int nb = mesh.neighbors(static_cast<int>(e))[static_cast<std::size_t>(k)];
        if (nb >= 0) {
          const auto& nel = mesh.element(nb);
          bool across_inside = true;
          for (int v : nel) across_inside = across_inside && ls.phi[v] < kZeroSnap;
          if (across_inside) c.segment[e] = Segment{pts[static_cast<std::size_t>((k + 1) % 3)],
                                                    pts[static_cast<std::size_t>((k + 2) % 3)]};
        }
      }
      continue;
    }
    if (frac >= 1.0) {
      c.tag[e] = CellTag::Inside;
      c.weights.fraction[e] = 1.0;
      continue;
    }
    c.tag[e] = CellTag::Cut;
    c.segment[e] = clip.chord;
    c.weights.fraction[e] = frac;
    c.weights.polygon[e] = std::move(clip.polygon);
  }
  return c;
}

double volume(const TriMesh& mesh, const ElementClassification& cls) { return cls.weights.volume(mesh); }

double perimeter(const ElementClassification& cls) {
  double p = 0.0;
  for (const auto& s : cls.segment) {
    if (s) p += s->length();
  }
  return p;
}

double volume(const TriMesh& mesh, const LevelSetField& ls) { return volume(mesh, classify(mesh, ls)); }
double perimeter(const TriMesh& mesh, const LevelSetField& ls) { return perimeter(classify(mesh, ls)); }

int connected_components(const TriMesh& mesh, const LevelSetField& ls) {
  const auto cls = classify(mesh, ls);
  const std::size_t ne = mesh.element_count();
  std::vector<int> parent(ne);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (std::size_t e = 0; e < ne; ++e) {
    if (cls.fraction(e) <= 0.0) continue;
    const auto& el = mesh.element(static_cast<int>(e));
    for (int k = 0; k < 3; ++k) {
      const int nb = mesh.neighbors(static_cast<int>(e))[static_cast<std::size_t>(k)];
      if (nb < 0 || cls.fraction(static_cast<std::size_t>(nb)) <= 0.0) continue;
      const int a = el[static_cast<std::size_t>((k + 1) % 3)];
      const int b = el[static_cast<std::size_t>((k + 2) % 3)];
      if (std::min(ls.phi[a], ls.phi[b]) >= kZeroSnap) continue;
      parent[static_cast<std::size_t>(find(static_cast<int>(e)))] = find(nb);
    }
  }
  int count = 0;
  for (std::size_t e = 0; e < ne; ++e) {
    if (cls.fraction(e) > 0.0 && find(static_cast<int>(e)) == static_cast<int>(e)) ++count;
  }
  return count;
}

double VelocityField::max_norm() const {
  double m = 0.0;
  for (const auto& p : v) m = std::max(m, p.norm());
  return m;
}

namespace {

// One plain step. When `lo`/`hi` are given they receive the nodal range of
// `phi` over each foot element.
NodalField sl_step(const TriMesh& mesh, const NodalField& phi, const VelocityField& V, double dt, NodalField* lo,
                   NodalField* hi) {
  NodalField out(phi.size());
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (V.v[i].isZero(0.0)) {
      out[k] = phi[k];
      if (lo) (*lo)[k] = (*hi)[k] = phi[k];
      continue;
    }
    Point foot = mesh.vertices()[i] - dt * V.v[i];
    foot.x() = std::clamp(foot.x(), -1.0, 1.0);
    foot.y() = std::clamp(foot.y(), -1.0, 1.0);
    const auto loc = mesh.locate(foot);
    const auto& el = mesh.element(loc.element);
    out[k] = loc.bary[0] * phi[el[0]] + loc.bary[1] * phi[el[1]] + loc.bary[2] * phi[el[2]];
    if (lo) {
      (*lo)[k] = std::min({phi[el[0]], phi[el[1]], phi[el[2]]});
      (*hi)[k] = std::max({phi[el[0]], phi[el[1]], phi[el[2]]});
    }
  }
  return out;
}

}  // namespace

LevelSetField advect(const TriMesh& mesh, const LevelSetField& ls, const VelocityField& V, double dt,
                     AdvectionScheme scheme) {
  if (!(dt > 0.0)) throw InvalidArgument("advection step must be positive");
  if (V.v.size() != mesh.vertex_count()) throw InvalidArgument("velocity length does not match the mesh");
  if (ls.phi.size() != static_cast<Eigen::Index>(mesh.vertex_count())) {
    throw InvalidArgument("level set length does not match the mesh");
  }
  if (scheme == AdvectionScheme::Plain) return {sl_step(mesh, ls.phi, V, dt, nullptr, nullptr)};

  VelocityField back = V;
  for (auto& v : back.v) v = -v;
  const NodalField forward = sl_step(mesh, ls.phi, V, dt, nullptr, nullptr);
  const NodalField there_and_back = sl_step(mesh, forward, back, dt, nullptr, nullptr);
  const NodalField corrected = ls.phi + 0.5 * (ls.phi - there_and_back);
  NodalField lo(ls.phi.size()), hi(ls.phi.size());
  sl_step(mesh, ls.phi, V, dt, &lo, &hi);
  NodalField out = sl_step(mesh, corrected, V, dt, nullptr, nullptr);
  for (Eigen::Index k = 0; k < out.size(); ++k) out[k] = std::clamp(out[k], lo[k], hi[k]);
  return {out};
}

namespace {

double point_segment_distance(const Point& p, const Segment& s) {
  const Point d = s.b - s.a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - s.a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (s.a + t * d)).norm();
}

Point element_gradient(const TriMesh& mesh, const NodalField& f, int e) {
  const auto g = mesh.geometry(e);
  const auto& el = mesh.element(e);
  return f[el[0]] * g.grad_basis[0] + f[el[1]] * g.grad_basis[1] + f[el[2]] * g.grad_basis[2];
}

// Upwind |∇ψ| at vertex i: sup over directions a of the one-sided difference
// (ψ_i − ψ(x_i − h a))/h, restricted to directions pointing into incident triangles.
double upwind_gradient(const TriMesh& mesh, const NodalField& psi, int i) {
  double h = 0.0;
  const Point& xi = mesh.vertex(i);
  for (int e : mesh.vertex_elements(i)) {
    const auto& el = mesh.element(e);
    int k = 0;
    while (el[static_cast<std::size_t>(k)] != i) ++k;
    const int j = el[static_cast<std::size_t>((k + 1) % 3)];
    const int l = el[static_cast<std::size_t>((k + 2) % 3)];
    const Point ej = mesh.vertex(j) - xi;
    const Point el_ = mesh.vertex(l) - xi;
    const Point g = element_gradient(mesh, psi, e);
    const double gn = g.norm();
    bool interior = false;
    if (gn > 0.0) {
      // −g = c1 ej + c2 el with c1, c2 >= 0 ?
      const double det = ej.x() * el_.y() - ej.y() * el_.x();
      const Point m = -g;
      const double c1 = (m.x() * el_.y() - m.y() * el_.x()) / det;
      const double c2 = (ej.x() * m.y() - ej.y() * m.x()) / det;
      interior = c1 >= 0.0 && c2 >= 0.0;
    }
    if (interior) {
      h = std::max(h, gn);
    } else {
      h = std::max(h, (psi[i] - psi[j]) / ej.norm());
      h = std::max(h, (psi[i] - psi[l]) / el_.norm());
    }
  }
  return h;
}

}  // namespace

double band_gradient_defect(const TriMesh& mesh, const LevelSetField& ls, double width) {
  const double band = width * mesh.h_mean();
  std::vector<double> defects;
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    if (std::abs(ls.phi[static_cast<Eigen::Index>(i)]) >= band) continue;
    double num = 0.0, den = 0.0;
    for (int e : mesh.vertex_elements(static_cast<int>(i))) {
      const double a = mesh.area(e);
      num += a * element_gradient(mesh, ls.phi, e).norm();
      den += a;
    }
    defects.push_back(std::abs(num / den - 1.0));
  }
  if (defects.empty()) return 0.0;
  auto mid = defects.begin() + static_cast<std::ptrdiff_t>(defects.size() / 2);
  std::nth_element(defects.begin(), mid, defects.end());
  return *mid;
}

LevelSetField reinitialize(const TriMesh& mesh, const LevelSetField& ls, const ReinitOptions& opt,
                           ReinitReport* report) {
  const auto cls = classify(mesh, ls);
  std::vector<Segment> interface;
  for (const auto& s : cls.segment) {
    if (s) interface.push_back(*s);
  }
  if (interface.empty()) {
    if (report) *report = {0, band_gradient_defect(mesh, ls, opt.band_width)};
    return ls;
  }

  const std::size_t nv = mesh.vertex_count();
  const NodalField& phi0 = ls.phi;
  NodalField phi = phi0;
  std::vector<bool> anchored(nv, false);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (!cls.segment[e]) continue;
    for (int v : mesh.element(static_cast<int>(e))) anchored[static_cast<std::size_t>(v)] = true;
  }
  for (std::size_t i = 0; i < nv; ++i) {
    if (!anchored[i]) continue;
    double d = std::numeric_limits<double>::infinity();
    for (const auto& s : interface) d = std::min(d, point_segment_distance(mesh.vertices()[i], s));
    phi[static_cast<Eigen::Index>(i)] = phi0[static_cast<Eigen::Index>(i)] > 0.0 ? d : -d;
  }

  const double eta = mesh.h_mean();
  const double dtau = opt.cfl * mesh.h_min();
  NodalField sgn(static_cast<Eigen::Index>(nv));
  for (std::size_t i = 0; i < nv; ++i) {
    const double p = phi0[static_cast<Eigen::Index>(i)];
    sgn[static_cast<Eigen::Index>(i)] = p / std::sqrt(p * p + eta * eta);
  }

  int steps = 0;
  double defect = band_gradient_defect(mesh, {phi}, opt.band_width);
  while (steps < opt.max_steps && (steps == 0 || defect >= opt.band_tolerance)) {
    NodalField next = phi;
    const NodalField neg = -phi;
    for (std::size_t i = 0; i < nv; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (anchored[i] || sgn[ii] == 0.0) continue;
      // ψ = ±φ so that ψ increases away from the interface.
      const double H = upwind_gradient(mesh, sgn[ii] > 0.0 ? phi : neg, static_cast<int>(i));
      next[ii] = phi[ii] - dtau * sgn[ii] * (H - 1.0);
    }
    phi = std::move(next);
    ++steps;
    defect = band_gradient_defect(mesh, {phi}, opt.band_width);
  }
  if (report) *report = {steps, defect};
  return {phi};
}

}  // namespace blt
