#include <cmath>
#include <numbers>

#include "blt/errors.hpp"
#include "blt/fem.hpp"
#include "blt/levelset.hpp"
#include "doctest.h"

using namespace blt;
using std::numbers::pi;

namespace {

// Area-weighted centroid of the discrete inside region.
Point region_centroid(const TriMesh& m, const ElementClassification& cls) {
  Point c = Point::Zero();
  double a = 0.0;
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    if (cls.fraction(e) <= 0.0) continue;
    std::vector<Point> poly = cls.weights.polygon[e];
    if (poly.empty()) {
      for (int v : m.element(static_cast<int>(e))) poly.push_back(m.vertex(v));
    }
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
      const double t = 0.5 * ((poly[i] - poly[0]).x() * (poly[i + 1] - poly[0]).y() -
                              (poly[i] - poly[0]).y() * (poly[i + 1] - poly[0]).x());
      c += t * (poly[0] + poly[i] + poly[i + 1]) / 3.0;
      a += t;
    }
  }
  return c / a;
}

}  // namespace

TEST_CASE("shape level values") {
  Shape d(Disk{{0, 0}, 0.2});
  CHECK(d.level_value({0, 0}) == doctest::Approx(-0.2));
  CHECK(d.level_value({1, 1}) == doctest::Approx(std::sqrt(2.0) - 0.2));

  Shape u(Shape::Union{Disk{{0.45, 0.45}, 0.2}, Disk{{-0.45, -0.45}, 0.2}});
  for (Point p : {Point(0.1, 0.3), Point(-0.7, 0.2), Point(0.45, 0.4)}) {
    CHECK(u.level_value(p) ==
          doctest::Approx(std::min((p - Point(0.45, 0.45)).norm(), (p - Point(-0.45, -0.45)).norm()) - 0.2));
  }
  CHECK(u.exact_area().value() == doctest::Approx(2 * pi * 0.04));

  Shape r(Rectangle{-0.1, 0.6, 0.1, 0.4});
  CHECK(r.level_value({0.25, 0.25}) == doctest::Approx(-0.15));
  CHECK(r.level_value({0.9, 0.25}) == doctest::Approx(0.3));
  CHECK(r.level_value({0.9, 0.8}) == doctest::Approx(0.5));

  Shape a(Annulus{{0, 0}, 0.2, 0.5});
  CHECK(a.level_value({0.35, 0}) == doctest::Approx(-0.15));
  CHECK(a.level_value({0, 0}) == doctest::Approx(0.2));
  CHECK(a.exact_area().value() == doctest::Approx(pi * 0.21));

  CHECK_THROWS_AS(Shape(Disk{{0.9, 0}, 0.2}).validate(), InvalidArgument);
  CHECK_THROWS_AS(Shape(Disk{{0, 0}, -1.0}).validate(), InvalidArgument);
  CHECK_NOTHROW(Shape(Crescent{}).validate());
}

TEST_CASE("crescent sign pattern survives initialisation") {
  auto m = TriMesh::square(38);
  auto ls = init_levelset(m, Shape(Crescent{}));
  int mismatched = 0;
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    const Point& p = m.vertices()[i];
    const double f = 10 * std::pow(p.x() + 0.4 - p.y() * p.y(), 2) + p.x() * p.x() + p.y() * p.y() - 0.5;
    if ((f < 0.0) != (ls.phi[static_cast<Eigen::Index>(i)] < 0.0)) ++mismatched;
  }
  CHECK(mismatched == 0);
  CHECK(band_gradient_defect(m, ls) < 0.1);
}

TEST_CASE("clipping and classification") {
  auto r = clip_triangle({Point(0, 0), Point(1, 0), Point(0, 1)}, {-1.0, 1.0, 1.0});
  CHECK(r.area == doctest::Approx(0.125));
  REQUIRE(r.chord);
  CHECK(r.chord->length() == doctest::Approx(std::sqrt(0.5)));

  TriMesh t({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}});
  auto c = classify(t, {Eigen::Vector3d(-1, 1, 1)});
  CHECK(c.tag[0] == CellTag::Cut);
  CHECK(c.fraction(0) == doctest::Approx(0.25));

  auto m = TriMesh::square(4);
  auto all_in = classify(m, {NodalField::Constant(static_cast<Eigen::Index>(m.vertex_count()), -1.0)});
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    CHECK(all_in.tag[e] == CellTag::Inside);
    CHECK(all_in.fraction(e) == 1.0);
  }
  LevelSetField out{NodalField::Constant(static_cast<Eigen::Index>(m.vertex_count()), 1.0)};
  CHECK(volume(m, out) == 0.0);
  CHECK(perimeter(m, out) == 0.0);
  CHECK(connected_components(m, out) == 0);
}

TEST_CASE("classification invariants on a disk") {
  auto m = TriMesh::square(38);
  auto ls = init_levelset(m, Shape(Disk{{0.1, -0.05}, 0.4}));
  auto cls = classify(m, ls);
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    switch (cls.tag[e]) {
      case CellTag::Inside: CHECK(cls.fraction(e) == 1.0); break;
      case CellTag::Outside: CHECK(cls.fraction(e) == 0.0); break;
      case CellTag::Cut:
        CHECK(cls.fraction(e) > 0.0);
        CHECK(cls.fraction(e) < 1.0);
        REQUIRE(cls.segment[e]);
        CHECK(cls.segment[e]->length() > 0.0);
        break;
    }
  }
  CHECK(std::abs(volume(m, cls) - pi * 0.16) < 2e-3);
  CHECK(std::abs(perimeter(cls) - 2 * pi * 0.4) < 2e-2);
  CHECK(connected_components(m, ls) == 1);
}

TEST_CASE("rectangle measures") {
  // n = 40 puts the corners on grid vertices; elsewhere corners are truncated by O(h)
  auto m = TriMesh::square(40);
  auto ls = init_levelset(m, Shape(Rectangle{-0.1, 0.6, 0.1, 0.4}));
  CHECK(std::abs(volume(m, ls) - 0.21) < 2e-2);
  CHECK(std::abs(perimeter(m, ls) - 2.0) < 2e-2);
}

TEST_CASE("perimeter converges at first order or better") {
  double prev = 0.0;
  for (int n : {10, 20, 40}) {
    auto m = TriMesh::square(n);
    const double err = std::abs(perimeter(m, init_levelset(m, Shape(Disk{{0.03, 0.01}, 0.5}))) - pi);
    if (prev > 0.0) CHECK(err < 0.6 * prev);
    prev = err;
  }
}

TEST_CASE("connected components") {
  auto m = TriMesh::square(38);
  auto two = init_levelset(m, Shape(Shape::Union{Disk{{0.45, 0.45}, 0.2}, Disk{{-0.45, -0.45}, 0.2}}));
  CHECK(connected_components(m, two) == 2);
  auto ring = init_levelset(m, Shape(Annulus{{0, 0}, 0.2, 0.5}));
  CHECK(connected_components(m, ring) == 1);
}

TEST_CASE("advection") {
  auto m = TriMesh::square(38);
  auto ls = init_levelset(m, Shape(Disk{{0, 0}, 0.3}));

  auto same = advect(m, ls, VelocityField::zero(m), 0.1);
  CHECK((same.phi - ls.phi).norm() == 0.0);
  CHECK_THROWS_AS(advect(m, ls, VelocityField::zero(m), 0.0), InvalidArgument);

  SUBCASE("translation") {
    VelocityField V = VelocityField::zero(m);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
      if (!m.is_boundary_vertex(static_cast<int>(i))) V.v[i] = Point(0.5, 0.0);
    }
    const double dt = 0.1;
    auto moved = advect(m, ls, V, dt);
    Point c0 = region_centroid(m, classify(m, ls));
    Point c1 = region_centroid(m, classify(m, moved));
    const double h = m.h_max();
    CHECK(std::abs((c1 - c0).x() - 0.05) < h * h);
    CHECK(std::abs((c1 - c0).y()) < h * h);
  }
  SUBCASE("dilation") {
    VelocityField V = VelocityField::zero(m);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
      const Point& x = m.vertices()[i];
      if (x.norm() < 0.8) V.v[i] = x;
    }
    const double dt = 0.05;
    auto grown = advect(m, ls, V, dt);
    // the exact foot-point map sends radius r to r/(1−dt) ≈ r(1+dt)
    const double r = std::sqrt(volume(m, grown) / pi);
    const double h = m.h_max();
    CHECK(std::abs(r - 0.3 * (1 + dt)) < 0.3 * dt * dt + h * h);
  }
}

TEST_CASE("error-compensated advection beats the plain step") {
  auto m = TriMesh::square(38);
  auto ls = init_levelset(m, Shape(Disk{{0.2, 0.0}, 0.3}));
  // rigid rotation inside r < 0.7, so the exact round trip is the identity
  VelocityField V = VelocityField::zero(m);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    const Point& x = m.vertices()[i];
    if (x.norm() < 0.7) V.v[i] = Point(-x.y(), x.x());
  }
  VelocityField back = V;
  for (auto& v : back.v) v = -v;
  auto drift = [&](AdvectionScheme s) {
    LevelSetField cur = ls;
    for (int k = 0; k < 10; ++k) cur = advect(m, advect(m, cur, V, 0.05, s), back, 0.05, s);
    CHECK(cur.phi.maxCoeff() <= ls.phi.maxCoeff() + 1e-12);
    CHECK(cur.phi.minCoeff() >= ls.phi.minCoeff() - 1e-12);
    return (cur.phi - ls.phi).lpNorm<Eigen::Infinity>();
  };
  const double plain = drift(AdvectionScheme::Plain);
  const double bfecc = drift(AdvectionScheme::Bfecc);
  CHECK(bfecc < 0.5 * plain);
}

TEST_CASE("reinitialization") {
  auto m = TriMesh::square(38);
  SUBCASE("distance to a line is a fixed point") {
    LevelSetField ls{interpolate(m, [](const Point& p) { return (p.x() + 0.3 * p.y() - 0.1) / std::hypot(1.0, 0.3); })};
    auto r = reinitialize(m, ls);
    CHECK((r.phi - ls.phi).lpNorm<Eigen::Infinity>() < 1e-3);
  }
  SUBCASE("scaled distance is restored") {
    Shape disk(Disk{{0.05, 0.0}, 0.35});
    LevelSetField ls{2.0 * nodal_level_values(m, disk).phi};
    CHECK(band_gradient_defect(m, ls) > 0.5);
    ReinitReport rep;
    auto r = reinitialize(m, ls, {}, &rep);
    CHECK(rep.band_median < 0.1);
    CHECK(band_gradient_defect(m, r) < 0.1);
    CHECK(std::abs(volume(m, r) - volume(m, ls)) < 0.02 * volume(m, ls));

    // signs only change on vertices of cut elements
    auto cls = classify(m, ls);
    std::vector<bool> near(m.vertex_count(), false);
    for (std::size_t e = 0; e < m.element_count(); ++e) {
      if (cls.tag[e] == CellTag::Cut) {
        for (int v : m.element(static_cast<int>(e))) near[static_cast<std::size_t>(v)] = true;
      }
    }
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      if (!near[i]) CHECK((ls.phi[ii] <= 0.0) == (r.phi[ii] <= 0.0));
    }
  }
}
