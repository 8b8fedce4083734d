#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "blt/errors.hpp"
#include "blt/fem.hpp"
#include "blt/levelset.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace blt;
using namespace blt::testing;
using std::numbers::pi;

namespace {

Eigen::MatrixXd dense(const SparseMatrix& A) { return Eigen::MatrixXd(A); }

// Gauss–Legendre 5-point rule on [0,1].
double gauss5(const std::function<double(double)>& f) {
  const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
  const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                       0.2369268850561891};
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += 0.5 * w[i] * f(0.5 * (x[i] + 1.0));
  return s;
}


}  // namespace

TEST_CASE("element stiffness of the unit right triangle") {
  TriMesh m({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}});
  auto K = dense(assemble_bilinear_a(m, MediumParams::uniform(m, 1.0, 0.0)));
  Eigen::Matrix3d ref;
  ref << 1, -0.5, -0.5, -0.5, 0.5, 0, -0.5, 0, 0.5;
  CHECK((K - ref).norm() < 1e-14);
}

TEST_CASE("bilinear form properties") {
  auto m = TriMesh::square(2);
  auto K = dense(assemble_bilinear_a(m, MediumParams::uniform(m, 1.0, 1.0)));
  CHECK((K - K.transpose()).norm() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  CHECK(es.eigenvalues().minCoeff() > 0.0);

  auto S = dense(assemble_bilinear_a(m, MediumParams::uniform(m, 2.0, 0.0)));
  CHECK((S * Eigen::VectorXd::Ones(S.cols())).lpNorm<Eigen::Infinity>() < 1e-13);

  // linear in D
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0.5, 2.0);
  auto m5 = TriMesh::square(5);
  MediumParams d1 = MediumParams::uniform(m5, 1.0, 0.0), d2 = d1, mix = d1;
  for (std::size_t e = 0; e < m5.element_count(); ++e) {
    d1.D[e] = U(rng);
    d2.D[e] = U(rng);
    mix.D[e] = 0.3 * d1.D[e] + 1.7 * d2.D[e];
  }
  SparseMatrix lhs = assemble_bilinear_a(m5, mix);
  SparseMatrix rhs = 0.3 * assemble_bilinear_a(m5, d1) + 1.7 * assemble_bilinear_a(m5, d2);
  CHECK(dense(lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-12);

  MediumParams bad = MediumParams::uniform(m5, 1.0, 1.0);
  bad.D[3] = 0.0;
  CHECK_THROWS_AS(bad.validate(m5), InvalidArgument);
}

TEST_CASE("boundary mass") {
  auto m = TriMesh::square(6);
  auto Mg = assemble_boundary_mass(m);
  NodalField one = NodalField::Ones(static_cast<Eigen::Index>(m.vertex_count()));
  CHECK(one.dot(Mg * one) == doctest::Approx(8.0).epsilon(1e-12));

  TriMesh t({{0, 0}, {0.3, 0}, {0, 1}}, {{0, 1, 2}});
  auto Mt = dense(assemble_boundary_mass(t));
  // a lone triangle is all boundary: 1ᵀM1 is its perimeter
  CHECK(Mt.sum() == doctest::Approx(0.3 + 1.0 + std::hypot(0.3, 1.0)));

  // ∫_Γ x² ds: quadratic integrand, compare with a 5-point Gauss oracle per edge
  NodalField x = interpolate(m, [](const Point& p) { return p.x(); });
  double oracle = 0.0;
  for (const auto& be : m.boundary_edges()) {
    Point a = m.vertex(be.vertices[0]), b = m.vertex(be.vertices[1]);
    oracle += be.length * gauss5([&](double s) { return std::pow((a + s * (b - a)).x(), 2); });
  }
  CHECK(x.dot(Mg * x) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(16.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("region mass") {
  auto m = TriMesh::square(38);
  auto M = assemble_mass(m);
  CHECK(dense(assemble_region_mass(m, RegionWeights::full(m)) - M).norm() < 1e-14);
  CHECK(dense(assemble_region_mass(m, RegionWeights::empty(m))).norm() == 0.0);

  auto ls = init_levelset(m, Shape(Disk{{0, 0}, 0.4}));
  auto cls = classify(m, ls);
  NodalField one = NodalField::Ones(static_cast<Eigen::Index>(m.vertex_count()));
  const double mass = one.dot(assemble_region_mass(m, cls.weights) * one);
  CHECK(std::abs(mass - pi * 0.16) < 2e-3);
  CHECK(mass == doctest::Approx(volume(m, cls)).epsilon(1e-12));

  // monotone in the region
  auto big = classify(m, init_levelset(m, Shape(Disk{{0, 0}, 0.5})));
  CHECK(one.dot(assemble_region_mass(m, big.weights) * one) >= mass);

  // cut-element mass integrates a linear function exactly
  NodalField x = interpolate(m, [](const Point& p) { return p.x() + 0.5; });
  CHECK(one.dot(assemble_region_mass(m, cls.weights) * x) == doctest::Approx(0.5 * mass).epsilon(1e-12));
}

TEST_CASE("sparse solve") {
  SparseMatrix I(4, 4);
  I.setIdentity();
  Eigen::VectorXd b(4);
  b << 1, 2, 3, 4;
  CHECK((solve_sparse(I, b) - b).norm() == 0.0);

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1, 1);
  Eigen::MatrixXd R(4, 4);
  for (int i = 0; i < 16; ++i) R(i / 4, i % 4) = U(rng);
  Eigen::MatrixXd spd = R * R.transpose() + 4 * Eigen::MatrixXd::Identity(4, 4);
  SparseMatrix S = spd.sparseView();
  Eigen::VectorXd x = solve_sparse(S, b);
  // Gaussian elimination by hand
  Eigen::MatrixXd aug(4, 5);
  aug << spd, b;
  for (int k = 0; k < 4; ++k) {
    for (int i = k + 1; i < 4; ++i) aug.row(i) -= aug(i, k) / aug(k, k) * aug.row(k);
  }
  Eigen::VectorXd y(4);
  for (int i = 3; i >= 0; --i) {
    double s = aug(i, 4);
    for (int j = i + 1; j < 4; ++j) s -= aug(i, j) * y[j];
    y[i] = s / aug(i, i);
  }
  CHECK((x - y).lpNorm<Eigen::Infinity>() < 1e-12);

  Eigen::MatrixXd sing = spd;
  sing.row(2).setZero();
  SparseMatrix Z = sing.sparseView();
  CHECK_THROWS_AS(solve_sparse(Z, b), SolverFailure);
}

TEST_CASE("l2 norms") {
  auto m = TriMesh::square(38);
  NodalField one = NodalField::Ones(static_cast<Eigen::Index>(m.vertex_count()));
  CHECK(l2_norm(m, one) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(l2_norm(m, NodalField::Zero(one.size())) == 0.0);
  auto cls = classify(m, init_levelset(m, Shape(Disk{{0, 0}, 0.2})));
  CHECK(std::abs(l2_norm(m, one, &cls.weights) - std::sqrt(pi * 0.04)) < 1e-2);
}

TEST_CASE("manufactured Neumann solution converges at second order") {
  const double e16 = manufactured_error(16), e32 = manufactured_error(32), e64 = manufactured_error(64);
  const double r1 = e16 / e32, r2 = e32 / e64;
  CHECK(r1 > 3.6);
  CHECK(r1 < 4.4);
  CHECK(r2 > 3.6);
  CHECK(r2 < 4.4);
}
