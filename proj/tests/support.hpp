#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "blt/ccbm.hpp"
#include "blt/fem.hpp"
#include "blt/levelset.hpp"
#include "oracle.hpp"

namespace blt::testing {

using std::numbers::pi;

// L2 error of the P1 solution for u* = cos(πx)cos(πy), D = μa = 1.
inline double manufactured_error(int n) {
  auto m = TriMesh::square(n);
  auto medium = MediumParams::uniform(m, 1.0, 1.0);
  auto K = assemble_bilinear_a(m, medium);
  auto ustar = [](const Point& p) { return std::cos(pi * p.x()) * std::cos(pi * p.y()); };
  // ∂n u* = 0 on the square, so the load is the source alone (6-point rule).
  NodalField b = NodalField::Zero(static_cast<Eigen::Index>(m.vertex_count()));
  const double qa[3][3] = {{0.816847572980459, 0.091576213509771, 0.091576213509771},
                           {0.091576213509771, 0.816847572980459, 0.091576213509771},
                           {0.091576213509771, 0.091576213509771, 0.816847572980459}};
  const double qb[3][3] = {{0.108103018168070, 0.445948490915965, 0.445948490915965},
                           {0.445948490915965, 0.108103018168070, 0.445948490915965},
                           {0.445948490915965, 0.445948490915965, 0.108103018168070}};
  const double wa = 0.109951743655322, wb = 0.223381589678011;
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    const auto& el = m.element(static_cast<int>(e));
    const double area = m.area(static_cast<int>(e));
    auto add = [&](const double (&l)[3][3], double w) {
      for (const auto& q : l) {
        Point x = q[0] * m.vertex(el[0]) + q[1] * m.vertex(el[1]) + q[2] * m.vertex(el[2]);
        const double fx = (2 * pi * pi + 1) * ustar(x);
        for (int k = 0; k < 3; ++k) b[el[static_cast<std::size_t>(k)]] += area * w * fx * q[k];
      }
    };
    add(qa, wa);
    add(qb, wb);
  }
  NodalField u = solve_sparse(K, b);
  // error against the exact solution with the same 6-point rule
  double err2 = 0.0;
  for (std::size_t e = 0; e < m.element_count(); ++e) {
    const auto& el = m.element(static_cast<int>(e));
    const double area = m.area(static_cast<int>(e));
    auto acc = [&](const double (&l)[3][3], double w) {
      for (const auto& q : l) {
        Point x = q[0] * m.vertex(el[0]) + q[1] * m.vertex(el[1]) + q[2] * m.vertex(el[2]);
        const double uh = q[0] * u[el[0]] + q[1] * u[el[1]] + q[2] * u[el[2]];
        err2 += area * w * std::pow(uh - ustar(x), 2);
      }
    };
    acc(qa, wa);
    acc(qb, wb);
  }
  return std::sqrt(err2);
}

// Dense 4N state system written out block by block.
inline Eigen::VectorXd dense_state(const TriMesh& m, const MediumParams& med, const RegionWeights& w,
                                   const CauchyData& d, const CcbmParams& p) {
  const Eigen::MatrixXd K = Eigen::MatrixXd(assemble_bilinear_a(m, med));
  const Eigen::MatrixXd G = Eigen::MatrixXd(assemble_boundary_mass(m));
  const Eigen::MatrixXd M = Eigen::MatrixXd(assemble_mass(m));
  const Eigen::MatrixXd M0 = Eigen::MatrixXd(assemble_region_mass(m, w));
  const Eigen::Index n = K.rows();
  const double a = p.c_alpha * std::sqrt(p.epsilon);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4 * n, 4 * n);
  A.block(0, 0, n, n) = K;
  A.block(0, n, n, n) = -a * G;
  A.block(0, 2 * n, n, n) = -M0 / p.epsilon;
  A.block(n, 0, n, n) = a * G;
  A.block(n, n, n, n) = K;
  A.block(2 * n, 2 * n, n, n) = K;
  A.block(2 * n, 3 * n, n, n) = a * G;
  A.block(3 * n, n, n, n) = M;
  A.block(3 * n, 2 * n, n, n) = -a * G;
  A.block(3 * n, 3 * n, n, n) = K;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * n);
  b.segment(0, n) = G * d.g1_nodal(m);
  b.segment(n, n) = a * G * d.g2_nodal(m);
  return dense_solve(A, b);
}

// Dense H¹ extension with V = 0 on Γ, one component at a time.
inline Eigen::MatrixX2d dense_hilbert(const TriMesh& m, const Eigen::MatrixX2d& G) {
  Eigen::MatrixXd A = Eigen::MatrixXd(assemble_bilinear_a(m, MediumParams::uniform(m, 1.0, 1.0)));
  Eigen::MatrixX2d rhs = -G;
  for (int v : m.boundary_vertices()) {
    A.row(v).setZero();
    A.col(v).setZero();
    A(v, v) = 1.0;
    rhs.row(v).setZero();
  }
  Eigen::MatrixX2d X(G.rows(), 2);
  for (int c = 0; c < 2; ++c) X.col(c) = dense_solve(A, rhs.col(c));
  return X;
}

// Smooth field vanishing on Γ.
inline VelocityField random_field(const TriMesh& m, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double c[2][3][3];
  for (auto& a : c) {
    for (auto& b : a) {
      for (double& x : b) x = U(rng);
    }
  }
  VelocityField V = VelocityField::zero(m);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    const Point& x = m.vertices()[i];
    const double bump = (1 - x.x() * x.x()) * (1 - x.y() * x.y());
    for (int d = 0; d < 2; ++d) {
      double s = 0.0;
      for (int p = 0; p < 3; ++p) {
        for (int q = 0; q < 3; ++q) s += c[d][p][q] * std::cos(p * pi * x.x() / 2) * std::cos(q * pi * x.y() / 2);
      }
      V.v[i][d] = bump * s;
    }
  }
  return V;
}

}  // namespace blt::testing
