#include "blt/fem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SparseLU>

#include "blt/errors.hpp"

namespace blt {

using Triplets = std::vector<Eigen::Triplet<double>>;

MediumParams MediumParams::uniform(const TriMesh& mesh, double D, double mu_a, double A) {
  MediumParams m;
  m.D.assign(mesh.element_count(), D);
  m.mu_a.assign(mesh.element_count(), mu_a);
  m.A = A;
  m.validate(mesh);
  return m;
}

void MediumParams::validate(const TriMesh& mesh) const {
  if (D.size() != mesh.element_count() || mu_a.size() != mesh.element_count()) {
    throw InvalidArgument("medium coefficients must be given per element");
  }
  for (std::size_t e = 0; e < D.size(); ++e) {
    if (!(D[e] > 0.0) || !std::isfinite(D[e])) throw InvalidArgument("diffusion coefficient must be positive");
    if (!(mu_a[e] >= 0.0) || !std::isfinite(mu_a[e])) throw InvalidArgument("absorption must be nonnegative");
  }
  if (!(A > 0.0) || !std::isfinite(A)) throw InvalidArgument("impedance constant A must be positive");
}

RegionWeights RegionWeights::full(const TriMesh& mesh) {
  RegionWeights w;
  w.fraction.assign(mesh.element_count(), 1.0);
  w.polygon.assign(mesh.element_count(), {});
  return w;
}

RegionWeights RegionWeights::empty(const TriMesh& mesh) {
  RegionWeights w;
  w.fraction.assign(mesh.element_count(), 0.0);
  w.polygon.assign(mesh.element_count(), {});
  return w;
}

double RegionWeights::volume(const TriMesh& mesh) const {
  double v = 0.0;
  for (std::size_t e = 0; e < fraction.size(); ++e) v += fraction[e] * mesh.area(static_cast<int>(e));
  return v;
}

Matrix3 element_mass(double area) {
  Matrix3 m;
  m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  return m * (area / 12.0);
}

Matrix3 element_region_mass(const TriMesh& mesh, const RegionWeights& weights, int e) {
  const auto ue = static_cast<std::size_t>(e);
  const double area = mesh.area(e);
  if (!weights.is_cut(ue)) {
    if (weights.fraction[ue] == 1.0) return element_mass(area);
    if (weights.fraction[ue] == 0.0) return Matrix3::Zero();
    throw InternalConsistency("fractional weight without a cut polygon");
  }
  const auto& poly = weights.polygon[ue];
  const auto& el = mesh.element(e);
  const auto g = mesh.geometry(e);
  auto bary = [&](const Point& x) {
    Eigen::Vector3d lam;
    for (int k = 0; k < 3; ++k) lam[k] = 1.0 + g.grad_basis[k].dot(x - mesh.vertex(el[k]));
    return lam;
  };
  Matrix3 m = Matrix3::Zero();
  double sub_area = 0.0;
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
    const Point& a = poly[0];
    const Point& b = poly[i];
    const Point& c = poly[i + 1];
    const double t = 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
    if (t <= 0.0) continue;
    sub_area += t;
    // Edge-midpoint rule: exact for quadratics, hence for products of P1 functions.
    for (const Point& q : {Point(0.5 * (a + b)), Point(0.5 * (b + c)), Point(0.5 * (c + a))}) {
      const Eigen::Vector3d lam = bary(q);
      m += (t / 3.0) * lam * lam.transpose();
    }
  }
  if (std::abs(sub_area - weights.fraction[ue] * area) > 1e-12 * std::max(area, 1e-300) + 1e-15) {
    throw InternalConsistency("cut polygon area does not match its weight");
  }
  return m;
}

namespace {

SparseMatrix from_triplets(std::size_t n, const Triplets& t) {
  SparseMatrix A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

void scatter(Triplets& t, const std::array<int, 3>& el, const Matrix3& m) {
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) t.emplace_back(el[a], el[b], m(a, b));
  }
}

}  // namespace

SparseMatrix assemble_bilinear_a(const TriMesh& mesh, const MediumParams& medium) {
  medium.validate(mesh);
  Triplets t;
  t.reserve(9 * mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto g = mesh.geometry(static_cast<int>(e));
    Matrix3 k;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) k(a, b) = g.grad_basis[a].dot(g.grad_basis[b]);
    }
    k *= medium.D[e] * g.area;
    k += medium.mu_a[e] * element_mass(g.area);
    scatter(t, mesh.element(static_cast<int>(e)), k);
  }
  return from_triplets(mesh.vertex_count(), t);
}

SparseMatrix assemble_mass(const TriMesh& mesh) {
  Triplets t;
  t.reserve(9 * mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    scatter(t, mesh.element(static_cast<int>(e)), element_mass(mesh.area(static_cast<int>(e))));
  }
  return from_triplets(mesh.vertex_count(), t);
}

SparseMatrix assemble_boundary_mass(const TriMesh& mesh) {
  Triplets t;
  t.reserve(4 * mesh.boundary_edges().size());
  for (const auto& be : mesh.boundary_edges()) {
    const double L = be.length;
    const auto [a, b] = be.vertices;
    t.emplace_back(a, a, L / 3.0);
    t.emplace_back(b, b, L / 3.0);
    t.emplace_back(a, b, L / 6.0);
    t.emplace_back(b, a, L / 6.0);
  }
  return from_triplets(mesh.vertex_count(), t);
}

SparseMatrix assemble_region_mass(const TriMesh& mesh, const RegionWeights& weights) {
  if (weights.fraction.size() != mesh.element_count() || weights.polygon.size() != mesh.element_count()) {
    throw InternalConsistency("region weights do not match the mesh");
  }
  Triplets t;
  t.reserve(9 * mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const double w = weights.fraction[e];
    if (!(w >= 0.0 && w <= 1.0)) throw InternalConsistency("region weight outside [0,1]");
    scatter(t, mesh.element(static_cast<int>(e)), element_region_mass(mesh, weights, static_cast<int>(e)));
  }
  return from_triplets(mesh.vertex_count(), t);
}

double inf_norm(const SparseMatrix& A) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(A.rows());
  for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) rows[it.row()] += std::abs(it.value());
  }
  return rows.size() ? rows.maxCoeff() : 0.0;
}

struct SparseSolver::Impl {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  std::vector<int> outer;
  std::vector<int> inner;
  SparseMatrix A;
  double a_norm = 0.0;
  bool factorized = false;
};

SparseSolver::SparseSolver() : impl_(std::make_unique<Impl>()) {}
SparseSolver::~SparseSolver() = default;
SparseSolver::SparseSolver(SparseSolver&&) noexcept = default;
SparseSolver& SparseSolver::operator=(SparseSolver&&) noexcept = default;

void SparseSolver::factorize(const SparseMatrix& A) {
  if (A.rows() != A.cols()) throw InvalidArgument("sparse solve needs a square matrix");
  auto& im = *impl_;
  im.A = A;
  im.A.makeCompressed();
  const int* op = im.A.outerIndexPtr();
  const int* ip = im.A.innerIndexPtr();
  std::vector<int> outer(op, op + im.A.outerSize() + 1);
  std::vector<int> inner(ip, ip + im.A.nonZeros());
  if (outer != im.outer || inner != im.inner) {
    im.lu.analyzePattern(im.A);
    im.outer = std::move(outer);
    im.inner = std::move(inner);
  }
  im.lu.factorize(im.A);
  im.factorized = false;
  if (im.lu.info() != Eigen::Success) {
    throw SolverFailure("sparse LU factorization failed: " + im.lu.lastErrorMessage());
  }
  im.a_norm = inf_norm(im.A);
  im.factorized = true;
}

Eigen::VectorXd SparseSolver::solve(const Eigen::VectorXd& b) const {
  const auto& im = *impl_;
  if (!im.factorized) throw SolverFailure("solve called without a valid factorization");
  if (b.size() != im.A.rows()) throw InvalidArgument("right-hand side has wrong length");
  Eigen::VectorXd x = im.lu.solve(b);
  auto residual_ok = [&](const Eigen::VectorXd& r, const Eigen::VectorXd& sol) {
    const double bound = 1e-10 * (im.a_norm * sol.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>());
    return r.allFinite() && r.lpNorm<Eigen::Infinity>() <= bound;
  };
  Eigen::VectorXd r = b - im.A * x;
  if (!residual_ok(r, x)) {
    x += im.lu.solve(r);
    r = b - im.A * x;
    if (!residual_ok(r, x)) {
      throw SolverFailure("sparse solve residual too large: " + std::to_string(r.lpNorm<Eigen::Infinity>()));
    }
  }
  return x;
}

Eigen::VectorXd solve_sparse(const SparseMatrix& A, const Eigen::VectorXd& b) {
  SparseSolver s;
  s.factorize(A);
  return s.solve(b);
}

double l2_norm(const TriMesh& mesh, const NodalField& field, const RegionWeights* weights) {
  if (static_cast<std::size_t>(field.size()) != mesh.vertex_count()) {
    throw InvalidArgument("field length does not match the mesh");
  }
  double s = 0.0;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const int ie = static_cast<int>(e);
    const Matrix3 m = weights ? element_region_mass(mesh, *weights, ie) : element_mass(mesh.area(ie));
    const auto& el = mesh.element(ie);
    const Eigen::Vector3d f(field[el[0]], field[el[1]], field[el[2]]);
    s += f.dot(m * f);
  }
  return std::sqrt(std::max(s, 0.0));
}

double evaluate(const TriMesh& mesh, const NodalField& field, const Point& x) {
  const auto loc = mesh.locate(x);
  const auto& el = mesh.element(loc.element);
  return loc.bary[0] * field[el[0]] + loc.bary[1] * field[el[1]] + loc.bary[2] * field[el[2]];
}

}  // namespace blt
