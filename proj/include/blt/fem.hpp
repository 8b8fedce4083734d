#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "blt/mesh.hpp"

namespace blt {

using SparseMatrix = Eigen::SparseMatrix<double>;
using NodalField = Eigen::VectorXd;
using Matrix3 = Eigen::Matrix3d;

/// Diffusion/absorption per element and the boundary impedance constant A.
struct MediumParams {
  std::vector<double> D;
  std::vector<double> mu_a;
  double A = 0.5;

  static MediumParams uniform(const TriMesh& mesh, double D, double mu_a, double A = 0.5);
  /// Throws InvalidArgument when D <= 0, mu_a < 0, A <= 0 or sizes mismatch.
  void validate(const TriMesh& mesh) const;
};

/// Discrete characteristic function of the source support.
///
/// `fraction[e]` is the inside-area fraction of element e. Cut elements carry
/// the clipped inside polygon (counterclockwise, physical coordinates); fully
/// inside elements have fraction 1 and no polygon.
struct RegionWeights {
  std::vector<double> fraction;
  std::vector<std::vector<Point>> polygon;

  static RegionWeights full(const TriMesh& mesh);
  static RegionWeights empty(const TriMesh& mesh);

  bool is_cut(std::size_t e) const { return !polygon[e].empty(); }
  /// Σ_e fraction_e |e|.
  double volume(const TriMesh& mesh) const;
};

/// Consistent P1 mass matrix of a triangle of the given area.
Matrix3 element_mass(double area);

/// Exact P1 mass restricted to the inside part of element e (zero outside,
/// full mass inside, sub-triangle quadrature on cut polygons).
Matrix3 element_region_mass(const TriMesh& mesh, const RegionWeights& weights, int e);

/// (D∇u,∇v) + (μa u,v) with consistent mass.
SparseMatrix assemble_bilinear_a(const TriMesh& mesh, const MediumParams& medium);

/// Full-domain consistent mass (u,v)_Ω.
SparseMatrix assemble_mass(const TriMesh& mesh);

/// (u,v)_Γ with exact edge-wise P1 mass; interior rows are empty.
SparseMatrix assemble_boundary_mass(const TriMesh& mesh);

/// (u,v)_{Ω0}. The sparsity pattern always equals the full mass pattern
/// (explicit zeros outside) so factorizations can reuse one symbolic analysis.
SparseMatrix assemble_region_mass(const TriMesh& mesh, const RegionWeights& weights);

/// Sparse direct solver (LU with COLAMD ordering). The symbolic analysis is
/// reused as long as the sparsity pattern does not change.
class SparseSolver {
 public:
  SparseSolver();
  ~SparseSolver();
  SparseSolver(SparseSolver&&) noexcept;
  SparseSolver& operator=(SparseSolver&&) noexcept;

  /// Throws SolverFailure when the matrix is singular.
  void factorize(const SparseMatrix& A);
  /// Solves and checks ‖Ax−b‖ ≤ 1e-10(‖A‖∞‖x‖∞ + ‖b‖∞); throws SolverFailure otherwise.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot factorize + solve.
Eigen::VectorXd solve_sparse(const SparseMatrix& A, const Eigen::VectorXd& b);

/// Infinity norm (max absolute row sum).
double inf_norm(const SparseMatrix& A);

/// √(xᵀMx) with M the full mass, or the region mass when `weights` is given.
double l2_norm(const TriMesh& mesh, const NodalField& field, const RegionWeights* weights = nullptr);

/// Nodal interpolant of a function.
template <class F>
NodalField interpolate(const TriMesh& mesh, F&& f) {
  NodalField v(static_cast<Eigen::Index>(mesh.vertex_count()));
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) v[static_cast<Eigen::Index>(i)] = f(mesh.vertices()[i]);
  return v;
}

/// Value of the P1 interpolant of `field` at `x`.
double evaluate(const TriMesh& mesh, const NodalField& field, const Point& x);

}  // namespace blt
