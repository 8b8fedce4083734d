#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blt/fem.hpp"
#include "blt/levelset.hpp"

namespace blt {

/// Tikhonov weight ε and the boundary coupling α = c_alpha·√ε.
struct CcbmParams {
  double epsilon = 1e-4;
  double c_alpha = 100.0;

  double alpha() const;
  void validate() const;
};

/// Neumann (g1) and Dirichlet (g2) traces, one value per boundary vertex in
/// the order of `vertices` (which is TriMesh::boundary_vertices()).
struct CauchyData {
  std::vector<int> vertices;
  Eigen::VectorXd g1;
  Eigen::VectorXd g2;
  double noise_level = 0.0;
  std::uint64_t seed = 0;

  /// Expand to a nodal vector on `mesh` (zero at interior vertices).
  NodalField g1_nodal(const TriMesh& mesh) const;
  NodalField g2_nodal(const TriMesh& mesh) const;
  void validate(const TriMesh& mesh) const;
};

struct SourceLayer {
  Shape support;
  double intensity = 1.0;
};

/// Piecewise-constant source Σ intensity_l · χ(support_l).
struct SourceSpec {
  std::vector<SourceLayer> layers;

  void validate() const;
  /// Union of all supports.
  Shape support() const;
};

struct StateFields {
  NodalField u1, u2, w1, w2;
};

struct AdjointFields {
  NodalField v1, v2, s1, s2;
};

struct AdjointReport {
  double identity_residual = 0.0;  // relative residual of (w1, w2, 0, 0)
  bool used_fallback = false;
};

/// Load vector (q, ν) for the analytic source, with exact clipping of each
/// layer's interpolated level set.
NodalField source_load(const TriMesh& mesh, const SourceSpec& source);

/// Pure Neumann problem a(u,ν) = (q,ν) + (g1,ν)_Γ with a given load vector.
NodalField solve_forward_neumann(const TriMesh& mesh, const MediumParams& medium, const NodalField& load,
                                 const NodalField& g1_nodal);
NodalField solve_forward_neumann(const TriMesh& mesh, const MediumParams& medium, const SourceSpec& source,
                                 const NodalField& g1_nodal);

/// Values of `u` at the boundary vertices (TriMesh::boundary_vertices() order).
Eigen::VectorXd trace_boundary(const TriMesh& mesh, const NodalField& u);

/// g2 ← g2 (1 + δ(2U − 1)) nodewise, U ~ uniform[0,1) from a seeded generator.
CauchyData add_noise(const CauchyData& data, double delta, std::uint64_t seed);

/// Assembled operators reused across the many solves of one reconstruction.
class CcbmSolver {
 public:
  CcbmSolver(const TriMesh& mesh, const MediumParams& medium);

  const TriMesh& mesh() const { return mesh_; }
  const MediumParams& medium() const { return medium_; }
  const SparseMatrix& stiffness() const { return K_; }
  const SparseMatrix& mass() const { return M_; }
  const SparseMatrix& boundary_mass() const { return Mg_; }

  /// Monolithic solve of the coupled state system for u1, u2, w1, w2.
  StateFields solve_state(const RegionWeights& region, const CauchyData& data, const CcbmParams& p);

  /// Adjoint fields. The candidate (w1, w2, 0, 0) is checked against the
  /// adjoint equations; a monolithic solve is used if it fails.
  AdjointFields solve_adjoint(const RegionWeights& region, const StateFields& state, const CcbmParams& p,
                              AdjointReport* report = nullptr);
  AdjointFields solve_adjoint_monolithic(const RegionWeights& region, const StateFields& state,
                                         const CcbmParams& p);

  /// Relative residual of the adjoint equations for a candidate.
  double adjoint_residual(const RegionWeights& region, const StateFields& state, const AdjointFields& adj,
                          const CcbmParams& p) const;

  SparseMatrix state_matrix(const SparseMatrix& region_mass, const CcbmParams& p) const;
  SparseMatrix adjoint_matrix(const SparseMatrix& region_mass, const CcbmParams& p) const;

 private:
  const TriMesh& mesh_;
  MediumParams medium_;
  SparseMatrix K_, M_, Mg_;
  SparseSolver solver_;
};

StateFields solve_state_system(const TriMesh& mesh, const MediumParams& medium, const RegionWeights& region,
                               const CauchyData& data, const CcbmParams& p);
AdjointFields solve_adjoint_system(const TriMesh& mesh, const MediumParams& medium, const RegionWeights& region,
                                   const StateFields& state, const CcbmParams& p);

struct IntensityResult {
  NodalField phi;  // w1/ε on vertices touching the region, 0 elsewhere
  StateFields state;
};

IntensityResult solve_intensity_ccbm(CcbmSolver& solver, const RegionWeights& region, const CauchyData& data,
                                     const CcbmParams& p);
IntensityResult solve_intensity_ccbm(const TriMesh& mesh, const MediumParams& medium, const RegionWeights& region,
                                     const CauchyData& data, const CcbmParams& p);

/// CSV with header `vertex,x,y,g1,g2`.
void write_cauchy_csv(const std::string& path, const TriMesh& mesh, const CauchyData& data);
CauchyData read_cauchy_csv(const std::string& path);

}  // namespace blt
