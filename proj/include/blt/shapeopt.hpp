#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "blt/ccbm.hpp"
#include "blt/levelset.hpp"

namespace blt {

struct OptParams {
  double epsilon0 = 1e-4;
  double lambda0 = 1e-4;
  double beta0 = 1.0;
  double gamma0 = 0.1;
  double decay = 0.9;
  int warmup_iters = 20;
  double c_alpha = 100.0;
  double cfl = 0.5;
  double stop_tol = 1e-6;
  int max_iters = 300;
  int reinit_every = 5;
  int backtrack_max = 8;
  /// Decay of ε, λ, β stops once ε reaches this value.
  double epsilon_min = 1e-7;
  /// Split each step into a volume-neutral H¹ descent and a Gauss-Newton
  /// step along the H¹ representative of d|Ω0|. Off: plain H¹ descent.
  bool volume_newton = true;

  void validate() const;
};

/// Regularization parameters in force at one iteration.
struct Regularization {
  double epsilon = 1e-4;
  double lambda = 1e-4;
  double beta = 1.0;
  double gamma0 = 0.1;
  double c_alpha = 100.0;

  static Regularization initial(const OptParams& p);
  CcbmParams ccbm() const { return {epsilon, c_alpha}; }
  double alpha() const { return ccbm().alpha(); }
};

struct Objective {
  double misfit = 0.0;     // ½‖u2‖²
  double intensity = 0.0;  // (1/2ε)‖w1‖²_{Ω0}
  double perimeter = 0.0;  // λ·Per
  double volume = 0.0;     // β(|Ω0| − γ0)²

  double total() const { return misfit + intensity + perimeter + volume; }
};

Objective eval_objective(const TriMesh& mesh, const StateFields& state, const ElementClassification& cls,
                         const Regularization& reg);

/// Distributed shape derivative dJ(Ω0; V) evaluated directly from its integrals.
double shape_derivative(const TriMesh& mesh, const MediumParams& medium, const StateFields& state,
                        const AdjointFields& adj, const LevelSetField& ls, const ElementClassification& cls,
                        const VelocityField& V, const Regularization& reg);

/// Nodal covector G with G·V = shape_derivative(V) for every nodal V; zero on Γ.
/// Row i holds the two components of vertex i.
Eigen::MatrixX2d assemble_gradient_functional(const TriMesh& mesh, const MediumParams& medium,
                                              const StateFields& state, const AdjointFields& adj,
                                              const LevelSetField& ls, const ElementClassification& cls,
                                              const Regularization& reg);

/// Covector of V ↦ d|Ω0|(V) = ∫_Ω0 div V; zero on Γ.
Eigen::MatrixX2d volume_gradient_functional(const TriMesh& mesh, const ElementClassification& cls);

/// Σ_i G_i · V_i.
double apply(const Eigen::MatrixX2d& G, const VelocityField& V);

/// H¹ extension: (∇V,∇W) + (V,W) = −G(W) for all W vanishing on Γ.
class HilbertSolver {
 public:
  explicit HilbertSolver(const TriMesh& mesh);
  VelocityField descent(const Eigen::MatrixX2d& G) const;
  /// ‖∇V‖² + ‖V‖² for a nodal field.
  double energy(const VelocityField& V) const;

 private:
  const TriMesh& mesh_;
  SparseMatrix A_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

VelocityField hilbertian_descent(const TriMesh& mesh, const Eigen::MatrixX2d& G);

struct IterationRecord {
  int iter = 0;
  Objective J;
  double volume = 0.0;
  double perimeter = 0.0;
  double dt = 0.0;
  int backtracks = 0;
  double epsilon = 0.0, alpha = 0.0, lambda = 0.0, beta = 0.0;
  double adjoint_residual = 0.0;
  double dJ = 0.0;  // directional derivative along the accepted V
  bool reinitialized = false;
};

enum class OptStatus { Converged, MaxIters, Stalled, Stationary };
std::string to_string(OptStatus s);

struct OptResult {
  LevelSetField ls;
  std::vector<IterationRecord> history;
  OptStatus status = OptStatus::MaxIters;
  Regularization final_reg;
  double max_adjoint_residual = 0.0;
};

/// Called after every accepted step with the iteration index and the level set.
using IterationObserver = std::function<void(int, const LevelSetField&)>;

/// Shape steepest descent with backtracking on the transport step.
OptResult optimize(const TriMesh& mesh, const MediumParams& medium, const CauchyData& data,
                   const LevelSetField& init, const OptParams& p, const IterationObserver& observer = {});

void write_history_csv(const std::string& path, const std::vector<IterationRecord>& history);

}  // namespace blt
