#include "blt/shapeopt.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "blt/errors.hpp"

namespace blt {

namespace {

using Mat2 = Eigen::Matrix2d;

Eigen::Vector3d local(const NodalField& f, const std::array<int, 3>& el) { return {f[el[0]], f[el[1]], f[el[2]]}; }

Point grad(const ElementGeometry& g, const Eigen::Vector3d& f) {
  return f[0] * g.grad_basis[0] + f[1] * g.grad_basis[1] + f[2] * g.grad_basis[2];
}

// Per-element pieces of the distributed shape derivative: dJ = Σ_e DV_e : T_e,
// T_e = s·I + E_e + P_e with s the coefficient of div V.
struct ElementTerms {
  double s = 0.0;
  Mat2 T = Mat2::Zero();  // everything except s·I
};

ElementTerms element_terms(const TriMesh& mesh, const MediumParams& medium, const StateFields& st,
                           const AdjointFields& adj, const LevelSetField& ls, const ElementClassification& cls,
                           const Regularization& reg, double volume_excess, int e) {
  const auto& el = mesh.element(e);
  const auto g = mesh.geometry(e);
  const Matrix3 Me = element_mass(g.area);
  const double mu = medium.mu_a[static_cast<std::size_t>(e)];
  const double D = medium.D[static_cast<std::size_t>(e)];

  const Eigen::Vector3d u1 = local(st.u1, el), u2 = local(st.u2, el), w1 = local(st.w1, el), w2 = local(st.w2, el);
  const Eigen::Vector3d v1 = local(adj.v1, el), v2 = local(adj.v2, el), s1 = local(adj.s1, el),
                        s2 = local(adj.s2, el);

  ElementTerms t;
  t.s = 0.5 * u2.dot(Me * u2) + mu * (u1.dot(Me * v1) + u2.dot(Me * v2) + w1.dot(Me * s1) + w2.dot(Me * s2)) +
        u2.dot(Me * s2);
  const double frac = cls.fraction(static_cast<std::size_t>(e));
  if (frac > 0.0) {
    const Matrix3 M0 = element_region_mass(mesh, cls.weights, e);
    t.s += (0.5 * w1.dot(M0 * w1) - w1.dot(M0 * v1)) / reg.epsilon;
    t.s += 2.0 * reg.beta * volume_excess * frac * g.area;
  }

  // D E(V)∇a·∇b = DV : D[(∇a·∇b)I − ∇a⊗∇b − ∇b⊗∇a]
  auto pair = [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const Point ga = grad(g, a), gb = grad(g, b);
    return Mat2(ga.dot(gb) * Mat2::Identity() - ga * gb.transpose() - gb * ga.transpose());
  };
  t.T = D * g.area * (pair(u1, v1) + pair(u2, v2) + pair(w1, s1) + pair(w2, s2));

  if (const auto& seg = cls.segment[static_cast<std::size_t>(e)]; seg && reg.lambda != 0.0) {
    Point n = grad(g, local(ls.phi, el));
    const double nn = n.norm();
    if (nn > 0.0) {
      n /= nn;
      t.T += reg.lambda * seg->length() * (Mat2::Identity() - n * n.transpose());
    }
  }
  return t;
}

Mat2 velocity_jacobian(const TriMesh& mesh, const VelocityField& V, int e) {
  const auto& el = mesh.element(e);
  const auto g = mesh.geometry(e);
  Mat2 DV = Mat2::Zero();
  for (int k = 0; k < 3; ++k) {
    DV += V.v[static_cast<std::size_t>(el[static_cast<std::size_t>(k)])] *
          g.grad_basis[static_cast<std::size_t>(k)].transpose();
  }
  return DV;
}

}  // namespace

void OptParams::validate() const {
  if (!(epsilon0 > 0.0 && lambda0 >= 0.0 && beta0 >= 0.0)) throw InvalidArgument("regularization must be positive");
  if (!(gamma0 > 0.0 && gamma0 < 4.0)) throw InvalidArgument("gamma0 must lie in (0, |Ω|)");
  if (!(decay > 0.0 && decay <= 1.0)) throw InvalidArgument("decay must lie in (0, 1]");
  if (warmup_iters < 0 || max_iters < 0 || reinit_every < 1 || backtrack_max < 0) {
    throw InvalidArgument("iteration counts must be nonnegative");
  }
  if (!(c_alpha > 0.0 && cfl > 0.0 && stop_tol >= 0.0 && epsilon_min > 0.0)) {
    throw InvalidArgument("c_alpha, cfl and epsilon_min must be positive");
  }
}

Regularization Regularization::initial(const OptParams& p) {
  return {p.epsilon0, p.lambda0, p.beta0, p.gamma0, p.c_alpha};
}

Objective eval_objective(const TriMesh& mesh, const StateFields& state, const ElementClassification& cls,
                         const Regularization& reg) {
  Objective J;
  if (state.u2.size() > 0) J.misfit = 0.5 * state.u2.dot(assemble_mass(mesh) * state.u2);
  if (state.w1.size() > 0) {
    J.intensity = 0.5 / reg.epsilon * state.w1.dot(assemble_region_mass(mesh, cls.weights) * state.w1);
  }
  J.perimeter = reg.lambda * perimeter(cls);
  const double dv = volume(mesh, cls) - reg.gamma0;
  J.volume = reg.beta * dv * dv;
  return J;
}

double shape_derivative(const TriMesh& mesh, const MediumParams& medium, const StateFields& st,
                        const AdjointFields& adj, const LevelSetField& ls, const ElementClassification& cls,
                        const VelocityField& V, const Regularization& reg) {
  if (V.v.size() != mesh.vertex_count()) throw InvalidArgument("velocity length does not match the mesh");
  const double excess = volume(mesh, cls) - reg.gamma0;
  double dJ = 0.0;
  for (int e = 0; e < static_cast<int>(mesh.element_count()); ++e) {
    const Mat2 DV = velocity_jacobian(mesh, V, e);
    const double div = DV.trace();
    if (DV.isZero(0.0)) continue;
    const auto& el = mesh.element(e);
    const auto g = mesh.geometry(e);
    const Matrix3 Me = element_mass(g.area);
    const double mu = medium.mu_a[static_cast<std::size_t>(e)];
    const double D = medium.D[static_cast<std::size_t>(e)];
    const Eigen::Vector3d u1 = local(st.u1, el), u2 = local(st.u2, el), w1 = local(st.w1, el),
                          w2 = local(st.w2, el);
    const Eigen::Vector3d v1 = local(adj.v1, el), v2 = local(adj.v2, el), s1 = local(adj.s1, el),
                          s2 = local(adj.s2, el);

    dJ += 0.5 * div * u2.dot(Me * u2);
    const double frac = cls.fraction(static_cast<std::size_t>(e));
    if (frac > 0.0) {
      const Matrix3 M0 = element_region_mass(mesh, cls.weights, e);
      dJ += 0.5 / reg.epsilon * div * w1.dot(M0 * w1);
      dJ -= div / reg.epsilon * w1.dot(M0 * v1);
      dJ += 2.0 * reg.beta * excess * div * frac * g.area;
    }
    if (const auto& seg = cls.segment[static_cast<std::size_t>(e)]; seg) {
      Point n = grad(g, local(ls.phi, el));
      if (n.norm() > 0.0) {
        n.normalize();
        dJ += reg.lambda * seg->length() * (div - n.dot(DV * n));
      }
    }
    const Mat2 E = div * Mat2::Identity() - DV.transpose() - DV;
    auto a_form = [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
      return D * g.area * grad(g, a).dot(E * grad(g, b)) + div * mu * a.dot(Me * b);
    };
    dJ += a_form(u1, v1) + a_form(u2, v2) + a_form(w1, s1) + a_form(w2, s2);
    dJ += div * u2.dot(Me * s2);
  }
  return dJ;
}

Eigen::MatrixX2d assemble_gradient_functional(const TriMesh& mesh, const MediumParams& medium,
                                              const StateFields& state, const AdjointFields& adj,
                                              const LevelSetField& ls, const ElementClassification& cls,
                                              const Regularization& reg) {
  Eigen::MatrixX2d G = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(mesh.vertex_count()), 2);
  const double excess = volume(mesh, cls) - reg.gamma0;
  for (int e = 0; e < static_cast<int>(mesh.element_count()); ++e) {
    const auto t = element_terms(mesh, medium, state, adj, ls, cls, reg, excess, e);
    const Mat2 T = t.T + t.s * Mat2::Identity();
    const auto& el = mesh.element(e);
    const auto g = mesh.geometry(e);
    for (int k = 0; k < 3; ++k) {
      G.row(el[static_cast<std::size_t>(k)]) += (T * g.grad_basis[static_cast<std::size_t>(k)]).transpose();
    }
  }
  for (int v : mesh.boundary_vertices()) G.row(v).setZero();
  return G;
}

Eigen::MatrixX2d volume_gradient_functional(const TriMesh& mesh, const ElementClassification& cls) {
  Eigen::MatrixX2d G = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(mesh.vertex_count()), 2);
  for (int e = 0; e < static_cast<int>(mesh.element_count()); ++e) {
    const double frac = cls.fraction(static_cast<std::size_t>(e));
    if (frac <= 0.0) continue;
    const auto& el = mesh.element(e);
    const auto g = mesh.geometry(e);
    for (int k = 0; k < 3; ++k) {
      G.row(el[static_cast<std::size_t>(k)]) += frac * g.area * g.grad_basis[static_cast<std::size_t>(k)].transpose();
    }
  }
  for (int v : mesh.boundary_vertices()) G.row(v).setZero();
  return G;
}

double apply(const Eigen::MatrixX2d& G, const VelocityField& V) {
  if (G.rows() != static_cast<Eigen::Index>(V.v.size())) throw InvalidArgument("covector length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < V.v.size(); ++i) s += G.row(static_cast<Eigen::Index>(i)).dot(V.v[i]);
  return s;
}

HilbertSolver::HilbertSolver(const TriMesh& mesh) : mesh_(mesh) {
  const SparseMatrix A = assemble_bilinear_a(mesh, MediumParams::uniform(mesh, 1.0, 1.0));
  A_ = A;
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
      if (mesh.is_boundary_vertex(static_cast<int>(it.row())) || mesh.is_boundary_vertex(static_cast<int>(it.col()))) {
        continue;
      }
      t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  for (int v : mesh.boundary_vertices()) t.emplace_back(v, v, 1.0);
  SparseMatrix Ad(A.rows(), A.cols());
  Ad.setFromTriplets(t.begin(), t.end());
  ldlt_.compute(Ad);
  if (ldlt_.info() != Eigen::Success) throw SolverFailure("H1 extension matrix is not positive definite");
}

VelocityField HilbertSolver::descent(const Eigen::MatrixX2d& G) const {
  if (G.rows() != static_cast<Eigen::Index>(mesh_.vertex_count())) throw InvalidArgument("covector length mismatch");
  VelocityField V = VelocityField::zero(mesh_);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd b = -G.col(c);
    for (int v : mesh_.boundary_vertices()) b[v] = 0.0;
    if (b.isZero(0.0)) continue;
    const Eigen::VectorXd x = ldlt_.solve(b);
    for (std::size_t i = 0; i < V.v.size(); ++i) V.v[i][c] = x[static_cast<Eigen::Index>(i)];
  }
  for (int v : mesh_.boundary_vertices()) V.v[static_cast<std::size_t>(v)].setZero();
  return V;
}

double HilbertSolver::energy(const VelocityField& V) const {
  double E = 0.0;
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(V.v.size()));
    for (std::size_t i = 0; i < V.v.size(); ++i) x[static_cast<Eigen::Index>(i)] = V.v[i][c];
    E += x.dot(A_ * x);
  }
  return E;
}

VelocityField hilbertian_descent(const TriMesh& mesh, const Eigen::MatrixX2d& G) {
  return HilbertSolver(mesh).descent(G);
}

std::string to_string(OptStatus s) {
  switch (s) {
    case OptStatus::Converged: return "converged";
    case OptStatus::MaxIters: return "max_iters";
    case OptStatus::Stalled: return "stalled";
    case OptStatus::Stationary: return "stationary";
  }
  return "unknown";
}

OptResult optimize(const TriMesh& mesh, const MediumParams& medium, const CauchyData& data,
                   const LevelSetField& init, const OptParams& p, const IterationObserver& observer) {
  p.validate();
  CcbmSolver solver(mesh, medium);
  HilbertSolver hilbert(mesh);
  Regularization reg = Regularization::initial(p);

  struct Iterate {
    LevelSetField ls;
    ElementClassification cls;
    StateFields state;
    Objective J;
  };
  auto evaluate_at = [&](LevelSetField ls) {
    Iterate it{std::move(ls), {}, {}, {}};
    it.cls = classify(mesh, it.ls);
    it.state = solver.solve_state(it.cls.weights, data, reg.ccbm());
    it.J = eval_objective(mesh, it.state, it.cls, reg);
    return it;
  };

  OptResult res;
  Iterate cur = evaluate_at(init);
  if (volume(mesh, cur.cls) <= 0.0) throw InvalidArgument("initial region is empty");
  int accepted = 0;
  const double h = mesh.h_min();

  for (int k = 0; k < p.max_iters; ++k) {
    AdjointReport arep;
    const AdjointFields adj = solver.solve_adjoint(cur.cls.weights, cur.state, reg.ccbm(), &arep);
    res.max_adjoint_residual = std::max(res.max_adjoint_residual, arep.identity_residual);
    const Eigen::MatrixX2d G = assemble_gradient_functional(mesh, medium, cur.state, adj, cur.ls, cur.cls, reg);
    VelocityField V = hilbert.descent(G);
    double dt = 0.0;
    if (p.volume_newton && reg.beta > 0.0) {
      // Volume mode Vv = H¹ representative of d|Ω0|, so (Vv, W)_H = d|Ω0|(W).
      const Eigen::MatrixX2d Gv = volume_gradient_functional(mesh, cur.cls);
      const VelocityField Vv = hilbert.descent(-Gv);
      const double dv = apply(Gv, Vv);
      if (dv > 0.0 && V.max_norm() > 0.0) {
        // Step length of the unsplit descent, so a negligible neutral part is not blown up.
        dt = p.cfl * h / V.max_norm();
        const double c = apply(Gv, V) / dv;
        for (std::size_t i = 0; i < V.v.size(); ++i) V.v[i] -= c * Vv.v[i];
        // Minimizer of J0 + τ dJ(Vv) + β τ² dv² along the mode, capped at one CFL move.
        double tau = -apply(G, Vv) / (2.0 * reg.beta * dv * dv);
        const double reach = std::abs(tau) * Vv.max_norm();
        if (reach > p.cfl * h) tau *= p.cfl * h / reach;
        for (std::size_t i = 0; i < V.v.size(); ++i) V.v[i] += (tau / dt) * Vv.v[i];
      }
    }
    const double vmax = V.max_norm();
    if (!(vmax > 0.0)) {
      res.status = OptStatus::Stationary;
      break;
    }
    const double dJ = apply(G, V);
    if (dt == 0.0) dt = p.cfl * h / vmax;
    const double J0 = cur.J.total();
    bool ok = false;
    int backtracks = 0;
    Iterate trial;
    for (; backtracks <= p.backtrack_max; ++backtracks, dt *= 0.5) {
      LevelSetField moved = advect(mesh, cur.ls, V, dt);
      if (volume(mesh, moved) <= 0.0) continue;
      trial = evaluate_at(std::move(moved));
      if (trial.J.total() < J0) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      res.status = OptStatus::Stalled;
      break;
    }
    cur = std::move(trial);
    ++accepted;

    IterationRecord rec;
    rec.iter = k;
    rec.J = cur.J;
    rec.volume = volume(mesh, cur.cls);
    rec.perimeter = perimeter(cur.cls);
    rec.dt = dt;
    rec.backtracks = backtracks;
    rec.epsilon = reg.epsilon;
    rec.alpha = reg.alpha();
    rec.lambda = reg.lambda;
    rec.beta = reg.beta;
    rec.adjoint_residual = arep.identity_residual;
    rec.dJ = dJ;

    // The stop test only applies once the continuation in (ε, λ, β) has run its course.
    const bool schedule_done = k + 1 >= p.warmup_iters && (p.decay >= 1.0 || reg.epsilon <= p.epsilon_min);
    const bool converged = schedule_done && std::abs(cur.J.total() - J0) <= p.stop_tol * std::abs(J0);

    bool refresh = false;
    if (accepted % p.reinit_every == 0) {
      cur.ls = reinitialize(mesh, cur.ls);
      rec.reinitialized = true;
      refresh = true;
    }
    if (k + 1 >= p.warmup_iters && reg.epsilon > p.epsilon_min && p.decay < 1.0) {
      reg.epsilon = std::max(reg.epsilon * p.decay, p.epsilon_min);
      reg.lambda *= p.decay;
      reg.beta *= p.decay;
      refresh = true;
    }
    res.history.push_back(rec);
    if (observer) observer(k, cur.ls);
    if (converged) {
      res.status = OptStatus::Converged;
      break;
    }
    if (refresh) cur = evaluate_at(std::move(cur.ls));
  }
  res.ls = std::move(cur.ls);
  res.final_reg = reg;
  return res;
}

void write_history_csv(const std::string& path, const std::vector<IterationRecord>& history) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(10);
  out << "iter,J,misfit,intensity,perimeter_term,volume_term,volume,perimeter,dt,backtracks,epsilon,alpha,lambda,"
         "beta,adjoint_residual,dJ,reinitialized\n";
  for (const auto& r : history) {
    out << r.iter << ',' << r.J.total() << ',' << r.J.misfit << ',' << r.J.intensity << ',' << r.J.perimeter << ','
        << r.J.volume << ',' << r.volume << ',' << r.perimeter << ',' << r.dt << ',' << r.backtracks << ','
        << r.epsilon << ',' << r.alpha << ',' << r.lambda << ',' << r.beta << ',' << r.adjoint_residual << ','
        << r.dJ << ',' << (r.reinitialized ? 1 : 0) << '\n';
  }
}

}  // namespace blt
