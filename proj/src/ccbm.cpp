#include "blt/ccbm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "blt/errors.hpp"

namespace blt {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void add_block(Triplets& t, const SparseMatrix& B, double scale, Eigen::Index row, Eigen::Index col) {
  for (int k = 0; k < B.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(B, k); it; ++it) {
      t.emplace_back(row + it.row(), col + it.col(), scale * it.value());
    }
  }
}

double inf(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

NodalField expand(const TriMesh& mesh, const std::vector<int>& vertices, const Eigen::VectorXd& values) {
  NodalField f = NodalField::Zero(static_cast<Eigen::Index>(mesh.vertex_count()));
  for (std::size_t k = 0; k < vertices.size(); ++k) f[vertices[k]] = values[static_cast<Eigen::Index>(k)];
  return f;
}

}  // namespace

double CcbmParams::alpha() const { return c_alpha * std::sqrt(epsilon); }

void CcbmParams::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be positive");
  if (!(c_alpha > 0.0) || !std::isfinite(c_alpha)) throw InvalidArgument("c_alpha must be positive");
}

NodalField CauchyData::g1_nodal(const TriMesh& mesh) const { return expand(mesh, vertices, g1); }
NodalField CauchyData::g2_nodal(const TriMesh& mesh) const { return expand(mesh, vertices, g2); }

void CauchyData::validate(const TriMesh& mesh) const {
  if (vertices != mesh.boundary_vertices()) throw InvalidArgument("Cauchy data is not on this mesh's boundary");
  if (g1.size() != static_cast<Eigen::Index>(vertices.size()) ||
      g2.size() != static_cast<Eigen::Index>(vertices.size())) {
    throw InvalidArgument("Cauchy data length mismatch");
  }
  if (!g1.allFinite() || !g2.allFinite()) throw InvalidArgument("Cauchy data must be finite");
  if (noise_level < 0.0) throw InvalidArgument("noise level must be nonnegative");
}

void SourceSpec::validate() const {
  if (layers.empty()) throw InvalidArgument("source needs at least one layer");
  for (const auto& l : layers) {
    l.support.validate();
    if (!std::isfinite(l.intensity)) throw InvalidArgument("source intensity must be finite");
  }
}

Shape SourceSpec::support() const {
  if (layers.size() == 1) return layers.front().support;
  Shape::Union u;
  for (const auto& l : layers) u.push_back(l.support);
  return Shape(std::move(u));
}

NodalField source_load(const TriMesh& mesh, const SourceSpec& source) {
  source.validate();
  NodalField load = NodalField::Zero(static_cast<Eigen::Index>(mesh.vertex_count()));
  const NodalField one = NodalField::Ones(load.size());
  for (const auto& l : source.layers) {
    if (l.intensity == 0.0) continue;
    const auto cls = classify(mesh, nodal_level_values(mesh, l.support));
    load += l.intensity * (assemble_region_mass(mesh, cls.weights) * one);
  }
  return load;
}

NodalField solve_forward_neumann(const TriMesh& mesh, const MediumParams& medium, const NodalField& load,
                                 const NodalField& g1_nodal) {
  medium.validate(mesh);
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  if (load.size() != n || g1_nodal.size() != n) throw InvalidArgument("forward data length mismatch");
  if (std::all_of(medium.mu_a.begin(), medium.mu_a.end(), [](double m) { return m == 0.0; })) {
    throw SolverFailure("pure Neumann problem without absorption is singular");
  }
  const NodalField rhs = load + assemble_boundary_mass(mesh) * g1_nodal;
  if (rhs.isZero(0.0)) return NodalField::Zero(n);
  return solve_sparse(assemble_bilinear_a(mesh, medium), rhs);
}

NodalField solve_forward_neumann(const TriMesh& mesh, const MediumParams& medium, const SourceSpec& source,
                                 const NodalField& g1_nodal) {
  return solve_forward_neumann(mesh, medium, source_load(mesh, source), g1_nodal);
}

Eigen::VectorXd trace_boundary(const TriMesh& mesh, const NodalField& u) {
  if (u.size() != static_cast<Eigen::Index>(mesh.vertex_count())) throw InvalidArgument("field length mismatch");
  const auto& bv = mesh.boundary_vertices();
  Eigen::VectorXd t(static_cast<Eigen::Index>(bv.size()));
  for (std::size_t k = 0; k < bv.size(); ++k) t[static_cast<Eigen::Index>(k)] = u[bv[k]];
  return t;
}

CauchyData add_noise(const CauchyData& data, double delta, std::uint64_t seed) {
  if (!(delta >= 0.0)) throw InvalidArgument("noise level must be nonnegative");
  CauchyData out = data;
  out.noise_level = delta;
  out.seed = seed;
  if (delta == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (Eigen::Index k = 0; k < out.g2.size(); ++k) out.g2[k] += delta * out.g2[k] * (2.0 * U(rng) - 1.0);
  return out;
}

CcbmSolver::CcbmSolver(const TriMesh& mesh, const MediumParams& medium)
    : mesh_(mesh),
      medium_(medium),
      K_(assemble_bilinear_a(mesh, medium)),
      M_(assemble_mass(mesh)),
      Mg_(assemble_boundary_mass(mesh)) {
  medium_.validate(mesh);
}

SparseMatrix CcbmSolver::state_matrix(const SparseMatrix& M0, const CcbmParams& p) const {
  const Eigen::Index n = K_.rows();
  const double a = p.alpha(), ie = 1.0 / p.epsilon;
  Triplets t;
  t.reserve(static_cast<std::size_t>(4 * K_.nonZeros() + 2 * M_.nonZeros() + 4 * Mg_.nonZeros()));
  // (S1) K u1 − α Mγ u2 − (1/ε) M0 w1
  add_block(t, K_, 1.0, 0, 0);
  add_block(t, Mg_, -a, 0, n);
  add_block(t, M0, -ie, 0, 2 * n);
  // (S2) α Mγ u1 + K u2
  add_block(t, Mg_, a, n, 0);
  add_block(t, K_, 1.0, n, n);
  // (S3) K w1 + α Mγ w2
  add_block(t, K_, 1.0, 2 * n, 2 * n);
  add_block(t, Mg_, a, 2 * n, 3 * n);
  // (S4) M u2 − α Mγ w1 + K w2
  add_block(t, M_, 1.0, 3 * n, n);
  add_block(t, Mg_, -a, 3 * n, 2 * n);
  add_block(t, K_, 1.0, 3 * n, 3 * n);
  SparseMatrix A(4 * n, 4 * n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

SparseMatrix CcbmSolver::adjoint_matrix(const SparseMatrix& M0, const CcbmParams& p) const {
  const Eigen::Index n = K_.rows();
  const double a = p.alpha(), ie = 1.0 / p.epsilon;
  Triplets t;
  // (A1) K v1 + α Mγ v2
  add_block(t, K_, 1.0, 0, 0);
  add_block(t, Mg_, a, 0, n);
  // (A2) −α Mγ v1 + K v2 + M s2
  add_block(t, Mg_, -a, n, 0);
  add_block(t, K_, 1.0, n, n);
  add_block(t, M_, 1.0, n, 3 * n);
  // (A3) −(1/ε) M0 v1 + K s1 − α Mγ s2
  add_block(t, M0, -ie, 2 * n, 0);
  add_block(t, K_, 1.0, 2 * n, 2 * n);
  add_block(t, Mg_, -a, 2 * n, 3 * n);
  // (A4) α Mγ s1 + K s2
  add_block(t, Mg_, a, 3 * n, 2 * n);
  add_block(t, K_, 1.0, 3 * n, 3 * n);
  SparseMatrix A(4 * n, 4 * n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

StateFields CcbmSolver::solve_state(const RegionWeights& region, const CauchyData& data, const CcbmParams& p) {
  p.validate();
  data.validate(mesh_);
  const Eigen::Index n = K_.rows();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * n);
  b.segment(0, n) = Mg_ * data.g1_nodal(mesh_);
  b.segment(n, n) = p.alpha() * (Mg_ * data.g2_nodal(mesh_));
  if (b.isZero(0.0)) {
    const NodalField z = NodalField::Zero(n);
    return {z, z, z, z};
  }
  solver_.factorize(state_matrix(assemble_region_mass(mesh_, region), p));
  const Eigen::VectorXd x = solver_.solve(b);
  return {x.segment(0, n), x.segment(n, n), x.segment(2 * n, n), x.segment(3 * n, n)};
}

double CcbmSolver::adjoint_residual(const RegionWeights& region, const StateFields& st, const AdjointFields& adj,
                                    const CcbmParams& p) const {
  const double a = p.alpha(), ie = 1.0 / p.epsilon;
  const SparseMatrix M0 = assemble_region_mass(mesh_, region);
  double num = 0.0, den = 0.0;
  auto accumulate = [&](std::initializer_list<Eigen::VectorXd> terms) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(K_.rows());
    for (const auto& t : terms) {
      r += t;
      den += inf(t);
    }
    num = std::max(num, inf(r));
  };
  accumulate({K_ * adj.v1, a * (Mg_ * adj.v2)});
  accumulate({K_ * adj.v2, -a * (Mg_ * adj.v1), M_ * (st.u2 + adj.s2)});
  accumulate({K_ * adj.s1, -a * (Mg_ * adj.s2), ie * (M0 * (st.w1 - adj.v1))});
  accumulate({K_ * adj.s2, a * (Mg_ * adj.s1)});
  return den > 0.0 ? num / den : 0.0;
}

AdjointFields CcbmSolver::solve_adjoint_monolithic(const RegionWeights& region, const StateFields& st,
                                                   const CcbmParams& p) {
  p.validate();
  const Eigen::Index n = K_.rows();
  const SparseMatrix M0 = assemble_region_mass(mesh_, region);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * n);
  b.segment(n, n) = -(M_ * st.u2);
  b.segment(2 * n, n) = -(1.0 / p.epsilon) * (M0 * st.w1);
  if (b.isZero(0.0)) {
    const NodalField z = NodalField::Zero(n);
    return {z, z, z, z};
  }
  solver_.factorize(adjoint_matrix(M0, p));
  const Eigen::VectorXd x = solver_.solve(b);
  return {x.segment(0, n), x.segment(n, n), x.segment(2 * n, n), x.segment(3 * n, n)};
}

AdjointFields CcbmSolver::solve_adjoint(const RegionWeights& region, const StateFields& st, const CcbmParams& p,
                                        AdjointReport* report) {
  constexpr double tol = 1e-8;
  const NodalField z = NodalField::Zero(K_.rows());
  AdjointFields cand{st.w1, st.w2, z, z};
  const double r = adjoint_residual(region, st, cand, p);
  if (report) *report = {r, false};
  if (r <= tol) return cand;
  AdjointFields adj = solve_adjoint_monolithic(region, st, p);
  if (report) report->used_fallback = true;
  if (adjoint_residual(region, st, adj, p) > tol) {
    throw InternalConsistency("adjoint system could not be solved to tolerance");
  }
  return adj;
}

StateFields solve_state_system(const TriMesh& mesh, const MediumParams& medium, const RegionWeights& region,
                               const CauchyData& data, const CcbmParams& p) {
  CcbmSolver s(mesh, medium);
  return s.solve_state(region, data, p);
}

AdjointFields solve_adjoint_system(const TriMesh& mesh, const MediumParams& medium, const RegionWeights& region,
                                   const StateFields& state, const CcbmParams& p) {
  CcbmSolver s(mesh, medium);
  return s.solve_adjoint(region, state, p);
}

IntensityResult solve_intensity_ccbm(CcbmSolver& solver, const RegionWeights& region, const CauchyData& data,
                                     const CcbmParams& p) {
  IntensityResult r;
  r.state = solver.solve_state(region, data, p);
  const TriMesh& mesh = solver.mesh();
  std::vector<bool> touched(mesh.vertex_count(), false);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    if (region.fraction[e] <= 0.0) continue;
    for (int v : mesh.element(static_cast<int>(e))) touched[static_cast<std::size_t>(v)] = true;
  }
  r.phi = NodalField::Zero(static_cast<Eigen::Index>(mesh.vertex_count()));
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    if (touched[i]) r.phi[static_cast<Eigen::Index>(i)] = r.state.w1[static_cast<Eigen::Index>(i)] / p.epsilon;
  }
  return r;
}

IntensityResult solve_intensity_ccbm(const TriMesh& mesh, const MediumParams& medium, const RegionWeights& region,
                                     const CauchyData& data, const CcbmParams& p) {
  CcbmSolver s(mesh, medium);
  return solve_intensity_ccbm(s, region, data, p);
}

void write_cauchy_csv(const std::string& path, const TriMesh& mesh, const CauchyData& data) {
  data.validate(mesh);
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(17);
  out << "vertex,x,y,g1,g2\n";
  for (std::size_t k = 0; k < data.vertices.size(); ++k) {
    const Point& x = mesh.vertex(data.vertices[k]);
    const auto kk = static_cast<Eigen::Index>(k);
    out << data.vertices[k] << ',' << x.x() << ',' << x.y() << ',' << data.g1[kk] << ',' << data.g2[kk] << '\n';
  }
}

CauchyData read_cauchy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line.rfind("vertex,x,y,g1,g2", 0) != 0) throw InvalidArgument("unexpected header in " + path);
  std::vector<double> g1, g2;
  CauchyData d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    int v;
    double x, y, a, b;
    if (!(ss >> v >> x >> y >> a >> b)) throw InvalidArgument("malformed row in " + path);
    d.vertices.push_back(v);
    g1.push_back(a);
    g2.push_back(b);
  }
  d.g1 = Eigen::Map<Eigen::VectorXd>(g1.data(), static_cast<Eigen::Index>(g1.size()));
  d.g2 = Eigen::Map<Eigen::VectorXd>(g2.data(), static_cast<Eigen::Index>(g2.size()));
  return d;
}

}  // namespace blt
