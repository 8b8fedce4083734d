// Acceptance suite. One PASS/FAIL line per criterion; the exit code is the
// number of failed criteria. `acceptance 1 2 11` runs a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "blt/experiments.hpp"
#include "support.hpp"

using namespace blt;
using namespace blt::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Pipeline runs shared between criteria 7, 8 and 10.
class RunCache {
 public:
  explicit RunCache(std::string out) : out_(std::move(out)) {}

  const ErrorReport& get(const std::string& name, double noise, std::uint64_t seed) {
    const auto key = std::make_tuple(name, noise, seed);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    std::string dir;
    if (!out_.empty()) dir = fmt("%s/%s_d%g_s%llu", out_.c_str(), name.c_str(), noise, (unsigned long long)seed);
    const ErrorReport r = run_example(name, noise, seed, dir);
    std::printf("    run %-8s noise %-7g seed %llu: err_region %.4f err_intensity %.4f components %d %s "
                "(%d it, %.0f s)\n",
                name.c_str(), noise, (unsigned long long)seed, r.err_region, r.err_intensity, r.components,
                r.status.c_str(), r.iterations, r.seconds);
    for (std::size_t k = 0; k < r.layers.size(); ++k) {
      std::printf("      layer %zu: err_region %.4f err_intensity %.4f mean %.3f\n", k + 1, r.layers[k].err_region,
                  r.layers[k].err_intensity, r.layers[k].intensity_mean);
    }
    std::fflush(stdout);
    return runs_.emplace(key, r).first->second;
  }

  std::vector<ErrorReport> all() const {
    std::vector<ErrorReport> v;
    for (const auto& [k, r] : runs_) v.push_back(r);
    return v;
  }

 private:
  std::string out_;
  std::map<std::tuple<std::string, double, std::uint64_t>, ErrorReport> runs_;
};

CauchyData moon_data(const TriMesh& coarse, double noise) {
  ExperimentConfig cfg = example_config("moon");
  cfg.noise = noise;
  return generate_data(cfg, coarse);
}

Outcome fem_convergence() {
  const double e16 = manufactured_error(16), e32 = manufactured_error(32), e64 = manufactured_error(64);
  const double r1 = std::log2(e16 / e32), r2 = std::log2(e32 / e64);
  const bool ok = r1 >= 1.9 && r1 <= 2.1 && r2 >= 1.9 && r2 <= 2.1;
  return {ok, fmt("L2 rates %.3f %.3f", r1, r2)};
}

Outcome oracle_equivalence() {
  const TriMesh m = TriMesh::square(2);
  const MediumParams med = MediumParams::uniform(m, 1.0, 1.0);
  CcbmSolver s(m, med);
  const auto w = classify(m, init_levelset(m, Shape(Disk{{0.1, -0.2}, 0.55}))).weights;
  const CcbmParams p{1e-3, 100.0};
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  CauchyData d;
  d.vertices = m.boundary_vertices();
  d.g1.resize(static_cast<Eigen::Index>(d.vertices.size()));
  d.g2.resize(d.g1.size());
  for (Eigen::Index k = 0; k < d.g1.size(); ++k) {
    d.g1[k] = U(rng);
    d.g2[k] = U(rng);
  }
  auto rel = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return (x - y).lpNorm<Eigen::Infinity>() / std::max(1.0, y.lpNorm<Eigen::Infinity>());
  };
  const auto n = static_cast<Eigen::Index>(m.vertex_count());

  const StateFields st = s.solve_state(w, d, p);
  Eigen::VectorXd x(4 * n);
  x << st.u1, st.u2, st.w1, st.w2;
  const double e_state = rel(x, dense_state(m, med, w, d, p));

  const SparseMatrix M0 = assemble_region_mass(m, w);
  const AdjointFields fb = s.solve_adjoint_monolithic(w, st, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(4 * n);
  b.segment(n, n) = -Eigen::MatrixXd(assemble_mass(m)) * st.u2;
  b.segment(2 * n, n) = -Eigen::MatrixXd(M0) * st.w1 / p.epsilon;
  Eigen::VectorXd y(4 * n);
  y << fb.v1, fb.v2, fb.s1, fb.s2;
  const double e_adj = rel(y, dense_solve(Eigen::MatrixXd(s.adjoint_matrix(M0, p)), b));

  Eigen::MatrixX2d G(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) G.row(i) << U(rng), U(rng);
  for (int v : m.boundary_vertices()) G.row(v).setZero();
  const VelocityField V = hilbertian_descent(m, G);
  const Eigen::MatrixX2d X = dense_hilbert(m, G);
  double e_h = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    e_h = std::max(e_h, (V.v[static_cast<std::size_t>(i)].transpose() - X.row(i)).norm());
  }
  const bool ok = e_state <= 1e-10 && e_adj <= 1e-10 && e_h <= 1e-10;
  return {ok, fmt("state %.1e adjoint fallback %.1e hilbert %.1e", e_state, e_adj, e_h)};
}

Outcome gradient_check() {
  const ExperimentConfig cfg = example_config("moon");
  const TriMesh m = TriMesh::square(cfg.coarse_n);
  const MediumParams med = MediumParams::uniform(m, cfg.D, cfg.mu_a, cfg.A);
  const CauchyData d = moon_data(m, cfg.noise);
  OptParams op = cfg.opt;
  const Regularization reg = Regularization::initial(op);
  const LevelSetField ls = init_levelset(m, cfg.init);
  const auto cls = classify(m, ls);
  CcbmSolver solver(m, med);
  const StateFields st = solver.solve_state(cls.weights, d, reg.ccbm());
  const AdjointFields adj = solver.solve_adjoint(cls.weights, st, reg.ccbm());
  auto J = [&](const LevelSetField& l) {
    const auto c = classify(m, l);
    return eval_objective(m, solver.solve_state(c.weights, d, reg.ccbm()), c, reg).total();
  };
  const double t = 1e-3;
  int good = 0;
  std::string errs;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const VelocityField V = random_field(m, seed);
    VelocityField back = V;
    for (auto& v : back.v) v = -v;
    const double fd = (J(advect(m, ls, V, t)) - J(advect(m, ls, back, t))) / (2.0 * t);
    const double dj = shape_derivative(m, med, st, adj, ls, cls, V, reg);
    const double e = std::abs(fd - dj) / std::abs(dj);
    good += e < 0.05;
    errs += fmt(" %.3f", e);
  }
  return {good >= 4, fmt("%d/5 fields within 5%%; relative errors%s", good, errs.c_str())};
}

Outcome adjoint_identity() {
  const ExperimentConfig cfg = example_config("moon");
  const TriMesh m = TriMesh::square(cfg.coarse_n);
  const MediumParams med = MediumParams::uniform(m, cfg.D, cfg.mu_a, cfg.A);
  const CauchyData d = moon_data(m, cfg.noise);
  OptParams op = cfg.opt;
  op.max_iters = 50;
  op.stop_tol = 0.0;
  const OptResult r = optimize(m, med, d, init_levelset(m, cfg.init), op);
  double worst = 0.0;
  for (const auto& h : r.history) worst = std::max(worst, h.adjoint_residual);
  const bool ok = r.history.size() == 50 && worst <= 1e-8;
  return {ok, fmt("%zu iterations (%s), max residual %.2e", r.history.size(), to_string(r.status).c_str(), worst)};
}

Outcome stability_regime() {
  const ExperimentConfig cfg = example_config("moon");
  const TriMesh m = TriMesh::square(cfg.coarse_n);
  const MediumParams med = MediumParams::uniform(m, cfg.D, cfg.mu_a, cfg.A);
  const CauchyData d = moon_data(m, cfg.noise);
  const RegionWeights w = classify(m, init_levelset(m, cfg.source.support())).weights;
  CcbmSolver s(m, med);
  std::vector<double> norms;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const StateFields st = s.solve_state(w, d, CcbmParams{eps, 100.0});
    norms.push_back(l2_norm(m, st.w1, &w) / eps);
  }
  double worst = 1.0;
  for (std::size_t k = 1; k < norms.size(); ++k) {
    worst = std::max(worst, std::max(norms[k] / norms[k - 1], norms[k - 1] / norms[k]));
  }
  return {worst < 2.0, fmt("|w1/eps| = %.4g %.4g %.4g, worst successive ratio %.3f", norms[0], norms[1], norms[2],
                           worst)};
}

Outcome inverse_crime() {
  const TriMesh m = TriMesh::square(38);
  const MediumParams med = MediumParams::uniform(m, 1.0, 1.0);
  const Shape disk(Disk{{0.0, 0.0}, 0.2});
  CauchyData d;
  d.vertices = m.boundary_vertices();
  d.g1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.vertices.size()));
  d.g2 = trace_boundary(m, solve_forward_neumann(m, med, SourceSpec{{{disk, 1.0}}}, d.g1_nodal(m)));
  const RegionWeights w = classify(m, nodal_level_values(m, disk)).weights;
  const IntensityResult r = solve_intensity_ccbm(m, med, w, d, CcbmParams{1e-6, 100.0});
  const NodalField one = NodalField::Ones(r.phi.size());
  const double err = l2_norm(m, r.phi - one, &w) / l2_norm(m, one, &w);
  return {err < 0.05, fmt("relative L2 error %.4f", err)};
}

Outcome moon_example(RunCache& runs) {
  const ErrorReport& r = runs.get("moon", 1e-4, 1);
  const bool ok = r.err_region <= 0.08 && r.err_intensity <= 0.05;
  return {ok, fmt("err_region %.4f (<= 0.08) err_intensity %.4f (<= 0.05)", r.err_region, r.err_intensity)};
}

Outcome topology(RunCache& runs) {
  const ErrorReport& s = runs.get("sepa", 1e-3, 1);
  const ErrorReport& c = runs.get("comb", 1e-4, 1);
  const bool ok = s.components == 2 && s.err_region <= 0.10 && c.components == 1 && c.err_region <= 0.10;
  return {ok, fmt("sepa: %d components err %.4f; comb: %d components err %.4f", s.components, s.err_region,
                  c.components, c.err_region)};
}

Outcome nested(RunCache& runs) {
  const ErrorReport& n2 = runs.get("nested2", 1e-4, 1);
  const ErrorReport& n3 = runs.get("nested3", 1e-4, 1);
  bool ok = n2.layers.size() == 2 && n3.layers.size() == 3;
  std::string detail = "nested2";
  for (const auto& l : n2.layers) detail += fmt(" %.4f", l.err_region);
  detail += "; nested3";
  for (const auto& l : n3.layers) detail += fmt(" %.4f", l.err_region);
  if (ok) {
    ok = n2.layers[0].err_region <= 0.08 && n2.layers[1].err_region <= 0.20 &&
         n3.layers[0].err_region < n3.layers[1].err_region && n3.layers[1].err_region < n3.layers[2].err_region;
  }
  return {ok, detail};
}

Outcome noise_trend(RunCache& runs) {
  const std::vector<double> deltas = {1e-4, 1e-3, 5e-3};
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  bool ok = true;
  std::string detail;
  std::vector<double> moon_int;
  for (const std::string name : {"moon", "sepa"}) {
    detail += name + ":";
    double prev = -1.0;
    for (double delta : deltas) {
      std::vector<double> errs, ints;
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const ErrorReport& r = runs.get(name, delta, seed);
        errs.push_back(r.err_region);
        ints.push_back(r.err_intensity);
      }
      const double med = median(errs);
      ok = ok && med >= prev;
      prev = med;
      detail += fmt(" %.4f", med);
      if (name == "moon") moon_int.push_back(median(ints));
    }
    detail += "; ";
  }
  const auto [lo, hi] = std::minmax_element(moon_int.begin(), moon_int.end());
  const double spread = (*hi - *lo) / *lo;
  ok = ok && spread < 0.20;
  detail += fmt("moon err_intensity spread %.3f", spread);
  return {ok, detail};
}

Outcome metric_suite() {
  const double tol = 2e-3;
  const Shape d = Disk{{0.1, -0.2}, 0.35};
  const Shape a = Rectangle{-0.8, 0.0, 0.0, 0.8};
  const Shape b = Rectangle{-0.4, 0.4, 0.0, 0.8};
  const SourceSpec src{{{d, 1.0}}};
  const double same = area_error(d, d);
  const double disjoint = area_error(Disk{{-0.5, 0.0}, 0.3}, Disk{{0.5, 0.0}, 0.3});
  const double half = area_error(a, b);
  const double i0 = intensity_error([](const Point&) { return 1.0; }, src);
  const double i1 = intensity_error([](const Point&) { return 0.0; }, src);
  const double i01 = intensity_error([](const Point&) { return 1.1; }, src);
  const bool ok = same <= tol && std::abs(disjoint - 1.0) <= tol && std::abs(half - 0.5) <= tol && i0 <= tol &&
                  std::abs(i1 - 1.0) <= tol && std::abs(i01 - 0.1) <= tol;
  return {ok, fmt("area %.4f %.4f %.4f intensity %.4f %.4f %.4f", same, disjoint, half, i0, i1, i01)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string out;
  app.add_option("criteria", only, "criteria to run (default all)")->check(CLI::Range(1, 11));
  app.add_option("--out", out, "keep run artifacts and errors.csv here");
  CLI11_PARSE(app, argc, argv);

  RunCache runs(out);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"FEM convergence", fem_convergence},
      {"oracle equivalence", oracle_equivalence},
      {"shape gradient vs finite differences", gradient_check},
      {"adjoint identity over 50 iterations", adjoint_identity},
      {"bounded intensity across epsilon", stability_regime},
      {"intensity with the true support", inverse_crime},
      {"moon reconstruction", [&] { return moon_example(runs); }},
      {"topology changes", [&] { return topology(runs); }},
      {"nested layers", [&] { return nested(runs); }},
      {"noise trend", [&] { return noise_trend(runs); }},
      {"error metrics", metric_suite},
  };
  const std::set<int> want(only.begin(), only.end());
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!want.empty() && !want.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                o.detail.c_str(), sec);
    std::fflush(stdout);
  }
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    write_errors_csv(out + "/errors.csv", runs.all());
  }
  return failed;
}
