#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "blt/errors.hpp"
#include "blt/experiments.hpp"

using namespace blt;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string example = "moon";
  double noise = -1.0;
  long long seed = -1;
  std::string out;
  int max_iters = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--example", c.example, "named example")->check(CLI::IsMember(example_names()));
  cmd->add_option("--noise", c.noise, "relative noise level δ")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", c.seed, "noise seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--max-iters", c.max_iters, "descent iteration cap")->check(CLI::NonNegativeNumber);
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? example_config(c.example) : load_config(c.config);
  if (c.noise >= 0.0) cfg.noise = c.noise;
  if (c.seed >= 0) cfg.seed = static_cast<std::uint64_t>(c.seed);
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.max_iters >= 0) cfg.opt.max_iters = c.max_iters;
  cfg.validate();
  return cfg;
}

void print_report(const ErrorReport& r) {
  std::printf("%s noise %g seed %llu: err_region %.4e err_intensity %.4e components %d status %s iterations %d "
              "(%.1f s)\n",
              r.example.c_str(), r.noise, static_cast<unsigned long long>(r.seed), r.err_region, r.err_intensity,
              r.components, r.status.c_str(), r.iterations, r.seconds);
  for (std::size_t k = 0; k < r.layers.size(); ++k) {
    const auto& l = r.layers[k];
    std::printf("  layer %zu: err_region %.4e err_intensity %.4e mean intensity %.3f components %d status %s\n", k + 1,
                l.err_region, l.err_intensity, l.intensity_mean, l.components, l.status.c_str());
  }
}

int cmd_gen_data(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const TriMesh coarse = TriMesh::square(cfg.coarse_n);
  const CauchyData d = generate_data(cfg, coarse);
  const fs::path dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  fs::create_directories(dir);
  write_cauchy_csv((dir / "data.csv").string(), coarse, d);
  std::printf("wrote %zu boundary values to %s\n", d.vertices.size(), (dir / "data.csv").string().c_str());
  return 0;
}

int cmd_reconstruct(const Common& c, bool nested) {
  const ExperimentConfig cfg = resolve(c);
  if (nested && cfg.source.layers.size() < 2) throw InvalidArgument("nested needs a source with at least two layers");
  const ErrorReport r = run_experiment(cfg);
  print_report(r);
  if (!cfg.out_dir.empty()) write_errors_csv((fs::path(cfg.out_dir) / "errors.csv").string(), {r});
  return 0;
}

// Smooth interior field built from a few cosine modes times a bump vanishing on Γ.
VelocityField random_field(const TriMesh& m, std::mt19937& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double a[2][3][3];
  for (auto& x : a) {
    for (auto& y : x) {
      for (double& z : y) z = U(rng);
    }
  }
  VelocityField V = VelocityField::zero(m);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    const Point& x = m.vertices()[i];
    const double bump = (1 - x.x() * x.x()) * (1 - x.y() * x.y());
    for (int d = 0; d < 2; ++d) {
      double s = 0.0;
      for (int p = 0; p < 3; ++p) {
        for (int q = 0; q < 3; ++q) {
          s += a[d][p][q] * std::cos(p * std::numbers::pi * x.x() / 2) * std::cos(q * std::numbers::pi * x.y() / 2);
        }
      }
      V.v[i][d] = bump * s;
    }
  }
  return V;
}

int cmd_gradcheck(const Common& c, int fields, double step) {
  const ExperimentConfig cfg = resolve(c);
  const TriMesh m = TriMesh::square(cfg.coarse_n);
  const MediumParams med = MediumParams::uniform(m, cfg.D, cfg.mu_a, cfg.A);
  const CauchyData d = generate_data(cfg, m);
  const Regularization reg = Regularization::initial(cfg.opt);
  const LevelSetField ls = init_levelset(m, cfg.init);
  const auto cls = classify(m, ls);
  CcbmSolver solver(m, med);
  const StateFields st = solver.solve_state(cls.weights, d, reg.ccbm());
  const AdjointFields adj = solver.solve_adjoint(cls.weights, st, reg.ccbm());
  auto J = [&](const LevelSetField& l) {
    const auto k = classify(m, l);
    return eval_objective(m, solver.solve_state(k.weights, d, reg.ccbm()), k, reg).total();
  };
  std::mt19937 rng(static_cast<unsigned>(cfg.seed));
  std::printf("field,shape_derivative,central_difference,relative_error\n");
  for (int f = 0; f < fields; ++f) {
    const VelocityField V = random_field(m, rng);
    VelocityField back = V;
    for (auto& v : back.v) v = -v;
    const double fd = (J(advect(m, ls, V, step)) - J(advect(m, ls, back, step))) / (2.0 * step);
    const double dj = shape_derivative(m, med, st, adj, ls, cls, V, reg);
    std::printf("%d,%.10e,%.10e,%.4e\n", f + 1, dj, fd, std::abs(fd - dj) / std::abs(dj));
  }
  return 0;
}

// L2 error of the P1 solution for u* = cos(πx)cos(πy), D = μa = 1, whose normal derivative vanishes on Γ.
double manufactured_error(int n) {
  using std::numbers::pi;
  const TriMesh m = TriMesh::square(n);
  const auto ustar = [](const Point& p) { return std::cos(pi * p.x()) * std::cos(pi * p.y()); };
  // symmetric 6-point rule, exact to degree 4
  const double a = 0.816847572980459, b = 0.091576213509771, c = 0.108103018168070, d = 0.445948490915965;
  const double wa = 0.109951743655322, wb = 0.223381589678011;
  const std::array<std::array<double, 4>, 6> rule = {{{a, b, b, wa},
                                                       {b, a, b, wa},
                                                       {b, b, a, wa},
                                                       {c, d, d, wb},
                                                       {d, c, d, wb},
                                                       {d, d, c, wb}}};
  auto quad = [&](int e, auto&& f) {
    const auto& el = m.element(e);
    for (const auto& q : rule) {
      const Point x = q[0] * m.vertex(el[0]) + q[1] * m.vertex(el[1]) + q[2] * m.vertex(el[2]);
      f(x, q, m.area(e) * q[3]);
    }
  };
  NodalField load = NodalField::Zero(static_cast<Eigen::Index>(m.vertex_count()));
  for (int e = 0; e < static_cast<int>(m.element_count()); ++e) {
    const auto& el = m.element(e);
    quad(e, [&](const Point& x, const auto& q, double w) {
      for (std::size_t k = 0; k < 3; ++k) load[el[k]] += w * (2 * pi * pi + 1) * ustar(x) * q[k];
    });
  }
  const NodalField u = solve_sparse(assemble_bilinear_a(m, MediumParams::uniform(m, 1.0, 1.0)), load);
  double err2 = 0.0;
  for (int e = 0; e < static_cast<int>(m.element_count()); ++e) {
    const auto& el = m.element(e);
    quad(e, [&](const Point& x, const auto& q, double w) {
      const double uh = q[0] * u[el[0]] + q[1] * u[el[1]] + q[2] * u[el[2]];
      err2 += w * (uh - ustar(x)) * (uh - ustar(x));
    });
  }
  return std::sqrt(err2);
}

int cmd_convergence(const Common& c) {
  std::printf("# P1 mesh convergence\nn,h,l2_error,rate\n");
  double prev = 0.0;
  for (int n : {8, 16, 32, 64}) {
    const double e = manufactured_error(n);
    std::printf("%d,%.5f,%.6e,", n, 2.0 / n, e);
    if (prev > 0.0) {
      std::printf("%.4f\n", std::log2(prev / e));
    } else {
      std::printf("\n");
    }
    prev = e;
  }
  const ExperimentConfig cfg = resolve(c);
  const TriMesh m = TriMesh::square(cfg.coarse_n);
  const MediumParams med = MediumParams::uniform(m, cfg.D, cfg.mu_a, cfg.A);
  const CauchyData d = generate_data(cfg, m);
  const RegionWeights w = classify(m, init_levelset(m, cfg.source.support())).weights;
  CcbmSolver s(m, med);
  std::printf("# intensity norm on the true support, %s\nepsilon,alpha,w1_over_eps_l2,misfit\n", cfg.example.c_str());
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
    const CcbmParams p{eps, cfg.opt.c_alpha};
    const StateFields st = s.solve_state(w, d, p);
    std::printf("%.0e,%.4e,%.6e,%.6e\n", eps, p.alpha(), l2_norm(m, st.w1, &w) / eps, l2_norm(m, st.u2));
  }
  return 0;
}

int cmd_metrics(const Common& c, const std::string& vtk) {
  const ExperimentConfig cfg = resolve(c);
  const TriMesh m = TriMesh::square(cfg.coarse_n);
  LevelSetField ls;
  ls.phi = read_vtk_point_data(vtk, "level_set");
  const NodalField phi = read_vtk_point_data(vtk, "phi");
  std::printf("err_region %.6e\nerr_intensity %.6e\ncomponents %d\n", area_error(m, ls, cfg.source.support()),
              intensity_error(m, phi, &ls, cfg.source), connected_components(m, ls));
  return 0;
}

int cmd_bench(const Common& c, std::vector<std::string> examples, const std::vector<double>& noises, int seeds) {
  if (examples.empty()) examples = example_names();
  struct Job {
    std::string example;
    double noise;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& e : examples) {
    for (double n : noises) {
      for (int s = 1; s <= seeds; ++s) jobs.push_back({e, n, static_cast<std::uint64_t>(s)});
    }
  }
  const fs::path out = c.out.empty() ? fs::path("bench_out") : fs::path(c.out);
  fs::create_directories(out);
  std::vector<ErrorReport> reports(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const Job& job = jobs[j];
      char name[128];
      std::snprintf(name, sizeof name, "%s_d%g_s%llu", job.example.c_str(), job.noise,
                    static_cast<unsigned long long>(job.seed));
      reports[j] = run_example(job.example, job.noise, job.seed, (out / name).string(), c.max_iters);
      const std::lock_guard<std::mutex> lock(io);
      print_report(reports[j]);
      std::fflush(stdout);
    }
  };
  const int n = std::min<int>(worker_threads(), static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  write_errors_csv((out / "errors.csv").string(), reports);
  std::printf("wrote %s\n", (out / "errors.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source support and intensity reconstruction from boundary Cauchy data"};
  app.require_subcommand(1);
  Common c;

  auto* gen = app.add_subcommand("gen-data", "synthesize noisy Cauchy data (data.csv)");
  add_common(gen, c);
  auto* rec = app.add_subcommand("reconstruct", "shape optimization plus intensity recovery");
  add_common(rec, c);
  auto* nest = app.add_subcommand("nested", "layer-by-layer reconstruction of a nested source");
  add_common(nest, c);
  auto* grad = app.add_subcommand("gradcheck", "shape derivative against central differences");
  add_common(grad, c);
  int fields = 5;
  double step = 1e-3;
  grad->add_option("--fields", fields, "number of random velocity fields")->check(CLI::PositiveNumber);
  grad->add_option("--step", step, "transport step t")->check(CLI::PositiveNumber);
  auto* conv = app.add_subcommand("convergence", "FEM mesh convergence and the epsilon sweep");
  add_common(conv, c);
  auto* met = app.add_subcommand("metrics", "error metrics of a saved intensity.vtk");
  add_common(met, c);
  std::string vtk;
  met->add_option("--vtk", vtk, "VTK file with level_set and phi arrays")->required()->check(CLI::ExistingFile);
  auto* bench = app.add_subcommand("bench", "all examples over noise levels and seeds, errors.csv");
  add_common(bench, c);
  std::vector<std::string> examples;
  std::vector<double> noises = {1e-4, 1e-3, 5e-3};
  int seeds = 1;
  bench->add_option("--examples", examples, "subset of examples")->check(CLI::IsMember(example_names()));
  bench->add_option("--noises", noises, "noise levels");
  bench->add_option("--seeds", seeds, "seeds 1..k per case")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(c);
    if (*rec) return cmd_reconstruct(c, false);
    if (*nest) return cmd_reconstruct(c, true);
    if (*grad) return cmd_gradcheck(c, fields, step);
    if (*conv) return cmd_convergence(c);
    if (*met) return cmd_metrics(c, vtk);
    if (*bench) return cmd_bench(c, examples, noises, seeds);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
