#include "blt/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "blt/errors.hpp"

namespace blt {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---- JSON ------------------------------------------------------------------

json shape_to_json(const Shape& s) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Disk>) {
          return {{"type", "disk"}, {"center", {v.center.x(), v.center.y()}}, {"radius", v.radius}};
        } else if constexpr (std::is_same_v<T, Rectangle>) {
          return {{"type", "rectangle"}, {"x0", v.x0}, {"x1", v.x1}, {"y0", v.y0}, {"y1", v.y1}};
        } else if constexpr (std::is_same_v<T, Annulus>) {
          return {{"type", "annulus"},
                  {"center", {v.center.x(), v.center.y()}},
                  {"r_inner", v.r_inner},
                  {"r_outer", v.r_outer}};
        } else if constexpr (std::is_same_v<T, Crescent>) {
          return {{"type", "crescent"}};
        } else {
          json parts = json::array();
          for (const auto& p : v) parts.push_back(shape_to_json(p));
          return {{"type", "union"}, {"shapes", parts}};
        }
      },
      s.variant());
}

Point point_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("point must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Shape shape_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "disk") {
    return Disk{point_from_json(j.value("center", json::array({0.0, 0.0}))), j.at("radius").get<double>()};
  }
  if (type == "rectangle") {
    return Rectangle{j.at("x0").get<double>(), j.at("x1").get<double>(), j.at("y0").get<double>(),
                     j.at("y1").get<double>()};
  }
  if (type == "annulus") {
    return Annulus{point_from_json(j.value("center", json::array({0.0, 0.0}))), j.at("r_inner").get<double>(),
                   j.at("r_outer").get<double>()};
  }
  if (type == "crescent") return Crescent{};
  if (type == "union") {
    Shape::Union parts;
    for (const auto& p : j.at("shapes")) parts.push_back(shape_from_json(p));
    return parts;
  }
  throw InvalidArgument("unknown shape type '" + type + "'");
}

json opt_to_json(const OptParams& p) {
  return {{"epsilon0", p.epsilon0},     {"lambda0", p.lambda0},         {"beta0", p.beta0},
          {"gamma0", p.gamma0},         {"decay", p.decay},             {"warmup_iters", p.warmup_iters},
          {"c_alpha", p.c_alpha},       {"cfl", p.cfl},                 {"stop_tol", p.stop_tol},
          {"max_iters", p.max_iters},   {"reinit_every", p.reinit_every}, {"backtrack_max", p.backtrack_max},
          {"epsilon_min", p.epsilon_min}, {"volume_newton", p.volume_newton}};
}

void opt_from_json(const json& j, OptParams& p) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("epsilon0", p.epsilon0);
  get("lambda0", p.lambda0);
  get("beta0", p.beta0);
  get("gamma0", p.gamma0);
  get("decay", p.decay);
  get("warmup_iters", p.warmup_iters);
  get("c_alpha", p.c_alpha);
  get("cfl", p.cfl);
  get("stop_tol", p.stop_tol);
  get("max_iters", p.max_iters);
  get("reinit_every", p.reinit_every);
  get("backtrack_max", p.backtrack_max);
  get("epsilon_min", p.epsilon_min);
  get("volume_newton", p.volume_newton);
}

// ---- grid quadrature -------------------------------------------------------

// Visits every cell center of a G×G grid over the square exactly once, with
// the P1 location of the center on `mesh`.
template <class F>
void for_each_grid_point(const TriMesh& mesh, int G, F&& f) {
  const double h = 2.0 / G;
  std::vector<bool> seen(static_cast<std::size_t>(G) * static_cast<std::size_t>(G), false);
  auto index = [&](double c) { return static_cast<int>(std::floor((c + 1.0) / h - 0.5)); };
  for (int e = 0; e < static_cast<int>(mesh.element_count()); ++e) {
    const auto& el = mesh.element(e);
    const Point& a = mesh.vertex(el[0]);
    const Point& b = mesh.vertex(el[1]);
    const Point& c = mesh.vertex(el[2]);
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    const int i0 = std::max(0, index(std::min({a.x(), b.x(), c.x()})));
    const int i1 = std::min(G - 1, index(std::max({a.x(), b.x(), c.x()})) + 1);
    const int j0 = std::max(0, index(std::min({a.y(), b.y(), c.y()})));
    const int j1 = std::min(G - 1, index(std::max({a.y(), b.y(), c.y()})) + 1);
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * static_cast<std::size_t>(G) + static_cast<std::size_t>(i);
        if (seen[k]) continue;
        const Point x(-1.0 + (i + 0.5) * h, -1.0 + (j + 0.5) * h);
        const double l1 = ((x.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (x.y() - a.y())) / det;
        const double l2 = ((b.x() - a.x()) * (x.y() - a.y()) - (x.x() - a.x()) * (b.y() - a.y())) / det;
        const double l0 = 1.0 - l1 - l2;
        constexpr double tol = -1e-12;
        if (l0 < tol || l1 < tol || l2 < tol) continue;
        seen[k] = true;
        f(x, e, std::array<double, 3>{l0, l1, l2});
      }
    }
  }
}

template <class F>
void for_each_grid_point(int G, F&& f) {
  const double h = 2.0 / G;
  for (int j = 0; j < G; ++j) {
    for (int i = 0; i < G; ++i) f(Point(-1.0 + (i + 0.5) * h, -1.0 + (j + 0.5) * h));
  }
}

double p1_value(const TriMesh& mesh, const NodalField& v, int e, const std::array<double, 3>& l) {
  const auto& el = mesh.element(e);
  return l[0] * v[el[0]] + l[1] * v[el[1]] + l[2] * v[el[2]];
}

double dice_error(double inter, double a, double b) {
  if (a + b <= 0.0) return 0.0;
  return 1.0 - 2.0 * inter / (a + b);
}

double source_value(const SourceSpec& s, const Point& x) {
  double v = 0.0;
  for (const auto& l : s.layers) {
    if (l.support.contains(x)) v += l.intensity;
  }
  return v;
}

double grid_area(const Shape& s, int G = 1024) {
  if (auto a = s.exact_area()) return *a;
  long count = 0;
  for_each_grid_point(G, [&](const Point& x) { count += s.contains(x) ? 1 : 0; });
  return static_cast<double>(count) * 4.0 / (static_cast<double>(G) * G);
}

// ---- artifacts -------------------------------------------------------------

std::string iter_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ls_iter_%04d.vtk", k);
  return buf;
}

void write_stage_artifacts(const std::filesystem::path& dir, const TriMesh& mesh, const StageResult& st) {
  std::filesystem::create_directories(dir);
  write_history_csv((dir / "history.csv").string(), st.opt.history);
  write_vtk((dir / "intensity.vtk").string(), mesh,
            {{"phi", &st.intensity.phi}, {"level_set", &st.opt.ls.phi}});
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- config ----------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (!(D > 0.0 && mu_a >= 0.0 && A > 0.0)) throw InvalidArgument("medium parameters out of range");
  if (g1 != "sin" && g1 != "zero") throw InvalidArgument("g1 must be 'sin' or 'zero'");
  if (coarse_n < 1 || fine_n < 1) throw InvalidArgument("mesh resolution must be positive");
  // Elements scale as n², so 2× elements needs n_fine ≥ √2 n_coarse.
  if (static_cast<double>(fine_n) * fine_n < 2.0 * static_cast<double>(coarse_n) * coarse_n) {
    throw InvalidArgument("fine mesh must have at least twice the coarse element count");
  }
  if (!(noise >= 0.0)) throw InvalidArgument("noise level must be nonnegative");
  if (snapshot_every < 0) throw InvalidArgument("snapshot_every must be nonnegative");
  source.validate();
  init.validate();
  stage_init.validate();
  opt.validate();
}

const std::vector<std::string>& example_names() {
  static const std::vector<std::string> names = {"moon", "rect", "sepa", "sepa_near", "comb", "nested2", "nested3"};
  return names;
}

ExperimentConfig example_config(const std::string& name) {
  ExperimentConfig c;
  c.example = name;
  c.opt.epsilon0 = 1e-4;
  c.opt.lambda0 = 1e-6;
  c.opt.beta0 = 1e-2;
  c.opt.max_iters = 150;
  const Shape small = Disk{{0.0, 0.0}, 0.2};
  const Shape mid = Disk{{0.0, 0.0}, std::sqrt(0.07)};
  const Shape tiny = Disk{{0.0, 0.0}, std::sqrt(0.02)};
  if (name == "moon") {
    c.source = {{{Crescent{}, 1.0}}};
    c.init = small;
    c.opt.lambda0 = 3e-7;
  } else if (name == "rect") {
    c.source = {{{Rectangle{-0.1, 0.6, 0.1, 0.4}, 1.0}}};
    c.init = small;
    c.opt.lambda0 = 3e-7;
  } else if (name == "sepa") {
    c.source = {{{Shape::Union{Disk{{0.45, 0.45}, 0.2}, Disk{{-0.45, -0.45}, 0.2}}, 1.0}}};
    c.init = mid;
    c.opt.lambda0 = 3e-6;
  } else if (name == "sepa_near") {
    c.source = {{{Shape::Union{Disk{{0.2, 0.2}, 0.2}, Disk{{-0.2, -0.2}, 0.2}}, 1.0}}};
    c.init = mid;
  } else if (name == "comb") {
    c.source = {{{Disk{{0.0, 0.0}, std::sqrt(0.15)}, 2.0}}};
    c.init = Shape::Union{Disk{{0.3, 0.0}, std::sqrt(0.02)}, Disk{{-0.3, 0.0}, std::sqrt(0.02)}};
    // I = 2 quadruples the data-driven terms; the geometric weights follow.
    c.opt.lambda0 = 1e-5;
    c.opt.beta0 = 4e-2;
  } else if (name == "nested2") {
    c.source = {{{Annulus{{0.0, 0.0}, 0.2, 0.5}, 5.0}, {Disk{{0.0, 0.0}, 0.2}, 10.0}}};
    c.init = mid;
    c.stage_init = tiny;
  } else if (name == "nested3") {
    c.source = {{{Annulus{{0.0, 0.0}, 0.4, 0.6}, 5.0},
                 {Annulus{{0.0, 0.0}, 0.2, 0.4}, 10.0},
                 {Disk{{0.0, 0.0}, 0.2}, 15.0}}};
    c.init = tiny;
    c.stage_init = tiny;
  } else {
    throw InvalidArgument("unknown example '" + name + "'");
  }
  c.opt.gamma0 = grid_area(enclosed_support(c.source, 0));
  return c;
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    ExperimentConfig c = example_config(j.value("example", std::string("moon")));
    c.D = j.value("D", c.D);
    c.mu_a = j.value("mu_a", c.mu_a);
    c.A = j.value("A", c.A);
    c.g1 = j.value("g1", c.g1);
    if (j.contains("source")) {
      c.source.layers.clear();
      for (const auto& l : j.at("source")) {
        c.source.layers.push_back({shape_from_json(l.at("support")), l.value("intensity", 1.0)});
      }
    }
    if (j.contains("init")) c.init = shape_from_json(j.at("init"));
    if (j.contains("stage_init")) c.stage_init = shape_from_json(j.at("stage_init"));
    c.fine_n = j.value("fine_n", c.fine_n);
    c.coarse_n = j.value("coarse_n", c.coarse_n);
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
    c.gamma0_from_truth = j.value("gamma0_from_truth", c.gamma0_from_truth);
    c.intensity_epsilon = j.value("intensity_epsilon", c.intensity_epsilon);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.snapshot_every = j.value("snapshot_every", c.snapshot_every);
    if (j.contains("opt")) opt_from_json(j.at("opt"), c.opt);
    if (!j.contains("gamma0_from_truth") && j.contains("opt") && j.at("opt").contains("gamma0")) {
      c.gamma0_from_truth = false;
    }
    if (c.gamma0_from_truth) c.opt.gamma0 = grid_area(enclosed_support(c.source, 0));
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad config value: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& c) {
  json layers = json::array();
  for (const auto& l : c.source.layers) {
    layers.push_back({{"support", shape_to_json(l.support)}, {"intensity", l.intensity}});
  }
  json j = {{"example", c.example},
            {"D", c.D},
            {"mu_a", c.mu_a},
            {"A", c.A},
            {"g1", c.g1},
            {"source", layers},
            {"init", shape_to_json(c.init)},
            {"stage_init", shape_to_json(c.stage_init)},
            {"fine_n", c.fine_n},
            {"coarse_n", c.coarse_n},
            {"noise", c.noise},
            {"seed", c.seed},
            {"gamma0_from_truth", c.gamma0_from_truth},
            {"intensity_epsilon", c.intensity_epsilon},
            {"out_dir", c.out_dir},
            {"snapshot_every", c.snapshot_every},
            {"opt", opt_to_json(c.opt)}};
  return j.dump(2);
}

double g1_value(const ExperimentConfig& cfg, const Point& x) {
  if (cfg.g1 == "zero") return 0.0;
  return cfg.D * std::sin(kPi * x.x()) * std::sin(kPi * x.y());
}

// ---- data ------------------------------------------------------------------

CauchyData generate_data(const ExperimentConfig& cfg, const TriMesh& coarse, const SourceSpec& source) {
  const TriMesh fine = TriMesh::square(cfg.fine_n);
  const MediumParams medium = MediumParams::uniform(fine, cfg.D, cfg.mu_a, cfg.A);
  const NodalField g1f = interpolate(fine, [&](const Point& x) { return g1_value(cfg, x); });
  const NodalField u = source.layers.empty()
                           ? solve_forward_neumann(fine, medium, NodalField(NodalField::Zero(g1f.size())), g1f)
                           : solve_forward_neumann(fine, medium, source, g1f);
  CauchyData d;
  d.vertices = coarse.boundary_vertices();
  d.g1.resize(static_cast<Eigen::Index>(d.vertices.size()));
  d.g2.resize(static_cast<Eigen::Index>(d.vertices.size()));
  for (std::size_t k = 0; k < d.vertices.size(); ++k) {
    const Point& x = coarse.vertex(d.vertices[k]);
    d.g1[static_cast<Eigen::Index>(k)] = g1_value(cfg, x);
    d.g2[static_cast<Eigen::Index>(k)] = evaluate(fine, u, x);
  }
  return add_noise(d, cfg.noise, cfg.seed);
}

CauchyData generate_data(const ExperimentConfig& cfg, const TriMesh& coarse) {
  return generate_data(cfg, coarse, cfg.source);
}

// ---- metrics ---------------------------------------------------------------

double area_error(const TriMesh& mesh, const LevelSetField& ls, const Shape& exact, int grid) {
  if (grid < 1) throw InvalidArgument("grid must be positive");
  if (ls.phi.size() != static_cast<Eigen::Index>(mesh.vertex_count())) {
    throw InvalidArgument("level set length does not match the mesh");
  }
  double inter = 0.0, a = 0.0, b = 0.0;
  for_each_grid_point(mesh, grid, [&](const Point& x, int e, const std::array<double, 3>& l) {
    const bool in_r = p1_value(mesh, ls.phi, e, l) <= 0.0;
    const bool in_e = exact.contains(x);
    a += in_r;
    b += in_e;
    inter += in_r && in_e;
  });
  return dice_error(inter, a, b);
}

double area_error(const Shape& recon, const Shape& exact, int grid) {
  if (grid < 1) throw InvalidArgument("grid must be positive");
  double inter = 0.0, a = 0.0, b = 0.0;
  for_each_grid_point(grid, [&](const Point& x) {
    const bool in_r = recon.contains(x);
    const bool in_e = exact.contains(x);
    a += in_r;
    b += in_e;
    inter += in_r && in_e;
  });
  return dice_error(inter, a, b);
}

double intensity_error(const TriMesh& mesh, const NodalField& phi, const LevelSetField* region,
                       const SourceSpec& exact, int grid) {
  if (grid < 1) throw InvalidArgument("grid must be positive");
  if (phi.size() != static_cast<Eigen::Index>(mesh.vertex_count())) {
    throw InvalidArgument("intensity length does not match the mesh");
  }
  const Shape support = exact.support();
  double num = 0.0, den = 0.0;
  for_each_grid_point(mesh, grid, [&](const Point& x, int e, const std::array<double, 3>& l) {
    if (!support.contains(x)) return;
    const double ps = source_value(exact, x);
    double pe = 0.0;
    if (!region || p1_value(mesh, region->phi, e, l) <= 0.0) pe = p1_value(mesh, phi, e, l);
    num += (pe - ps) * (pe - ps);
    den += ps * ps;
  });
  if (den <= 0.0) throw InvalidArgument("exact intensity vanishes on its support");
  return std::sqrt(num / den);
}

double intensity_error(const std::function<double(const Point&)>& phi, const SourceSpec& exact, int grid) {
  if (grid < 1) throw InvalidArgument("grid must be positive");
  const Shape support = exact.support();
  double num = 0.0, den = 0.0;
  for_each_grid_point(grid, [&](const Point& x) {
    if (!support.contains(x)) return;
    const double ps = source_value(exact, x);
    const double pe = phi(x);
    num += (pe - ps) * (pe - ps);
    den += ps * ps;
  });
  if (den <= 0.0) throw InvalidArgument("exact intensity vanishes on its support");
  return std::sqrt(num / den);
}

// ---- pipeline --------------------------------------------------------------

Shape enclosed_support(const SourceSpec& source, std::size_t k) {
  if (k >= source.layers.size()) throw InvalidArgument("layer index out of range");
  if (k + 1 == source.layers.size()) return source.layers[k].support;
  Shape::Union parts;
  for (std::size_t i = k; i < source.layers.size(); ++i) parts.push_back(source.layers[i].support);
  return parts;
}

std::vector<LayerReport> nested_reconstruction(const ExperimentConfig& cfg, const TriMesh& mesh,
                                               const CauchyData& data, std::vector<StageResult>* stages) {
  if (cfg.source.layers.empty()) throw InvalidArgument("source has no layers");
  const MediumParams medium = MediumParams::uniform(mesh, cfg.D, cfg.mu_a, cfg.A);
  CcbmSolver solver(mesh, medium);
  const std::size_t n = cfg.source.layers.size();
  std::vector<LayerReport> out;
  CauchyData stage_data = data;
  NodalField recovered_load = NodalField::Zero(static_cast<Eigen::Index>(mesh.vertex_count()));
  std::vector<std::pair<LevelSetField, double>> pieces;  // recovered region and its constant increment

  for (std::size_t k = 0; k < n; ++k) {
    OptParams p = cfg.opt;
    if (cfg.gamma0_from_truth || k > 0) p.gamma0 = grid_area(enclosed_support(cfg.source, k));
    const LevelSetField init = init_levelset(mesh, k == 0 ? cfg.init : cfg.stage_init);
    IterationObserver observer;
    std::filesystem::path dir;
    if (!cfg.out_dir.empty()) {
      dir = n == 1 ? std::filesystem::path(cfg.out_dir)
                   : std::filesystem::path(cfg.out_dir) / ("stage" + std::to_string(k + 1));
      std::filesystem::create_directories(dir);
      if (cfg.snapshot_every > 0) {
        observer = [&, dir](int it, const LevelSetField& ls) {
          if (it % cfg.snapshot_every == 0) write_vtk((dir / iter_name(it)).string(), mesh, {{"level_set", &ls.phi}});
        };
      }
    }

    StageResult st;
    st.opt = optimize(mesh, medium, stage_data, init, p, observer);
    const auto cls = classify(mesh, st.opt.ls);
    st.intensity_params = st.opt.final_reg.ccbm();
    if (cfg.intensity_epsilon > 0.0) st.intensity_params.epsilon = cfg.intensity_epsilon;
    st.intensity = solve_intensity_ccbm(solver, cls.weights, stage_data, st.intensity_params);

    const double vol = volume(mesh, cls);
    const double total = (assemble_region_mass(mesh, cls.weights) * st.intensity.phi).sum();
    const double mean = vol > 0.0 ? total / vol : 0.0;

    LayerReport r;
    r.err_region = area_error(mesh, st.opt.ls, enclosed_support(cfg.source, k));
    r.components = connected_components(mesh, st.opt.ls);
    r.status = to_string(st.opt.status);
    r.iterations = static_cast<int>(st.opt.history.size());
    r.intensity_mean = mean;
    pieces.emplace_back(st.opt.ls, mean);
    if (n == 1) {
      r.err_intensity = intensity_error(mesh, st.intensity.phi, &st.opt.ls, cfg.source);
    } else {
      // Piecewise-constant reconstruction built from the stages so far.
      const auto stacked = [&](const Point& x) {
        double v = 0.0;
        for (const auto& [ls, c] : pieces) {
          if (evaluate(mesh, ls.phi, x) <= 0.0) v += c;
        }
        return v;
      };
      r.err_intensity = intensity_error(stacked, cfg.source, 512);
    }
    st.report = r;
    out.push_back(r);
    if (!dir.empty()) {
      write_stage_artifacts(dir, mesh, st);
      write_vtk((dir / iter_name(r.iterations)).string(), mesh, {{"level_set", &st.opt.ls.phi}});
    }
    if (stages) stages->push_back(std::move(st));

    if (k + 1 < n) {
      // Superposition: the remaining field carries the unrecovered source and zero Neumann data.
      recovered_load += mean * (assemble_region_mass(mesh, cls.weights) *
                                NodalField::Ones(static_cast<Eigen::Index>(mesh.vertex_count())));
      const NodalField g1 = data.g1_nodal(mesh);
      const NodalField u = solve_forward_neumann(mesh, medium, recovered_load, g1);
      stage_data = data;
      stage_data.g1.setZero();
      stage_data.g2 = data.g2 - trace_boundary(mesh, u);
    }
  }
  return out;
}

ErrorReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const TriMesh mesh = TriMesh::square(cfg.coarse_n);
  const CauchyData data = generate_data(cfg, mesh);
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_cauchy_csv((std::filesystem::path(cfg.out_dir) / "data.csv").string(), mesh, data);
  }
  std::vector<StageResult> stages;
  const auto layers = nested_reconstruction(cfg, mesh, data, &stages);

  ErrorReport r;
  r.example = cfg.example;
  r.noise = cfg.noise;
  r.seed = cfg.seed;
  r.err_region = layers.front().err_region;
  r.err_intensity = layers.back().err_intensity;
  r.components = layers.front().components;
  r.status = layers.back().status;
  for (const auto& l : layers) r.iterations += l.iterations;
  for (const auto& s : stages) r.max_adjoint_residual = std::max(r.max_adjoint_residual, s.opt.max_adjoint_residual);
  if (layers.size() > 1) r.layers = layers;
  r.seconds = seconds_since(t0);
  if (!cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    if (stages.size() > 1) {
      write_vtk((dir / "intensity.vtk").string(), mesh,
                {{"phi", &stages.back().intensity.phi}, {"level_set", &stages.front().opt.ls.phi}});
    }
    write_summary_json((dir / "summary.json").string(), r, cfg);
    write_errors_csv((dir / "errors.csv").string(), {r});
  }
  return r;
}

ErrorReport run_example(const std::string& name, double noise, std::uint64_t seed, const std::string& out_dir,
                        int max_iters) {
  ExperimentConfig cfg = example_config(name);
  cfg.noise = noise;
  cfg.seed = seed;
  cfg.out_dir = out_dir;
  if (max_iters >= 0) cfg.opt.max_iters = max_iters;
  return run_experiment(cfg);
}

// ---- reports ---------------------------------------------------------------

void write_summary_json(const std::string& path, const ErrorReport& r, const ExperimentConfig& cfg) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"err_region", l.err_region},
                      {"err_intensity", l.err_intensity},
                      {"intensity_mean", l.intensity_mean},
                      {"components", l.components},
                      {"status", l.status},
                      {"iterations", l.iterations}});
  }
  const json j = {{"example", r.example},
                  {"noise", r.noise},
                  {"seed", r.seed},
                  {"err_region", r.err_region},
                  {"err_intensity", r.err_intensity},
                  {"components", r.components},
                  {"status", r.status},
                  {"iterations", r.iterations},
                  {"max_adjoint_residual", r.max_adjoint_residual},
                  {"seconds", r.seconds},
                  {"layers", layers},
                  {"config", json::parse(config_to_json_text(cfg))}};
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

void write_errors_csv(const std::string& path, const std::vector<ErrorReport>& reports) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out.precision(10);
  out << "example,noise,seed,layer,err_region,err_intensity,components,status,iterations,seconds\n";
  for (const auto& r : reports) {
    out << r.example << ',' << r.noise << ',' << r.seed << ",all," << r.err_region << ',' << r.err_intensity << ','
        << r.components << ',' << r.status << ',' << r.iterations << ',' << r.seconds << '\n';
    for (std::size_t k = 0; k < r.layers.size(); ++k) {
      const auto& l = r.layers[k];
      out << r.example << ',' << r.noise << ',' << r.seed << ',' << k + 1 << ',' << l.err_region << ','
          << l.err_intensity << ',' << l.components << ',' << l.status << ',' << l.iterations << ",\n";
    }
  }
}

int worker_threads() {
  if (const char* env = std::getenv("BLT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

}  // namespace blt
