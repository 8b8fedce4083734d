#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "blt/ccbm.hpp"
#include "blt/shapeopt.hpp"

namespace blt {

/// Everything one reconstruction run needs. Loaded from JSON with keys of the
/// same names; missing keys keep their defaults.
struct ExperimentConfig {
  std::string example = "moon";
  double D = 1.0;
  double mu_a = 1.0;
  double A = 0.5;
  /// "sin" for D sin(πx) sin(πy), "zero" for g1 = 0.
  std::string g1 = "sin";
  /// Layers from outermost to innermost. Nested examples use one stage per layer.
  SourceSpec source;
  Shape init = Shape(Disk{{0.0, 0.0}, 0.2});
  /// Init region for stages after the first in nested runs.
  Shape stage_init = Shape(Disk{{0.0, 0.0}, 0.2});
  int fine_n = 100;
  int coarse_n = 38;
  double noise = 1e-4;
  std::uint64_t seed = 1;
  /// gamma0 is replaced by the true support area when this is set.
  bool gamma0_from_truth = true;
  /// ε of the final intensity solve; ≤ 0 means the last ε of the shape stage.
  double intensity_epsilon = 0.0;
  OptParams opt;
  std::string out_dir;
  /// Write ls_iter_*.vtk every this many iterations (0 disables snapshots).
  int snapshot_every = 10;

  void validate() const;
};

/// Defaults for the named examples: moon, rect, sepa, sepa_near, comb, nested2, nested3.
ExperimentConfig example_config(const std::string& name);
const std::vector<std::string>& example_names();

/// Reads a JSON file; `example` picks the base configuration and every other
/// key overrides it.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

/// Neumann g1 selected by the config, as a function of position.
double g1_value(const ExperimentConfig& cfg, const Point& x);

/// Fine-mesh forward solve for `source`, traced onto the coarse boundary
/// vertices by P1 evaluation, then perturbed with the configured noise.
CauchyData generate_data(const ExperimentConfig& cfg, const TriMesh& coarse, const SourceSpec& source);
CauchyData generate_data(const ExperimentConfig& cfg, const TriMesh& coarse);

/// Midpoint quadrature on a uniform grid over the square; the reconstructed
/// indicator is the sign of the P1 level set.
inline constexpr int kMetricGrid = 2048;
double area_error(const TriMesh& mesh, const LevelSetField& ls, const Shape& exact, int grid = kMetricGrid);
/// Same error with an analytic reconstructed region.
double area_error(const Shape& recon, const Shape& exact, int grid = kMetricGrid);

/// φ is evaluated by P1 interpolation and set to zero outside the
/// reconstructed region (when `region` is given).
double intensity_error(const TriMesh& mesh, const NodalField& phi, const LevelSetField* region,
                       const SourceSpec& exact, int grid = kMetricGrid);
/// Same error with an analytic φ.
double intensity_error(const std::function<double(const Point&)>& phi, const SourceSpec& exact,
                       int grid = kMetricGrid);

struct LayerReport {
  double err_region = 0.0;
  double err_intensity = 0.0;
  double intensity_mean = 0.0;  // mean recovered intensity over the stage region
  int components = 0;
  std::string status;
  int iterations = 0;
};

struct ErrorReport {
  std::string example;
  double noise = 0.0;
  std::uint64_t seed = 0;
  double err_region = 0.0;
  double err_intensity = 0.0;
  int components = 0;
  std::string status;
  int iterations = 0;
  double max_adjoint_residual = 0.0;
  double seconds = 0.0;
  std::vector<LayerReport> layers;  // one per stage for nested runs
};

/// Result of one optimize + intensity solve, kept for artifact writing.
struct StageResult {
  OptResult opt;
  IntensityResult intensity;
  CcbmParams intensity_params;
  LayerReport report;
};

/// Runs the whole pipeline for `cfg`: data, shape optimization, intensity
/// refinement, metrics, artifacts (when out_dir is set).
ErrorReport run_experiment(const ExperimentConfig& cfg);
ErrorReport run_example(const std::string& name, double noise, std::uint64_t seed, const std::string& out_dir = "",
                        int max_iters = -1);

/// Layer-by-layer reconstruction: each stage optimizes on the data left after
/// subtracting the traces of all previously recovered layers (g1 set to 0).
/// Layer k is compared against the region enclosed by its outer boundary.
std::vector<LayerReport> nested_reconstruction(const ExperimentConfig& cfg, const TriMesh& mesh,
                                               const CauchyData& data, std::vector<StageResult>* stages = nullptr);

/// Region enclosed by layer k's outer boundary: the union of layers k..end.
Shape enclosed_support(const SourceSpec& source, std::size_t k);

void write_summary_json(const std::string& path, const ErrorReport& r, const ExperimentConfig& cfg);
/// One row per report, header `example,noise,seed,layer,err_region,err_intensity,components,status,iterations,seconds`.
void write_errors_csv(const std::string& path, const std::vector<ErrorReport>& reports);

/// Worker count from BLT_THREADS, defaulting to hardware concurrency.
int worker_threads();

}  // namespace blt
