#pragma once

// Experiment settings and their flat key = value file format.
//
//   # comment
//   schema_version = 1
//   kind = rho_h_sweep
//   ranks = 10, 20
//   rhos = 0.6, 0.7, 0.8
//   solver.epsilon = 0.1
//
// Unknown keys are rejected.  Later assignments override earlier ones, and
// command-line overrides are applied on top of the file.

#include "vbsparse/image.hpp"
#include "vbsparse/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vbsparse {

inline constexpr int kSpecSchemaVersion = 1;

enum class ExperimentKind { single_run, rho_h_sweep, sigma_sweep, image_run, fixed_k_ablation };

ExperimentKind parse_kind(const std::string& name);
const char* to_string(ExperimentKind kind);

// How a grid value rho is turned into the Bernoulli weight of the slab.
//   slab_weight:   P(B*_hm != 0) = rho, so the expected zero fraction is 1 - rho
//   zero_fraction: P(B*_hm == 0) = rho
enum class RhoSemantics { slab_weight, zero_fraction };

RhoSemantics parse_rho_semantics(const std::string& name);
const char* to_string(RhoSemantics semantics);

// Probability that a ground-truth entry is nonzero.
double slab_weight(double rho, RhoSemantics semantics);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::single_run;
  int rows = 200;  // L
  int cols = 200;  // M
  std::vector<int> ranks{10};
  std::vector<double> rhos{0.8};
  std::vector<double> sigmas{0.05};
  int trials = 20;
  bool zero_noise = false;
  RhoSemantics rho_semantics = RhoSemantics::slab_weight;
  SolverConfig solver;  // rank, sigma and init_seed are filled per run

  // fixed-k ablation: k = multiplier * (k reached by the tuned run)
  std::vector<double> k_multipliers{0.5, 1.5};
  std::int64_t ablation_iters = 10'000;

  std::filesystem::path image_path;
  Normalization normalization = Normalization::global;
  double image_noise_sigma = 0.0;  // additive N(0, s^2) on normalized pixels
  double baseline_k = 1e300;       // fixed-k reference run per image trial; 0 disables
  std::int64_t baseline_iters = 10'000;  // a huge fixed k keeps Z_B near 1, so cap the run

  double sparsity_threshold = 1e-2;
  std::filesystem::path output_dir = "out";
  std::uint64_t base_seed = 0;
  int workers = 1;
  bool serial = false;
  bool write_traces = false;  // per-run trace CSVs (on by default for single runs)

  // Throws InvalidConfig on empty grids, trials < 1 or bad solver settings.
  void validate() const;
};

// Spec with the defaults for the given kind: eps = 0.1 and 20 trials for
// synthetic data, eps = 1e-3, sigma = 0.03 and 5 trials for images, and the
// default sweep grids.
ExperimentSpec default_spec(ExperimentKind kind);

using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_value_file(const std::filesystem::path& path);

// Applies one assignment; throws InvalidConfig on unknown keys or bad values.
void apply_key_value(ExperimentSpec& spec, const std::string& key, const std::string& value);

// default_spec(kind from the pairs, or fallback) with every pair applied.
ExperimentSpec build_spec(const KeyValues& pairs, ExperimentKind fallback);

// Round-trips through parse_key_values / build_spec.
std::string to_key_values(const ExperimentSpec& spec);

}  // namespace vbsparse
