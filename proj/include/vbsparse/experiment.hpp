#pragma once

// Run orchestration: synthetic single runs, rho x H and sigma sweeps, the
// fixed-k ablation and image runs.  Work is split into jobs (one trial of one
// cell group) that run on a pool of worker threads; records are collected in
// job order, so the output does not depend on the number of workers.

#include "vbsparse/config.hpp"
#include "vbsparse/export.hpp"
#include "vbsparse/synth.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vbsparse {

// base ^ mix64(cell_index << 32 | trial); distinct for distinct
// (cell_index, trial) pairs with trial < 2^32.
std::uint64_t cell_seed(std::uint64_t base_seed, std::uint64_t cell_index, std::uint32_t trial);

struct RunOutcome {
  ResultRecord record;
  RunTrace trace;
  std::string trace_name;  // file stem under traces/
};

struct SyntheticProblem {
  GroundTruth truth;
  ObservationMatrix observation;
};

// Ground truth with slab weight derived from rho and the spec's semantics,
// observed at noise level sigma (exactly when zero_noise is set).
SyntheticProblem make_problem(const ExperimentSpec& spec, int rank, double rho, double sigma,
                              std::uint64_t seed);

// spec.solver with rank, sigma and init seed filled in and a scalar c_a
// broadcast to every column.
SolverConfig solver_config(const ExperimentSpec& spec, int rank, double sigma, std::uint64_t seed);

// Runs the solver on a synthetic problem and scores it against the truth.
// with_metrics attaches the per-record metric hook to the trace.  initial
// replaces the seeded init, and final_state receives the last state.
RunOutcome solve_synthetic(const ExperimentSpec& spec, const SyntheticProblem& problem,
                           const SolverConfig& cfg, const CellId& cell, int trial,
                           std::uint64_t seed, bool with_metrics, std::optional<FactorState> initial = {},
                           FactorState* final_state = nullptr);

// Runs the solver on an observation without ground truth (RMSE_V and
// sparsity only).
RunOutcome solve_observation(const ExperimentSpec& spec, const DenseMatrix& v, const SolverConfig& cfg,
                             const CellId& cell, int trial, std::uint64_t seed, bool with_metrics);

// Normalized image pixels plus optional N(0, noise^2) from the seed's
// image-noise stream.
DenseMatrix noisy_image(const DenseMatrix& normalized, double noise_sigma, std::uint64_t seed);

struct ExperimentResult {
  std::vector<ResultRecord> records;
  int failed = 0;  // records carrying an error
};

using ProgressCallback = std::function<void(const RunOutcome&)>;

// Runs every job of the spec.  image must hold the normalized observation for
// image runs and is ignored otherwise.  Traces are written to
// output_dir/traces when spec.write_traces is set.
ExperimentResult run_experiment(const ExperimentSpec& spec, const std::optional<DenseMatrix>& image = {},
                                const ProgressCallback& progress = {});

// run_experiment followed by results.json, aggregate.csv and spec.txt under
// spec.output_dir.  Image runs ingest spec.image_path.
ExperimentResult execute(const ExperimentSpec& spec, const ProgressCallback& progress = {});

// Recomputes aggregate.csv from an existing results.json.
void report(const std::filesystem::path& output_dir);

}  // namespace vbsparse
