#include "vbsparse/experiment.hpp"

#include "vbsparse/metrics.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

namespace vbsparse {

std::uint64_t cell_seed(std::uint64_t base_seed, std::uint64_t cell_index, std::uint32_t trial) {
  return base_seed ^ mix64((cell_index << 32) | trial);
}

SyntheticProblem make_problem(const ExperimentSpec& spec, int rank, double rho, double sigma,
                              std::uint64_t seed) {
  SyntheticProblem p;
  p.truth = sample_ground_truth(spec.rows, spec.cols, rank, slab_weight(rho, spec.rho_semantics), seed);
  p.truth.rho = rho;
  p.truth.sigma = sigma;
  p.observation = spec.zero_noise ? observe(p.truth, true) : observe(p.truth, sigma);
  return p;
}

SolverConfig solver_config(const ExperimentSpec& spec, int rank, double sigma, std::uint64_t seed) {
  SolverConfig cfg = spec.solver;
  cfg.rank = rank;
  cfg.sigma = sigma;
  cfg.init_seed = seed;
  if (cfg.c_a_diag.size() == 1 && rank != 1) cfg.c_a_diag = Vector::Constant(rank, cfg.c_a_diag(0));
  return cfg;
}

DenseMatrix noisy_image(const DenseMatrix& normalized, double noise_sigma, std::uint64_t seed) {
  if (noise_sigma == 0.0) return normalized;
  return normalized + noise_sigma * gaussian_matrix(static_cast<int>(normalized.rows()),
                                                    static_cast<int>(normalized.cols()),
                                                    derive_seed(seed, Stream::image_noise));
}

namespace {

using Clock = std::chrono::steady_clock;

std::string short_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string trace_name(const CellId& cell, int trial) {
  std::string name = "H" + std::to_string(cell.rank);
  if (cell.rho) name += "_rho" + short_real(*cell.rho);
  name += "_sigma" + short_real(cell.sigma) + "_" + cell.mode;
  if (cell.k_multiplier) name += "_m" + short_real(*cell.k_multiplier);
  if (cell.fixed_k) name += "_k" + short_real(*cell.fixed_k);
  return name + "_t" + std::to_string(trial);
}

// Metrics that need a_bar column norms are left out while a column is zero.
IterationMetrics score(const DenseMatrix& v, const FactorState& s, const GroundTruth* truth, double threshold) {
  IterationMetrics m;
  m.rmse_v = rmse_v(v, s.a_bar, s.b_bar);
  try {
    m.sparsity_b = sparsity_b(s.a_bar, s.b_bar, threshold);
    if (truth) {
      const AlignedError a = align_and_rmse_a(truth->a_star, s.a_bar);
      m.rmse_a = a.rmse;
      m.rmse_b = rmse_b(truth->b_star, s.b_bar, a.alignment);
    }
  } catch (const ZeroColumn&) {
  }
  return m;
}

RunOutcome solve(const ExperimentSpec& spec, const DenseMatrix& v, const GroundTruth* truth,
                 const SolverConfig& cfg, const CellId& cell, int trial, std::uint64_t seed,
                 bool with_metrics, std::optional<FactorState> initial = {},
                 FactorState* final_state = nullptr) {
  MetricHook hook;
  if (with_metrics)
    hook = [&](const FactorState& s) { return score(v, s, truth, spec.sparsity_threshold); };

  const auto start = Clock::now();
  RunResult result = run(v, cfg, hook, std::move(initial));
  const std::chrono::duration<double> elapsed = Clock::now() - start;

  RunOutcome out;
  ResultRecord& r = out.record;
  r.cell = cell;
  r.trial = trial;
  r.seed = seed;
  const IterationMetrics final = score(v, result.state, truth, spec.sparsity_threshold);
  r.rmse_a = final.rmse_a;
  r.rmse_b = final.rmse_b;
  r.rmse_v = final.rmse_v;
  r.sparsity_b = final.sparsity_b;
  if (truth) r.truth_zero_fraction = zero_fraction(truth->b_star);
  r.termination = to_string(result.trace.termination);
  r.iterations = result.state.iter;
  r.final_k = result.state.k;
  r.final_zb = result.state.z_b;
  r.clamp_events = result.trace.clamp_events;
  if (!spec.serial) r.wall_clock_s = elapsed.count();
  out.trace = std::move(result.trace);
  out.trace_name = trace_name(cell, trial);
  if (final_state) *final_state = std::move(result.state);
  return out;
}

struct Job {
  std::vector<CellId> cells;
  int trial = 0;
  std::uint64_t seed = 0;
  std::function<std::vector<RunOutcome>()> work;
};

CellId synthetic_cell(int rank, double rho, double sigma) {
  CellId c;
  c.rank = rank;
  c.rho = rho;
  c.sigma = sigma;
  return c;
}

std::vector<Job> plan(const ExperimentSpec& spec, const std::optional<DenseMatrix>& image) {
  std::vector<Job> jobs;
  const bool traces = spec.write_traces;

  if (spec.kind == ExperimentKind::image_run) {
    if (!image) throw InvalidConfig("image run without an image");
    std::uint64_t index = 0;
    for (int rank : spec.ranks)
      for (double sigma : spec.sigmas) {
        CellId tuned;
        tuned.rank = rank;
        tuned.sigma = sigma;
        CellId baseline = tuned;
        baseline.mode = "fixed";
        baseline.fixed_k = spec.baseline_k;
        for (int t = 0; t < spec.trials; ++t) {
          Job job;
          job.trial = t;
          job.seed = cell_seed(spec.base_seed, index, static_cast<std::uint32_t>(t));
          job.cells.push_back(tuned);
          if (spec.baseline_k > 0.0) job.cells.push_back(baseline);
          job.work = [&spec, &image, rank, sigma, tuned, baseline, t, seed = job.seed, traces] {
            const DenseMatrix v = noisy_image(*image, spec.image_noise_sigma, seed);
            std::vector<RunOutcome> out;
            const SolverConfig cfg = solver_config(spec, rank, sigma, seed);
            out.push_back(solve_observation(spec, v, cfg, tuned, t, seed, traces));
            if (spec.baseline_k > 0.0) {
              SolverConfig fixed = cfg;
              fixed.mode = KMode::fixed;
              fixed.fixed_k = spec.baseline_k;
              fixed.max_iters = spec.baseline_iters;
              out.push_back(solve_observation(spec, v, fixed, baseline, t, seed, traces));
            }
            return out;
          };
          jobs.push_back(std::move(job));
        }
        ++index;
      }
    return jobs;
  }

  // Synthetic kinds.  The seed ignores sigma, so a sigma sweep reuses the
  // same factors, noise pattern and initialization across noise levels.
  std::uint64_t index = 0;
  for (int rank : spec.ranks)
    for (double rho : spec.rhos) {
      for (int t = 0; t < spec.trials; ++t) {
        const std::uint64_t seed = cell_seed(spec.base_seed, index, static_cast<std::uint32_t>(t));
        for (double sigma : spec.sigmas) {
          Job job;
          job.trial = t;
          job.seed = seed;
          const CellId tuned = synthetic_cell(rank, rho, sigma);
          job.cells.push_back(tuned);
          std::vector<CellId> fixed_cells;
          if (spec.kind == ExperimentKind::fixed_k_ablation)
            for (double mult : spec.k_multipliers) {
              CellId c = tuned;
              c.mode = "fixed";
              c.k_multiplier = mult;
              fixed_cells.push_back(c);
              job.cells.push_back(c);
            }
          job.work = [&spec, rank, rho, sigma, tuned, fixed_cells, t, seed, traces] {
            const SyntheticProblem p = make_problem(spec, rank, rho, sigma, seed);
            const SolverConfig cfg = solver_config(spec, rank, sigma, seed);
            std::vector<RunOutcome> out;
            FactorState tuned_state;
            out.push_back(solve_synthetic(spec, p, cfg, tuned, t, seed, traces, {},
                                          fixed_cells.empty() ? nullptr : &tuned_state));
            // Fixed runs continue from the tuned state.  From a fresh init the
            // first S is far above k*, so Z_B < 0 at once.
            const double k_star = out.front().record.final_k;
            for (const CellId& c : fixed_cells) {
              SolverConfig fixed = cfg;
              fixed.mode = KMode::fixed;
              fixed.fixed_k = *c.k_multiplier * k_star;
              fixed.max_iters = spec.ablation_iters;
              out.push_back(solve_synthetic(spec, p, fixed, c, t, seed, traces, warm_start(tuned_state)));
            }
            return out;
          };
          jobs.push_back(std::move(job));
        }
      }
      ++index;
    }
  return jobs;
}

std::vector<RunOutcome> failed_outcomes(const Job& job, const std::string& what) {
  std::vector<RunOutcome> out;
  for (const CellId& c : job.cells) {
    RunOutcome o;
    o.record.cell = c;
    o.record.trial = job.trial;
    o.record.seed = job.seed;
    o.record.termination = "error";
    o.record.error = what;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace

RunOutcome solve_synthetic(const ExperimentSpec& spec, const SyntheticProblem& problem,
                           const SolverConfig& cfg, const CellId& cell, int trial,
                           std::uint64_t seed, bool with_metrics, std::optional<FactorState> initial,
                           FactorState* final_state) {
  return solve(spec, problem.observation.v, &problem.truth, cfg, cell, trial, seed, with_metrics,
               std::move(initial), final_state);
}

RunOutcome solve_observation(const ExperimentSpec& spec, const DenseMatrix& v, const SolverConfig& cfg,
                             const CellId& cell, int trial, std::uint64_t seed, bool with_metrics) {
  return solve(spec, v, nullptr, cfg, cell, trial, seed, with_metrics);
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::optional<DenseMatrix>& image,
                                const ProgressCallback& progress) {
  spec.validate();
  const std::vector<Job> jobs = plan(spec, image);
  std::vector<std::vector<RunOutcome>> slots(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex collect;
  const std::filesystem::path trace_dir = spec.output_dir / "traces";

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      std::vector<RunOutcome> out;
      try {
        out = jobs[i].work();
        if (spec.write_traces)
          for (const RunOutcome& o : out) write_atomically(trace_dir / (o.trace_name + ".csv"), trace_csv(o.trace));
      } catch (const std::exception& e) {
        out = failed_outcomes(jobs[i], e.what());
      }
      std::lock_guard<std::mutex> lock(collect);
      if (progress)
        for (const RunOutcome& o : out) progress(o);
      // traces are on disk by now; keep only the records
      for (RunOutcome& o : out) o.trace = RunTrace{};
      slots[i] = std::move(out);
    }
  };

  const int workers = spec.serial ? 1 : std::max(1, std::min<int>(spec.workers, static_cast<int>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentResult result;
  for (auto& slot : slots)
    for (auto& o : slot) {
      if (o.record.error) ++result.failed;
      result.records.push_back(std::move(o.record));
    }
  return result;
}

ExperimentResult execute(const ExperimentSpec& spec, const ProgressCallback& progress) {
  spec.validate();
  std::optional<DenseMatrix> image;
  if (spec.kind == ExperimentKind::image_run) image = ingest_image(spec.image_path, spec.normalization).v;
  std::filesystem::create_directories(spec.output_dir);
  write_atomically(spec.output_dir / "spec.txt", to_key_values(spec));
  ExperimentResult result = run_experiment(spec, image, progress);
  write_atomically(spec.output_dir / "results.json", results_json(spec, result.records));
  write_atomically(spec.output_dir / "aggregate.csv", aggregate_csv(aggregate(result.records)));
  return result;
}

void report(const std::filesystem::path& output_dir) {
  const std::vector<ResultRecord> records = read_results_json(output_dir / "results.json");
  write_atomically(output_dir / "aggregate.csv", aggregate_csv(aggregate(records)));
}

}  // namespace vbsparse
