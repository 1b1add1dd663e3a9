#pragma once

// Persistence of run traces, per-run result records and per-cell aggregates.
//
//   trace CSV:      iter,k,z_b,rmse_a,rmse_b,rmse_v,sparsity_b  (17 sig. digits,
//                   empty field for an absent metric)
//   result JSON:    {"schema": 1, "spec": {...}, "records": [...]}
//   aggregate CSV:  one row per cell, mean and sample stddev over trials

#include "vbsparse/config.hpp"
#include "vbsparse/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vbsparse {

inline constexpr int kResultSchemaVersion = 1;
inline constexpr const char* kTraceHeader = "iter,k,z_b,rmse_a,rmse_b,rmse_v,sparsity_b";

// Identity of one sweep cell.  mode is "tuned" or "fixed".
struct CellId {
  std::optional<double> rho;
  int rank = 0;
  double sigma = 0.0;
  std::string mode = "tuned";
  std::optional<double> k_multiplier;  // fixed-k ablation
  std::optional<double> fixed_k;       // fixed runs with an absolute k

  bool operator==(const CellId&) const = default;
};

struct ResultRecord {
  CellId cell;
  int trial = 0;
  std::uint64_t seed = 0;
  std::optional<double> rmse_a;
  std::optional<double> rmse_b;
  std::optional<double> rmse_v;
  std::optional<double> sparsity_b;
  std::optional<double> truth_zero_fraction;
  std::string termination;
  std::int64_t iterations = 0;
  double final_k = 0.0;
  double final_zb = 0.0;
  std::int64_t clamp_events = 0;
  std::optional<double> wall_clock_s;  // omitted in serial (deterministic) mode
  std::optional<std::string> error;
};

struct AggregateRow {
  CellId cell;
  int runs = 0;
  int failed = 0;
  // mean, sample stddev (0 for a single run); absent when no run reported it
  struct Stat {
    std::optional<double> mean;
    std::optional<double> stddev;
  };
  Stat rmse_a, rmse_b, rmse_v, sparsity_b, truth_zero_fraction, iterations, final_k;
};

std::string trace_csv(const RunTrace& trace);

// Writes to a temporary sibling, then renames over the target.
void write_atomically(const std::filesystem::path& path, const std::string& contents);

std::string results_json(const ExperimentSpec& spec, const std::vector<ResultRecord>& records);
std::vector<ResultRecord> parse_results_json(const std::string& text);
std::vector<ResultRecord> read_results_json(const std::filesystem::path& path);

// Cells in order of first appearance; failed records only bump `failed`.
std::vector<AggregateRow> aggregate(const std::vector<ResultRecord>& records);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

}  // namespace vbsparse
