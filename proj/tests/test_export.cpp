#include "vbsparse/export.hpp"
#include "vbsparse/image.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace vbsparse;
namespace fs = std::filesystem;

namespace {

ResultRecord make_record(double rho, int rank, int trial, double rmse_v) {
  ResultRecord r;
  r.cell.rho = rho;
  r.cell.rank = rank;
  r.cell.sigma = 0.05;
  r.trial = trial;
  r.seed = 1000 + trial;
  r.rmse_a = 0.1 * trial;
  r.rmse_b = 0.2;
  r.rmse_v = rmse_v;
  r.sparsity_b = 0.19;
  r.truth_zero_fraction = 0.2;
  r.termination = "zb_below_threshold";
  r.iterations = 100 + trial;
  r.final_k = 12.5;
  r.final_zb = 1e-6;
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("trace CSV layout") {
  RunTrace trace;
  TraceRecord first;
  first.iter = 1;
  first.k = 0.1;
  first.z_b = 0.5;
  first.metrics.rmse_v = 0.25;
  trace.records.push_back(first);
  TraceRecord second = first;
  second.iter = 2;
  second.metrics.rmse_a = 1.0 / 3.0;
  trace.records.push_back(second);

  const auto rows = lines(trace_csv(trace));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "iter,k,z_b,rmse_a,rmse_b,rmse_v,sparsity_b");
  CHECK(rows[1] == "1,0.10000000000000001,0.5,,,0.25,");
  CHECK(rows[2] == "2,0.10000000000000001,0.5,0.33333333333333331,,0.25,");
  CHECK(std::stod("0.33333333333333331") == 1.0 / 3.0);
}

TEST_CASE("result JSON round-trips every field") {
  ExperimentSpec spec = default_spec(ExperimentKind::rho_h_sweep);
  std::vector<ResultRecord> records{make_record(0.8, 10, 0, 0.05), make_record(0.8, 10, 1, 0.051)};
  records[1].rmse_a.reset();
  records[1].wall_clock_s = 1.25;
  records[1].clamp_events = 7;
  records[1].seed = 0xFFFFFFFFFFFFFFFFULL;
  ResultRecord failed = make_record(0.9, 20, 0, 0.0);
  failed.error = "solver: NotPositiveDefinite";
  failed.cell.rho.reset();
  failed.cell.mode = "fixed";
  failed.cell.k_multiplier = 0.5;
  failed.cell.fixed_k = 3.0;
  records.push_back(failed);

  const std::string text = results_json(spec, records);
  const std::vector<ResultRecord> back = parse_results_json(text);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].cell == records[i].cell);
    CHECK(back[i].trial == records[i].trial);
    CHECK(back[i].seed == records[i].seed);
    CHECK(back[i].rmse_a == records[i].rmse_a);
    CHECK(back[i].rmse_v == records[i].rmse_v);
    CHECK(back[i].termination == records[i].termination);
    CHECK(back[i].iterations == records[i].iterations);
    CHECK(back[i].final_k == records[i].final_k);
    CHECK(back[i].clamp_events == records[i].clamp_events);
    CHECK(back[i].wall_clock_s == records[i].wall_clock_s);
    CHECK(back[i].error == records[i].error);
  }
  CHECK(results_json(spec, back) == text);
  CHECK(text.find("\"workers\"") == std::string::npos);
  CHECK(text.find("\"output_dir\"") == std::string::npos);
}

TEST_CASE("result JSON schema and syntax errors") {
  CHECK_THROWS_AS(parse_results_json("{\"schema\": 2, \"records\": []}"), Error);
  CHECK_THROWS_AS(parse_results_json("{\"records\": []}"), Error);
  CHECK_THROWS_AS(parse_results_json("{\"schema\": 1, \"records\": [{}]}"), Error);
  CHECK_THROWS_AS(parse_results_json("{not json"), Error);
  CHECK(parse_results_json("{\"schema\": 1, \"records\": []}").empty());
}

TEST_CASE("aggregation of a single record has zero spread") {
  const auto rows = aggregate({make_record(0.8, 10, 0, 0.05)});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].runs == 1);
  CHECK(*rows[0].rmse_v.mean == 0.05);
  CHECK(*rows[0].rmse_v.stddev == 0.0);
}

TEST_CASE("aggregation of constant records") {
  std::vector<ResultRecord> records;
  for (int t = 0; t < 20; ++t) {
    ResultRecord r = make_record(0.8, 10, t, 0.05);
    r.rmse_a = 0.3;
    records.push_back(r);
  }
  const auto rows = aggregate(records);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].runs == 20);
  CHECK(*rows[0].rmse_a.mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(*rows[0].rmse_a.stddev <= 1e-15);
  CHECK(*rows[0].iterations.mean == doctest::Approx(109.5));
}

TEST_CASE("aggregates match a direct recomputation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ResultRecord> records;
  for (int t = 0; t < 7; ++t)
    for (double rho : {0.6, 0.9})
      for (int rank : {5, 10}) records.push_back(make_record(rho, rank, t, u(rng)));
  records[3].error = "boom";

  const auto rows = aggregate(records);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].cell.rho == 0.6);
  CHECK(rows[0].cell.rank == 5);
  CHECK(rows[1].cell.rank == 10);
  CHECK(rows[2].cell.rho == 0.9);
  for (const AggregateRow& row : rows) {
    std::vector<double> v;
    int failed = 0;
    for (const auto& r : records)
      if (r.cell == row.cell) {
        if (r.error)
          ++failed;
        else
          v.push_back(*r.rmse_v);
      }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    CHECK(row.failed == failed);
    CHECK(row.runs == static_cast<int>(v.size()));
    CHECK(std::abs(*row.rmse_v.mean - mean) <= 1e-15);
    CHECK(std::abs(*row.rmse_v.stddev - std::sqrt(ss / (v.size() - 1))) <= 1e-15);
  }
  CHECK(rows[3].failed == 1);

  const auto csv = lines(aggregate_csv(rows));
  REQUIRE(csv.size() == 5);
  CHECK(csv[0].rfind("rho,rank,sigma,mode,", 0) == 0);
  CHECK(csv[0].find("ref_one_minus_rho,ref_rho") != std::string::npos);
  CHECK(csv[1].rfind("0.59999999999999998,5,0.050000000000000003,tuned,,,7,0,", 0) == 0);
}

TEST_CASE("atomic write replaces the target and leaves no temporary") {
  const fs::path dir = fs::temp_directory_path() / "vbsparse_test_export";
  fs::remove_all(dir);
  const fs::path target = dir / "nested" / "out.txt";
  write_atomically(target, "first");
  write_atomically(target, "second");
  std::ifstream in(target);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content == "second");
  CHECK_FALSE(fs::exists(dir / "nested" / "out.txt.tmp"));
  CHECK_THROWS_AS(write_atomically(target / "below_a_file", "x"), IoError);
}
