#include "vbsparse/export.hpp"

#include "vbsparse/format.hpp"
#include "vbsparse/image.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vbsparse {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string optional_field(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

template <typename T>
void put_optional(ordered_json& j, const char* key, const std::optional<T>& v) {
  if (v)
    j[key] = *v;
  else
    j[key] = nullptr;
}

template <typename T>
std::optional<T> get_optional(const ordered_json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

ordered_json cell_to_json(const CellId& c) {
  ordered_json j;
  put_optional(j, "rho", c.rho);
  j["rank"] = c.rank;
  j["sigma"] = c.sigma;
  j["mode"] = c.mode;
  put_optional(j, "k_multiplier", c.k_multiplier);
  put_optional(j, "fixed_k", c.fixed_k);
  return j;
}

CellId cell_from_json(const ordered_json& j) {
  CellId c;
  c.rho = get_optional<double>(j, "rho");
  c.rank = j.at("rank").get<int>();
  c.sigma = j.at("sigma").get<double>();
  c.mode = j.at("mode").get<std::string>();
  c.k_multiplier = get_optional<double>(j, "k_multiplier");
  c.fixed_k = get_optional<double>(j, "fixed_k");
  return c;
}

// Experiment identity only; execution settings (workers, output location)
// do not change results and are left out so reruns compare byte-for-byte.
ordered_json spec_to_json(const ExperimentSpec& spec) {
  const SolverConfig& s = spec.solver;
  ordered_json j;
  j["kind"] = to_string(spec.kind);
  j["rows"] = spec.rows;
  j["cols"] = spec.cols;
  j["ranks"] = spec.ranks;
  j["rhos"] = spec.rhos;
  j["sigmas"] = spec.sigmas;
  j["trials"] = spec.trials;
  j["zero_noise"] = spec.zero_noise;
  j["rho_semantics"] = to_string(spec.rho_semantics);
  j["base_seed"] = spec.base_seed;
  ordered_json solver;
  solver["epsilon"] = s.epsilon;
  solver["k0"] = s.k0;
  solver["zb_threshold"] = s.zb_threshold;
  solver["max_iters"] = s.max_iters;
  solver["trace_stride"] = s.trace_stride;
  solver["erf"] = s.erf == ErfConvention::standard ? "standard" : "complementary";
  solver["stale_a"] = s.stale_a_in_b_ridge;
  if (s.c_a_diag.size() > 0)
    solver["c_a"] = s.c_a_diag(0);
  else
    solver["c_a"] = 1.0;
  j["solver"] = solver;
  if (spec.kind == ExperimentKind::fixed_k_ablation) {
    j["k_multipliers"] = spec.k_multipliers;
    j["ablation_iters"] = spec.ablation_iters;
  }
  if (spec.kind == ExperimentKind::image_run) {
    j["image_path"] = spec.image_path.string();
    j["normalize"] = to_string(spec.normalization);
    j["image_noise_sigma"] = spec.image_noise_sigma;
    j["baseline_k"] = spec.baseline_k;
    j["baseline_iters"] = spec.baseline_iters;
  }
  j["sparsity_threshold"] = spec.sparsity_threshold;
  return j;
}

ordered_json record_to_json(const ResultRecord& r) {
  ordered_json j;
  j["cell"] = cell_to_json(r.cell);
  j["trial"] = r.trial;
  j["seed"] = r.seed;
  put_optional(j, "rmse_a", r.rmse_a);
  put_optional(j, "rmse_b", r.rmse_b);
  put_optional(j, "rmse_v", r.rmse_v);
  put_optional(j, "sparsity_b", r.sparsity_b);
  put_optional(j, "truth_zero_fraction", r.truth_zero_fraction);
  j["termination"] = r.termination;
  j["iterations"] = r.iterations;
  j["final_k"] = r.final_k;
  j["final_zb"] = r.final_zb;
  j["clamp_events"] = r.clamp_events;
  put_optional(j, "wall_clock_s", r.wall_clock_s);
  put_optional(j, "error", r.error);
  return j;
}

ResultRecord record_from_json(const ordered_json& j) {
  ResultRecord r;
  r.cell = cell_from_json(j.at("cell"));
  r.trial = j.at("trial").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rmse_a = get_optional<double>(j, "rmse_a");
  r.rmse_b = get_optional<double>(j, "rmse_b");
  r.rmse_v = get_optional<double>(j, "rmse_v");
  r.sparsity_b = get_optional<double>(j, "sparsity_b");
  r.truth_zero_fraction = get_optional<double>(j, "truth_zero_fraction");
  r.termination = j.at("termination").get<std::string>();
  r.iterations = j.at("iterations").get<std::int64_t>();
  r.final_k = j.at("final_k").get<double>();
  r.final_zb = j.at("final_zb").get<double>();
  r.clamp_events = j.value("clamp_events", std::int64_t{0});
  r.wall_clock_s = get_optional<double>(j, "wall_clock_s");
  r.error = get_optional<std::string>(j, "error");
  return r;
}

AggregateRow::Stat summarize(const std::vector<double>& values) {
  AggregateRow::Stat s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.mean = mean;
  s.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

}  // namespace

std::string trace_csv(const RunTrace& trace) {
  std::ostringstream out;
  out << kTraceHeader << '\n';
  for (const TraceRecord& r : trace.records)
    out << r.iter << ',' << format_real(r.k) << ',' << format_real(r.z_b) << ','
        << optional_field(r.metrics.rmse_a) << ',' << optional_field(r.metrics.rmse_b) << ','
        << optional_field(r.metrics.rmse_v) << ',' << optional_field(r.metrics.sparsity_b) << '\n';
  return out.str();
}

void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string results_json(const ExperimentSpec& spec, const std::vector<ResultRecord>& records) {
  ordered_json j;
  j["schema"] = kResultSchemaVersion;
  j["spec"] = spec_to_json(spec);
  ordered_json list = ordered_json::array();
  for (const auto& r : records) list.push_back(record_to_json(r));
  j["records"] = std::move(list);
  return j.dump(2) + "\n";
}

std::vector<ResultRecord> parse_results_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed result JSON: ") + e.what());
  }
  if (!j.contains("schema") || j.at("schema").get<int>() != kResultSchemaVersion)
    throw Error("unsupported result JSON schema");
  std::vector<ResultRecord> out;
  try {
    for (const auto& r : j.at("records")) out.push_back(record_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed result record: ") + e.what());
  }
  return out;
}

std::vector<ResultRecord> read_results_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_results_json(buffer.str());
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRecord>& records) {
  std::vector<CellId> cells;
  for (const auto& r : records)
    if (std::find(cells.begin(), cells.end(), r.cell) == cells.end()) cells.push_back(r.cell);

  std::vector<AggregateRow> rows;
  for (const CellId& cell : cells) {
    AggregateRow row;
    row.cell = cell;
    std::vector<double> a, b, v, sp, zf, it, k;
    for (const auto& r : records) {
      if (!(r.cell == cell)) continue;
      if (r.error) {
        ++row.failed;
        continue;
      }
      ++row.runs;
      if (r.rmse_a) a.push_back(*r.rmse_a);
      if (r.rmse_b) b.push_back(*r.rmse_b);
      if (r.rmse_v) v.push_back(*r.rmse_v);
      if (r.sparsity_b) sp.push_back(*r.sparsity_b);
      if (r.truth_zero_fraction) zf.push_back(*r.truth_zero_fraction);
      it.push_back(static_cast<double>(r.iterations));
      k.push_back(r.final_k);
    }
    row.rmse_a = summarize(a);
    row.rmse_b = summarize(b);
    row.rmse_v = summarize(v);
    row.sparsity_b = summarize(sp);
    row.truth_zero_fraction = summarize(zf);
    row.iterations = summarize(it);
    row.final_k = summarize(k);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "rho,rank,sigma,mode,k_multiplier,fixed_k,runs,failed,"
         "rmse_a_mean,rmse_a_std,rmse_b_mean,rmse_b_std,rmse_v_mean,rmse_v_std,"
         "sparsity_b_mean,sparsity_b_std,truth_zero_fraction_mean,ref_one_minus_rho,ref_rho,"
         "iterations_mean,final_k_mean\n";
  auto stat = [](const AggregateRow::Stat& s) {
    return optional_field(s.mean) + ',' + optional_field(s.stddev);
  };
  for (const auto& r : rows) {
    const auto& c = r.cell;
    out << optional_field(c.rho) << ',' << c.rank << ',' << format_real(c.sigma) << ',' << c.mode << ','
        << optional_field(c.k_multiplier) << ',' << optional_field(c.fixed_k) << ',' << r.runs << ','
        << r.failed << ',' << stat(r.rmse_a) << ',' << stat(r.rmse_b) << ',' << stat(r.rmse_v) << ','
        << stat(r.sparsity_b) << ',' << optional_field(r.truth_zero_fraction.mean) << ','
        << (c.rho ? format_real(1.0 - *c.rho) : std::string()) << ',' << optional_field(c.rho) << ','
        << optional_field(r.iterations.mean) << ',' << optional_field(r.final_k.mean) << '\n';
  }
  return out.str();
}

}  // namespace vbsparse
