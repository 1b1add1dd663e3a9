#include "vbsparse/config.hpp"

#include "vbsparse/format.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vbsparse {

ExperimentKind parse_kind(const std::string& name) {
  if (name == "single_run") return ExperimentKind::single_run;
  if (name == "rho_h_sweep") return ExperimentKind::rho_h_sweep;
  if (name == "sigma_sweep") return ExperimentKind::sigma_sweep;
  if (name == "image_run") return ExperimentKind::image_run;
  if (name == "fixed_k_ablation") return ExperimentKind::fixed_k_ablation;
  throw InvalidConfig("unknown experiment kind '" + name + "'");
}

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::single_run: return "single_run";
    case ExperimentKind::rho_h_sweep: return "rho_h_sweep";
    case ExperimentKind::sigma_sweep: return "sigma_sweep";
    case ExperimentKind::image_run: return "image_run";
    case ExperimentKind::fixed_k_ablation: return "fixed_k_ablation";
  }
  return "unknown";
}

RhoSemantics parse_rho_semantics(const std::string& name) {
  if (name == "slab_weight") return RhoSemantics::slab_weight;
  if (name == "zero_fraction") return RhoSemantics::zero_fraction;
  throw InvalidConfig("rho_semantics must be 'slab_weight' or 'zero_fraction'");
}

const char* to_string(RhoSemantics semantics) {
  return semantics == RhoSemantics::slab_weight ? "slab_weight" : "zero_fraction";
}

double slab_weight(double rho, RhoSemantics semantics) {
  return semantics == RhoSemantics::slab_weight ? rho : 1.0 - rho;
}

void ExperimentSpec::validate() const {
  if (rows < 1 || cols < 1) throw InvalidConfig("rows and cols must be >= 1");
  if (ranks.empty() || rhos.empty() || sigmas.empty()) throw InvalidConfig("grids must be non-empty");
  if (trials < 1) throw InvalidConfig("trials must be >= 1");
  if (workers < 1) throw InvalidConfig("workers must be >= 1");
  for (int h : ranks)
    if (h < 1) throw InvalidConfig("ranks must be >= 1");
  for (double r : rhos) {
    const double w = slab_weight(r, rho_semantics);
    if (!(r >= 0.0 && r <= 1.0) || !(w > 0.0 && w <= 1.0))
      throw InvalidConfig("rho gives a slab weight outside (0, 1]");
  }
  for (double s : sigmas)
    if (!(s > 0.0)) throw InvalidConfig("sigma must be > 0");
  if (kind == ExperimentKind::fixed_k_ablation) {
    if (k_multipliers.empty()) throw InvalidConfig("ablation.k_multipliers must be non-empty");
    for (double m : k_multipliers)
      if (!(m > 0.0)) throw InvalidConfig("k multipliers must be > 0");
    if (ablation_iters < 1) throw InvalidConfig("ablation.iters must be >= 1");
  }
  if (kind == ExperimentKind::image_run && image_path.empty()) throw InvalidConfig("image.path is required");
  if (image_noise_sigma < 0.0) throw InvalidConfig("image.noise_sigma must be >= 0");
  if (baseline_k < 0.0) throw InvalidConfig("image.baseline_k must be >= 0");
  if (baseline_iters < 1) throw InvalidConfig("image.baseline_iters must be >= 1");
  if (!(sparsity_threshold > 0.0)) throw InvalidConfig("metrics.sparsity_threshold must be > 0");
  SolverConfig probe = solver;
  probe.rank = ranks.front();
  probe.c_a_diag.resize(0);
  probe.validate();
}

ExperimentSpec default_spec(ExperimentKind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  spec.solver.epsilon = 0.1;
  spec.solver.zb_threshold = 1e-5;
  switch (kind) {
    case ExperimentKind::single_run:
    case ExperimentKind::fixed_k_ablation:
      spec.trials = kind == ExperimentKind::single_run ? 1 : 5;
      spec.write_traces = kind == ExperimentKind::single_run;
      break;
    case ExperimentKind::rho_h_sweep:
      spec.rhos.clear();
      for (int i = 10; i <= 19; ++i) spec.rhos.push_back(i * 0.05);
      spec.ranks = {10, 20, 40};
      break;
    case ExperimentKind::sigma_sweep:
      spec.sigmas = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
      break;
    case ExperimentKind::image_run:
      spec.trials = 5;
      spec.ranks = {40};
      spec.sigmas = {0.03};
      spec.solver.epsilon = 1e-3;
      break;
  }
  return spec;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_real(const std::string& key, const std::string& text) {
  double value = 0.0;
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw InvalidConfig("key '" + key + "': expected a number, got '" + text + "'");
  return value;
}

template <typename Int>
Int to_integer(const std::string& key, const std::string& text) {
  Int value = 0;
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw InvalidConfig("key '" + key + "': expected an integer, got '" + text + "'");
  return value;
}

// Integer keys also accept exact scientific notation such as 1e6.
std::int64_t to_count(const std::string& key, const std::string& text) {
  try {
    return to_integer<std::int64_t>(key, text);
  } catch (const InvalidConfig&) {
    const double v = to_real(key, text);
    if (v != std::floor(v) || std::abs(v) > 9e18) throw;
    return static_cast<std::int64_t>(v);
  }
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw InvalidConfig("key '" + key + "': expected true/false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& text, F convert) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(convert(key, item));
  if (out.empty()) throw InvalidConfig("key '" + key + "': empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += format_real(values[i]);
    else
      out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("line " + std::to_string(number) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidConfig("line " + std::to_string(number) + ": empty key");
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_key_values(buffer.str());
}

void apply_key_value(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  SolverConfig& s = spec.solver;
  if (key == "schema_version") {
    if (to_integer<int>(key, value) != kSpecSchemaVersion)
      throw InvalidConfig("unsupported spec schema_version " + value);
  } else if (key == "kind") {
    spec.kind = parse_kind(trim(value));
  } else if (key == "rows") {
    spec.rows = to_integer<int>(key, value);
  } else if (key == "cols") {
    spec.cols = to_integer<int>(key, value);
  } else if (key == "rank" || key == "ranks") {
    spec.ranks = to_list<int>(key, value, [](const std::string& k, const std::string& v) { return to_integer<int>(k, v); });
  } else if (key == "rho" || key == "rhos") {
    spec.rhos = to_list<double>(key, value, to_real);
  } else if (key == "sigma" || key == "sigmas") {
    spec.sigmas = to_list<double>(key, value, to_real);
  } else if (key == "trials") {
    spec.trials = to_integer<int>(key, value);
  } else if (key == "zero_noise") {
    spec.zero_noise = to_bool(key, value);
  } else if (key == "base_seed" || key == "seed") {
    spec.base_seed = to_integer<std::uint64_t>(key, value);
  } else if (key == "output_dir") {
    spec.output_dir = trim(value);
  } else if (key == "workers") {
    spec.workers = to_integer<int>(key, value);
  } else if (key == "serial") {
    spec.serial = to_bool(key, value);
  } else if (key == "rho_semantics") {
    spec.rho_semantics = parse_rho_semantics(trim(value));
  } else if (key == "output.traces") {
    spec.write_traces = to_bool(key, value);
  } else if (key == "solver.epsilon") {
    s.epsilon = to_real(key, value);
  } else if (key == "solver.k0") {
    s.k0 = to_real(key, value);
  } else if (key == "solver.zb_threshold") {
    s.zb_threshold = to_real(key, value);
  } else if (key == "solver.max_iters") {
    s.max_iters = to_count(key, value);
  } else if (key == "solver.trace_stride") {
    s.trace_stride = to_count(key, value);
  } else if (key == "solver.erf") {
    const std::string t = trim(value);
    if (t == "standard")
      s.erf = ErfConvention::standard;
    else if (t == "complementary")
      s.erf = ErfConvention::complementary;
    else
      throw InvalidConfig("solver.erf must be 'standard' or 'complementary'");
  } else if (key == "solver.stale_a") {
    s.stale_a_in_b_ridge = to_bool(key, value);
  } else if (key == "solver.c_a") {
    const double c = to_real(key, value);
    if (!(c > 0.0)) throw InvalidConfig("solver.c_a must be > 0");
    s.c_a_diag = Vector::Constant(1, c);  // broadcast to H at run time
  } else if (key == "ablation.k_multipliers") {
    spec.k_multipliers = to_list<double>(key, value, to_real);
  } else if (key == "ablation.iters") {
    spec.ablation_iters = to_count(key, value);
  } else if (key == "image.path") {
    spec.image_path = trim(value);
  } else if (key == "image.normalize") {
    spec.normalization = parse_normalization(trim(value));
  } else if (key == "image.noise_sigma") {
    spec.image_noise_sigma = to_real(key, value);
  } else if (key == "image.baseline_k") {
    spec.baseline_k = to_real(key, value);
  } else if (key == "image.baseline_iters") {
    spec.baseline_iters = to_count(key, value);
  } else if (key == "metrics.sparsity_threshold") {
    spec.sparsity_threshold = to_real(key, value);
  } else {
    throw InvalidConfig("unknown key '" + key + "'");
  }
}

ExperimentSpec build_spec(const KeyValues& pairs, ExperimentKind fallback) {
  ExperimentKind kind = fallback;
  for (const auto& [key, value] : pairs)
    if (key == "kind") kind = parse_kind(trim(value));
  ExperimentSpec spec = default_spec(kind);
  for (const auto& [key, value] : pairs) apply_key_value(spec, key, value);
  return spec;
}

std::string to_key_values(const ExperimentSpec& spec) {
  const SolverConfig& s = spec.solver;
  std::ostringstream out;
  out << "schema_version = " << kSpecSchemaVersion << '\n'
      << "kind = " << to_string(spec.kind) << '\n'
      << "rows = " << spec.rows << '\n'
      << "cols = " << spec.cols << '\n'
      << "ranks = " << join(spec.ranks) << '\n'
      << "rhos = " << join(spec.rhos) << '\n'
      << "sigmas = " << join(spec.sigmas) << '\n'
      << "trials = " << spec.trials << '\n'
      << "zero_noise = " << (spec.zero_noise ? "true" : "false") << '\n'
      << "rho_semantics = " << to_string(spec.rho_semantics) << '\n'
      << "base_seed = " << spec.base_seed << '\n'
      << "output_dir = " << spec.output_dir.string() << '\n'
      << "workers = " << spec.workers << '\n'
      << "serial = " << (spec.serial ? "true" : "false") << '\n'
      << "output.traces = " << (spec.write_traces ? "true" : "false") << '\n'
      << "solver.epsilon = " << format_real(s.epsilon) << '\n'
      << "solver.k0 = " << format_real(s.k0) << '\n'
      << "solver.zb_threshold = " << format_real(s.zb_threshold) << '\n'
      << "solver.max_iters = " << s.max_iters << '\n'
      << "solver.trace_stride = " << s.trace_stride << '\n'
      << "solver.erf = " << (s.erf == ErfConvention::standard ? "standard" : "complementary") << '\n'
      << "solver.stale_a = " << (s.stale_a_in_b_ridge ? "true" : "false") << '\n';
  if (s.c_a_diag.size() > 0) out << "solver.c_a = " << format_real(s.c_a_diag(0)) << '\n';
  out << "ablation.k_multipliers = " << join(spec.k_multipliers) << '\n'
      << "ablation.iters = " << spec.ablation_iters << '\n';
  if (!spec.image_path.empty()) out << "image.path = " << spec.image_path.string() << '\n';
  out << "image.normalize = " << to_string(spec.normalization) << '\n'
      << "image.noise_sigma = " << format_real(spec.image_noise_sigma) << '\n'
      << "image.baseline_k = " << format_real(spec.baseline_k) << '\n'
      << "image.baseline_iters = " << spec.baseline_iters << '\n'
      << "metrics.sparsity_threshold = " << format_real(spec.sparsity_threshold) << '\n';
  return out.str();
}

}  // namespace vbsparse
