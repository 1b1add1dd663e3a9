// vbsparse: experiment runner for variational-Bayes sparse matrix factorization.
//
//   vbsparse single      [--spec f] [--out d] [--seed s] [--serial] [--stride n] [--set k=v]...
//   vbsparse sweep       ...   rho x H grid
//   vbsparse sigma-sweep ...   noise grid
//   vbsparse fixed-k     ...   tuned run, then fixed k at multiples of the tuned k
//   vbsparse image       --image f.pgm ...
//   vbsparse report      --out d   re-aggregates d/results.json
//
// Exit status: 0 when every requested cell produced a record, 1 when some
// runs failed, 2 on usage or configuration errors.

#include "vbsparse/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string spec_file;
  std::string out_dir;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool serial = false;
  std::optional<std::int64_t> stride;
  std::string image;
  std::vector<std::string> sets;
};

void add_run_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--spec", o.spec_file, "key = value spec file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--workers", o.workers, "parallel worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_flag("--serial", o.serial, "single worker, no wall-clock fields (byte-identical reruns)");
  cmd->add_option("--stride", o.stride, "record every n-th iteration in traces")->check(CLI::PositiveNumber);
  cmd->add_option("--set", o.sets, "override one spec key, e.g. --set solver.epsilon=0.05");
}

vbsparse::ExperimentSpec resolve(vbsparse::ExperimentKind kind, const Options& o) {
  vbsparse::KeyValues pairs;
  if (!o.spec_file.empty()) pairs = vbsparse::read_key_value_file(o.spec_file);
  for (const auto& [key, value] : pairs)
    if (key == "kind" && vbsparse::parse_kind(value) != kind)
      throw vbsparse::InvalidConfig("spec kind '" + value + "' does not match the subcommand");
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw vbsparse::InvalidConfig("--set expects key=value, got '" + s + "'");
    pairs.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  vbsparse::ExperimentSpec spec = vbsparse::build_spec(pairs, kind);
  spec.kind = kind;
  if (!o.out_dir.empty()) spec.output_dir = o.out_dir;
  if (o.workers) spec.workers = *o.workers;
  if (o.seed) spec.base_seed = *o.seed;
  if (o.serial) spec.serial = true;
  if (o.stride) spec.solver.trace_stride = *o.stride;
  if (!o.image.empty()) spec.image_path = o.image;
  spec.validate();
  return spec;
}

void print_progress(const vbsparse::RunOutcome& o) {
  const auto& r = o.record;
  auto field = [](const char* name, const std::optional<double>& v) {
    return v ? std::string(" ") + name + "=" + std::to_string(*v) : std::string();
  };
  std::cerr << o.trace_name;
  if (o.trace_name.empty()) std::cerr << "H" << r.cell.rank << "_t" << r.trial;
  if (r.error) {
    std::cerr << " error: " << *r.error << '\n';
    return;
  }
  std::cerr << ' ' << r.termination << " iters=" << r.iterations << field("rmse_a", r.rmse_a)
            << field("rmse_b", r.rmse_b) << field("rmse_v", r.rmse_v) << field("sparsity_b", r.sparsity_b)
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational-Bayes sparse matrix factorization experiments"};
  app.require_subcommand(1);

  Options o;
  struct Entry {
    const char* name;
    const char* help;
    vbsparse::ExperimentKind kind;
  };
  const std::vector<Entry> entries{
      {"single", "one synthetic run with a per-iteration trace", vbsparse::ExperimentKind::single_run},
      {"sweep", "rho x H sweep on synthetic data", vbsparse::ExperimentKind::rho_h_sweep},
      {"sigma-sweep", "noise-level sweep on synthetic data", vbsparse::ExperimentKind::sigma_sweep},
      {"fixed-k", "fixed-k ablation around the tuned k", vbsparse::ExperimentKind::fixed_k_ablation},
      {"image", "tuned runs on a grayscale PGM image", vbsparse::ExperimentKind::image_run},
  };
  std::vector<std::pair<CLI::App*, vbsparse::ExperimentKind>> commands;
  for (const Entry& e : entries) {
    CLI::App* cmd = app.add_subcommand(e.name, e.help);
    add_run_options(cmd, o);
    if (e.kind == vbsparse::ExperimentKind::image_run)
      cmd->add_option("--image", o.image, "8-bit PGM (P5 or P2)")->check(CLI::ExistingFile);
    commands.emplace_back(cmd, e.kind);
  }
  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "recompute aggregate.csv from results.json");
  report->add_option("--out", report_dir, "output directory of an earlier run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      vbsparse::report(report_dir);
      std::cerr << "wrote " << (std::filesystem::path(report_dir) / "aggregate.csv").string() << '\n';
      return 0;
    }
    for (const auto& [cmd, kind] : commands) {
      if (!cmd->parsed()) continue;
      const vbsparse::ExperimentSpec spec = resolve(kind, o);
      const vbsparse::ExperimentResult result = vbsparse::execute(spec, print_progress);
      std::cerr << result.records.size() << " records, " << result.failed << " failed, written to "
                << spec.output_dir.string() << '\n';
      return result.failed == 0 ? 0 : 1;
    }
  } catch (const vbsparse::InvalidConfig& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
