// Command-line front end; talks to the toolkit exclusively through the C API.
#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "claps/capi.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCertifiedFailure = 1;
constexpr int kExitUsage = 2;

int report_error(const char* what) {
  std::fprintf(stderr, "error: %s: %s\n", what, claps_last_error());
  return kExitUsage;
}

struct ToolkitHandle {
  claps_toolkit* tk = nullptr;
  ~ToolkitHandle() { claps_toolkit_free(tk); }
};

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { claps_string_free(s); }
};

int cmd_graph(const std::string& config, const std::string& spec, const std::string& out_path) {
  ToolkitHandle tk;
  if (claps_toolkit_load(config.c_str(), &tk.tk) != CLAPS_OK)
    return report_error("loading config");
  OwnedString dot, summary;
  const char* spec_override = spec.empty() ? nullptr : spec.c_str();
  if (claps_graph_dot(tk.tk, spec_override, &dot.s) != CLAPS_OK)
    return report_error("compiling graph");
  if (claps_graph_summary(tk.tk, spec_override, &summary.s) != CLAPS_OK)
    return report_error("summarizing graph");
  if (!out_path.empty()) {
    std::FILE* f = std::fopen(out_path.c_str(), "wb");
    if (!f) {
      std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
      return kExitUsage;
    }
    std::fputs(dot.s, f);
    std::fclose(f);
  } else {
    std::fputs(dot.s, stdout);
  }
  std::fputs(summary.s, stdout);
  return kExitOk;
}

int cmd_run(const std::string& config, double p, std::uint64_t seed, const std::string& out_dir,
            const std::string& stub, double timeout, double mesh) {
  ToolkitHandle tk;
  if (claps_toolkit_load(config.c_str(), &tk.tk) != CLAPS_OK)
    return report_error("loading config");
  claps_run_options options{};
  options.threshold = p;
  options.seed = seed;
  options.out_dir = out_dir.empty() ? nullptr : out_dir.c_str();
  options.stub_edges_csv = stub.empty() ? nullptr : stub.c_str();
  options.timeout_seconds = timeout;
  options.mesh = mesh;

  claps_run_result* result = nullptr;
  if (claps_run(tk.tk, &options, &result) != CLAPS_OK) return report_error("running");
  OwnedString report, log;
  claps_run_report(result, &report.s);
  claps_run_solver_log(result, &log.s);
  std::fputs(report.s, stdout);
  std::fputs(log.s, stdout);
  int ok = claps_run_success(result);
  claps_run_result_free(result);
  return ok ? kExitOk : kExitCertifiedFailure;
}

int cmd_bound(double lambda, double gamma, double lv, double step, bool caption_mode) {
  long long caption_steps = caption_mode ? (long long)llround(2.0 * lambda) : 0;
  long long steps = 0;
  double bound = 0, prior = 0;
  if (claps_bound(lambda, gamma, lv, step, caption_steps, &steps, &bound, &prior) != CLAPS_OK)
    return report_error("computing bound");
  std::printf("N = %lld\n", steps);
  std::printf("bound = %.10f\n", bound);
  std::printf("prior_bound = %.10f\n", prior);
  return kExitOk;
}

int cmd_simulate(const std::string& manifest, const std::string& config, long edge,
                 std::size_t episodes, std::size_t horizon, std::uint64_t seed, double alpha,
                 const std::string& csv_dir) {
  double estimate = 0, lo = 0, hi = 0;
  int pass = 0;
  const char* cfg = config.empty() ? nullptr : config.c_str();
  const char* csv = csv_dir.empty() ? nullptr : csv_dir.c_str();
  int rc = edge >= 0
               ? claps_simulate_edge(manifest.c_str(), cfg, std::size_t(edge), episodes, horizon,
                                     seed, alpha, csv, &estimate, &lo, &hi, &pass)
               : claps_simulate_manifest(manifest.c_str(), cfg, episodes, horizon, seed, alpha,
                                         csv, &estimate, &lo, &hi, &pass);
  if (rc != CLAPS_OK) return report_error("simulating");
  std::printf("estimate = %.6f\n", estimate);
  std::printf("ci = [%.6f, %.6f]\n", lo, hi);
  std::printf("%s\n", pass ? "PASS (bound <= upper confidence limit)"
                           : "FAIL (bound exceeds upper confidence limit)");
  return pass ? kExitOk : kExitCertifiedFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reach-avoid certificate toolkit"};
  app.require_subcommand(1);

  std::string config, spec, out, stub, manifest, csv_dir;
  double p = 0, timeout = 0, mesh = 0, alpha = 0.01;
  std::uint64_t seed = 0;
  double lambda = 0, gamma = 0, lv = 1.0, step = 0.1;
  bool caption_mode = false;
  long edge = -1;
  std::size_t episodes = 10000, horizon = 400;

  auto* graph = app.add_subcommand("graph", "compile and print the abstract graph");
  graph->add_option("--config", config, "toolkit config file")->required();
  graph->add_option("--spec", spec, "specification text overriding the config");
  graph->add_option("--out", out, "write DOT here instead of stdout");

  auto* run = app.add_subcommand("run", "certify and compose edge policies");
  run->add_option("--config", config, "toolkit config file")->required();
  run->add_option("--p", p, "global probability threshold");
  run->add_option("--seed", seed, "run seed");
  run->add_option("--out", out, "artifact directory");
  run->add_option("--stub-edges", stub, "CSV of stubbed edge probabilities");
  run->add_option("--timeout", timeout, "per-edge training timeout (seconds)");
  run->add_option("--mesh", mesh, "verification mesh (tau)");

  auto* bound = app.add_subcommand("bound", "print the certificate probability bound");
  bound->add_option("--lambda", lambda, "safety level (> 1)")->required();
  bound->add_option("--gamma", gamma, "expected decrease factor in (0, 1]")->required();
  bound->add_option("--lv", lv, "certificate Lipschitz constant");
  bound->add_option("--step", step, "max step size (L1)");
  bound->add_flag("--caption-mode", caption_mode, "use N = 2*lambda");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo check of a run's artifacts");
  simulate->add_option("--manifest", manifest, "run manifest")->required();
  simulate->add_option("--config", config, "config override (default: recorded path)");
  simulate->add_option("--edge", edge, "check one solved edge instead of the composition");
  simulate->add_option("--episodes", episodes, "episode count");
  simulate->add_option("--horizon", horizon, "steps per episode");
  simulate->add_option("--seed", seed, "simulation seed");
  simulate->add_option("--alpha", alpha, "confidence level parameter");
  simulate->add_option("--csv", csv_dir, "trajectory dump directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (graph->parsed()) return cmd_graph(config, spec, out);
  if (run->parsed()) return cmd_run(config, p, seed, out, stub, timeout, mesh);
  if (bound->parsed()) return cmd_bound(lambda, gamma, lv, step, caption_mode);
  if (simulate->parsed())
    return cmd_simulate(manifest, config, edge, episodes, horizon, seed, alpha, csv_dir);
  return kExitUsage;
}
