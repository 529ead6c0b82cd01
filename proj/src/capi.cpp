#include "claps/capi.h"

#include <cstring>
#include <map>
#include <sstream>

#include "claps/compose.hpp"
#include "claps/config.hpp"
#include "claps/manifest.hpp"
#include "claps/rasm.hpp"
#include "claps/svg.hpp"
#include "claps/util.hpp"

using namespace claps;

struct claps_toolkit {
  config::Toolkit tk;
};

struct claps_run_result {
  bool success = false;
  double bound = 0;
  std::string report;
  std::string solver_log;
};

namespace {

thread_local std::string g_last_error;

int fail(const std::string& message) {
  g_last_error = message;
  return CLAPS_ERROR;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return fail(e.what());
  } catch (const std::exception& e) {
    return fail(std::string("internal error: ") + e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

absgraph::AbstractGraph resolve_graph(const config::Toolkit& tk, const char* spec_override) {
  if (spec_override && *spec_override) {
    spectrl::Formula f = spectrl::parse(spec_override, tk.regions);
    return absgraph::compile_to_graph(f, tk.regions, tk.initial, tk.system->state_space());
  }
  return tk.resolve_graph();
}

std::map<std::size_t, double> parse_stub_edges(const absgraph::AbstractGraph& graph,
                                               const std::filesystem::path& csv_path) {
  std::map<std::string, std::size_t> by_name;
  for (std::size_t ei = 0; ei < graph.edges.size(); ++ei) {
    const auto& e = graph.edges[ei];
    by_name[graph.vertex_names[e.tail] + "," + graph.vertex_names[e.head]] = ei;
  }
  std::map<std::size_t, double> stub;
  std::istringstream in(read_file(csv_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("start", 0) == 0 || line[0] == '#') continue;
    auto last = line.rfind(',');
    if (last == std::string::npos) throw FormatError("malformed stub row: " + line);
    std::string key = line.substr(0, last);
    double p = std::stod(line.substr(last + 1));
    auto it = by_name.find(key);
    if (it == by_name.end()) throw FormatError("stub row names no graph edge: " + line);
    stub[it->second] = p;
  }
  if (stub.empty()) throw FormatError("stub file names no edges: " + csv_path.string());
  return stub;
}

std::string graph_summary_text(const absgraph::AbstractGraph& g) {
  std::ostringstream ss;
  ss << "vertices: " << g.vertex_count() << ", edges: " << g.edges.size() << "\n";
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    ss << "  vertex " << v << " " << g.vertex_names[v];
    if (v == g.source) ss << " [source]";
    if (v == g.target) ss << " [target]";
    ss << "  " << g.vertex_regions[v].describe() << "\n";
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    ss << "  edge " << i << " " << g.vertex_names[e.tail] << " -> " << g.vertex_names[e.head];
    if (e.unsatisfiable) ss << " [unsatisfiable]";
    ss << "\n";
  }
  return ss.str();
}

void write_run_artifacts(const config::Toolkit& tk, const compose::RunResult& run,
                         double threshold, std::uint64_t seed,
                         const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  manifest::Manifest m = manifest::from_run(run, tk.config_hash, tk.config_path.string(),
                                            threshold, seed, out_dir);
  manifest::write(m, out_dir / "manifest.txt");
  atomic_write_file(out_dir / "summary.csv", manifest::csv_summary(m));
  atomic_write_file(out_dir / "graph.dot", absgraph::export_dot(run.graph));

  if (!run.success || !run.policy) return;
  // Sampled rollouts of the composed policy (plot + per-episode dumps).
  const auto& graph = run.graph;
  const Region& start = graph.vertex_regions[graph.source];
  svg::Scene scene(tk.system->state_space());
  if (tk.nine) scene.add_region(tk.nine->walls, "#d04040");
  scene.add_region(start, "#58b858", 0.5);
  scene.add_region(graph.vertex_regions[graph.target], "#9058c0", 0.5);

  compose::CompositionalPolicy policy = *run.policy;
  fs::create_directories(out_dir / "trajectories");
  const std::size_t plots = 10;
  for (std::size_t ep = 0; ep < plots; ++ep) {
    policy.reset();
    auto rng = make_rng(seed, 0x5110 + ep);
    std::vector<double> x0 = start.sample(rng);
    auto states = sys::rollout(*tk.system, policy.as_policy(), x0, tk.run_horizon,
                               mix_seed(seed, 0x0110 + ep));
    scene.add_trajectory(states, ep % 2 ? "#3060c0" : "#208080");
    std::ostringstream csv;
    csv << "t,x1,x2,u1,u2\n";
    compose::CompositionalPolicy dump_policy = *run.policy;
    dump_policy.reset();
    for (std::size_t t = 0; t < states.size(); ++t) {
      std::vector<double> u = dump_policy.act(states[t]);
      csv << t;
      for (std::size_t d = 0; d < 2 && d < states[t].size(); ++d)
        csv << "," << format_double(states[t][d]);
      for (std::size_t d = 0; d < 2 && d < u.size(); ++d) csv << "," << format_double(u[d]);
      csv << "\n";
    }
    atomic_write_file(out_dir / "trajectories" / ("traj_" + std::to_string(ep) + ".csv"),
                      csv.str());
  }
  atomic_write_file(out_dir / "rollouts.svg", scene.render());
}

}  // namespace

extern "C" {

const char* claps_version(void) { return "0.1.0"; }

const char* claps_last_error(void) { return g_last_error.c_str(); }

void claps_string_free(char* s) { std::free(s); }

int claps_toolkit_load(const char* config_path, claps_toolkit** out) {
  return guarded([&] {
    if (!config_path || !out) return fail("claps_toolkit_load: null argument");
    auto* tk = new claps_toolkit{config::load_toolkit(config_path)};
    *out = tk;
    return CLAPS_OK;
  });
}

int claps_toolkit_from_string(const char* text, const char* name, claps_toolkit** out) {
  return guarded([&] {
    if (!text || !out) return fail("claps_toolkit_from_string: null argument");
    auto* tk = new claps_toolkit{config::toolkit_from_string(text, name ? name : "<memory>")};
    *out = tk;
    return CLAPS_OK;
  });
}

void claps_toolkit_free(claps_toolkit* tk) { delete tk; }

int claps_graph_dot(claps_toolkit* tk, const char* spec_override, char** out_dot) {
  return guarded([&] {
    if (!tk || !out_dot) return fail("claps_graph_dot: null argument");
    *out_dot = dup_string(absgraph::export_dot(resolve_graph(tk->tk, spec_override)));
    return CLAPS_OK;
  });
}

int claps_graph_summary(claps_toolkit* tk, const char* spec_override, char** out_text) {
  return guarded([&] {
    if (!tk || !out_text) return fail("claps_graph_summary: null argument");
    *out_text = dup_string(graph_summary_text(resolve_graph(tk->tk, spec_override)));
    return CLAPS_OK;
  });
}

int claps_bound(double lambda, double gamma, double lip_v, double max_step,
                long long caption_steps, long long* out_steps, double* out_bound,
                double* out_prior) {
  return guarded([&] {
    rasm::BoundResult r = caption_steps > 0
                              ? rasm::compute_bound_with_steps(lambda, gamma, caption_steps)
                              : rasm::compute_bound(lambda, gamma, lip_v, max_step);
    if (out_steps) *out_steps = r.steps;
    if (out_bound) *out_bound = r.bound;
    if (out_prior) *out_prior = rasm::prior_bound(lambda);
    return CLAPS_OK;
  });
}

int claps_run(claps_toolkit* tk, const claps_run_options* options, claps_run_result** out) {
  return guarded([&] {
    if (!tk || !out) return fail("claps_run: null argument");
    const config::Toolkit& cfg = tk->tk;

    compose::RunOptions ro;
    ro.train = cfg.train;
    ro.threshold = cfg.run_threshold;
    std::filesystem::path out_dir = cfg.out_dir;
    std::uint64_t seed = cfg.train.seed;
    if (options) {
      if (options->threshold > 0) ro.threshold = options->threshold;
      if (options->seed != 0) {
        seed = options->seed;
        ro.train.seed = options->seed;
      }
      if (options->out_dir) out_dir = options->out_dir;
      if (options->timeout_seconds > 0) ro.train.timeout_seconds = options->timeout_seconds;
      if (options->mesh > 0) ro.train.mesh = options->mesh;
    }

    absgraph::AbstractGraph graph = resolve_graph(cfg, nullptr);
    if (options && options->stub_edges_csv)
      ro.stub_probabilities = parse_stub_edges(graph, options->stub_edges_csv);
    if (!out_dir.empty() && !ro.stub_probabilities) ro.store_dir = out_dir / "edges";

    compose::RunResult run = compose::run_on_graph(*cfg.system, graph, ro);

    auto* result = new claps_run_result;
    result->success = run.success;
    result->bound = run.global_bound;

    std::ostringstream report;
    report << "status: " << (run.success ? "success" : "failure") << "\n";
    report << "threshold: " << format_double(ro.threshold) << "\n";
    report << "global_bound: " << format_double(run.global_bound) << "\n";
    report << "probabilities:\n";
    for (std::size_t v = 0; v < run.pass.prob.size(); ++v)
      report << "  " << run.graph.vertex_names[v] << " = " << format_double(run.pass.prob[v])
             << "\n";
    if (!run.path.empty()) {
      report << "path:";
      for (std::size_t v : run.path) report << " " << run.graph.vertex_names[v];
      report << "\n";
    }
    result->report = report.str();

    std::ostringstream log;
    for (std::size_t ei : run.pass.solver_calls) {
      const auto& e = run.graph.edges[ei];
      log << "solved " << run.graph.vertex_names[e.tail] << " -> "
          << run.graph.vertex_names[e.head]
          << (run.pass.solutions.count(ei) ? "" : " (no certificate)") << "\n";
    }
    for (std::size_t ei : run.pass.skipped_edges) {
      const auto& e = run.graph.edges[ei];
      log << "skipped " << run.graph.vertex_names[e.tail] << " -> "
          << run.graph.vertex_names[e.head]
          << (e.unsatisfiable ? " (unsatisfiable)" : " (tail below threshold)") << "\n";
    }
    result->solver_log = log.str();

    if (!out_dir.empty()) write_run_artifacts(cfg, run, ro.threshold, seed, out_dir);

    *out = result;
    return CLAPS_OK;
  });
}

void claps_run_result_free(claps_run_result* r) { delete r; }

int claps_run_success(const claps_run_result* r) { return r && r->success ? 1 : 0; }

double claps_run_bound(const claps_run_result* r) { return r ? r->bound : 0.0; }

int claps_run_report(const claps_run_result* r, char** out_text) {
  return guarded([&] {
    if (!r || !out_text) return fail("claps_run_report: null argument");
    *out_text = dup_string(r->report);
    return CLAPS_OK;
  });
}

int claps_run_solver_log(const claps_run_result* r, char** out_text) {
  return guarded([&] {
    if (!r || !out_text) return fail("claps_run_solver_log: null argument");
    *out_text = dup_string(r->solver_log);
    return CLAPS_OK;
  });
}

namespace {

void dump_episode_csv(const std::filesystem::path& dir, std::size_t episode,
                      const std::vector<std::vector<double>>& states,
                      const std::vector<std::vector<double>>& actions) {
  std::ostringstream csv;
  csv << "t,x1,x2,u1,u2\n";
  for (std::size_t t = 0; t < states.size(); ++t) {
    csv << t;
    for (std::size_t d = 0; d < 2 && d < states[t].size(); ++d)
      csv << "," << format_double(states[t][d]);
    if (t < actions.size())
      for (std::size_t d = 0; d < 2 && d < actions[t].size(); ++d)
        csv << "," << format_double(actions[t][d]);
    csv << "\n";
  }
  atomic_write_file(dir / ("traj_" + std::to_string(episode) + ".csv"), csv.str());
}

}  // namespace

int claps_simulate_manifest(const char* manifest_path, const char* config_path,
                            size_t episodes, size_t horizon, uint64_t seed, double alpha,
                            const char* csv_dir, double* out_estimate, double* out_ci_lo,
                            double* out_ci_hi, int* out_pass) {
  return guarded([&] {
    if (!manifest_path) return fail("claps_simulate_manifest: null manifest path");
    if (episodes == 0 || horizon == 0)
      return fail("claps_simulate_manifest: episodes and horizon must be positive");
    std::filesystem::path mpath = manifest_path;
    manifest::Manifest m = manifest::load(mpath);
    config::Toolkit cfg = config::load_toolkit(
        config_path && *config_path ? std::filesystem::path(config_path)
                                    : std::filesystem::path(m.config_path));

    compose::CompositionalPolicy policy = manifest::load_policy(m, mpath.parent_path());
    const Region& start = m.graph.vertex_regions[m.graph.source];

    std::size_t wins = 0;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
      policy.reset();
      auto rng = make_rng(seed, ep);
      std::vector<double> x0 = start.sample(rng);
      std::vector<std::vector<double>> states;
      std::vector<std::vector<double>> actions;
      states.emplace_back(x0);
      for (std::size_t t = 0; t < horizon; ++t) {
        actions.push_back(policy.act(states.back()));
        std::vector<double> w = cfg.system->noise().sample(rng);
        states.push_back(cfg.system->step(states.back(), actions.back(), w));
      }
      if (absgraph::check_abstract_reachability(m.graph, states)) ++wins;
      if (csv_dir && ep < 10) dump_episode_csv(csv_dir, ep, states, actions);
    }
    double estimate = double(wins) / double(episodes);
    auto [lo, hi] = sys::binomial_confidence(wins, episodes, alpha > 0 ? alpha : 0.01);
    if (out_estimate) *out_estimate = estimate;
    if (out_ci_lo) *out_ci_lo = lo;
    if (out_ci_hi) *out_ci_hi = hi;
    if (out_pass) *out_pass = m.global_bound <= hi ? 1 : 0;
    return CLAPS_OK;
  });
}

int claps_simulate_edge(const char* manifest_path, const char* config_path, size_t edge_index,
                        size_t episodes, size_t horizon, uint64_t seed, double alpha,
                        const char* csv_dir, double* out_estimate, double* out_ci_lo,
                        double* out_ci_hi, int* out_pass) {
  return guarded([&] {
    if (!manifest_path) return fail("claps_simulate_edge: null manifest path");
    std::filesystem::path mpath = manifest_path;
    manifest::Manifest m = manifest::load(mpath);
    config::Toolkit cfg = config::load_toolkit(
        config_path && *config_path ? std::filesystem::path(config_path)
                                    : std::filesystem::path(m.config_path));

    const manifest::EdgeRecord* rec = nullptr;
    for (const auto& e : m.edges)
      if (e.edge == edge_index) rec = &e;
    if (!rec) return fail("manifest has no solution for edge " + std::to_string(edge_index));
    if (rec->policy_file.empty() || rec->certificate_file.empty())
      return fail("edge artifacts missing (stubbed run?)");

    nn::Mlp policy = nn::load_net(mpath.parent_path() / rec->policy_file);
    rasm::Certificate cert =
        rasm::parse_certificate(read_file(mpath.parent_path() / rec->certificate_file));

    sys::ReachAvoidTask task = compose::edge_task(m.graph, edge_index);
    sys::McResult mc = sys::mc_reach_avoid(*cfg.system, sys::policy_from_net(policy), task,
                                           horizon, episodes, seed, alpha > 0 ? alpha : 0.01);
    if (csv_dir) {
      auto rng = make_rng(seed, 0);
      for (std::size_t ep = 0; ep < std::min<std::size_t>(episodes, 10); ++ep) {
        std::vector<double> x0 = task.init.sample(rng);
        auto states =
            sys::rollout(*cfg.system, sys::policy_from_net(policy), x0, horizon, mix_seed(seed, ep));
        std::vector<std::vector<double>> actions;
        for (const auto& s : states) actions.push_back(policy.forward(s));
        dump_episode_csv(csv_dir, ep, states, actions);
      }
    }
    if (out_estimate) *out_estimate = mc.estimate;
    if (out_ci_lo) *out_ci_lo = mc.ci_lo;
    if (out_ci_hi) *out_ci_hi = mc.ci_hi;
    if (out_pass) *out_pass = cert.bound <= mc.ci_hi ? 1 : 0;
    return CLAPS_OK;
  });
}

}  // extern "C"
