#include "claps/compose.hpp"

#include <algorithm>
#include <cmath>

#include "claps/util.hpp"

namespace claps::compose {

using absgraph::AbstractGraph;

sys::ReachAvoidTask edge_task(const AbstractGraph& graph, std::size_t edge_index) {
  const auto& e = graph.edges.at(edge_index);
  Region unsafe = e.region.complement_within(graph.state_space);
  return sys::ReachAvoidTask(graph.vertex_regions[e.tail], graph.vertex_regions[e.head],
                             std::move(unsafe));
}

ForwardPassResult forward_pass(const AbstractGraph& graph, double threshold,
                               const EdgeSolver& solver) {
  if (threshold < 0 || threshold > 1) throw DomainError("threshold must lie in [0, 1]");
  ForwardPassResult result;
  result.prob.assign(graph.vertex_count(), 0.0);
  result.prob[graph.source] = 1.0;

  for (std::size_t v : absgraph::topo_sort(graph)) {
    if (v == graph.source) continue;
    for (std::size_t ei : graph.in_edges(v)) {
      const auto& e = graph.edges[ei];
      if (e.unsatisfiable) {
        result.skipped_edges.push_back(ei);
        continue;
      }
      if (result.prob[e.tail] < threshold) {
        result.skipped_edges.push_back(ei);
        continue;
      }
      result.solver_calls.push_back(ei);
      std::optional<EdgeSolution> sol = solver(ei);
      if (!sol) continue;  // unsolved edges contribute probability zero
      double p = sol->probability;
      result.solutions.emplace(ei, std::move(*sol));
      result.prob[v] = std::max(result.prob[v], p * result.prob[e.tail]);
    }
  }
  return result;
}

std::vector<std::size_t> extract_path(const AbstractGraph& graph, const ForwardPassResult& result) {
  if (result.prob[graph.target] <= 0)
    throw DomainError("no certified path: target probability is zero");
  std::vector<std::size_t> reversed = {graph.target};
  std::size_t v = graph.target;
  while (v != graph.source) {
    bool found = false;
    for (std::size_t ei : graph.in_edges(v)) {  // index order = topological tie-break
      auto it = result.solutions.find(ei);
      if (it == result.solutions.end()) continue;
      const auto& e = graph.edges[ei];
      if (result.prob[v] == it->second.probability * result.prob[e.tail]) {
        v = e.tail;
        reversed.push_back(v);
        found = true;
        break;
      }
    }
    if (!found) throw DomainError("probability map is inconsistent with the solved edges");
  }
  std::reverse(reversed.begin(), reversed.end());
  return reversed;
}

CompositionalPolicy::CompositionalPolicy(const AbstractGraph& graph, std::vector<std::size_t> path,
                                         std::vector<nn::Mlp> edge_policies)
    : path_(std::move(path)), edge_policies_(std::move(edge_policies)) {
  if (path_.size() < 2) throw DomainError("compositional policy needs at least one edge");
  if (edge_policies_.size() != path_.size() - 1)
    throw DomainError("compositional policy needs one policy per path edge");
  for (std::size_t i = 0; i + 1 < path_.size(); ++i) {
    bool found = false;
    for (const auto& e : graph.edges) {
      if (e.tail == path_[i] && e.head == path_[i + 1]) {
        edge_regions_.push_back(e.region);
        target_regions_.push_back(graph.vertex_regions[path_[i + 1]]);
        found = true;
        break;
      }
    }
    if (!found) throw DomainError("path hop is not a graph edge");
  }
}

std::vector<double> CompositionalPolicy::act(std::span<const double> state) {
  if (!failed_ && !finished_) {
    // leaving the active edge's region freezes the controller for good
    if (!edge_regions_[mode_].contains(state)) {
      failed_ = true;
    } else {
      while (target_regions_[mode_].contains(state)) {
        if (mode_ + 1 == edge_regions_.size()) {
          finished_ = true;
          break;
        }
        ++mode_;
      }
    }
  }
  return edge_policies_[mode_].forward(state);
}

void CompositionalPolicy::reset() {
  mode_ = 0;
  failed_ = false;
  finished_ = false;
}

sys::Policy CompositionalPolicy::as_policy() {
  return [this](std::span<const double> x) { return act(x); };
}

// -- Persistence ------------------------------------------------------------------

std::filesystem::path edge_store_path(const std::filesystem::path& store_dir,
                                      const std::string& graph_hash, std::size_t edge_index) {
  return store_dir / graph_hash.substr(0, 16) / ("edge_" + std::to_string(edge_index));
}

EdgeSolver persistent_solver(const std::filesystem::path& store_dir,
                             const std::string& graph_hash, const EdgeSolver& inner) {
  return [store_dir, graph_hash, inner](std::size_t ei) -> std::optional<EdgeSolution> {
    namespace fs = std::filesystem;
    fs::path dir = edge_store_path(store_dir, graph_hash, ei);
    fs::path cert_path = dir / "certificate.txt";
    fs::path policy_path = dir / "policy.mlp";
    fs::path value_path = dir / "value.mlp";
    if (fs::exists(cert_path)) {
      rasm::Certificate cert = rasm::parse_certificate(read_file(cert_path));
      auto violations =
          rasm::certificate_violations(cert, cert.system_hash, policy_path, value_path);
      if (violations.empty()) {
        EdgeSolution sol;
        sol.edge = ei;
        sol.certificate = cert;
        sol.probability = cert.bound;
        sol.policy = nn::load_net(policy_path);
        if (!cert.trivial) sol.value = nn::load_net(value_path);
        sol.policy_file = policy_path;
        sol.value_file = value_path;
        sol.certificate_file = cert_path;
        return sol;
      }
      // stale or tampered artifacts: fall through and resolve
    }
    std::optional<EdgeSolution> sol = inner(ei);
    if (!sol) return sol;
    fs::create_directories(dir);
    nn::save_net(sol->policy, policy_path);
    sol->policy_file = policy_path;
    sol->certificate.policy_hash = sha256_file_hex(policy_path);
    if (!sol->certificate.trivial) {
      nn::save_net(sol->value, value_path);
      sol->value_file = value_path;
      sol->certificate.certificate_hash = sha256_file_hex(value_path);
    }
    atomic_write_file(cert_path, rasm::serialize(sol->certificate));
    sol->certificate_file = cert_path;
    return sol;
  };
}

// -- End-to-end runs ----------------------------------------------------------------

namespace {

EdgeSolver make_training_solver(const sys::StochasticSystem& system, const AbstractGraph& graph,
                                const RunOptions& options) {
  return [&system, &graph, options](std::size_t ei) -> std::optional<EdgeSolution> {
    sys::ReachAvoidTask task = edge_task(graph, ei);

    if (options.stub_probabilities) {
      auto it = options.stub_probabilities->find(ei);
      if (it == options.stub_probabilities->end()) return std::nullopt;
      EdgeSolution sol;
      sol.edge = ei;
      sol.certificate = rasm::Certificate::trivial_certificate("stub");
      sol.certificate.bound = it->second;
      sol.probability = it->second;
      return sol;
    }

    // Initial-in-target edges hold with probability one; skip the search.
    if (task.target.covers(task.init)) {
      learnverify::SolveResult trivial =
          learnverify::policy_plus_rasm(system, task, 0.5, options.train);
      if (!trivial.success) return std::nullopt;
      EdgeSolution sol;
      sol.edge = ei;
      sol.policy = std::move(trivial.policy);
      sol.value = std::move(trivial.value);
      sol.certificate = trivial.certificate;
      sol.probability = trivial.certificate.bound;
      return sol;
    }

    learnverify::TrainConfig cfg = options.train;
    cfg.seed = mix_seed(options.train.seed, 0xed6e + ei);
    learnverify::MaxProbResult best = learnverify::max_verified_probability(
        system, task, cfg.search_precision, cfg);
    if (!best.any_success) return std::nullopt;
    EdgeSolution sol;
    sol.edge = ei;
    sol.policy = std::move(best.policy);
    sol.value = std::move(best.value);
    sol.certificate = best.certificate;
    sol.probability = best.certificate.bound;
    return sol;
  };
}

}  // namespace

RunResult run_on_graph(const sys::StochasticSystem& system, const AbstractGraph& graph,
                       const RunOptions& options) {
  if (!(options.threshold > 0 && options.threshold < 1))
    throw DomainError("global probability threshold must lie in (0, 1)");

  EdgeSolver solver = make_training_solver(system, graph, options);
  if (!options.store_dir.empty() && !options.stub_probabilities)
    solver = persistent_solver(options.store_dir, absgraph::graph_hash(graph), solver);

  RunResult result;
  result.graph = graph;
  result.pass = forward_pass(graph, options.threshold, solver);
  result.global_bound = result.pass.prob[graph.target];
  result.success = result.global_bound >= options.threshold;
  if (!result.success) return result;

  result.path = extract_path(graph, result.pass);
  std::vector<nn::Mlp> policies;
  for (std::size_t i = 0; i + 1 < result.path.size(); ++i) {
    for (std::size_t ei : graph.out_edges(result.path[i])) {
      if (graph.edges[ei].head == result.path[i + 1] && result.pass.solutions.count(ei)) {
        policies.push_back(result.pass.solutions.at(ei).policy);
        break;
      }
    }
  }
  result.policy.emplace(result.graph, result.path, std::move(policies));
  return result;
}

RunResult run_claps(const sys::StochasticSystem& system, const spectrl::Formula& formula,
                    const spectrl::RegionTable& table, const Region& initial,
                    const RunOptions& options) {
  absgraph::AbstractGraph compiled =
      absgraph::compile_to_graph(formula, table, initial, system.state_space());
  return run_on_graph(system, compiled, options);
}

}  // namespace claps::compose
