#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "claps/absgraph.hpp"
#include "claps/learnverify.hpp"
#include "claps/rasm.hpp"
#include "claps/system.hpp"

namespace claps::compose {

/// Solved edge: policy weights plus the certificate carrying the verified
/// probability.
struct EdgeSolution {
  std::size_t edge = 0;
  nn::Mlp policy;
  nn::Mlp value;
  rasm::Certificate certificate;
  double probability = 0;  // always equals certificate.bound

  std::filesystem::path policy_file;  // set when persisted
  std::filesystem::path value_file;
  std::filesystem::path certificate_file;
};

using EdgeSolver = std::function<std::optional<EdgeSolution>(std::size_t edge_index)>;

/// The reach-avoid task induced by an edge: start in the tail region, reach
/// the head region, avoid the complement of the edge region.
sys::ReachAvoidTask edge_task(const absgraph::AbstractGraph& graph, std::size_t edge_index);

struct ForwardPassResult {
  std::vector<double> prob;                       // per-vertex certified bound
  std::map<std::size_t, EdgeSolution> solutions;  // by edge index
  std::vector<std::size_t> solver_calls;          // edge indices, call order
  std::vector<std::size_t> skipped_edges;         // pruned by the threshold filter
};

/// Topological forward pass with on-demand edge solving: an edge is solved
/// only when its tail already carries probability at least `threshold`;
/// vertex bounds take the max product over solved incoming edges. The solver
/// is invoked at most once per edge; unsatisfiable edges are skipped.
ForwardPassResult forward_pass(const absgraph::AbstractGraph& graph, double threshold,
                               const EdgeSolver& solver);

/// Max-product witness path from source to target (deterministic tie-break by
/// the earlier predecessor index). Throws DomainError when prob[target] == 0.
std::vector<std::size_t> extract_path(const absgraph::AbstractGraph& graph,
                                      const ForwardPassResult& result);

/// Switching controller over a certified path: follow the current edge policy
/// until the next vertex region is entered; leaving the edge region freezes
/// the controller on the current edge policy permanently. Self-contained
/// (owns the regions and policies it switches over).
class CompositionalPolicy {
 public:
  CompositionalPolicy(const absgraph::AbstractGraph& graph, std::vector<std::size_t> path,
                      std::vector<nn::Mlp> edge_policies);

  std::vector<double> act(std::span<const double> state);

  std::size_t mode() const { return mode_; }  // index into the path edges
  bool failed() const { return failed_; }
  bool finished() const { return finished_; }
  void reset();

  const std::vector<std::size_t>& path() const { return path_; }

  sys::Policy as_policy();  // stateful callable view

 private:
  std::vector<std::size_t> path_;
  std::vector<Region> edge_regions_;    // safety region per hop
  std::vector<Region> target_regions_;  // next-vertex region per hop
  std::vector<nn::Mlp> edge_policies_;
  std::size_t mode_ = 0;
  bool failed_ = false;
  bool finished_ = false;
};

struct RunOptions {
  double threshold = 0.5;  // global probability p
  learnverify::TrainConfig train;
  /// Directory for the persisted edge-solution store; empty keeps solutions
  /// in memory only.
  std::filesystem::path store_dir;
  /// Stubbed edge probabilities (edge index -> certified probability); when
  /// set, no training happens and edges resolve to stub solutions.
  std::optional<std::map<std::size_t, double>> stub_probabilities;
};

struct RunResult {
  bool success = false;
  double global_bound = 0;
  ForwardPassResult pass;
  std::vector<std::size_t> path;  // nonempty on success
  std::optional<CompositionalPolicy> policy;
  absgraph::AbstractGraph graph;
};

/// Algorithm: compile/accept a graph, forward pass with the Policy+RASM
/// binary-search edge solver, compose on success (prob[target] >= threshold).
RunResult run_on_graph(const sys::StochasticSystem& system, const absgraph::AbstractGraph& graph,
                       const RunOptions& options);

RunResult run_claps(const sys::StochasticSystem& system, const spectrl::Formula& formula,
                    const spectrl::RegionTable& table, const Region& initial,
                    const RunOptions& options);

/// Persisted-store lookup key: (graph hash, edge index).
std::filesystem::path edge_store_path(const std::filesystem::path& store_dir,
                                      const std::string& graph_hash, std::size_t edge_index);

/// Wraps a solver with the on-disk store: certified solutions are written
/// once and reloaded (hash-checked) on later runs.
EdgeSolver persistent_solver(const std::filesystem::path& store_dir,
                             const std::string& graph_hash, const EdgeSolver& inner);

}  // namespace claps::compose
