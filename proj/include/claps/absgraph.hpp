#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "claps/geometry.hpp"
#include "claps/spectrl.hpp"

namespace claps::absgraph {

struct Edge {
  std::size_t tail = 0;
  std::size_t head = 0;
  Region region;
  /// Set when the edge (or its head vertex) region became empty during
  /// compilation; the forward pass skips such edges.
  bool unsatisfiable = false;
};

/// DAG of subgoal regions on vertices and safety regions on edges.
/// Immutable after construction; safe for concurrent reads.
struct AbstractGraph {
  std::vector<Region> vertex_regions;
  std::vector<std::string> vertex_names;  // stable labels for DOT / manifests
  std::vector<Edge> edges;
  std::size_t source = 0;
  std::size_t target = 0;
  Box state_space;
  /// True iff any edge was flagged unsatisfiable during compilation.
  bool has_unsatisfiable_edges = false;

  std::size_t vertex_count() const { return vertex_regions.size(); }
  std::vector<std::size_t> out_edges(std::size_t v) const;
  std::vector<std::size_t> in_edges(std::size_t v) const;

  void validate() const;  // throws DomainError on structural violations
};

/// Compile a formula into an abstract graph.
///
/// Leaf `achieve b`: two vertices with one edge over the whole state space.
/// `ensuring b`: every edge region intersected with the b-region.
/// Sequence: the first graph's target is identified with the second graph's
/// source; the merged vertex keeps the first graph's target region.
/// Disjunction: a fresh source duplicates each branch source's outgoing
/// edges, branch sources are removed, and a fresh target joins both branch
/// targets through unconstrained edges (its region is the union of the
/// branch target regions).
AbstractGraph compile_to_graph(const spectrl::Formula& formula, const spectrl::RegionTable& table,
                               const Region& initial, const Box& state_space);

/// Deterministic topological order (Kahn; ties broken by vertex index).
/// Throws DomainError on a cycle.
std::vector<std::size_t> topo_sort(const AbstractGraph& g);

/// Whether the prefix traverses the graph from source to target: some path
/// and nondecreasing hand-off times exist such that each vertex region is hit
/// while its incoming edge region is active, and every step between
/// consecutive hand-offs lies in the active edge region. Evaluated by dynamic
/// programming over (vertex, time); O(|E| * prefix length).
bool check_abstract_reachability(const AbstractGraph& g,
                                 const std::vector<std::vector<double>>& prefix);

/// Graphviz rendering; deterministic byte-for-byte for a fixed graph.
std::string export_dot(const AbstractGraph& g);

/// Structured-text serialization (used in manifests and for graph hashing).
std::string serialize(const AbstractGraph& g);

/// SHA-256 of serialize(g); keys the on-disk edge-solution store.
std::string graph_hash(const AbstractGraph& g);

}  // namespace claps::absgraph
