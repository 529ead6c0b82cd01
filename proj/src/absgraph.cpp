#include "claps/absgraph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "claps/util.hpp"

namespace claps::absgraph {

std::vector<std::size_t> AbstractGraph::out_edges(std::size_t v) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges[i].tail == v) out.push_back(i);
  return out;
}

std::vector<std::size_t> AbstractGraph::in_edges(std::size_t v) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges[i].head == v) out.push_back(i);
  return out;
}

void AbstractGraph::validate() const {
  const std::size_t n = vertex_count();
  if (n == 0) throw DomainError("abstract graph has no vertices");
  if (source >= n || target >= n) throw DomainError("abstract graph source/target out of range");
  if (vertex_names.size() != n) throw DomainError("abstract graph vertex name/region mismatch");
  for (const auto& e : edges)
    if (e.tail >= n || e.head >= n) throw DomainError("abstract graph edge endpoint out of range");
  for (const auto& e : edges)
    if (e.head == source) throw DomainError("abstract graph source must have no incoming edge");
  topo_sort(*this);  // throws on a cycle
}

// -- Compilation --------------------------------------------------------------

namespace {

using spectrl::Formula;

AbstractGraph compile_rec(const Formula& f, const spectrl::RegionTable& table,
                          const Region& initial, const Box& space) {
  switch (f.kind) {
    case Formula::Kind::Achieve: {
      AbstractGraph g;
      g.state_space = space;
      g.vertex_regions = {initial, f.pred.to_region(table, space)};
      g.vertex_names = {"s", "{" + f.pred.print() + "}"};
      g.source = 0;
      g.target = 1;
      Edge e;
      e.tail = 0;
      e.head = 1;
      e.region = Region(space);
      g.edges.push_back(std::move(e));
      return g;
    }
    case Formula::Kind::Ensuring: {
      AbstractGraph g = compile_rec(f.children[0], table, initial, space);
      Region constraint = f.pred.to_region(table, space);
      for (auto& e : g.edges) e.region = e.region.intersected(constraint);
      return g;
    }
    case Formula::Kind::Seq: {
      AbstractGraph a = compile_rec(f.children[0], table, initial, space);
      AbstractGraph b = compile_rec(f.children[1], table, initial, space);
      // a's target and b's source become a single vertex carrying a's target
      // region.
      AbstractGraph g;
      g.state_space = space;
      g.vertex_regions = a.vertex_regions;
      g.vertex_names = a.vertex_names;
      const std::size_t merged = a.target;
      // b's vertices, skipping b.source, get appended.
      std::vector<std::size_t> remap(b.vertex_count());
      for (std::size_t v = 0; v < b.vertex_count(); ++v) {
        if (v == b.source) {
          remap[v] = merged;
        } else {
          remap[v] = g.vertex_regions.size();
          g.vertex_regions.push_back(b.vertex_regions[v]);
          g.vertex_names.push_back(b.vertex_names[v]);
        }
      }
      g.edges = a.edges;
      for (const auto& e : b.edges) {
        Edge ne = e;
        ne.tail = remap[e.tail];
        ne.head = remap[e.head];
        g.edges.push_back(std::move(ne));
      }
      g.source = a.source;
      g.target = remap[b.target];
      return g;
    }
    case Formula::Kind::Or: {
      AbstractGraph a = compile_rec(f.children[0], table, initial, space);
      AbstractGraph b = compile_rec(f.children[1], table, initial, space);
      AbstractGraph g;
      g.state_space = space;
      // Fresh source takes over both branch sources' outgoing edges; the
      // branch sources (never re-entered: sources acquire no incoming edges)
      // are dropped. A fresh target joins the branch targets through
      // unconstrained edges so the graph keeps a single (s, t) pair.
      g.vertex_regions.push_back(initial);
      g.vertex_names.push_back("s");
      auto append = [&g](const AbstractGraph& child) {
        std::vector<std::size_t> remap(child.vertex_count(), SIZE_MAX);
        for (std::size_t v = 0; v < child.vertex_count(); ++v) {
          if (v == child.source) continue;
          remap[v] = g.vertex_regions.size();
          g.vertex_regions.push_back(child.vertex_regions[v]);
          g.vertex_names.push_back(child.vertex_names[v]);
        }
        for (const auto& e : child.edges) {
          Edge ne = e;
          ne.tail = e.tail == child.source ? 0 : remap[e.tail];
          ne.head = remap[e.head];
          g.edges.push_back(std::move(ne));
        }
        return remap[child.target];
      };
      const std::size_t ta = append(a);
      const std::size_t tb = append(b);
      const std::size_t t = g.vertex_regions.size();
      Region joined = g.vertex_regions[ta].unioned(g.vertex_regions[tb]);
      g.vertex_regions.push_back(std::move(joined));
      g.vertex_names.push_back("t");
      for (std::size_t branch_target : {ta, tb}) {
        Edge e;
        e.tail = branch_target;
        e.head = t;
        e.region = Region(space);
        g.edges.push_back(std::move(e));
      }
      g.source = 0;
      g.target = t;
      return g;
    }
  }
  throw DomainError("unreachable formula kind");
}

}  // namespace

AbstractGraph compile_to_graph(const Formula& formula, const spectrl::RegionTable& table,
                               const Region& initial, const Box& space) {
  if (initial.is_empty()) throw DomainError("initial region must be nonempty");
  if (initial.dims() != space.dims()) throw DomainError("initial region dimension mismatch");
  AbstractGraph g = compile_rec(formula, table, initial, space);
  for (auto& e : g.edges) {
    if (e.region.is_empty() || g.vertex_regions[e.head].is_empty()) {
      e.unsatisfiable = true;
      g.has_unsatisfiable_edges = true;
    }
  }
  g.validate();
  return g;
}

std::vector<std::size_t> topo_sort(const AbstractGraph& g) {
  const std::size_t n = g.vertex_count();
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& e : g.edges) ++indeg[e.head];

  // Kahn's algorithm over a sorted frontier: deterministic, insertion order
  // breaks ties.
  std::vector<std::size_t> frontier;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) frontier.push_back(v);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!frontier.empty()) {
    std::size_t v = frontier.front();
    frontier.erase(frontier.begin());
    order.push_back(v);
    std::vector<std::size_t> released;
    for (const auto& e : g.edges)
      if (e.tail == v && --indeg[e.head] == 0) released.push_back(e.head);
    std::sort(released.begin(), released.end());
    // keep the frontier sorted so the order is stable
    for (std::size_t r : released)
      frontier.insert(std::lower_bound(frontier.begin(), frontier.end(), r), r);
  }
  if (order.size() != n) throw DomainError("abstract graph contains a cycle");
  return order;
}

bool check_abstract_reachability(const AbstractGraph& g,
                                 const std::vector<std::vector<double>>& prefix) {
  if (prefix.empty()) throw DomainError("prefix must contain at least one state");
  const std::size_t dims = g.state_space.dims();
  for (const auto& x : prefix)
    if (x.size() != dims) throw DomainError("prefix state dimension mismatch");

  const std::size_t len = prefix.size();
  const std::size_t n = g.vertex_count();

  if (!g.vertex_regions[g.source].contains(prefix[0])) return false;
  if (g.source == g.target) return true;

  // in_edge_region[e][t]: prefix state t lies in edge e's region.
  // run_start[e][t]: earliest h with [h..t] fully inside edge e's region.
  // last_hit[v][t]: latest a <= t with prefix state a in vertex v's region
  //                 (or npos).
  constexpr std::size_t npos = SIZE_MAX;
  std::vector<std::vector<std::size_t>> run_start(g.edges.size(),
                                                  std::vector<std::size_t>(len, npos));
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    const Edge& e = g.edges[ei];
    if (e.unsatisfiable) continue;
    for (std::size_t t = 0; t < len; ++t) {
      if (!e.region.contains(prefix[t])) continue;
      run_start[ei][t] = (t > 0 && run_start[ei][t - 1] != npos) ? run_start[ei][t - 1] : t;
    }
  }
  std::vector<std::vector<std::size_t>> last_hit(n, std::vector<std::size_t>(len, npos));
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t t = 0; t < len; ++t) {
      bool hit = g.vertex_regions[v].contains(prefix[t]);
      last_hit[v][t] = hit ? t : (t > 0 ? last_hit[v][t - 1] : npos);
    }
  }

  // arrived[v][t]: a partial traversal reaches v with all constraints covered
  // through time t, the final cover tile being v's incoming edge region
  // (which also licenses lingering at v). cum[v][t]: prefix counts of arrived
  // for O(1) "any arrival in [a..b]" queries.
  auto order = topo_sort(g);
  std::vector<std::vector<unsigned>> cum(n);
  cum[g.source].assign(len, 0);  // handled specially: hand-off only at time 0

  for (std::size_t v : order) {
    if (v == g.source) continue;
    std::vector<unsigned> arrived(len, 0);
    for (std::size_t ei : g.in_edges(v)) {
      const Edge& e = g.edges[ei];
      if (e.unsatisfiable) continue;
      const auto& rs = run_start[ei];
      for (std::size_t t = 0; t < len; ++t) {
        if (arrived[t] || rs[t] == npos) continue;
        // hand-offs h in [rs[t] .. min(t, last_hit[v][t])] work: the edge
        // region covers [h..t] and the vertex is hit at some a in [h..t].
        std::size_t lh = last_hit[v][t];
        if (lh == npos || lh < rs[t]) continue;
        std::size_t hi = std::min(t, lh);
        std::size_t lo = rs[t];
        if (e.tail == g.source) {
          if (lo == 0 /* hand-off from the source happens at time 0 */) arrived[t] = 1;
          if (arrived[t]) continue;
        }
        const auto& c = cum[e.tail];
        if (!c.empty()) {
          unsigned below = lo == 0 ? 0 : c[lo - 1];
          if (c[hi] > below) arrived[t] = 1;
        }
      }
    }
    if (v == g.target) {
      for (std::size_t t = 0; t < len; ++t)
        if (arrived[t]) return true;
    }
    std::vector<unsigned> c(len, 0);
    unsigned acc = 0;
    for (std::size_t t = 0; t < len; ++t) {
      acc += arrived[t];
      c[t] = acc;
    }
    cum[v] = std::move(c);
  }
  return false;
}

std::string export_dot(const AbstractGraph& g) {
  std::ostringstream ss;
  ss << "digraph abstract {\n";
  ss << "  rankdir=LR;\n";
  for (std::size_t v = 0; v < g.vertex_count(); ++v) {
    ss << "  v" << v << " [label=\"" << g.vertex_names[v] << "\\n"
       << g.vertex_regions[v].describe() << "\"";
    if (v == g.source) ss << ", shape=box";
    if (v == g.target) ss << ", peripheries=2";
    ss << "];\n";
  }
  for (const auto& e : g.edges) {
    ss << "  v" << e.tail << " -> v" << e.head;
    if (e.unsatisfiable) ss << " [style=dashed, color=red, label=\"unsat\"]";
    ss << ";\n";
  }
  ss << "}\n";
  return ss.str();
}

std::string serialize(const AbstractGraph& g) {
  std::ostringstream ss;
  ss << "graph v1\n";
  ss << "space " << g.state_space.describe() << "\n";
  ss << "source " << g.source << "\n";
  ss << "target " << g.target << "\n";
  for (std::size_t v = 0; v < g.vertex_count(); ++v)
    ss << "vertex " << v << " " << g.vertex_names[v] << " " << g.vertex_regions[v].describe()
       << "\n";
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    ss << "edge " << i << " " << e.tail << " " << e.head << (e.unsatisfiable ? " unsat " : " ok ")
       << e.region.describe() << "\n";
  }
  return ss.str();
}

std::string graph_hash(const AbstractGraph& g) { return sha256_hex(serialize(g)); }

}  // namespace claps::absgraph
