#include "claps/manifest.hpp"

#include <sstream>

#include "claps/config.hpp"
#include "claps/util.hpp"

namespace claps::manifest {

namespace {

std::string relative_to(const std::filesystem::path& file, const std::filesystem::path& dir) {
  if (file.empty()) return "";
  std::error_code ec;
  auto rel = std::filesystem::relative(file, dir, ec);
  return ec ? file.string() : rel.string();
}

}  // namespace

Manifest from_run(const compose::RunResult& run, const std::string& config_hash,
                  const std::string& config_path, double threshold, std::uint64_t seed,
                  const std::filesystem::path& manifest_dir) {
  Manifest m;
  m.config_hash = config_hash;
  m.config_path = config_path;
  m.graph = run.graph;
  m.graph_hash = absgraph::graph_hash(run.graph);
  m.threshold = threshold;
  m.seed = seed;
  m.success = run.success;
  m.global_bound = run.global_bound;
  m.prob = run.pass.prob;
  m.path = run.path;
  for (const auto& [ei, sol] : run.pass.solutions) {
    EdgeRecord rec;
    rec.edge = ei;
    rec.tail_name = run.graph.vertex_names[run.graph.edges[ei].tail];
    rec.head_name = run.graph.vertex_names[run.graph.edges[ei].head];
    rec.probability = sol.probability;
    rec.certificate_file = relative_to(sol.certificate_file, manifest_dir);
    rec.policy_file = relative_to(sol.policy_file, manifest_dir);
    rec.value_file = relative_to(sol.value_file, manifest_dir);
    m.edges.push_back(std::move(rec));
  }
  return m;
}

std::string serialize(const Manifest& m) {
  std::ostringstream ss;
  ss << "claps-manifest v1\n";
  ss << "config_hash = " << m.config_hash << "\n";
  ss << "config_path = " << m.config_path << "\n";
  ss << "graph_hash = " << m.graph_hash << "\n";
  ss << "threshold = " << format_double(m.threshold) << "\n";
  ss << "seed = " << m.seed << "\n";
  ss << "status = " << (m.success ? "success" : "failure") << "\n";
  ss << "global_bound = " << format_double(m.global_bound) << "\n";
  ss << "path =";
  for (std::size_t v : m.path) ss << " " << v;
  ss << "\n";
  ss << "[prob]\n";
  for (std::size_t v = 0; v < m.prob.size(); ++v)
    ss << v << " = " << format_double(m.prob[v]) << "\n";
  ss << "[edges]\n";
  for (const auto& e : m.edges)
    ss << e.edge << " | " << e.tail_name << " | " << e.head_name << " | "
       << format_double(e.probability) << " | " << e.certificate_file << " | " << e.policy_file
       << " | " << e.value_file << "\n";
  ss << "[graph]\n";
  ss << absgraph::serialize(m.graph);
  return ss.str();
}

Manifest parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "claps-manifest v1")
    throw FormatError("unrecognized manifest header");
  Manifest m;
  enum class Mode { Top, Prob, Edges, Graph } mode = Mode::Top;
  std::ostringstream graph_text;
  auto value_of = [](const std::string& l) {
    auto eq = l.find(" = ");
    if (eq == std::string::npos) throw FormatError("malformed manifest line: " + l);
    return l.substr(eq + 3);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "[prob]") {
      mode = Mode::Prob;
      continue;
    }
    if (line == "[edges]") {
      mode = Mode::Edges;
      continue;
    }
    if (line == "[graph]") {
      mode = Mode::Graph;
      continue;
    }
    switch (mode) {
      case Mode::Top: {
        if (line.rfind("config_hash", 0) == 0) m.config_hash = value_of(line);
        else if (line.rfind("config_path", 0) == 0) m.config_path = value_of(line);
        else if (line.rfind("graph_hash", 0) == 0) m.graph_hash = value_of(line);
        else if (line.rfind("threshold", 0) == 0) m.threshold = std::stod(value_of(line));
        else if (line.rfind("seed", 0) == 0) m.seed = std::stoull(value_of(line));
        else if (line.rfind("status", 0) == 0) m.success = value_of(line) == "success";
        else if (line.rfind("global_bound", 0) == 0) m.global_bound = std::stod(value_of(line));
        else if (line.rfind("path =", 0) == 0) {
          for (const auto& tok : split_ws(line.substr(6))) m.path.push_back(std::stoul(tok));
        } else throw FormatError("unrecognized manifest line: " + line);
        break;
      }
      case Mode::Prob: {
        auto eq = line.find(" = ");
        if (eq == std::string::npos) throw FormatError("malformed prob line: " + line);
        std::size_t v = std::stoul(line.substr(0, eq));
        if (m.prob.size() <= v) m.prob.resize(v + 1, 0.0);
        m.prob[v] = std::stod(line.substr(eq + 3));
        break;
      }
      case Mode::Edges: {
        std::vector<std::string> parts;
        std::size_t pos = 0;
        while (true) {
          auto bar = line.find(" | ", pos);
          if (bar == std::string::npos) {
            parts.push_back(line.substr(pos));
            break;
          }
          parts.push_back(line.substr(pos, bar - pos));
          pos = bar + 3;
        }
        if (parts.size() != 7) throw FormatError("malformed edge line: " + line);
        EdgeRecord rec;
        rec.edge = std::stoul(parts[0]);
        rec.tail_name = parts[1];
        rec.head_name = parts[2];
        rec.probability = std::stod(parts[3]);
        rec.certificate_file = parts[4];
        rec.policy_file = parts[5];
        rec.value_file = parts[6];
        m.edges.push_back(std::move(rec));
        break;
      }
      case Mode::Graph: graph_text << line << "\n"; break;
    }
  }
  m.graph = config::parse_graph(graph_text.str());
  return m;
}

void write(const Manifest& m, const std::filesystem::path& path) {
  atomic_write_file(path, serialize(m));
}

Manifest load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string csv_summary(const Manifest& m) {
  std::ostringstream ss;
  ss << "start,goal,probability\n";
  for (const auto& e : m.edges)
    ss << e.tail_name << "," << e.head_name << "," << format_double(e.probability) << "\n";
  return ss.str();
}

compose::CompositionalPolicy load_policy(const Manifest& m,
                                         const std::filesystem::path& manifest_dir) {
  if (!m.success || m.path.size() < 2)
    throw DomainError("manifest does not describe a successful run with a path");
  std::vector<nn::Mlp> policies;
  for (std::size_t i = 0; i + 1 < m.path.size(); ++i) {
    const EdgeRecord* found = nullptr;
    for (const auto& rec : m.edges) {
      const auto& e = m.graph.edges.at(rec.edge);
      if (e.tail == m.path[i] && e.head == m.path[i + 1]) {
        found = &rec;
        break;
      }
    }
    if (!found || found->policy_file.empty())
      throw DomainError("manifest lacks a policy artifact for a path edge (stubbed run?)");
    policies.push_back(nn::load_net(manifest_dir / found->policy_file));
  }
  return compose::CompositionalPolicy(m.graph, m.path, std::move(policies));
}

}  // namespace claps::manifest
