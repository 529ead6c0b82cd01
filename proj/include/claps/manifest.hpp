#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "claps/absgraph.hpp"
#include "claps/compose.hpp"

namespace claps::manifest {

struct EdgeRecord {
  std::size_t edge = 0;
  std::string tail_name;
  std::string head_name;
  double probability = 0;
  std::string certificate_file;  // relative to the manifest directory
  std::string policy_file;
  std::string value_file;
};

/// Versioned run record: graph, probability map, chosen path, edge artifact
/// references. Structured text, written atomically.
struct Manifest {
  std::string config_hash;
  std::string config_path;
  std::string graph_hash;
  double threshold = 0;
  std::uint64_t seed = 0;
  bool success = false;
  double global_bound = 0;
  absgraph::AbstractGraph graph;
  std::vector<double> prob;
  std::vector<std::size_t> path;
  std::vector<EdgeRecord> edges;
};

Manifest from_run(const compose::RunResult& run, const std::string& config_hash,
                  const std::string& config_path, double threshold, std::uint64_t seed,
                  const std::filesystem::path& manifest_dir);

std::string serialize(const Manifest& m);
Manifest parse(const std::string& text);

void write(const Manifest& m, const std::filesystem::path& path);
Manifest load(const std::filesystem::path& path);

/// Table 2-style summary: one "start,goal,probability" row per solved edge.
std::string csv_summary(const Manifest& m);

/// Rebuild the switching controller from a successful run's manifest
/// (loads the per-edge policy weight files). Throws when artifacts are
/// missing, e.g. for stubbed runs.
compose::CompositionalPolicy load_policy(const Manifest& m,
                                         const std::filesystem::path& manifest_dir);

}  // namespace claps::manifest
