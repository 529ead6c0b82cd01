#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "claps/absgraph.hpp"
#include "claps/compose.hpp"
#include "claps/learnverify.hpp"
#include "claps/spectrl.hpp"
#include "claps/system.hpp"

namespace claps::config {

/// Parsed flat key-value config with [section] headers. Repeated keys are
/// kept in order. '#' starts a comment.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& source_name);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  std::string require(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& section, const std::string& key,
                       std::size_t fallback) const;
  std::vector<std::string> get_all(const std::string& section, const std::string& key) const;
  std::vector<std::string> sections() const;
  /// (key, last value) pairs of one section, sorted by key.
  std::vector<std::pair<std::string, std::string>> section_items(const std::string& section) const;

 private:
  // (section, key) -> values in file order
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> entries_;
  std::string source_;
};

/// Everything a run needs, loaded from one config file.
struct Toolkit {
  std::shared_ptr<sys::StochasticSystem> system;
  std::optional<sys::NineRoomsEnv> nine;  // populated when kind = nine_rooms
  spectrl::RegionTable regions;
  Region initial;  // X_0 (region named by [run] initial, default "init")

  std::string spec_text;                         // [spec] text when present
  std::optional<absgraph::AbstractGraph> graph;  // [graph] when present

  learnverify::TrainConfig train;
  double run_threshold = 0.5;
  std::size_t run_horizon = 400;
  std::filesystem::path out_dir;

  std::string config_hash;  // sha256 of the config file bytes
  std::filesystem::path config_path;

  /// The graph to run: explicit [graph] if present, else compiled [spec].
  absgraph::AbstractGraph resolve_graph() const;
};

Toolkit load_toolkit(const std::filesystem::path& path);
Toolkit toolkit_from_string(const std::string& text, const std::string& source_name);

/// Region syntax used by [regions] values and the serialized graph format:
/// "[a,b]x[c,d] u [e,f]x[g,h]" or "{}" for the empty region.
Region parse_region(const std::string& text, std::size_t dims);
Box parse_box(const std::string& text);

/// Parse the absgraph::serialize() text format back into a graph.
absgraph::AbstractGraph parse_graph(const std::string& text);

}  // namespace claps::config
