#include "claps/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "claps/util.hpp"

namespace claps::config {

// -- KeyValues ------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("expected a number for " + what + ", got '" + s + "'");
  }
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& source_name) {
  KeyValues kv;
  kv.source_ = source_name;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw FormatError(source_name + ":" + std::to_string(lineno) + ": malformed section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(source_name + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw FormatError(source_name + ":" + std::to_string(lineno) + ": empty key");
    kv.entries_[{section, key}].push_back(value);
  }
  return kv;
}

bool KeyValues::has(const std::string& s, const std::string& k) const {
  return entries_.count({s, k}) > 0;
}

std::string KeyValues::get(const std::string& s, const std::string& k,
                           const std::string& fallback) const {
  auto it = entries_.find({s, k});
  return it == entries_.end() ? fallback : it->second.back();
}

std::string KeyValues::require(const std::string& s, const std::string& k) const {
  auto it = entries_.find({s, k});
  if (it == entries_.end())
    throw FormatError(source_ + ": missing required key [" + s + "] " + k);
  return it->second.back();
}

double KeyValues::get_double(const std::string& s, const std::string& k, double fallback) const {
  auto it = entries_.find({s, k});
  return it == entries_.end() ? fallback : to_double(it->second.back(), "[" + s + "] " + k);
}

std::size_t KeyValues::get_size(const std::string& s, const std::string& k,
                                std::size_t fallback) const {
  double v = get_double(s, k, double(fallback));
  if (v < 0 || v != std::floor(v)) throw FormatError("[" + s + "] " + k + " must be a whole number");
  return std::size_t(v);
}

std::vector<std::string> KeyValues::get_all(const std::string& s, const std::string& k) const {
  auto it = entries_.find({s, k});
  return it == entries_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> KeyValues::sections() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : entries_)
    if (std::find(out.begin(), out.end(), key.first) == out.end()) out.push_back(key.first);
  return out;
}

std::vector<std::pair<std::string, std::string>> KeyValues::section_items(
    const std::string& section) const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, values] : entries_)
    if (key.first == section) out.emplace_back(key.second, values.back());
  return out;
}

// -- Region / box / graph text formats ----------------------------------------------

Box parse_box(const std::string& text) {
  // "[a,b]x[c,d]..."
  std::vector<double> lo, hi;
  std::size_t pos = 0;
  const std::string t = trim(text);
  while (pos < t.size()) {
    if (t[pos] != '[') throw FormatError("malformed box: " + t);
    auto comma = t.find(',', pos);
    auto close = t.find(']', pos);
    if (comma == std::string::npos || close == std::string::npos || comma > close)
      throw FormatError("malformed box: " + t);
    lo.push_back(to_double(trim(t.substr(pos + 1, comma - pos - 1)), "box bound"));
    hi.push_back(to_double(trim(t.substr(comma + 1, close - comma - 1)), "box bound"));
    pos = close + 1;
    if (pos < t.size()) {
      if (t[pos] != 'x') throw FormatError("malformed box: " + t);
      ++pos;
    }
  }
  if (lo.empty()) throw FormatError("malformed box: " + text);
  return Box(std::move(lo), std::move(hi));
}

Region parse_region(const std::string& text, std::size_t dims) {
  std::string t = trim(text);
  if (t == "{}" || t.empty()) return Region::empty(dims);
  std::vector<Box> boxes;
  std::size_t pos = 0;
  while (pos != std::string::npos) {
    auto sep = t.find(" u ", pos);
    std::string part = trim(sep == std::string::npos ? t.substr(pos) : t.substr(pos, sep - pos));
    boxes.push_back(parse_box(part));
    pos = sep == std::string::npos ? std::string::npos : sep + 3;
  }
  if (dims == 0 && !boxes.empty()) dims = boxes.front().dims();
  return Region(dims, std::move(boxes));
}

absgraph::AbstractGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "graph v1")
    throw FormatError("unrecognized graph header");
  absgraph::AbstractGraph g;
  std::size_t dims = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "space") {
      std::string rest;
      std::getline(ls, rest);
      g.state_space = parse_box(trim(rest));
      dims = g.state_space.dims();
    } else if (tag == "source") {
      ls >> g.source;
    } else if (tag == "target") {
      ls >> g.target;
    } else if (tag == "vertex") {
      std::size_t id;
      std::string name, rest;
      ls >> id >> name;
      std::getline(ls, rest);
      if (id != g.vertex_regions.size()) throw FormatError("graph vertices out of order");
      g.vertex_regions.push_back(parse_region(trim(rest), dims));
      g.vertex_names.push_back(name);
    } else if (tag == "edge") {
      std::size_t id, tail, head;
      std::string flag, rest;
      ls >> id >> tail >> head >> flag;
      std::getline(ls, rest);
      if (id != g.edges.size()) throw FormatError("graph edges out of order");
      absgraph::Edge e;
      e.tail = tail;
      e.head = head;
      e.unsatisfiable = flag == "unsat";
      e.region = parse_region(trim(rest), dims);
      g.edges.push_back(std::move(e));
      if (g.edges.back().unsatisfiable) g.has_unsatisfiable_edges = true;
    } else {
      throw FormatError("unrecognized graph line: " + line);
    }
  }
  g.validate();
  return g;
}

// -- Toolkit ---------------------------------------------------------------------

namespace {

Box box_from_lists(const KeyValues& kv, const std::string& section, const std::string& lo_key,
                   const std::string& hi_key) {
  auto parse_list = [&](const std::string& key) {
    std::vector<double> vals;
    for (const auto& tok : split_ws(kv.require(section, key)))
      vals.push_back(to_double(tok, "[" + section + "] " + key));
    return vals;
  };
  return Box(parse_list(lo_key), parse_list(hi_key));
}

std::pair<int, int> parse_room(const std::string& token) {
  auto open = token.find('(');
  auto comma = token.find(',');
  auto close = token.find(')');
  if (open == std::string::npos || comma == std::string::npos || close == std::string::npos)
    throw FormatError("malformed room coordinate: " + token);
  int x = std::stoi(token.substr(open + 1, comma - open - 1));
  int y = std::stoi(token.substr(comma + 1, close - comma - 1));
  if (x < 0 || x > 2 || y < 0 || y > 2) throw FormatError("room coordinate out of range: " + token);
  return {x, y};
}

void load_train(const KeyValues& kv, learnverify::TrainConfig& t) {
  t.learning_rate = kv.get_double("train", "lr", t.learning_rate);
  t.batch_size = kv.get_size("train", "batch", t.batch_size);
  t.noise_samples = kv.get_size("train", "noise_samples", t.noise_samples);
  t.lipschitz_threshold = kv.get_double("train", "rho", t.lipschitz_threshold);
  t.lipschitz_weight = kv.get_double("train", "reg_weight", t.lipschitz_weight);
  t.max_iterations = kv.get_size("train", "iters", t.max_iterations);
  t.steps_per_iteration = kv.get_size("train", "steps", t.steps_per_iteration);
  t.mesh = kv.get_double("train", "mesh", t.mesh);
  t.noise_partition = kv.get_size("train", "noise_partition", t.noise_partition);
  t.seed = std::uint64_t(kv.get_size("train", "seed", std::size_t(t.seed)));
  t.timeout_seconds = kv.get_double("train", "timeout_s", t.timeout_seconds);
  t.hidden_width = kv.get_size("train", "width", t.hidden_width);
  t.hidden_layers = kv.get_size("train", "depth", t.hidden_layers);
  t.pretrain_episodes = kv.get_size("train", "pretrain_episodes", t.pretrain_episodes);
  t.pretrain_horizon = kv.get_size("train", "pretrain_horizon", t.pretrain_horizon);
  t.pretrain_batch = kv.get_size("train", "pretrain_batch", t.pretrain_batch);
  t.pretrain_sigma = kv.get_double("train", "pretrain_sigma", t.pretrain_sigma);
  t.pretrain_floor = kv.get_double("train", "floor", t.pretrain_floor);
  t.lambda_decay = kv.get_double("train", "lambda_decay", t.lambda_decay);
  t.min_schedule_steps = kv.get_size("train", "schedule_steps", t.min_schedule_steps);
  t.search_precision = kv.get_double("train", "precision", t.search_precision);
  t.max_probes = kv.get_size("train", "probes", t.max_probes);
  t.max_counterexamples = kv.get_size("train", "max_counterexamples", t.max_counterexamples);
  t.max_grid_vertices = kv.get_size("train", "max_grid", t.max_grid_vertices);
  t.csv_log_path = kv.get("train", "log", t.csv_log_path);
}

absgraph::AbstractGraph nine_rooms_subgraph(const sys::NineRoomsEnv& env, const KeyValues& kv) {
  std::string edges_value = kv.get("graph", "edges", "");
  if (edges_value.empty()) {
    absgraph::AbstractGraph g = sys::nine_rooms_graph(env);
    return g;
  }
  // subset form: "(0,0)->(0,1), (0,1)->(1,1)"
  std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> wanted;
  std::string rest = edges_value;
  while (!rest.empty()) {
    auto arrow = rest.find("->");
    if (arrow == std::string::npos) throw FormatError("malformed [graph] edges: " + edges_value);
    std::string from = rest.substr(0, arrow);
    auto close = rest.find(')', arrow);
    if (close == std::string::npos) throw FormatError("malformed [graph] edges: " + edges_value);
    std::string to = rest.substr(arrow + 2, close - arrow - 1);
    wanted.emplace_back(parse_room(trim(from)), parse_room(trim(to)));
    rest = trim(rest.substr(close + 1));
    if (!rest.empty() && rest.front() == ',') rest = trim(rest.substr(1));
  }

  sys::NineRoomsEnv filtered = env;
  filtered.graph_edges.clear();
  for (const auto& want : wanted) {
    bool known = false;
    for (const auto& have : env.graph_edges)
      if (have == want) known = true;
    if (!known)
      throw FormatError("edge not in the rooms edge list: (" + std::to_string(want.first.first) +
                        "," + std::to_string(want.first.second) + ")->(" +
                        std::to_string(want.second.first) + "," +
                        std::to_string(want.second.second) + ")");
    filtered.graph_edges.push_back(want);
  }
  absgraph::AbstractGraph full = sys::nine_rooms_graph(filtered);

  // prune vertices untouched by the selected edges, keeping source/target
  auto room_vertex = [](const std::pair<int, int>& r) { return std::size_t(r.second * 3 + r.first); };
  std::size_t source = room_vertex(parse_room(kv.get("graph", "source", "(0,0)")));
  std::size_t target = room_vertex(
      kv.has("graph", "target") ? parse_room(kv.require("graph", "target"))
                                : wanted.back().second);
  std::vector<bool> keep(full.vertex_count(), false);
  keep[source] = keep[target] = true;
  for (const auto& e : full.edges) keep[e.tail] = keep[e.head] = true;
  std::vector<std::size_t> remap(full.vertex_count(), SIZE_MAX);
  absgraph::AbstractGraph g;
  g.state_space = full.state_space;
  for (std::size_t v = 0; v < full.vertex_count(); ++v) {
    if (!keep[v]) continue;
    remap[v] = g.vertex_regions.size();
    g.vertex_regions.push_back(full.vertex_regions[v]);
    g.vertex_names.push_back(full.vertex_names[v]);
  }
  for (const auto& e : full.edges) {
    absgraph::Edge ne = e;
    ne.tail = remap[e.tail];
    ne.head = remap[e.head];
    g.edges.push_back(std::move(ne));
  }
  g.source = remap[source];
  g.target = remap[target];
  g.validate();
  return g;
}

absgraph::AbstractGraph explicit_graph(const KeyValues& kv, const spectrl::RegionTable& regions,
                                       const Box& space) {
  absgraph::AbstractGraph g;
  g.state_space = space;
  std::map<std::string, std::size_t> ids;
  for (const std::string& line : kv.get_all("graph", "vertex")) {
    auto toks = split_ws(line);
    if (toks.size() != 2) throw FormatError("[graph] vertex wants: <name> <region>");
    if (ids.count(toks[0])) throw FormatError("duplicate graph vertex: " + toks[0]);
    ids[toks[0]] = g.vertex_regions.size();
    g.vertex_regions.push_back(regions.at(toks[1]));
    g.vertex_names.push_back(toks[0]);
  }
  for (const std::string& line : kv.get_all("graph", "edge")) {
    auto toks = split_ws(line);
    if (toks.size() != 3) throw FormatError("[graph] edge wants: <from> <to> <region>");
    if (!ids.count(toks[0]) || !ids.count(toks[1]))
      throw FormatError("[graph] edge references unknown vertex: " + line);
    absgraph::Edge e;
    e.tail = ids.at(toks[0]);
    e.head = ids.at(toks[1]);
    e.region = regions.at(toks[2]);
    g.edges.push_back(std::move(e));
  }
  auto lookup = [&ids](const std::string& name) {
    auto it = ids.find(name);
    if (it == ids.end()) throw FormatError("[graph] unknown vertex: " + name);
    return it->second;
  };
  g.source = lookup(kv.require("graph", "source"));
  g.target = lookup(kv.require("graph", "target"));
  g.validate();
  return g;
}

}  // namespace

Toolkit toolkit_from_string(const std::string& text, const std::string& source_name) {
  KeyValues kv = KeyValues::parse(text, source_name);
  Toolkit tk;
  tk.config_hash = sha256_hex(text);

  const std::string kind = kv.get("system", "kind", "nine_rooms");
  if (kind == "nine_rooms") {
    sys::NineRoomsEnv env = sys::nine_rooms(kv.get_double("system", "noise_c", 0.5));
    tk.regions = env.regions;
    tk.system = env.system;
    tk.nine = std::move(env);
  } else if (kind == "contraction") {
    Box space = box_from_lists(kv, "system", "state_lo", "state_hi");
    Box actions = kv.has("system", "action_lo")
                      ? box_from_lists(kv, "system", "action_lo", "action_hi")
                      : space;
    tk.system = std::make_shared<sys::ContractionSystem>(space, actions,
                                                         kv.get_double("system", "rate", 0.5));
  } else if (kind == "affine") {
    Box space = box_from_lists(kv, "system", "state_lo", "state_hi");
    Box actions = box_from_lists(kv, "system", "action_lo", "action_hi");
    std::vector<double> scales(space.dims(), kv.get_double("system", "noise_c", 0.5));
    tk.system = std::make_shared<sys::ClippedAffineSystem>(
        space, actions, sys::TriangularNoise(std::move(scales)),
        kv.get_double("system", "drift_scale", 0.1), kv.get_double("system", "noise_scale", 0.1));
  } else {
    throw FormatError("unknown system kind: " + kind);
  }

  const std::size_t dims = tk.system->state_space().dims();
  for (const auto& [name, value] : kv.section_items("regions"))
    tk.regions.define(name, parse_region(value, dims));

  const std::string init_name = kv.get("run", "initial", "init");
  tk.initial = tk.regions.has(init_name) ? tk.regions.at(init_name)
                                         : Region(tk.system->state_space());

  if (kv.has("graph", "builtin")) {
    if (kv.require("graph", "builtin") != "nine_rooms" || !tk.nine)
      throw FormatError("[graph] builtin requires a nine_rooms system");
    tk.graph = nine_rooms_subgraph(*tk.nine, kv);
  } else if (kv.has("graph", "source")) {
    tk.graph = explicit_graph(kv, tk.regions, tk.system->state_space());
  }

  load_train(kv, tk.train);
  tk.run_threshold = kv.get_double("run", "p", tk.run_threshold);
  tk.run_horizon = kv.get_size("run", "horizon", tk.run_horizon);
  tk.out_dir = kv.get("run", "out", "");
  tk.spec_text = kv.get("spec", "text", "");
  if (kv.has("spec", "file")) tk.spec_text = read_file(kv.require("spec", "file"));
  return tk;
}

Toolkit load_toolkit(const std::filesystem::path& path) {
  Toolkit tk = toolkit_from_string(read_file(path), path.string());
  tk.config_path = path;
  return tk;
}

absgraph::AbstractGraph Toolkit::resolve_graph() const {
  if (graph) return *graph;
  if (spec_text.empty())
    throw FormatError("config provides neither a [graph] section nor [spec] text");
  spectrl::Formula f = spectrl::parse(spec_text, regions);
  return absgraph::compile_to_graph(f, regions, initial, system->state_space());
}

}  // namespace claps::config
