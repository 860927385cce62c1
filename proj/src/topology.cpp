#include "telroute/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "telroute/rng.hpp"

namespace telroute {

namespace {

constexpr int kTopologyFormatVersion = 1;

void validate(int num_nodes, std::span<const Link> links) {
  if (num_nodes < 2) {
    throw TopologyError("topology needs at least two nodes");
  }
  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::size_t i = 0; i < links.size(); ++i) {
    const Link& l = links[i];
    const std::string where = "links[" + std::to_string(i) + "]";
    if (l.u < 0 || l.u >= num_nodes || l.v < 0 || l.v >= num_nodes) {
      throw TopologyError(where + ": node id out of range");
    }
    if (l.u == l.v) {
      throw TopologyError(where + ": self loop");
    }
    if (!(l.datarate_mbps > 0.0) || !std::isfinite(l.datarate_mbps)) {
      throw TopologyError(where + ".datarate_mbps must be positive");
    }
    if (!(l.delay_ms > 0.0) || !std::isfinite(l.delay_ms)) {
      throw TopologyError(where + ".delay_ms must be positive");
    }
    auto key = std::minmax(l.u, l.v);
    if (!seen.insert({key.first, key.second}).second) {
      throw TopologyError(where + ": duplicate link");
    }
  }
  if (!is_connected(num_nodes, links)) {
    throw TopologyError("graph not connected");
  }
}

}  // namespace

bool is_connected(int num_nodes, std::span<const Link> links) {
  if (num_nodes <= 0) return false;
  std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(num_nodes));
  for (const Link& l : links) {
    if (l.u < 0 || l.v < 0 || l.u >= num_nodes || l.v >= num_nodes) continue;
    adj[static_cast<std::size_t>(l.u)].push_back(l.v);
    adj[static_cast<std::size_t>(l.v)].push_back(l.u);
  }
  std::vector<char> seen(static_cast<std::size_t>(num_nodes), 0);
  std::queue<NodeId> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop();
    for (NodeId v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == num_nodes;
}

Topology::Topology(int num_nodes, std::vector<Link> links)
    : num_nodes_(num_nodes), links_(std::move(links)) {
  validate(num_nodes_, links_);
  const auto n = static_cast<std::size_t>(num_nodes_);
  neighbors_.assign(n, {});
  out_edges_.assign(n, {});
  in_edges_.assign(n, {});
  edges_.reserve(links_.size() * 2);
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const Link& l = links_[i];
    edges_.push_back({l.u, l.v, static_cast<int>(i)});
    edges_.push_back({l.v, l.u, static_cast<int>(i)});
  }
  for (EdgeId e = 0; e < num_edges(); ++e) {
    const auto& de = edges_[static_cast<std::size_t>(e)];
    out_edges_[static_cast<std::size_t>(de.src)].push_back(e);
    in_edges_[static_cast<std::size_t>(de.dst)].push_back(e);
  }
  for (std::size_t u = 0; u < n; ++u) {
    auto& out = out_edges_[u];
    std::sort(out.begin(), out.end(), [&](EdgeId a, EdgeId b) {
      return edges_[static_cast<std::size_t>(a)].dst < edges_[static_cast<std::size_t>(b)].dst;
    });
    auto& in = in_edges_[u];
    std::sort(in.begin(), in.end(), [&](EdgeId a, EdgeId b) {
      return edges_[static_cast<std::size_t>(a)].src < edges_[static_cast<std::size_t>(b)].src;
    });
    for (EdgeId e : out) neighbors_[u].push_back(edges_[static_cast<std::size_t>(e)].dst);
  }
}

EdgeId Topology::edge_between(NodeId u, NodeId v) const {
  if (u < 0 || u >= num_nodes_) return -1;
  for (EdgeId e : out_edges(u)) {
    if (edges_[static_cast<std::size_t>(e)].dst == v) return e;
  }
  return -1;
}

std::int64_t Topology::delay_us(EdgeId e) const {
  return std::llround(delay_ms(e) * 1000.0);
}

std::int64_t buffer_bytes_for(double datarate_mbps, double delay_ms) {
  const double bytes_per_ms = datarate_mbps * 1e6 / 8.0 / 1000.0;
  return std::max<std::int64_t>(1, std::llround(bytes_per_ms * 2.0 * delay_ms));
}

std::int64_t Topology::buffer_bytes(EdgeId e) const {
  return buffer_bytes_for(datarate_mbps(e), delay_ms(e));
}

Topology build_mini5() {
  return Topology(5, {
                         {0, 1, 100.0, 3.0},
                         {0, 2, 100.0, 2.0},
                         {1, 2, 100.0, 4.0},
                         {2, 3, 100.0, 4.0},
                         {1, 4, 100.0, 6.0},
                         {3, 4, 100.0, 5.0},
                     });
}

std::pair<int, int> node_range(SizeClass size_class) {
  switch (size_class) {
    case SizeClass::XS: return {6, 10};
    case SizeClass::S: return {11, 25};
    case SizeClass::M: return {26, 50};
    case SizeClass::L: return {51, 100};
  }
  return {6, 10};
}

SizeClass parse_size_class(const std::string& name) {
  if (name == "XS") return SizeClass::XS;
  if (name == "S") return SizeClass::S;
  if (name == "M") return SizeClass::M;
  if (name == "L") return SizeClass::L;
  throw TopologyError("unknown size class '" + name + "'");
}

std::string to_string(SizeClass size_class) {
  switch (size_class) {
    case SizeClass::XS: return "XS";
    case SizeClass::S: return "S";
    case SizeClass::M: return "M";
    case SizeClass::L: return "L";
  }
  return "?";
}

Topology generate_nx(SizeClass size_class, std::uint64_t seed) {
  Rng rng = Rng::derive({0x6e78, static_cast<std::uint64_t>(size_class), seed});
  const auto [lo, hi] = node_range(size_class);
  const int n = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));

  std::vector<NodeId> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());

  std::set<std::pair<NodeId, NodeId>> pairs;
  for (int i = 1; i < n; ++i) {
    NodeId a = order[static_cast<std::size_t>(i)];
    NodeId b = order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)))];
    pairs.insert(std::minmax(a, b));
  }
  // Extra edges: mean degree ~3 means ~1.5n edges in total.
  const double total_pairs = 0.5 * n * (n - 1);
  const double remaining = total_pairs - (n - 1);
  const double wanted = std::max(0.0, 1.5 * n - (n - 1));
  const double p = remaining > 0 ? std::min(1.0, wanted / remaining) : 0.0;
  for (NodeId a = 0; a < n; ++a) {
    for (NodeId b = a + 1; b < n; ++b) {
      const bool take = rng.bernoulli(p);
      if (take) pairs.insert({a, b});
    }
  }

  std::vector<Link> links;
  links.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    // Whole Mbps and 0.1 ms steps keep files and microsecond timing exact.
    double rate = std::round(rng.uniform(50.0, 200.0));
    double delay = std::round(rng.uniform(1.0, 10.0) * 10.0) / 10.0;
    rate = std::clamp(rate, 50.0, 200.0);
    delay = std::clamp(delay, 1.0, 10.0);
    links.push_back({a, b, rate, delay});
  }
  return Topology(n, std::move(links));
}

std::string topology_to_json(const Topology& topology) {
  nlohmann::ordered_json doc;
  doc["format"] = "telroute-topology";
  doc["version"] = kTopologyFormatVersion;
  doc["nodes"] = topology.num_nodes();
  auto& arr = doc["links"] = nlohmann::ordered_json::array();
  for (const Link& l : topology.links()) {
    nlohmann::ordered_json j;
    j["u"] = l.u;
    j["v"] = l.v;
    j["datarate_mbps"] = l.datarate_mbps;
    j["delay_ms"] = l.delay_ms;
    arr.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

namespace {

template <class T>
T field(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw TopologyError("missing field '" + where + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw TopologyError("field '" + where + key + "' has the wrong type");
  }
}

}  // namespace

Topology topology_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw TopologyError(std::string("topology parse error: ") + e.what());
  }
  if (doc.contains("version") && field<int>(doc, "version", "") != kTopologyFormatVersion) {
    throw TopologyError("field 'version': unsupported topology format version");
  }
  const int nodes = field<int>(doc, "nodes", "");
  if (!doc.contains("links") || !doc["links"].is_array()) {
    throw TopologyError("missing field 'links'");
  }
  std::vector<Link> links;
  const auto& arr = doc["links"];
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "links[" + std::to_string(i) + "].";
    Link l;
    l.u = field<int>(arr[i], "u", where);
    l.v = field<int>(arr[i], "v", where);
    l.datarate_mbps = field<double>(arr[i], "datarate_mbps", where);
    l.delay_ms = field<double>(arr[i], "delay_ms", where);
    links.push_back(l);
  }
  return Topology(nodes, std::move(links));
}

void save_topology(const Topology& topology, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TopologyError("cannot write " + path.string());
  out << topology_to_json(topology);
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TopologyError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return topology_from_json(buffer.str());
}

}  // namespace telroute
