#include "heng/network.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>
#include <unordered_set>

#include "heng/errors.hpp"

namespace heng {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kSource: return "source";
    case NodeKind::kHydrogenInjection: return "hydrogen-injection";
    case NodeKind::kJunction: return "junction";
    case NodeKind::kLoad: return "load";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s) {
  if (s == "source") return NodeKind::kSource;
  if (s == "hydrogen-injection") return NodeKind::kHydrogenInjection;
  if (s == "junction") return NodeKind::kJunction;
  if (s == "load") return NodeKind::kLoad;
  throw ParseError("unknown node kind \"" + s + "\"");
}

const Node* NetworkTopology::find_node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

const Pipe* NetworkTopology::find_pipe(const std::string& id) const {
  for (const auto& p : pipes)
    if (p.id == id) return &p;
  return nullptr;
}

std::vector<const Pipe*> NetworkTopology::incoming(
    const std::string& node_id) const {
  std::vector<const Pipe*> out;
  for (const auto& p : pipes)
    if (p.to_node == node_id) out.push_back(&p);
  return out;
}

std::vector<const Pipe*> NetworkTopology::outgoing(
    const std::string& node_id) const {
  std::vector<const Pipe*> out;
  for (const auto& p : pipes)
    if (p.from_node == node_id) out.push_back(&p);
  return out;
}

std::vector<std::string> NetworkTopology::sorted_pipe_ids() const {
  std::vector<std::string> ids;
  ids.reserve(pipes.size());
  for (const auto& p : pipes) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string ValidationReport::to_string() const {
  if (ok()) return "valid\n";
  std::string s;
  for (const auto& v : violations) s += v + "\n";
  return s;
}

ValidationReport validate(const NetworkTopology& topology) {
  ValidationReport report;
  auto add = [&](const std::string& msg) { report.violations.push_back(msg); };

  if (topology.nodes.empty()) add("network has no nodes");
  if (topology.pipes.empty()) add("network has no pipes");

  std::unordered_set<std::string> node_ids;
  for (const auto& n : topology.nodes) {
    if (!node_ids.insert(n.id).second) add("duplicate node id \"" + n.id + "\"");
    if (n.is_controlled() && !n.boundary_signal_id)
      add("node \"" + n.id + "\" is " + to_string(n.kind) +
          " but has no boundary_signal_id");
    if (!n.is_controlled() && n.boundary_signal_id)
      add("node \"" + n.id + "\" is " + to_string(n.kind) +
          " but carries a boundary_signal_id");
  }

  std::unordered_set<std::string> pipe_ids;
  for (const auto& p : topology.pipes) {
    if (!pipe_ids.insert(p.id).second) add("duplicate pipe id \"" + p.id + "\"");
    if (!(p.length_m > 0.0))
      add("pipe \"" + p.id + "\" has nonpositive length_m");
    if (!(p.area_m2 > 0.0)) add("pipe \"" + p.id + "\" has nonpositive area_m2");
    if (p.from_node == p.to_node)
      add("pipe \"" + p.id + "\" connects node \"" + p.from_node +
          "\" to itself");
    if (!node_ids.count(p.from_node))
      add("pipe \"" + p.id + "\" references missing node \"" + p.from_node +
          "\"");
    if (!node_ids.count(p.to_node))
      add("pipe \"" + p.id + "\" references missing node \"" + p.to_node +
          "\"");
  }

  // Weak connectivity over nodes, treating pipes as undirected.
  if (!topology.nodes.empty()) {
    std::unordered_map<std::string, std::vector<std::string>> und;
    for (const auto& p : topology.pipes) {
      if (node_ids.count(p.from_node) && node_ids.count(p.to_node)) {
        und[p.from_node].push_back(p.to_node);
        und[p.to_node].push_back(p.from_node);
      }
    }
    std::unordered_set<std::string> seen;
    std::deque<std::string> queue{topology.nodes.front().id};
    seen.insert(topology.nodes.front().id);
    while (!queue.empty()) {
      auto cur = queue.front();
      queue.pop_front();
      for (const auto& nxt : und[cur])
        if (seen.insert(nxt).second) queue.push_back(nxt);
    }
    if (seen.size() != node_ids.size())
      add("network is not weakly connected (" +
          std::to_string(node_ids.size() - seen.size()) +
          " node(s) unreachable from \"" + topology.nodes.front().id + "\")");
  }

  for (const auto& n : topology.nodes) {
    if (n.is_controlled() && topology.outgoing(n.id).empty())
      add("node \"" + n.id + "\" is " + to_string(n.kind) +
          " but has no outgoing pipe");
    if (n.kind == NodeKind::kLoad && topology.incoming(n.id).empty())
      add("node \"" + n.id + "\" is load but has no incoming pipe");
  }

  return report;
}

AdjacencyMap line_graph_adjacency(const NetworkTopology& topology) {
  auto report = validate(topology);
  if (!report.ok())
    throw DomainError("invalid topology:\n" + report.to_string());

  // Pipes sharing an endpoint in either role are neighbors.
  std::unordered_map<std::string, std::vector<std::string>> pipes_at_node;
  for (const auto& p : topology.pipes) {
    pipes_at_node[p.from_node].push_back(p.id);
    pipes_at_node[p.to_node].push_back(p.id);
  }

  AdjacencyMap adjacency;
  for (const auto& p : topology.pipes) {
    std::set<std::string> nbrs;
    for (const auto& node : {p.from_node, p.to_node})
      for (const auto& q : pipes_at_node[node])
        if (q != p.id) nbrs.insert(q);
    adjacency[p.id] = std::vector<std::string>(nbrs.begin(), nbrs.end());
  }
  return adjacency;
}

std::set<std::string> upstream_pipes(const NetworkTopology& topology,
                                     const std::string& node_id) {
  if (!topology.find_node(node_id))
    throw DomainError("unknown node id \"" + node_id + "\"");
  std::set<std::string> out;
  for (const auto* p : topology.incoming(node_id)) out.insert(p->id);
  return out;
}

bool is_acyclic(const NetworkTopology& topology) {
  // Kahn's algorithm over nodes.
  std::unordered_map<std::string, int> indegree;
  std::unordered_map<std::string, std::vector<std::string>> succ;
  for (const auto& n : topology.nodes) indegree[n.id] = 0;
  for (const auto& p : topology.pipes) {
    succ[p.from_node].push_back(p.to_node);
    indegree[p.to_node]++;
  }
  std::deque<std::string> ready;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) ready.push_back(id);
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto cur = ready.front();
    ready.pop_front();
    ++visited;
    for (const auto& nxt : succ[cur])
      if (--indegree[nxt] == 0) ready.push_back(nxt);
  }
  return visited == topology.nodes.size();
}

NetworkTopology topology_from_json(const Json& j, const std::string& origin) {
  NetworkTopology topology;
  try {
    for (const auto& nj : require_key(j, "nodes", origin)) {
      Node n;
      n.id = require_key(nj, "id", origin).get<std::string>();
      n.kind =
          node_kind_from_string(require_key(nj, "kind", origin).get<std::string>());
      if (nj.contains("boundary_signal_id") && !nj["boundary_signal_id"].is_null())
        n.boundary_signal_id = nj["boundary_signal_id"].get<std::string>();
      topology.nodes.push_back(std::move(n));
    }
    for (const auto& pj : require_key(j, "pipes", origin)) {
      Pipe p;
      p.id = require_key(pj, "id", origin).get<std::string>();
      p.from_node = require_key(pj, "from_node", origin).get<std::string>();
      p.to_node = require_key(pj, "to_node", origin).get<std::string>();
      p.length_m = require_key(pj, "length_m", origin).get<double>();
      p.area_m2 = require_key(pj, "area_m2", origin).get<double>();
      topology.pipes.push_back(std::move(p));
    }
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return topology;
}

NetworkTopology load_topology(const std::string& path) {
  return topology_from_json(parse_json_file(path), path);
}

Json topology_to_json(const NetworkTopology& topology) {
  Json nodes = Json::array();
  auto sorted_nodes = topology.nodes;
  std::sort(sorted_nodes.begin(), sorted_nodes.end(),
            [](const Node& a, const Node& b) { return a.id < b.id; });
  for (const auto& n : sorted_nodes) {
    Json nj{{"id", n.id}, {"kind", to_string(n.kind)}};
    if (n.boundary_signal_id) nj["boundary_signal_id"] = *n.boundary_signal_id;
    nodes.push_back(std::move(nj));
  }
  Json pipes = Json::array();
  auto sorted = topology.pipes;
  std::sort(sorted.begin(), sorted.end(),
            [](const Pipe& a, const Pipe& b) { return a.id < b.id; });
  for (const auto& p : sorted)
    pipes.push_back(Json{{"id", p.id},
                         {"from_node", p.from_node},
                         {"to_node", p.to_node},
                         {"length_m", p.length_m},
                         {"area_m2", p.area_m2}});
  return Json{{"nodes", std::move(nodes)}, {"pipes", std::move(pipes)}};
}

std::string topology_hash(const NetworkTopology& topology) {
  return fnv1a64_hex(topology_to_json(topology).dump());
}

Json adjacency_to_json(const AdjacencyMap& adjacency) {
  Json j = Json::object();
  for (const auto& [pipe, nbrs] : adjacency) j[pipe] = nbrs;
  return j;
}

AdjacencyMap adjacency_from_json(const Json& j, const std::string& origin) {
  AdjacencyMap adjacency;
  try {
    for (const auto& [pipe, nbrs] : j.items())
      adjacency[pipe] = nbrs.get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return adjacency;
}

}  // namespace heng
