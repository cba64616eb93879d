#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heng/jsonio.hpp"

namespace heng {

enum class NodeKind { kSource, kHydrogenInjection, kJunction, kLoad };

const char* to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& s);

struct Node {
  std::string id;
  NodeKind kind = NodeKind::kJunction;
  /// Required for source and hydrogen-injection nodes, forbidden otherwise.
  std::optional<std::string> boundary_signal_id;

  bool is_controlled() const {
    return kind == NodeKind::kSource || kind == NodeKind::kHydrogenInjection;
  }
};

struct Pipe {
  std::string id;
  std::string from_node;
  std::string to_node;
  double length_m = 0.0;
  double area_m2 = 0.0;
};

/// Directed pipe network. Immutable once validated; flow runs in pipe
/// orientation only (from_node -> to_node).
struct NetworkTopology {
  std::vector<Node> nodes;
  std::vector<Pipe> pipes;

  const Node* find_node(const std::string& id) const;
  const Pipe* find_pipe(const std::string& id) const;
  std::vector<const Pipe*> incoming(const std::string& node_id) const;
  std::vector<const Pipe*> outgoing(const std::string& node_id) const;
  /// Pipe ids in ascending order; the canonical pipe ordering everywhere.
  std::vector<std::string> sorted_pipe_ids() const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

/// Checks every topology invariant; the report lists one entry per violation.
ValidationReport validate(const NetworkTopology& topology);

/// Pipe id -> ids of pipes sharing at least one endpoint node (line graph
/// of the network, self excluded). Keys and neighbor lists are sorted.
using AdjacencyMap = std::map<std::string, std::vector<std::string>>;

AdjacencyMap line_graph_adjacency(const NetworkTopology& topology);

/// All pipes whose to_node is node_id.
std::set<std::string> upstream_pipes(const NetworkTopology& topology,
                                     const std::string& node_id);

/// True when the directed pipe graph has no directed cycle.
bool is_acyclic(const NetworkTopology& topology);

NetworkTopology topology_from_json(const Json& j, const std::string& origin);
NetworkTopology load_topology(const std::string& path);
Json topology_to_json(const NetworkTopology& topology);

/// Content hash of the canonical serialization; keys checkpoints and
/// dataset files to the network they were produced from.
std::string topology_hash(const NetworkTopology& topology);

Json adjacency_to_json(const AdjacencyMap& adjacency);
AdjacencyMap adjacency_from_json(const Json& j, const std::string& origin);

}  // namespace heng
