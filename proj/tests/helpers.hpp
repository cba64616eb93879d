#pragma once

#include <string>
#include <vector>

#include "heng/network.hpp"
#include "heng/rng.hpp"

namespace heng::testing {

/// Layered random DAG that always passes validate(): sources feed forward
/// through optional junction/injection layers into loads. Edges only go to
/// the next layer, and the first node of each layer receives a pipe from
/// every node of the previous one, which keeps the graph weakly connected.
inline NetworkTopology random_topology(Rng& rng) {
  NetworkTopology t;
  std::size_t source_count = 1 + rng.uniform_int(3);
  std::size_t middle_layers = rng.uniform_int(3);
  std::size_t load_count = 1 + rng.uniform_int(3);

  std::vector<std::vector<std::string>> layers;
  std::size_t node_seq = 0;
  auto add_node = [&](NodeKind kind) {
    Node n;
    n.id = "n" + std::to_string(node_seq++);
    n.kind = kind;
    if (n.is_controlled()) n.boundary_signal_id = "b_" + n.id;
    t.nodes.push_back(n);
    return n.id;
  };

  layers.emplace_back();
  for (std::size_t i = 0; i < source_count; ++i)
    layers.back().push_back(add_node(NodeKind::kSource));
  for (std::size_t l = 0; l < middle_layers; ++l) {
    layers.emplace_back();
    std::size_t width = 1 + rng.uniform_int(3);
    for (std::size_t i = 0; i < width; ++i)
      layers.back().push_back(add_node(rng.uniform() < 0.25
                                           ? NodeKind::kHydrogenInjection
                                           : NodeKind::kJunction));
  }
  layers.emplace_back();
  for (std::size_t i = 0; i < load_count; ++i)
    layers.back().push_back(add_node(NodeKind::kLoad));

  std::size_t pipe_seq = 0;
  auto add_pipe = [&](const std::string& from, const std::string& to) {
    Pipe p;
    p.id = "p" + std::to_string(pipe_seq++);
    p.from_node = from;
    p.to_node = to;
    p.length_m = 50.0 + 150.0 * rng.uniform();
    p.area_m2 = 0.2 + 1.8 * rng.uniform();
    t.pipes.push_back(p);
  };

  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto& here = layers[l];
    const auto& next = layers[l + 1];
    for (const auto& from : here) add_pipe(from, next.front());
    for (std::size_t i = 1; i < next.size(); ++i)
      add_pipe(here[rng.uniform_int(here.size())], next[i]);
  }
  return t;
}

}  // namespace heng::testing
