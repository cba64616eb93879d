#include "heng/transport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "heng/errors.hpp"

namespace heng {

namespace {

constexpr double kTol = 1e-12;

double piecewise_at(const std::vector<double>& breakpoints,
                    const std::vector<double>& values, double t) {
  if (t < 0.0) t = 0.0;
  std::size_t i = breakpoints.size();
  while (i > 0 && breakpoints[i - 1] > t) --i;
  if (i == 0) return values.front();
  return values[i - 1];
}

void check_breakpoints(const std::vector<double>& bps,
                       const std::vector<double>& vals,
                       const std::string& what, std::string& problems) {
  if (bps.empty() || vals.size() != bps.size()) {
    problems += what + ": breakpoints and values must be non-empty and equal length\n";
    return;
  }
  if (bps.front() != 0.0) problems += what + ": first breakpoint must be 0\n";
  for (std::size_t i = 1; i < bps.size(); ++i)
    if (!(bps[i] > bps[i - 1]))
      problems += what + ": breakpoints not strictly ascending\n";
}

}  // namespace

double VelocitySchedule::at(double t_s) const {
  return piecewise_at(breakpoints_s, velocities_m_s, t_s);
}

double VelocitySchedule::max_velocity() const {
  return *std::max_element(velocities_m_s.begin(), velocities_m_s.end());
}

double BoundarySignal::at(double t_s) const {
  return piecewise_at(breakpoints_s, fractions, t_s);
}

double PiecewiseProfile::at(double x_m) const {
  return piecewise_at(breakpoints_m, values, x_m);
}

std::size_t SimulationResult::snapshot_index_near(double t_s) const {
  if (times_s.empty()) throw DomainError("no snapshots stored");
  auto it = std::lower_bound(times_s.begin(), times_s.end(), t_s);
  if (it == times_s.end()) return times_s.size() - 1;
  if (it == times_s.begin()) return 0;
  std::size_t hi = static_cast<std::size_t>(it - times_s.begin());
  return (t_s - times_s[hi - 1] <= times_s[hi] - t_s) ? hi - 1 : hi;
}

double SimulationResult::value_at(const std::string& pipe_id, double x_rel,
                                  std::size_t snapshot) const {
  auto it = fields.find(pipe_id);
  if (it == fields.end()) throw DomainError("unknown pipe \"" + pipe_id + "\"");
  if (x_rel < 0.0 || x_rel > 1.0)
    throw DomainError("x_rel outside [0,1]");
  const auto& cells = it->second.at(snapshot);
  auto n = cells.size();
  std::size_t i = std::min(static_cast<std::size_t>(x_rel * static_cast<double>(n)),
                           n - 1);
  return cells[i];
}

double mix_at_node(const std::vector<Stream>& inflows,
                   const std::optional<Stream>& injection) {
  if (inflows.empty() && !injection)
    throw DomainError("mix_at_node: no inflow and no injection");
  double mass = 0.0;
  double hydrogen = 0.0;
  auto absorb = [&](const Stream& s) {
    if (!(s.mass_flow_kg_s > 0.0))
      throw DomainError("mix_at_node: nonpositive mass flow");
    if (s.fraction < 0.0 || s.fraction > 1.0)
      throw DomainError("mix_at_node: fraction outside [0,1]");
    mass += s.mass_flow_kg_s;
    hydrogen += s.mass_flow_kg_s * s.fraction;
  };
  for (const auto& s : inflows) absorb(s);
  if (injection) absorb(*injection);
  return std::clamp(hydrogen / mass, 0.0, 1.0);
}

FractionField step_upwind(const FractionField& field, double v_m_s,
                          double dt_s, double dx_m, double inlet_fraction) {
  if (v_m_s < 0.0) throw DomainError("step_upwind: negative velocity");
  if (!(dx_m > 0.0) || !(dt_s > 0.0))
    throw DomainError("step_upwind: dt and dx must be positive");
  double courant = v_m_s * dt_s / dx_m;
  if (courant > 1.0 + kTol)
    throw DomainError("step_upwind: CFL violated (v*dt/dx = " +
                      std::to_string(courant) + " > 1)");
  courant = std::min(courant, 1.0);
  if (inlet_fraction < -kTol || inlet_fraction > 1.0 + kTol)
    throw DomainError("step_upwind: inlet fraction outside [0,1]");
  inlet_fraction = std::clamp(inlet_fraction, 0.0, 1.0);

  const auto& old = field.values;
  FractionField next;
  next.pipe_id = field.pipe_id;
  next.values.resize(old.size());
  const double stay = 1.0 - courant;
  for (std::size_t i = 0; i < old.size(); ++i) {
    double upstream = (i == 0) ? inlet_fraction : old[i - 1];
    // Convex form keeps the update monotone and inside [min, max].
    next.values[i] = std::clamp(stay * old[i] + courant * upstream, 0.0, 1.0);
  }
  return next;
}

double characteristics_oracle(const PiecewiseProfile& initial,
                              const BoundarySignal& boundary,
                              const VelocitySchedule& velocity,
                              double length_m, double x_m, double t_s) {
  if (x_m < 0.0 || x_m > length_m || t_s < 0.0)
    throw DomainError("characteristics_oracle: query outside domain");

  double remaining = x_m;  // distance still to travel backward toward x = 0
  double time = t_s;
  const auto& bps = velocity.breakpoints_s;
  // Index of the interval containing `time`.
  std::size_t k = bps.size();
  while (k > 0 && bps[k - 1] > time) --k;
  if (k > 0) --k;

  while (time > 0.0) {
    double lo = bps[k];
    double v = velocity.velocities_m_s[k];
    double span = time - std::max(lo, 0.0);
    if (v > 0.0 && remaining <= v * span) {
      double t0 = time - remaining / v;
      return boundary.at(t0);
    }
    remaining -= v * span;
    time = std::max(lo, 0.0);
    if (k == 0) break;
    --k;
  }
  return initial.at(std::clamp(remaining, 0.0, length_m));
}

void validate_scenario(const NetworkTopology& topology,
                       const Scenario& scenario) {
  std::string problems;
  if (!(scenario.horizon_s > 0.0)) problems += "horizon_s must be positive\n";
  if (!(scenario.dt_s > 0.0)) problems += "dt_s must be positive\n";
  if (scenario.snapshot_stride < 1) problems += "snapshot_stride must be >= 1\n";
  if (!(scenario.rho_ref_kg_m3 > 0.0)) problems += "rho_ref must be positive\n";

  for (const auto& p : topology.pipes) {
    auto vit = scenario.velocities.find(p.id);
    if (vit == scenario.velocities.end()) {
      problems += "missing velocity schedule for pipe \"" + p.id + "\"\n";
    } else {
      const auto& vs = vit->second;
      check_breakpoints(vs.breakpoints_s, vs.velocities_m_s,
                        "velocity schedule \"" + p.id + "\"", problems);
      for (double v : vs.velocities_m_s)
        if (v < 0.0)
          problems += "velocity schedule \"" + p.id + "\" has negative speed\n";
    }
    auto fit = scenario.initial_fields.find(p.id);
    if (fit == scenario.initial_fields.end()) {
      problems += "missing initial field for pipe \"" + p.id + "\"\n";
    } else {
      const auto& f = fit->second;
      if (f.values.size() < 2)
        problems += "initial field \"" + p.id + "\" needs cell_count >= 2\n";
      for (double w : f.values)
        if (w < 0.0 || w > 1.0)
          problems += "initial field \"" + p.id + "\" has value outside [0,1]\n";
      // CFL over every velocity interval of this pipe.
      if (vit != scenario.velocities.end() && f.values.size() >= 2) {
        double dx = p.length_m / static_cast<double>(f.values.size());
        double c = vit->second.max_velocity() * scenario.dt_s / dx;
        if (c > 1.0 + kTol)
          problems += "CFL violated on pipe \"" + p.id + "\": v*dt/dx = " +
                      std::to_string(c) + " > 1\n";
      }
    }
  }
  for (const auto& [pid, _] : scenario.velocities)
    if (!topology.find_pipe(pid))
      problems += "velocity schedule for unknown pipe \"" + pid + "\"\n";
  for (const auto& [pid, _] : scenario.initial_fields)
    if (!topology.find_pipe(pid))
      problems += "initial field for unknown pipe \"" + pid + "\"\n";

  for (const auto& n : topology.nodes) {
    if (!n.is_controlled()) continue;
    auto sit = scenario.boundaries.find(*n.boundary_signal_id);
    if (sit == scenario.boundaries.end()) {
      problems += "missing boundary signal \"" + *n.boundary_signal_id +
                  "\" for node \"" + n.id + "\"\n";
    } else {
      check_breakpoints(sit->second.breakpoints_s, sit->second.fractions,
                        "boundary signal \"" + sit->first + "\"", problems);
      for (double w : sit->second.fractions)
        if (w < 0.0 || w > 1.0)
          problems += "boundary signal \"" + sit->first +
                      "\" has fraction outside [0,1]\n";
    }
  }

  if (!problems.empty()) throw DomainError("invalid scenario:\n" + problems);
}

namespace {

struct PipeState {
  const Pipe* pipe = nullptr;
  const VelocitySchedule* velocity = nullptr;
  double dx = 0.0;
  FractionField field;
};

struct NodeState {
  const Node* node = nullptr;
  const BoundarySignal* signal = nullptr;
  std::vector<std::size_t> incoming;  // pipe indices, sorted by pipe id
  std::vector<std::size_t> outgoing;
};

}  // namespace

SimulationResult simulate_network(const NetworkTopology& topology,
                                  const Scenario& scenario) {
  auto report = validate(topology);
  if (!report.ok())
    throw DomainError("invalid topology:\n" + report.to_string());
  validate_scenario(topology, scenario);
  if (!is_acyclic(topology))
    throw DomainError("directed cycle detected; the simulator requires an "
                      "acyclic pipe graph");

  std::vector<std::string> pipe_ids = topology.sorted_pipe_ids();
  std::vector<PipeState> pipes;
  std::unordered_map<std::string, std::size_t> pipe_index;
  for (const auto& pid : pipe_ids) {
    PipeState ps;
    ps.pipe = topology.find_pipe(pid);
    ps.velocity = &scenario.velocities.at(pid);
    ps.field = scenario.initial_fields.at(pid);
    ps.dx = ps.pipe->length_m / static_cast<double>(ps.field.values.size());
    pipe_index[pid] = pipes.size();
    pipes.push_back(std::move(ps));
  }

  std::vector<NodeState> nodes;
  std::unordered_map<std::string, std::size_t> node_index;
  auto sorted_nodes = topology.nodes;
  std::sort(sorted_nodes.begin(), sorted_nodes.end(),
            [](const Node& a, const Node& b) { return a.id < b.id; });
  for (const auto& n : sorted_nodes) {
    NodeState ns;
    ns.node = topology.find_node(n.id);
    if (n.boundary_signal_id)
      ns.signal = &scenario.boundaries.at(*n.boundary_signal_id);
    for (const auto& pid : pipe_ids) {
      const auto& p = *pipes[pipe_index[pid]].pipe;
      if (p.to_node == n.id) ns.incoming.push_back(pipe_index[pid]);
      if (p.from_node == n.id) ns.outgoing.push_back(pipe_index[pid]);
    }
    if (!ns.outgoing.empty() && ns.incoming.empty() && !ns.signal)
      throw DomainError("node \"" + n.id +
                        "\" feeds pipes but has no inflow and no boundary "
                        "signal");
    node_index[n.id] = nodes.size();
    nodes.push_back(std::move(ns));
  }

  const double rho = scenario.rho_ref_kg_m3;
  auto mass_flow = [&](const PipeState& ps, double t) {
    return ps.velocity->at(t) * ps.pipe->area_m2 * rho;
  };

  // Mixed outlet fraction of every node from the current pipe states.
  auto node_outlets = [&](double t) {
    std::vector<double> out(nodes.size(), 0.0);
    for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
      const auto& ns = nodes[ni];
      std::vector<Stream> streams;
      double inflow_total = 0.0;
      for (auto pi : ns.incoming) {
        double m = mass_flow(pipes[pi], t);
        inflow_total += m;
        if (m > 0.0) streams.push_back({m, pipes[pi].field.values.back()});
      }
      std::optional<Stream> injection;
      if (ns.signal) {
        double outflow_total = 0.0;
        for (auto pi : ns.outgoing) outflow_total += mass_flow(pipes[pi], t);
        double m_inj = outflow_total - inflow_total;
        if (m_inj > 0.0) injection = Stream{m_inj, ns.signal->at(t)};
      }
      if (!streams.empty() || injection) {
        out[ni] = mix_at_node(streams, injection);
      } else if (ns.signal) {
        out[ni] = ns.signal->at(t);
      } else if (!ns.incoming.empty()) {
        // Stagnant node: hold the unweighted mean of incoming end cells.
        double sum = 0.0;
        for (auto pi : ns.incoming) sum += pipes[pi].field.values.back();
        out[ni] = sum / static_cast<double>(ns.incoming.size());
      } else {
        out[ni] = 0.0;  // isolated node, feeds nothing
      }
    }
    return out;
  };

  long n_steps =
      static_cast<long>(std::floor(scenario.horizon_s / scenario.dt_s + 1e-9));
  if (n_steps < 1)
    throw DomainError("horizon shorter than one time step");

  SimulationResult result;
  result.horizon_s = scenario.horizon_s;
  result.dt_s = scenario.dt_s;
  for (const auto& pid : pipe_ids) result.fields[pid] = {};
  for (const auto& ns : nodes) result.node_outlet[ns.node->id] = {};

  for (long k = 0; k <= n_steps; ++k) {
    double t = static_cast<double>(k) * scenario.dt_s;
    auto outlets = node_outlets(t);
    bool store = (k % scenario.snapshot_stride == 0) || k == n_steps;
    if (store) {
      result.times_s.push_back(t);
      for (std::size_t pi = 0; pi < pipes.size(); ++pi)
        result.fields[pipes[pi].pipe->id].push_back(pipes[pi].field.values);
      for (std::size_t ni = 0; ni < nodes.size(); ++ni)
        result.node_outlet[nodes[ni].node->id].push_back(outlets[ni]);
    }
    if (k == n_steps) break;
    for (auto& ps : pipes) {
      double inlet = outlets[node_index.at(ps.pipe->from_node)];
      ps.field = step_upwind(ps.field, ps.velocity->at(t), scenario.dt_s,
                             ps.dx, inlet);
    }
  }
  return result;
}

Scenario scenario_from_json(const Json& j, const std::string& origin) {
  Scenario s;
  try {
    s.horizon_s = require_key(j, "horizon_s", origin).get<double>();
    s.dt_s = require_key(j, "dt_s", origin).get<double>();
    if (j.contains("snapshot_stride"))
      s.snapshot_stride = j["snapshot_stride"].get<int>();
    if (j.contains("rho_ref_kg_m3"))
      s.rho_ref_kg_m3 = j["rho_ref_kg_m3"].get<double>();
    for (const auto& vj : require_key(j, "velocities", origin)) {
      VelocitySchedule vs;
      vs.pipe_id = require_key(vj, "pipe_id", origin).get<std::string>();
      vs.breakpoints_s =
          require_key(vj, "breakpoints_s", origin).get<std::vector<double>>();
      vs.velocities_m_s =
          require_key(vj, "velocities_m_s", origin).get<std::vector<double>>();
      s.velocities[vs.pipe_id] = std::move(vs);
    }
    for (const auto& bj : require_key(j, "boundaries", origin)) {
      BoundarySignal bs;
      bs.signal_id = require_key(bj, "signal_id", origin).get<std::string>();
      bs.breakpoints_s =
          require_key(bj, "breakpoints_s", origin).get<std::vector<double>>();
      bs.fractions =
          require_key(bj, "fractions", origin).get<std::vector<double>>();
      s.boundaries[bs.signal_id] = std::move(bs);
    }
    for (const auto& fj : require_key(j, "initial_fields", origin)) {
      FractionField f;
      f.pipe_id = require_key(fj, "pipe_id", origin).get<std::string>();
      auto cells = require_key(fj, "cell_count", origin).get<std::size_t>();
      if (fj.contains("constant")) {
        f.values.assign(cells, fj["constant"].get<double>());
      } else {
        f.values = require_key(fj, "values", origin).get<std::vector<double>>();
        if (f.values.size() != cells)
          throw ParseError(origin + ": initial field \"" + f.pipe_id +
                           "\" cell_count does not match values length");
      }
      s.initial_fields[f.pipe_id] = std::move(f);
    }
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  return scenario_from_json(parse_json_file(path), path);
}

Json scenario_to_json(const Scenario& scenario) {
  Json velocities = Json::array();
  for (const auto& [pid, vs] : scenario.velocities)
    velocities.push_back(Json{{"pipe_id", pid},
                              {"breakpoints_s", vs.breakpoints_s},
                              {"velocities_m_s", vs.velocities_m_s}});
  Json boundaries = Json::array();
  for (const auto& [sid, bs] : scenario.boundaries)
    boundaries.push_back(Json{{"signal_id", sid},
                              {"breakpoints_s", bs.breakpoints_s},
                              {"fractions", bs.fractions}});
  Json fields = Json::array();
  for (const auto& [pid, f] : scenario.initial_fields)
    fields.push_back(Json{{"pipe_id", pid},
                          {"cell_count", f.values.size()},
                          {"values", f.values}});
  return Json{{"horizon_s", scenario.horizon_s},
              {"dt_s", scenario.dt_s},
              {"snapshot_stride", scenario.snapshot_stride},
              {"rho_ref_kg_m3", scenario.rho_ref_kg_m3},
              {"velocities", std::move(velocities)},
              {"boundaries", std::move(boundaries)},
              {"initial_fields", std::move(fields)}};
}

std::string simulation_csv(const SimulationResult& result,
                           const NetworkTopology& topology) {
  std::ostringstream csv;
  csv << "time_s,pipe_id,cell_index,x_m,fraction\n";
  for (std::size_t s = 0; s < result.times_s.size(); ++s) {
    for (const auto& [pid, series] : result.fields) {
      const auto* pipe = topology.find_pipe(pid);
      double dx = pipe->length_m / static_cast<double>(series[s].size());
      for (std::size_t i = 0; i < series[s].size(); ++i) {
        double x = (static_cast<double>(i) + 0.5) * dx;
        csv << format_double(result.times_s[s]) << ',' << pid << ',' << i
            << ',' << format_double(x) << ',' << format_double(series[s][i])
            << '\n';
      }
    }
  }
  return csv.str();
}

}  // namespace heng
