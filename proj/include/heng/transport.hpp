#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heng/jsonio.hpp"
#include "heng/network.hpp"

namespace heng {

/// Piecewise-constant advection speed v = m/(A*rho) for one pipe.
/// velocities[i] holds on [breakpoints[i], breakpoints[i+1]); the last value
/// extends to infinity. breakpoints[0] must be 0.
struct VelocitySchedule {
  std::string pipe_id;
  std::vector<double> breakpoints_s;
  std::vector<double> velocities_m_s;

  double at(double t_s) const;
  double max_velocity() const;
};

/// Piecewise-constant hydrogen mass fraction imposed at a controlled node.
struct BoundarySignal {
  std::string signal_id;
  std::vector<double> breakpoints_s;
  std::vector<double> fractions;

  double at(double t_s) const;
};

/// Cell-averaged hydrogen mass fraction on a uniform grid over [0, length].
struct FractionField {
  std::string pipe_id;
  std::vector<double> values;  // size N >= 2, each in [0,1]
};

/// Piecewise-constant profile in space; values[i] holds on
/// [breakpoints[i], breakpoints[i+1]), last value to the right end.
struct PiecewiseProfile {
  std::vector<double> breakpoints_m;
  std::vector<double> values;

  double at(double x_m) const;
};

struct Scenario {
  std::map<std::string, VelocitySchedule> velocities;   // keyed by pipe id
  std::map<std::string, BoundarySignal> boundaries;     // keyed by signal id
  std::map<std::string, FractionField> initial_fields;  // keyed by pipe id
  double horizon_s = 0.0;
  double dt_s = 0.0;
  int snapshot_stride = 10;
  double rho_ref_kg_m3 = 1.0;  // reference density for mixing weights
};

struct SimulationResult {
  std::vector<double> times_s;
  /// pipe id -> per-snapshot cell values.
  std::map<std::string, std::vector<std::vector<double>>> fields;
  /// node id -> mixed outlet fraction per snapshot.
  std::map<std::string, std::vector<double>> node_outlet;
  double horizon_s = 0.0;
  double dt_s = 0.0;

  std::size_t snapshot_index_near(double t_s) const;
  /// Cell value at relative position x_rel in [0,1] of the given snapshot.
  double value_at(const std::string& pipe_id, double x_rel,
                  std::size_t snapshot) const;
};

struct Stream {
  double mass_flow_kg_s = 0.0;
  double fraction = 0.0;
};

/// Mass-weighted mixed fraction of all streams entering a node. Conserves
/// hydrogen mass flow exactly up to rounding.
double mix_at_node(const std::vector<Stream>& inflows,
                   const std::optional<Stream>& injection = std::nullopt);

/// One explicit first-order upwind step. Requires v >= 0 and Courant
/// number v*dt/dx <= 1; output cells stay within [0,1].
FractionField step_upwind(const FractionField& field, double v_m_s,
                          double dt_s, double dx_m, double inlet_fraction);

/// Exact single-pipe solution by tracing the characteristic backward from
/// (x, t). Returns the boundary value if the characteristic leaves through
/// x = 0, otherwise the initial profile at its foot.
double characteristics_oracle(const PiecewiseProfile& initial,
                              const BoundarySignal& boundary,
                              const VelocitySchedule& velocity,
                              double length_m, double x_m, double t_s);

/// Throws DomainError describing every scenario problem (coverage, CFL,
/// bounds, breakpoint ordering).
void validate_scenario(const NetworkTopology& topology,
                       const Scenario& scenario);

SimulationResult simulate_network(const NetworkTopology& topology,
                                  const Scenario& scenario);

Scenario scenario_from_json(const Json& j, const std::string& origin);
Scenario load_scenario(const std::string& path);
Json scenario_to_json(const Scenario& scenario);

/// CSV with columns time_s,pipe_id,cell_index,x_m,fraction.
std::string simulation_csv(const SimulationResult& result,
                           const NetworkTopology& topology);

}  // namespace heng
