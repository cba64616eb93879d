#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "heng/model.hpp"
#include "heng/network.hpp"
#include "heng/transport.hpp"

namespace heng {

/// Virtual sensor positions, in meters from the pipe inlet. Carries the pipe
/// length so readings can be mapped to cells without the topology at hand.
struct SensorLayout {
  struct PipeSensors {
    double length_m = 0.0;
    std::vector<double> positions_m;  // each within [0, length_m]
  };
  std::map<std::string, PipeSensors> pipes;

  /// sensor_count equally spaced interior points per pipe:
  /// x_s = (s+1) * L / (S+1).
  static SensorLayout default_layout(const NetworkTopology& topology,
                                     std::size_t sensor_count);
};

struct SamplingConfig {
  std::size_t scenario_count = 200;

  double velocity_min_m_s = 1.0;
  double velocity_max_m_s = 1.0;
  std::size_t velocity_segments_min = 1;
  std::size_t velocity_segments_max = 1;

  double fraction_min = 0.0;
  double fraction_max = 1.0;
  std::size_t boundary_segments_min = 1;
  std::size_t boundary_segments_max = 3;

  std::string initial_family = "step";  // constant | step | smooth

  std::size_t queries_per_scenario = 128;
  double split_train = 0.8;
  double split_val = 0.1;
  double split_test = 0.1;
  std::uint64_t seed = 0;

  std::size_t cells_per_pipe = 60;
  double horizon_s = 120.0;
  std::size_t snapshot_stride = 10;
  double courant = 0.9;

  std::size_t sensor_count = 4;       // S
  std::size_t boundary_samples = 16;  // K
  double sensor_noise = 0.0;          // additive uniform(-a, a), clamped

  void validate() const;
  Json to_json() const;
  static SamplingConfig from_json(const Json& j, const std::string& origin);
};

struct LabeledScenario {
  std::string id;
  Scenario scenario;
};

/// Draws velocity schedules, boundary signals, and initial fields for
/// scenario_count scenarios. dt is set per scenario from the max sampled
/// velocity so the CFL bound holds with the configured Courant margin.
std::vector<LabeledScenario> sample_scenarios(const NetworkTopology& topology,
                                              const SamplingConfig& config);
std::vector<LabeledScenario> sample_scenarios(const NetworkTopology& topology,
                                              const SamplingConfig& config,
                                              Rng& rng);

struct SensorReading {
  std::vector<double> u_init;  // length S, zero-padded
  std::vector<double> mask;    // length S, 1 = real reading
};

/// Initial-condition sensor readings from the t=0 snapshot. Pipes with
/// fewer than sensor_count positions are zero-padded with mask 0.
std::map<std::string, SensorReading> read_sensors(
    const SimulationResult& result, const SensorLayout& layout,
    std::size_t sensor_count);

/// Nearest controlled (source or injection) node strictly upstream of each
/// pipe's inlet, for pipes whose inlet node has no signal of its own. Ties
/// at equal hop distance break to the lexicographically smallest node id.
std::map<std::string, std::string> upstream_signal_map(
    const NetworkTopology& topology);

struct ScenarioEntry {
  std::string id;
  std::string split;  // train | val | test
  BranchInputs inputs;
};

struct SampleEntry {
  std::string scenario_id;
  TrunkQuery query;
  double target = 0.0;
};

struct Dataset {
  std::string topology_hash;
  std::size_t sensor_count = 0;       // S
  std::size_t boundary_samples = 0;   // K
  double horizon_s = 0.0;
  std::vector<std::string> pipe_ids;  // sorted
  AdjacencyMap adjacency;
  std::vector<ScenarioEntry> scenarios;
  std::vector<SampleEntry> samples;

  const ScenarioEntry& scenario(const std::string& id) const;
  /// Sample indices whose scenario belongs to the split, in file order.
  std::vector<std::size_t> split_sample_indices(const std::string& split) const;
  std::size_t split_scenario_count(const std::string& split) const;

  void rebuild_index();

 private:
  std::map<std::string, std::size_t> scenario_index_;
};

/// Full pipeline: sample scenarios, simulate, read sensors, assemble
/// branch inputs and query samples, assign scenario-disjoint splits.
Dataset generate_dataset(const NetworkTopology& topology,
                         const SamplingConfig& config);

/// JSON-lines persistence: one header record, then scenario records, then
/// sample records. Loading refuses unknown schema versions; pass a
/// non-empty expected_topology_hash to also refuse mismatched networks.
std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text, const std::string& origin,
                           const std::string& expected_topology_hash = "");
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path,
                     const std::string& expected_topology_hash = "");

/// CSV mirror of the sample records for external analysis.
std::string samples_csv(const Dataset& dataset);

}  // namespace heng
