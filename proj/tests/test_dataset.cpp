#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "heng/dataset.hpp"
#include "heng/errors.hpp"
#include "heng/network.hpp"

using namespace heng;

namespace {

const std::string kDataDir = HENG_DATA_DIR;

NetworkTopology reference6() { return load_topology(kDataDir + "/reference6.json"); }

SamplingConfig small_config() {
  SamplingConfig c;
  c.scenario_count = 10;
  c.queries_per_scenario = 16;
  c.cells_per_pipe = 20;
  c.horizon_s = 120.0;
  c.snapshot_stride = 5;
  c.sensor_count = 3;
  c.boundary_samples = 8;
  c.seed = 42;
  c.initial_family = "step";
  c.velocity_min_m_s = 0.8;
  c.velocity_max_m_s = 1.4;
  c.velocity_segments_max = 2;
  c.boundary_segments_max = 2;
  return c;
}

}  // namespace

TEST_CASE("default sensor layout spaces interior points evenly") {
  auto layout = SensorLayout::default_layout(reference6(), 4);
  const auto& p1 = layout.pipes.at("p1");
  CHECK(p1.length_m == 100.0);
  REQUIRE(p1.positions_m.size() == 4);
  CHECK(p1.positions_m[0] == doctest::Approx(20.0));
  CHECK(p1.positions_m[1] == doctest::Approx(40.0));
  CHECK(p1.positions_m[2] == doctest::Approx(60.0));
  CHECK(p1.positions_m[3] == doctest::Approx(80.0));
  CHECK(layout.pipes.size() == 6);
}

TEST_CASE("sensor readings sample the initial snapshot") {
  SimulationResult result;
  result.times_s = {0.0};
  std::vector<double> step(60, 0.0);
  for (std::size_t i = 30; i < 60; ++i) step[i] = 1.0;
  result.fields["main"] = {step};

  SensorLayout layout;
  layout.pipes["main"] = {100.0, {33.3, 66.7}};
  auto readings = read_sensors(result, layout, 2);
  CHECK(readings.at("main").u_init == std::vector<double>{0.0, 1.0});
  CHECK(readings.at("main").mask == std::vector<double>{1.0, 1.0});

  // Fewer positions than sensors: zero padded with mask 0.
  layout.pipes["main"].positions_m = {50.1};
  auto padded = read_sensors(result, layout, 2);
  CHECK(padded.at("main").u_init == std::vector<double>{1.0, 0.0});
  CHECK(padded.at("main").mask == std::vector<double>{1.0, 0.0});

  layout.pipes["main"].positions_m = {150.0};
  CHECK_THROWS_AS(read_sensors(result, layout, 2), DomainError);
}

TEST_CASE("upstream proxy signals on the reference network") {
  auto proxies = upstream_signal_map(reference6());
  // p1, p2, p3 start at controlled nodes and need no proxy. The rest walk
  // upstream; inj and s1 tie at j1 and "inj" wins lexicographically.
  CHECK(proxies == std::map<std::string, std::string>{
                       {"p4", "b_inj"}, {"p5", "b_inj"}, {"p6", "b_inj"}});
}

TEST_CASE("sampled scenarios respect the configured ranges") {
  auto topology = reference6();
  auto config = small_config();
  auto scenarios = sample_scenarios(topology, config);
  REQUIRE(scenarios.size() == config.scenario_count);

  for (const auto& [id, s] : scenarios) {
    CHECK(id.size() == 8 + 2 + 4);
    CHECK(id.substr(8, 2) == "-s");
    CHECK(s.horizon_s == config.horizon_s);
    CHECK(s.snapshot_stride == static_cast<int>(config.snapshot_stride));
    CHECK_NOTHROW(validate_scenario(topology, s));

    double min_dx_over_v = 1e300;
    for (const auto& p : topology.pipes) {
      const auto& vs = s.velocities.at(p.id);
      CHECK(vs.velocities_m_s.size() <= config.velocity_segments_max);
      for (double v : vs.velocities_m_s) {
        CHECK(v >= config.velocity_min_m_s);
        CHECK(v <= config.velocity_max_m_s);
      }
      double dx = p.length_m / static_cast<double>(config.cells_per_pipe);
      min_dx_over_v = std::min(min_dx_over_v, dx / vs.max_velocity());
      const auto& f = s.initial_fields.at(p.id);
      CHECK(f.values.size() == config.cells_per_pipe);
      std::set<double> levels(f.values.begin(), f.values.end());
      CHECK(levels.size() <= 2);  // step family
      for (double w : f.values) {
        CHECK(w >= config.fraction_min);
        CHECK(w <= config.fraction_max);
      }
    }
    CHECK(s.dt_s <= config.courant * min_dx_over_v * (1.0 + 1e-12));
    for (const auto& [sid, b] : s.boundaries) {
      CHECK(b.fractions.size() <= config.boundary_segments_max);
      for (double w : b.fractions) {
        CHECK(w >= config.fraction_min);
        CHECK(w <= config.fraction_max);
      }
    }
  }

  // Same config, same stream.
  auto again = sample_scenarios(topology, config);
  REQUIRE(again.size() == scenarios.size());
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    CHECK(again[i].id == scenarios[i].id);
    CHECK(scenario_to_json(again[i].scenario) ==
          scenario_to_json(scenarios[i].scenario));
  }

  auto constant = config;
  constant.initial_family = "constant";
  for (const auto& [id, s] : sample_scenarios(topology, constant))
    for (const auto& [pid, f] : s.initial_fields)
      CHECK(std::set<double>(f.values.begin(), f.values.end()).size() == 1);

  auto smooth = config;
  smooth.initial_family = "smooth";
  CHECK_NOTHROW(sample_scenarios(topology, smooth));
}

TEST_CASE("sampling config validation") {
  auto c = small_config();
  CHECK_NOTHROW(c.validate());
  auto j = c.to_json();
  auto back = SamplingConfig::from_json(j, "rt");
  CHECK(back.to_json() == j);

  auto bad_split = c;
  bad_split.split_train = 0.9;
  bad_split.split_val = 0.9;
  CHECK_THROWS_WITH_AS(bad_split.validate(), doctest::Contains("split"),
                       DomainError);
  auto bad_family = c;
  bad_family.initial_family = "fractal";
  CHECK_THROWS_AS(bad_family.validate(), DomainError);
  auto bad_velocity = c;
  bad_velocity.velocity_min_m_s = 2.0;  // above max
  CHECK_THROWS_AS(bad_velocity.validate(), DomainError);

  auto truncated = j;
  truncated.erase("seed");
  CHECK_THROWS_AS(SamplingConfig::from_json(truncated, "rt"), ParseError);
}

TEST_CASE("generated dataset wires everything together") {
  auto topology = reference6();
  auto config = small_config();
  auto ds = generate_dataset(topology, config);

  CHECK(ds.topology_hash == topology_hash(topology));
  CHECK(ds.sensor_count == config.sensor_count);
  CHECK(ds.boundary_samples == config.boundary_samples);
  CHECK(ds.horizon_s == config.horizon_s);
  CHECK(ds.pipe_ids == topology.sorted_pipe_ids());
  CHECK(ds.adjacency == line_graph_adjacency(topology));

  REQUIRE(ds.scenarios.size() == 10);
  CHECK(ds.split_scenario_count("train") == 8);
  CHECK(ds.split_scenario_count("val") == 1);
  CHECK(ds.split_scenario_count("test") == 1);
  REQUIRE(ds.samples.size() == 10 * config.queries_per_scenario);

  for (const auto& s : ds.scenarios) {
    CHECK(s.inputs.size() == 6);
    for (const auto& [pid, in] : s.inputs) {
      CHECK(in.u_init.size() == config.sensor_count);
      CHECK(in.mask.size() == config.sensor_count + 1);
      CHECK(in.u_bound.size() == config.boundary_samples);
      for (double v : in.u_init) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      for (double m : in.mask) CHECK((m == 0.0 || m == 1.0));
      // Trailing mask flag: own inlet signal vs upstream proxy.
      double expected_flag =
          (pid == "p1" || pid == "p2" || pid == "p3") ? 1.0 : 0.0;
      CHECK(in.mask.back() == expected_flag);
    }
  }

  std::set<std::string> pipes(ds.pipe_ids.begin(), ds.pipe_ids.end());
  for (const auto& s : ds.samples) {
    CHECK(pipes.count(s.query.pipe_id) == 1);
    CHECK(s.query.x_rel >= 0.0);
    CHECK(s.query.x_rel <= 1.0);
    CHECK(s.query.t_rel >= 0.0);
    CHECK(s.query.t_rel <= 1.0);
    CHECK(s.target >= 0.0);
    CHECK(s.target <= 1.0);
  }

  // Split lookups agree with the scenario table.
  auto train_idx = ds.split_sample_indices("train");
  auto val_idx = ds.split_sample_indices("val");
  auto test_idx = ds.split_sample_indices("test");
  CHECK(train_idx.size() + val_idx.size() + test_idx.size() ==
        ds.samples.size());
  for (auto i : val_idx)
    CHECK(ds.scenario(ds.samples[i].scenario_id).split == "val");
}

TEST_CASE("dataset jsonl round trip is byte stable") {
  auto ds = generate_dataset(reference6(), small_config());
  auto text = dataset_to_jsonl(ds);
  auto back = dataset_from_jsonl(text, "rt", ds.topology_hash);
  CHECK(dataset_to_jsonl(back) == text);

  CHECK_THROWS_AS(dataset_from_jsonl(text, "rt", "0000000000000000"),
                  DomainError);
}

TEST_CASE("dataset loader rejects malformed input") {
  auto ds = generate_dataset(reference6(), small_config());
  auto text = dataset_to_jsonl(ds);

  auto first_newline = text.find('\n');
  auto header = Json::parse(text.substr(0, first_newline));
  auto rest = text.substr(first_newline + 1);

  auto wrong_version = header;
  wrong_version["schema_version"] = 999;
  CHECK_THROWS_AS(
      dataset_from_jsonl(wrong_version.dump() + "\n" + rest, "rt", ""),
      ParseError);

  CHECK_THROWS_AS(dataset_from_jsonl(rest, "rt", ""), ParseError);
  CHECK_THROWS_AS(dataset_from_jsonl("", "rt", ""), ParseError);
  CHECK_THROWS_AS(dataset_from_jsonl("{not json}\n", "rt", ""), ParseError);

  Json ghost{{"type", "sample"}, {"scenario", "nope"},   {"pipe", "p1"},
             {"x_rel", 0.5},     {"t_rel", 0.5},         {"target", 0.5}};
  CHECK_THROWS_AS(
      dataset_from_jsonl(text + ghost.dump() + "\n", "rt", ""), DomainError);

  Json bad_target = ghost;
  bad_target["scenario"] = ds.scenarios.front().id;
  bad_target["target"] = 1.5;
  CHECK_THROWS_AS(
      dataset_from_jsonl(text + bad_target.dump() + "\n", "rt", ""),
      ParseError);
}

TEST_CASE("samples csv lists one line per sample") {
  auto ds = generate_dataset(reference6(), small_config());
  auto csv = samples_csv(ds);
  CHECK(csv.rfind("scenario_id,split,pipe_id,x_rel,t_rel,target\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<long>(ds.samples.size()) + 1);
  CHECK(samples_csv(ds) == csv);
}

TEST_CASE("sensor noise stays clamped") {
  auto config = small_config();
  config.sensor_noise = 0.3;
  auto ds = generate_dataset(reference6(), config);
  for (const auto& s : ds.scenarios)
    for (const auto& [pid, in] : s.inputs)
      for (double v : in.u_init) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
  // Noise changes the branch inputs relative to the clean run.
  auto clean = generate_dataset(reference6(), small_config());
  bool differs = false;
  for (std::size_t i = 0; i < ds.scenarios.size() && !differs; ++i)
    differs = branch_inputs_to_json(ds.scenarios[i].inputs) !=
              branch_inputs_to_json(clean.scenarios[i].inputs);
  CHECK(differs);
}
