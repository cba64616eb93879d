#include "heng/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "heng/errors.hpp"
#include "heng/version.hpp"

namespace heng {

SensorLayout SensorLayout::default_layout(const NetworkTopology& topology,
                                          std::size_t sensor_count) {
  SensorLayout layout;
  for (const auto& pipe : topology.pipes) {
    PipeSensors ps;
    ps.length_m = pipe.length_m;
    for (std::size_t s = 0; s < sensor_count; ++s)
      ps.positions_m.push_back(static_cast<double>(s + 1) * pipe.length_m /
                               static_cast<double>(sensor_count + 1));
    layout.pipes[pipe.id] = std::move(ps);
  }
  return layout;
}

void SamplingConfig::validate() const {
  std::string problems;
  if (scenario_count == 0) problems += "scenario_count must be positive\n";
  if (velocity_min_m_s < 0.0 || velocity_max_m_s < velocity_min_m_s)
    problems += "velocity range invalid (need 0 <= min <= max)\n";
  if (velocity_segments_min == 0 ||
      velocity_segments_max < velocity_segments_min)
    problems += "velocity segment range invalid\n";
  if (fraction_min < 0.0 || fraction_max > 1.0 || fraction_max < fraction_min)
    problems += "fraction range must lie within [0,1]\n";
  if (boundary_segments_min == 0 ||
      boundary_segments_max < boundary_segments_min)
    problems += "boundary segment range invalid\n";
  if (initial_family != "constant" && initial_family != "step" &&
      initial_family != "smooth")
    problems += "initial_family must be constant, step, or smooth\n";
  if (queries_per_scenario == 0) problems += "queries_per_scenario must be positive\n";
  if (split_train < 0.0 || split_val < 0.0 || split_test < 0.0 ||
      std::abs(split_train + split_val + split_test - 1.0) > 1e-9)
    problems += "split ratios must be nonnegative and sum to 1\n";
  if (cells_per_pipe < 2) problems += "cells_per_pipe must be >= 2\n";
  if (horizon_s <= 0.0) problems += "horizon_s must be positive\n";
  if (snapshot_stride == 0) problems += "snapshot_stride must be positive\n";
  if (courant <= 0.0 || courant > 1.0) problems += "courant must be in (0,1]\n";
  if (sensor_count == 0) problems += "sensor_count must be positive\n";
  if (boundary_samples < 2) problems += "boundary_samples must be >= 2\n";
  if (sensor_noise < 0.0) problems += "sensor_noise must be nonnegative\n";
  if (!problems.empty()) throw DomainError("sampling config:\n" + problems);
}

Json SamplingConfig::to_json() const {
  return Json{{"scenario_count", scenario_count},
              {"velocity_range_m_s", {velocity_min_m_s, velocity_max_m_s}},
              {"velocity_segments", {velocity_segments_min, velocity_segments_max}},
              {"fraction_range", {fraction_min, fraction_max}},
              {"boundary_segments", {boundary_segments_min, boundary_segments_max}},
              {"initial_family", initial_family},
              {"queries_per_scenario", queries_per_scenario},
              {"split_ratios", {split_train, split_val, split_test}},
              {"seed", seed},
              {"cells_per_pipe", cells_per_pipe},
              {"horizon_s", horizon_s},
              {"snapshot_stride", snapshot_stride},
              {"courant", courant},
              {"sensor_count", sensor_count},
              {"boundary_samples", boundary_samples},
              {"sensor_noise", sensor_noise}};
}

SamplingConfig SamplingConfig::from_json(const Json& j,
                                         const std::string& origin) {
  SamplingConfig c;
  try {
    c.scenario_count =
        require_key(j, "scenario_count", origin).get<std::size_t>();
    auto vr = require_key(j, "velocity_range_m_s", origin)
                  .get<std::vector<double>>();
    auto vs = require_key(j, "velocity_segments", origin)
                  .get<std::vector<std::size_t>>();
    auto fr = require_key(j, "fraction_range", origin).get<std::vector<double>>();
    auto bs = require_key(j, "boundary_segments", origin)
                  .get<std::vector<std::size_t>>();
    auto sr = require_key(j, "split_ratios", origin).get<std::vector<double>>();
    if (vr.size() != 2 || vs.size() != 2 || fr.size() != 2 || bs.size() != 2 ||
        sr.size() != 3)
      throw ParseError(origin + ": range fields must be [lo, hi] pairs and "
                       "split_ratios a triple");
    c.velocity_min_m_s = vr[0];
    c.velocity_max_m_s = vr[1];
    c.velocity_segments_min = vs[0];
    c.velocity_segments_max = vs[1];
    c.fraction_min = fr[0];
    c.fraction_max = fr[1];
    c.boundary_segments_min = bs[0];
    c.boundary_segments_max = bs[1];
    c.split_train = sr[0];
    c.split_val = sr[1];
    c.split_test = sr[2];
    c.initial_family =
        require_key(j, "initial_family", origin).get<std::string>();
    c.queries_per_scenario =
        require_key(j, "queries_per_scenario", origin).get<std::size_t>();
    c.seed = require_key(j, "seed", origin).get<std::uint64_t>();
    c.cells_per_pipe =
        require_key(j, "cells_per_pipe", origin).get<std::size_t>();
    c.horizon_s = require_key(j, "horizon_s", origin).get<double>();
    c.snapshot_stride =
        require_key(j, "snapshot_stride", origin).get<std::size_t>();
    c.courant = require_key(j, "courant", origin).get<double>();
    c.sensor_count = require_key(j, "sensor_count", origin).get<std::size_t>();
    c.boundary_samples =
        require_key(j, "boundary_samples", origin).get<std::size_t>();
    if (j.contains("sensor_noise")) c.sensor_noise = j["sensor_noise"].get<double>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return c;
}

namespace {

/// breakpoints [0, b1 < b2 < ...] with n-1 interior points.
std::vector<double> sample_breakpoints(Rng& rng, std::size_t segments,
                                       double horizon_s) {
  std::vector<double> bp{0.0};
  std::vector<double> interior;
  for (std::size_t i = 0; i + 1 < segments; ++i)
    interior.push_back(rng.uniform(0.0, horizon_s));
  std::sort(interior.begin(), interior.end());
  bp.insert(bp.end(), interior.begin(), interior.end());
  return bp;
}

std::size_t sample_segments(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

FractionField sample_initial_field(Rng& rng, const SamplingConfig& cfg,
                                   const std::string& pipe_id) {
  FractionField f;
  f.pipe_id = pipe_id;
  std::size_t n = cfg.cells_per_pipe;
  if (cfg.initial_family == "constant") {
    f.values.assign(n, rng.uniform(cfg.fraction_min, cfg.fraction_max));
  } else if (cfg.initial_family == "step") {
    double a = rng.uniform(cfg.fraction_min, cfg.fraction_max);
    double b = rng.uniform(cfg.fraction_min, cfg.fraction_max);
    double split = rng.uniform(0.1, 0.9);
    auto cut = static_cast<std::size_t>(split * static_cast<double>(n));
    f.values.assign(n, a);
    for (std::size_t i = cut; i < n; ++i) f.values[i] = b;
  } else {  // smooth: linear interpolation through 5 random knots
    constexpr std::size_t kKnots = 5;
    std::vector<double> knots(kKnots);
    for (auto& k : knots) k = rng.uniform(cfg.fraction_min, cfg.fraction_max);
    f.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double pos = (static_cast<double>(i) + 0.5) / static_cast<double>(n) *
                   static_cast<double>(kKnots - 1);
      auto lo = std::min(static_cast<std::size_t>(pos), kKnots - 2);
      double w = pos - static_cast<double>(lo);
      f.values[i] = std::clamp((1.0 - w) * knots[lo] + w * knots[lo + 1],
                               0.0, 1.0);
    }
  }
  return f;
}

std::string scenario_label(const std::string& hash8, std::size_t index) {
  std::ostringstream os;
  os << hash8 << "-s";
  std::string num = std::to_string(index);
  for (std::size_t i = num.size(); i < 4; ++i) os << '0';
  os << num;
  return os.str();
}

}  // namespace

std::vector<LabeledScenario> sample_scenarios(const NetworkTopology& topology,
                                              const SamplingConfig& config,
                                              Rng& rng) {
  config.validate();
  auto report = validate(topology);
  if (!report.ok()) throw DomainError(report.to_string());

  auto pipe_ids = topology.sorted_pipe_ids();
  std::vector<const Node*> controlled;
  for (const auto& node : topology.nodes)
    if (node.is_controlled()) controlled.push_back(&node);
  std::sort(controlled.begin(), controlled.end(),
            [](const Node* a, const Node* b) { return a->id < b->id; });

  std::string hash8 = topology_hash(topology).substr(0, 8);
  std::vector<LabeledScenario> out;
  out.reserve(config.scenario_count);
  for (std::size_t i = 0; i < config.scenario_count; ++i) {
    LabeledScenario ls;
    ls.id = scenario_label(hash8, i);
    Scenario& s = ls.scenario;
    s.horizon_s = config.horizon_s;
    s.snapshot_stride = static_cast<int>(config.snapshot_stride);

    // Draw order is fixed: velocities per pipe, boundaries per controlled
    // node, initial fields per pipe, all in sorted id order.
    for (const auto& pid : pipe_ids) {
      VelocitySchedule vs;
      vs.pipe_id = pid;
      auto segs = sample_segments(rng, config.velocity_segments_min,
                                  config.velocity_segments_max);
      vs.breakpoints_s = sample_breakpoints(rng, segs, config.horizon_s);
      for (std::size_t k = 0; k < segs; ++k)
        vs.velocities_m_s.push_back(
            rng.uniform(config.velocity_min_m_s, config.velocity_max_m_s));
      s.velocities[pid] = std::move(vs);
    }
    for (const Node* node : controlled) {
      BoundarySignal bs;
      bs.signal_id = *node->boundary_signal_id;
      auto segs = sample_segments(rng, config.boundary_segments_min,
                                  config.boundary_segments_max);
      bs.breakpoints_s = sample_breakpoints(rng, segs, config.horizon_s);
      for (std::size_t k = 0; k < segs; ++k)
        bs.fractions.push_back(
            rng.uniform(config.fraction_min, config.fraction_max));
      s.boundaries[bs.signal_id] = std::move(bs);
    }
    for (const auto& pid : pipe_ids)
      s.initial_fields[pid] = sample_initial_field(rng, config, pid);

    double dt = config.horizon_s / 100.0;  // fallback when nothing moves
    bool constrained = false;
    for (const auto& pid : pipe_ids) {
      double vmax = s.velocities.at(pid).max_velocity();
      if (vmax <= 0.0) continue;
      double dx = topology.find_pipe(pid)->length_m /
                  static_cast<double>(config.cells_per_pipe);
      double bound = config.courant * dx / vmax;
      dt = constrained ? std::min(dt, bound) : bound;
      constrained = true;
    }
    s.dt_s = dt;
    out.push_back(std::move(ls));
  }
  return out;
}

std::vector<LabeledScenario> sample_scenarios(const NetworkTopology& topology,
                                              const SamplingConfig& config) {
  Rng rng(config.seed);
  return sample_scenarios(topology, config, rng);
}

std::map<std::string, SensorReading> read_sensors(
    const SimulationResult& result, const SensorLayout& layout,
    std::size_t sensor_count) {
  std::map<std::string, SensorReading> out;
  for (const auto& [pid, ps] : layout.pipes) {
    auto fit = result.fields.find(pid);
    if (fit == result.fields.end())
      throw DomainError("read_sensors: layout references unknown pipe \"" +
                        pid + "\"");
    if (ps.positions_m.size() > sensor_count)
      throw DomainError("read_sensors: pipe \"" + pid + "\" has more than " +
                        std::to_string(sensor_count) + " sensors");
    const auto& initial = fit->second.at(0);
    auto n = initial.size();
    double dx = ps.length_m / static_cast<double>(n);
    SensorReading r;
    for (double x : ps.positions_m) {
      if (x < 0.0 || x > ps.length_m)
        throw DomainError("read_sensors: sensor position outside pipe \"" +
                          pid + "\"");
      auto cell = std::min(static_cast<std::size_t>(x / dx), n - 1);
      r.u_init.push_back(initial[cell]);
      r.mask.push_back(1.0);
    }
    r.u_init.resize(sensor_count, 0.0);
    r.mask.resize(sensor_count, 0.0);
    out[pid] = std::move(r);
  }
  return out;
}

std::map<std::string, std::string> upstream_signal_map(
    const NetworkTopology& topology) {
  std::map<std::string, std::string> out;
  for (const auto& pipe : topology.pipes) {
    const Node* inlet = topology.find_node(pipe.from_node);
    if (!inlet || inlet->is_controlled()) continue;
    // Breadth-first walk upstream; levels kept sorted so the nearest
    // controlled node ties break lexicographically.
    std::set<std::string> visited{inlet->id};
    std::vector<std::string> frontier{inlet->id};
    std::string found;
    while (!frontier.empty() && found.empty()) {
      std::set<std::string> parents;
      for (const auto& nid : frontier)
        for (const Pipe* in : topology.incoming(nid))
          if (!visited.count(in->from_node)) parents.insert(in->from_node);
      for (const auto& pid : parents) {
        const Node* n = topology.find_node(pid);
        if (n && n->is_controlled()) {
          found = pid;
          break;
        }
      }
      frontier.assign(parents.begin(), parents.end());
      visited.insert(parents.begin(), parents.end());
    }
    if (!found.empty())
      out[pipe.id] = *topology.find_node(found)->boundary_signal_id;
  }
  return out;
}

const ScenarioEntry& Dataset::scenario(const std::string& id) const {
  auto it = scenario_index_.find(id);
  if (it == scenario_index_.end())
    throw DomainError("dataset: unknown scenario \"" + id + "\"");
  return scenarios[it->second];
}

std::vector<std::size_t> Dataset::split_sample_indices(
    const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (scenario(samples[i].scenario_id).split == split) out.push_back(i);
  return out;
}

std::size_t Dataset::split_scenario_count(const std::string& split) const {
  std::size_t n = 0;
  for (const auto& s : scenarios)
    if (s.split == split) ++n;
  return n;
}

void Dataset::rebuild_index() {
  scenario_index_.clear();
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (!scenario_index_.emplace(scenarios[i].id, i).second)
      throw DomainError("dataset: duplicate scenario id \"" +
                        scenarios[i].id + "\"");
  }
}

Dataset generate_dataset(const NetworkTopology& topology,
                         const SamplingConfig& config) {
  Rng rng(config.seed);
  auto labeled = sample_scenarios(topology, config, rng);
  auto layout = SensorLayout::default_layout(topology, config.sensor_count);
  auto proxies = upstream_signal_map(topology);

  Dataset ds;
  ds.topology_hash = topology_hash(topology);
  ds.sensor_count = config.sensor_count;
  ds.boundary_samples = config.boundary_samples;
  ds.horizon_s = config.horizon_s;
  ds.pipe_ids = topology.sorted_pipe_ids();
  ds.adjacency = line_graph_adjacency(topology);

  auto n = labeled.size();
  auto n_train = static_cast<std::size_t>(
      std::llround(config.split_train * static_cast<double>(n)));
  auto n_val = std::min(
      static_cast<std::size_t>(
          std::llround(config.split_val * static_cast<double>(n))),
      n - n_train);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& ls = labeled[i];
    SimulationResult result = simulate_network(topology, ls.scenario);
    auto readings = read_sensors(result, layout, config.sensor_count);

    ScenarioEntry entry;
    entry.id = ls.id;
    entry.split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    for (const auto& pid : ds.pipe_ids) {
      BranchInput bi;
      auto& reading = readings.at(pid);
      bi.u_init = reading.u_init;
      bi.mask = reading.mask;
      if (config.sensor_noise > 0.0)
        for (std::size_t s = 0; s < bi.u_init.size(); ++s)
          if (bi.mask[s] == 1.0)
            bi.u_init[s] = std::clamp(
                bi.u_init[s] +
                    rng.uniform(-config.sensor_noise, config.sensor_noise),
                0.0, 1.0);

      const Node* inlet = topology.find_node(topology.find_pipe(pid)->from_node);
      std::string signal_id;
      double direct = 0.0;
      if (inlet->is_controlled()) {
        signal_id = *inlet->boundary_signal_id;
        direct = 1.0;
      } else if (auto it = proxies.find(pid); it != proxies.end()) {
        signal_id = it->second;
      }
      bi.mask.push_back(direct);
      if (signal_id.empty()) {
        bi.u_bound.assign(config.boundary_samples, 0.0);
      } else {
        const auto& signal = ls.scenario.boundaries.at(signal_id);
        for (std::size_t k = 0; k < config.boundary_samples; ++k) {
          double t = config.horizon_s * static_cast<double>(k) /
                     static_cast<double>(config.boundary_samples - 1);
          bi.u_bound.push_back(signal.at(t));
        }
      }
      entry.inputs[pid] = std::move(bi);
    }
    ds.scenarios.push_back(std::move(entry));

    for (std::size_t q = 0; q < config.queries_per_scenario; ++q) {
      SampleEntry se;
      se.scenario_id = ls.id;
      se.query.pipe_id =
          ds.pipe_ids[static_cast<std::size_t>(rng.uniform_int(ds.pipe_ids.size()))];
      se.query.x_rel = rng.uniform();
      auto si = static_cast<std::size_t>(rng.uniform_int(result.times_s.size()));
      se.query.t_rel = std::min(1.0, result.times_s[si] / config.horizon_s);
      se.target = result.value_at(se.query.pipe_id, se.query.x_rel, si);
      ds.samples.push_back(std::move(se));
    }
  }
  ds.rebuild_index();
  return ds;
}

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::ostringstream os;
  Json header{{"type", "header"},
              {"schema_version", kDatasetSchemaVersion},
              {"topology_hash", dataset.topology_hash},
              {"sensor_count", dataset.sensor_count},
              {"boundary_samples", dataset.boundary_samples},
              {"horizon_s", dataset.horizon_s},
              {"pipe_ids", dataset.pipe_ids},
              {"adjacency", adjacency_to_json(dataset.adjacency)}};
  os << header.dump() << '\n';
  for (const auto& s : dataset.scenarios) {
    Json rec{{"type", "scenario"},
             {"id", s.id},
             {"split", s.split},
             {"inputs", branch_inputs_to_json(s.inputs)}};
    os << rec.dump() << '\n';
  }
  for (const auto& s : dataset.samples) {
    Json rec{{"type", "sample"},
             {"scenario", s.scenario_id},
             {"pipe", s.query.pipe_id},
             {"x_rel", s.query.x_rel},
             {"t_rel", s.query.t_rel},
             {"target", s.target}};
    os << rec.dump() << '\n';
  }
  return os.str();
}

Dataset dataset_from_jsonl(const std::string& text, const std::string& origin,
                           const std::string& expected_topology_hash) {
  Dataset ds;
  bool have_header = false;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = origin + ":" + std::to_string(lineno);
    Json rec = parse_json_text(line, where);
    std::string type;
    try {
      type = require_key(rec, "type", where).get<std::string>();
      if (type == "header") {
        if (have_header) throw ParseError(where + ": duplicate header record");
        int version = require_key(rec, "schema_version", where).get<int>();
        if (version != kDatasetSchemaVersion)
          throw ParseError(where + ": unsupported dataset schema version " +
                           std::to_string(version));
        ds.topology_hash =
            require_key(rec, "topology_hash", where).get<std::string>();
        ds.sensor_count =
            require_key(rec, "sensor_count", where).get<std::size_t>();
        ds.boundary_samples =
            require_key(rec, "boundary_samples", where).get<std::size_t>();
        ds.horizon_s = require_key(rec, "horizon_s", where).get<double>();
        ds.pipe_ids = require_key(rec, "pipe_ids", where)
                          .get<std::vector<std::string>>();
        ds.adjacency =
            adjacency_from_json(require_key(rec, "adjacency", where), where);
        have_header = true;
      } else if (type == "scenario") {
        if (!have_header)
          throw ParseError(where + ": scenario record before header");
        ScenarioEntry e;
        e.id = require_key(rec, "id", where).get<std::string>();
        e.split = require_key(rec, "split", where).get<std::string>();
        if (e.split != "train" && e.split != "val" && e.split != "test")
          throw ParseError(where + ": unknown split \"" + e.split + "\"");
        e.inputs =
            branch_inputs_from_json(require_key(rec, "inputs", where), where);
        ds.scenarios.push_back(std::move(e));
      } else if (type == "sample") {
        if (!have_header)
          throw ParseError(where + ": sample record before header");
        SampleEntry e;
        e.scenario_id = require_key(rec, "scenario", where).get<std::string>();
        e.query.pipe_id = require_key(rec, "pipe", where).get<std::string>();
        e.query.x_rel = require_key(rec, "x_rel", where).get<double>();
        e.query.t_rel = require_key(rec, "t_rel", where).get<double>();
        e.target = require_key(rec, "target", where).get<double>();
        if (e.target < 0.0 || e.target > 1.0)
          throw ParseError(where + ": target outside [0,1]");
        ds.samples.push_back(std::move(e));
      } else {
        throw ParseError(where + ": unknown record type \"" + type + "\"");
      }
    } catch (const Json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (!have_header) throw ParseError(origin + ": missing header record");
  if (!expected_topology_hash.empty() &&
      ds.topology_hash != expected_topology_hash)
    throw DomainError(origin + ": dataset topology hash " + ds.topology_hash +
                      " does not match expected " + expected_topology_hash);
  ds.rebuild_index();
  for (const auto& s : ds.samples) ds.scenario(s.scenario_id);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  write_file(path, dataset_to_jsonl(dataset));
}

Dataset load_dataset(const std::string& path,
                     const std::string& expected_topology_hash) {
  return dataset_from_jsonl(read_file(path), path, expected_topology_hash);
}

std::string samples_csv(const Dataset& dataset) {
  std::ostringstream os;
  os << "scenario_id,split,pipe_id,x_rel,t_rel,target\n";
  for (const auto& s : dataset.samples) {
    os << s.scenario_id << ',' << dataset.scenario(s.scenario_id).split << ','
       << s.query.pipe_id << ',' << format_double(s.query.x_rel) << ','
       << format_double(s.query.t_rel) << ',' << format_double(s.target)
       << '\n';
  }
  return os.str();
}

}  // namespace heng
