#include <optional>
#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "heng/dataset.hpp"
#include "heng/errors.hpp"
#include "heng/jsonio.hpp"
#include "heng/model.hpp"
#include "heng/network.hpp"
#include "heng/trainer.hpp"
#include "heng/transport.hpp"
#include "heng/version.hpp"

namespace py = pybind11;
using namespace heng;

namespace {

py::object json_to_py(const Json& j) {
  switch (j.type()) {
    case Json::value_t::null:
      return py::none();
    case Json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case Json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case Json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case Json::value_t::number_float:
      return py::float_(j.get<double>());
    case Json::value_t::string:
      return py::str(j.get<std::string>());
    case Json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case Json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items())
        out[py::str(key)] = json_to_py(value);
      return out;
    }
    default:
      throw DomainError("unsupported json value");
  }
}

std::vector<std::string> py_validate(const std::string& network_path) {
  return validate(load_topology(network_path)).violations;
}

py::dict py_simulate(const std::string& network_path,
                     const std::string& scenario_path) {
  auto topology = load_topology(network_path);
  auto scenario = load_scenario(scenario_path);
  auto result = simulate_network(topology, scenario);
  py::dict out;
  out["times_s"] = result.times_s;
  out["fields"] = result.fields;
  out["node_outlet"] = result.node_outlet;
  out["csv"] = simulation_csv(result, topology);
  return out;
}

py::dict py_generate_dataset(const std::string& network_path,
                             const std::string& sampling_config_path,
                             const std::string& out_path,
                             std::optional<std::uint64_t> seed) {
  auto topology = load_topology(network_path);
  auto config = SamplingConfig::from_json(parse_json_file(sampling_config_path),
                                          sampling_config_path);
  if (seed) config.seed = *seed;
  auto ds = generate_dataset(topology, config);
  save_dataset(ds, out_path);
  py::dict out;
  for (const char* split : {"train", "val", "test"})
    out[split] = ds.split_sample_indices(split).size();
  out["scenarios"] = ds.scenarios.size();
  out["samples"] = ds.samples.size();
  return out;
}

py::dict py_train(const std::string& dataset_path,
                  const std::string& model_config_path,
                  const std::string& out_path, bool baseline,
                  std::uint64_t seed, std::size_t threads) {
  auto ds = load_dataset(dataset_path);
  auto config_json = parse_json_file(model_config_path);

  ModelDims dims;
  dims.sensor_count = ds.sensor_count;
  dims.boundary_samples = ds.boundary_samples;
  dims.feature_dim = config_json.at("feature_dim").get<std::size_t>();
  dims.head_dim = config_json.at("head_dim").get<std::size_t>();
  dims.embed_dim = config_json.at("embed_dim").get<std::size_t>();
  dims.rounds = config_json.at("rounds").get<std::size_t>();
  dims.branch_hidden =
      config_json.at("branch_hidden").get<std::vector<std::size_t>>();
  dims.trunk_hidden =
      config_json.at("trunk_hidden").get<std::vector<std::size_t>>();

  TrainConfig train_config;
  train_config.epochs = config_json.at("epochs").get<std::size_t>();
  train_config.batch_size = config_json.at("batch_size").get<std::size_t>();
  train_config.lr = config_json.at("lr").get<double>();
  train_config.threads = threads;

  auto model = OperatorModel::create(
      baseline ? ModelKind::kVanilla : ModelKind::kGraph, ds.pipe_ids, dims);
  Rng rng(seed);
  model.init_parameters(rng);
  AdamConfig adam_config;
  adam_config.lr = train_config.lr;
  AdamState adam(model.params().size(), adam_config);

  auto result = train_model(model, adam, ds, train_config, rng);

  Checkpoint cp;
  cp.model = std::move(model);
  cp.topology_hash = ds.topology_hash;
  cp.horizon_s = ds.horizon_s;
  cp.adjacency = ds.adjacency;
  cp.adam = std::move(adam);
  cp.rng_state = rng.state();
  save_checkpoint(cp, out_path);

  py::dict out;
  out["epochs"] = result.log.size();
  out["final_train_mse"] = result.log.back().train_mse;
  out["final_val_mse"] = result.log.back().val_mse;
  out["parameter_count"] = cp.model.parameter_count().total();
  out["loss_csv"] = training_log_csv(result);
  return out;
}

py::object py_evaluate(const std::string& checkpoint_path,
                       const std::string& dataset_path,
                       const std::string& split) {
  auto cp = load_checkpoint(checkpoint_path);
  auto ds = load_dataset(dataset_path, cp.topology_hash);
  auto metrics = evaluate_model(cp.model, ds, split);
  Json j = metrics.to_json();
  j["model_kind"] = to_string(cp.model.kind());
  return json_to_py(j);
}

double py_query(const std::string& checkpoint_path,
                const std::string& network_path,
                const std::string& inputs_path, const std::string& pipe_id,
                double x_m, double t_s) {
  auto cp = load_checkpoint(checkpoint_path);
  auto topology = load_topology(network_path);
  auto hash = topology_hash(topology);
  if (hash != cp.topology_hash)
    throw DomainError("checkpoint was trained on topology " +
                      cp.topology_hash + " but the network file hashes to " +
                      hash);
  const Pipe* pipe = topology.find_pipe(pipe_id);
  if (!pipe) throw DomainError("unknown pipe \"" + pipe_id + "\"");
  if (x_m < 0.0 || x_m > pipe->length_m)
    throw DomainError("x outside [0, " + std::to_string(pipe->length_m) + "]");
  if (t_s < 0.0 || t_s > cp.horizon_s)
    throw DomainError("t outside [0, " + std::to_string(cp.horizon_s) + "]");
  auto inputs =
      branch_inputs_from_json(parse_json_file(inputs_path), inputs_path);
  TrunkQuery query{pipe_id, x_m / pipe->length_m, t_s / cp.horizon_s};
  return estimate_reported(cp.model, inputs, cp.adjacency, query);
}

double py_oracle(const std::vector<double>& initial_breaks,
                 const std::vector<double>& initial_values,
                 const std::vector<double>& boundary_times,
                 const std::vector<double>& boundary_fractions,
                 const std::vector<double>& velocity_times,
                 const std::vector<double>& velocity_values, double length_m,
                 double x_m, double t_s) {
  PiecewiseProfile initial{initial_breaks, initial_values};
  BoundarySignal boundary{"b", boundary_times, boundary_fractions};
  VelocitySchedule velocity{"pipe", velocity_times, velocity_values};
  return characteristics_oracle(initial, boundary, velocity, length_m, x_m,
                                t_s);
}

}  // namespace

PYBIND11_MODULE(_hengnet, m) {
  m.doc() = "Hydrogen-enriched natural gas transport and state estimation";
  m.attr("__version__") = kVersion;

  py::register_exception<ParseError>(m, "HengParseError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "HengDomainError", PyExc_ValueError);

  m.def("validate_network", &py_validate, py::arg("network_path"),
        "Topology invariant violations; empty means valid.");
  m.def("topology_hash", [](const std::string& path) {
    return topology_hash(load_topology(path));
  }, py::arg("network_path"));
  m.def("simulate", &py_simulate, py::arg("network_path"),
        py::arg("scenario_path"),
        "Run one scenario; returns snapshot times, per-pipe fields, and "
        "node outlet fractions.");
  m.def("mix_at_node", [](const std::vector<std::pair<double, double>>& in,
                          std::optional<std::pair<double, double>> injection) {
    std::vector<Stream> inflows;
    for (auto [mass, fraction] : in) inflows.push_back({mass, fraction});
    std::optional<Stream> inj;
    if (injection) inj = Stream{injection->first, injection->second};
    return mix_at_node(inflows, inj);
  }, py::arg("inflows"), py::arg("injection") = std::nullopt,
     "Mass-weighted mixed fraction of (mass_flow, fraction) streams.");
  m.def("characteristics_oracle", &py_oracle, py::arg("initial_breaks"),
        py::arg("initial_values"), py::arg("boundary_times"),
        py::arg("boundary_fractions"), py::arg("velocity_times"),
        py::arg("velocity_values"), py::arg("length_m"), py::arg("x_m"),
        py::arg("t_s"));
  m.def("generate_dataset", &py_generate_dataset, py::arg("network_path"),
        py::arg("sampling_config_path"), py::arg("out_path"),
        py::arg("seed") = std::nullopt,
        "Sample scenarios, simulate, and write a JSONL dataset.");
  m.def("train", &py_train, py::arg("dataset_path"),
        py::arg("model_config_path"), py::arg("out_path"),
        py::arg("baseline") = false, py::arg("seed") = 0,
        py::arg("threads") = 1,
        "Train an estimator and write a checkpoint.");
  m.def("evaluate", &py_evaluate, py::arg("checkpoint_path"),
        py::arg("dataset_path"), py::arg("split") = "test",
        "Metrics dict for one split.");
  m.def("query", &py_query, py::arg("checkpoint_path"),
        py::arg("network_path"), py::arg("branch_inputs_path"),
        py::arg("pipe"), py::arg("x_m"), py::arg("t_s"),
        "Estimated hydrogen mass fraction at a physical point.");
}
