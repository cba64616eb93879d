#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "heng/dataset.hpp"
#include "heng/errors.hpp"
#include "heng/model.hpp"
#include "heng/network.hpp"
#include "heng/trainer.hpp"
#include "heng/transport.hpp"
#include "heng/version.hpp"

namespace {

using namespace heng;

/// Every command that writes files leaves a manifest next to its main
/// output: command, resolved arguments, input hashes, seed, version, and
/// wall-clock duration, enough to reproduce the run.
class Manifest {
 public:
  Manifest(std::string command, Json args)
      : command_(std::move(command)),
        args_(std::move(args)),
        t0_(std::chrono::steady_clock::now()) {}

  void add_input(const std::string& label, const std::string& path) {
    input_hashes_[label] = fnv1a64_hex(read_file(path));
  }
  void set_seed(std::uint64_t seed) { seed_ = seed; }

  void write(const std::string& path) const {
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0_).count();
    Json j{{"command", command_},
           {"config", args_},
           {"input_hashes", input_hashes_},
           {"seed", seed_ ? Json(*seed_) : Json(nullptr)},
           {"tool_version", kVersion},
           {"duration_s", dt}};
    write_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  Json args_;
  Json input_hashes_ = Json::object();
  std::optional<std::uint64_t> seed_;
  std::chrono::steady_clock::time_point t0_;
};

int cmd_validate(const std::string& network_path) {
  NetworkTopology topo = load_topology(network_path);
  ValidationReport report = validate(topo);
  if (report.ok()) {
    std::cout << "valid: " << topo.nodes.size() << " nodes, "
              << topo.pipes.size() << " pipes, hash " << topology_hash(topo)
              << "\n";
    return 0;
  }
  std::cerr << report.to_string();
  return 1;
}

int cmd_simulate(const std::string& network_path,
                 const std::string& scenario_path, const std::string& out_csv) {
  Manifest manifest("simulate", Json{{"network", network_path},
                                     {"scenario", scenario_path},
                                     {"out", out_csv}});
  manifest.add_input("network", network_path);
  manifest.add_input("scenario", scenario_path);
  NetworkTopology topo = load_topology(network_path);
  Scenario scenario = load_scenario(scenario_path);
  SimulationResult result = simulate_network(topo, scenario);
  write_file(out_csv, simulation_csv(result, topo));
  manifest.write(out_csv + ".manifest.json");
  std::cout << "wrote " << out_csv << " (" << result.times_s.size()
            << " snapshots)\n";
  return 0;
}

int cmd_gen_dataset(const std::string& network_path,
                    const std::string& config_path, const std::string& out_dir,
                    std::optional<std::uint64_t> seed) {
  Manifest manifest("gen-dataset", Json{{"network", network_path},
                                        {"sampling_config", config_path},
                                        {"out_dir", out_dir}});
  manifest.add_input("network", network_path);
  manifest.add_input("sampling_config", config_path);
  NetworkTopology topo = load_topology(network_path);
  SamplingConfig config =
      SamplingConfig::from_json(parse_json_file(config_path), config_path);
  if (seed) config.seed = *seed;
  manifest.set_seed(config.seed);

  Dataset ds = generate_dataset(topo, config);
  std::filesystem::create_directories(out_dir);
  auto dir = std::filesystem::path(out_dir);
  save_dataset(ds, (dir / "dataset.jsonl").string());
  write_file((dir / "samples.csv").string(), samples_csv(ds));
  manifest.write((dir / "manifest.json").string());
  for (const char* split : {"train", "val", "test"})
    std::cout << split << ": " << ds.split_scenario_count(split)
              << " scenarios, " << ds.split_sample_indices(split).size()
              << " samples\n";
  return 0;
}

ModelDims model_dims_from_config(const Json& j, const std::string& origin,
                                 const Dataset& ds) {
  ModelDims dims;
  dims.sensor_count = ds.sensor_count;
  dims.boundary_samples = ds.boundary_samples;
  try {
    dims.feature_dim = require_key(j, "feature_dim", origin).get<std::size_t>();
    dims.head_dim = require_key(j, "head_dim", origin).get<std::size_t>();
    dims.embed_dim = require_key(j, "embed_dim", origin).get<std::size_t>();
    dims.rounds = require_key(j, "rounds", origin).get<std::size_t>();
    dims.branch_hidden =
        require_key(j, "branch_hidden", origin).get<std::vector<std::size_t>>();
    dims.trunk_hidden =
        require_key(j, "trunk_hidden", origin).get<std::vector<std::size_t>>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return dims;
}

int cmd_train(const std::string& dataset_path, const std::string& config_path,
              const std::string& out_path, bool baseline, std::uint64_t seed,
              std::size_t threads) {
  Manifest manifest("train", Json{{"dataset", dataset_path},
                                  {"model_config", config_path},
                                  {"out", out_path},
                                  {"baseline", baseline},
                                  {"threads", threads}});
  manifest.add_input("dataset", dataset_path);
  manifest.add_input("model_config", config_path);
  manifest.set_seed(seed);

  Dataset ds = load_dataset(dataset_path);
  Json config = parse_json_file(config_path);
  ModelDims dims = model_dims_from_config(config, config_path, ds);
  TrainConfig train_config;
  try {
    train_config.epochs =
        require_key(config, "epochs", config_path).get<std::size_t>();
    train_config.batch_size =
        require_key(config, "batch_size", config_path).get<std::size_t>();
    train_config.lr = require_key(config, "lr", config_path).get<double>();
  } catch (const Json::exception& e) {
    throw ParseError(config_path + ": " + e.what());
  }
  train_config.threads = threads;

  OperatorModel model = OperatorModel::create(
      baseline ? ModelKind::kVanilla : ModelKind::kGraph, ds.pipe_ids, dims);
  Rng rng(seed);
  model.init_parameters(rng);
  AdamConfig adam_config;
  adam_config.lr = train_config.lr;
  AdamState adam(model.params().size(), adam_config);

  TrainResult result = train_model(model, adam, ds, train_config, rng);
  write_file(out_path + ".loss.csv", training_log_csv(result));

  Checkpoint cp;
  cp.model = std::move(model);
  cp.topology_hash = ds.topology_hash;
  cp.horizon_s = ds.horizon_s;
  cp.adjacency = ds.adjacency;
  cp.adam = std::move(adam);
  cp.rng_state = rng.state();
  save_checkpoint(cp, out_path);
  manifest.write(out_path + ".manifest.json");

  const EpochStats& last = result.log.back();
  std::cout << "trained " << to_string(cp.model.kind()) << " model ("
            << cp.model.parameter_count().total() << " parameters), epoch "
            << last.epoch << " train mse " << format_double(last.train_mse);
  if (std::isfinite(last.val_mse))
    std::cout << ", val mse " << format_double(last.val_mse);
  std::cout << "\nwrote " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             const std::string& split, const std::string& out_path) {
  Manifest manifest("eval", Json{{"checkpoint", checkpoint_path},
                                 {"dataset", dataset_path},
                                 {"split", split},
                                 {"out", out_path}});
  manifest.add_input("checkpoint", checkpoint_path);
  manifest.add_input("dataset", dataset_path);

  Checkpoint cp = load_checkpoint(checkpoint_path);
  Dataset ds = load_dataset(dataset_path, cp.topology_hash);
  EvalMetrics metrics = evaluate_model(cp.model, ds, split);
  Json j = metrics.to_json();
  j["model_kind"] = to_string(cp.model.kind());
  std::cout << j.dump(2) << "\n";
  if (!out_path.empty()) {
    write_file(out_path, j.dump(2) + "\n");
    manifest.write(out_path + ".manifest.json");
  }
  return 0;
}

int cmd_query(const std::string& checkpoint_path, const std::string& network_path,
              const std::string& inputs_path, const std::string& pipe_id,
              double x_m, double t_s) {
  Checkpoint cp = load_checkpoint(checkpoint_path);
  NetworkTopology topo = load_topology(network_path);
  std::string hash = topology_hash(topo);
  if (hash != cp.topology_hash)
    throw DomainError("checkpoint was trained on topology " +
                      cp.topology_hash + " but the network file hashes to " +
                      hash);
  const Pipe* pipe = topo.find_pipe(pipe_id);
  if (!pipe) throw DomainError("unknown pipe \"" + pipe_id + "\"");
  if (x_m < 0.0 || x_m > pipe->length_m)
    throw DomainError("x = " + std::to_string(x_m) +
                      " outside [0, " + std::to_string(pipe->length_m) + "]");
  if (t_s < 0.0 || t_s > cp.horizon_s)
    throw DomainError("t = " + std::to_string(t_s) + " outside [0, " +
                      std::to_string(cp.horizon_s) + "]");
  BranchInputs inputs =
      branch_inputs_from_json(parse_json_file(inputs_path), inputs_path);
  TrunkQuery query{pipe_id, x_m / pipe->length_m, t_s / cp.horizon_s};
  double w = estimate_reported(cp.model, inputs, cp.adjacency, query);
  std::cout << format_double(w) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HENG pipeline transport simulator and state estimator"};
  app.require_subcommand(1);

  std::string network_path, scenario_path, config_path, dataset_path;
  std::string checkpoint_path, inputs_path, out_path, split = "test";
  std::string pipe_id;
  double x_m = 0.0, t_s = 0.0;
  bool baseline = false;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_override;
  std::size_t threads = 1;

  auto* validate_cmd = app.add_subcommand("validate", "Check a network file");
  validate_cmd->add_option("network", network_path)->required();

  auto* simulate_cmd =
      app.add_subcommand("simulate", "Run one scenario and write a CSV");
  simulate_cmd->add_option("network", network_path)->required();
  simulate_cmd->add_option("scenario", scenario_path)->required();
  simulate_cmd->add_option("--out", out_path)->required();

  auto* gen_cmd = app.add_subcommand(
      "gen-dataset", "Sample scenarios, simulate, and write a dataset");
  gen_cmd->add_option("network", network_path)->required();
  gen_cmd->add_option("sampling_config", config_path)->required();
  gen_cmd->add_option("--out-dir", out_path)->required();
  gen_cmd->add_option("--seed", seed_override,
                      "Override the config seed");

  auto* train_cmd = app.add_subcommand("train", "Train an estimator");
  train_cmd->add_option("dataset", dataset_path)->required();
  train_cmd->add_option("model_config", config_path)->required();
  train_cmd->add_option("--out", out_path)->required();
  train_cmd->add_flag("--baseline", baseline,
                      "Train the vanilla multiplicative baseline");
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--threads", threads);

  auto* eval_cmd =
      app.add_subcommand("eval", "Report metrics for a checkpoint");
  eval_cmd->add_option("checkpoint", checkpoint_path)->required();
  eval_cmd->add_option("dataset", dataset_path)->required();
  eval_cmd->add_option("--split", split);
  eval_cmd->add_option("--out", out_path);

  auto* query_cmd =
      app.add_subcommand("query", "Estimate the fraction at one point");
  query_cmd->add_option("checkpoint", checkpoint_path)->required();
  query_cmd->add_option("network", network_path)->required();
  query_cmd->add_option("branch_inputs", inputs_path)->required();
  query_cmd->add_option("--pipe", pipe_id)->required();
  query_cmd->add_option("--x", x_m, "Position in meters")->required();
  query_cmd->add_option("--t", t_s, "Time in seconds")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(network_path);
    if (simulate_cmd->parsed())
      return cmd_simulate(network_path, scenario_path, out_path);
    if (gen_cmd->parsed())
      return cmd_gen_dataset(network_path, config_path, out_path,
                             seed_override);
    if (train_cmd->parsed())
      return cmd_train(dataset_path, config_path, out_path, baseline, seed,
                       threads);
    if (eval_cmd->parsed())
      return cmd_eval(checkpoint_path, dataset_path, split, out_path);
    if (query_cmd->parsed())
      return cmd_query(checkpoint_path, network_path, inputs_path, pipe_id,
                       x_m, t_s);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
