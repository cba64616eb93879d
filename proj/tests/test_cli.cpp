#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "heng/dataset.hpp"
#include "heng/jsonio.hpp"

// End-to-end checks of the hengnet binary: exit codes, output files, and
// reproducibility, each exercised through a real subprocess.

namespace {

namespace fs = std::filesystem;
using heng::Json;

const std::string kCli = HENG_CLI_PATH;
const std::string kDataDir = HENG_DATA_DIR;

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() /
             ("hengnet_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run(const std::string& args) {
  static int counter = 0;
  auto base = (work_dir() / ("io_" + std::to_string(counter++))).string();
  std::string cmd = kCli + " " + args + " >" + base + ".out 2>" + base + ".err";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = heng::read_file(base + ".out");
  r.err = heng::read_file(base + ".err");
  return r;
}

std::string write_temp(const std::string& name, const std::string& text) {
  auto path = (work_dir() / name).string();
  heng::write_file(path, text);
  return path;
}

heng::SamplingConfig tiny_sampling() {
  heng::SamplingConfig c;
  c.scenario_count = 6;
  c.queries_per_scenario = 8;
  c.cells_per_pipe = 12;
  c.horizon_s = 80.0;
  c.snapshot_stride = 4;
  c.sensor_count = 2;
  c.boundary_samples = 4;
  c.split_train = 0.7;
  c.split_val = 0.15;
  c.split_test = 0.15;
  c.seed = 9;
  return c;
}

Json tiny_model_config() {
  return Json{{"feature_dim", 4},  {"head_dim", 2},
              {"embed_dim", 2},    {"rounds", 1},
              {"branch_hidden", {8}}, {"trunk_hidden", {8}},
              {"epochs", 3},       {"batch_size", 32},
              {"lr", 1e-3}};
}

// One dataset + checkpoint shared by the read-only cases below; built on
// first use so the cases stay order-independent.
struct SharedArtifacts {
  std::string dataset_dir;
  std::string dataset;
  std::string checkpoint;
  std::string branch_inputs;
};

const SharedArtifacts& shared() {
  static const SharedArtifacts a = [] {
    SharedArtifacts s;
    s.dataset_dir = (work_dir() / "ds").string();
    auto config = write_temp("sampling.json", tiny_sampling().to_json().dump(2));
    auto gen = run("gen-dataset " + kDataDir + "/reference6.json " + config +
                   " --out-dir " + s.dataset_dir);
    REQUIRE(gen.code == 0);
    s.dataset = s.dataset_dir + "/dataset.jsonl";

    auto model_config = write_temp("model.json", tiny_model_config().dump(2));
    s.checkpoint = (work_dir() / "model.json.ckpt").string();
    auto train = run("train " + s.dataset + " " + model_config + " --out " +
                     s.checkpoint + " --seed 1");
    REQUIRE(train.code == 0);

    auto ds = heng::load_dataset(s.dataset);
    s.branch_inputs = write_temp(
        "inputs.json",
        heng::branch_inputs_to_json(ds.scenarios.front().inputs).dump(2));
    return s;
  }();
  return a;
}

}  // namespace

TEST_CASE("validate accepts a well-formed network") {
  auto r = run("validate " + kDataDir + "/reference6.json");
  CHECK(r.code == 0);
  CHECK(r.out.find("valid: 7 nodes, 6 pipes") != std::string::npos);
}

TEST_CASE("validate reports violations and exits 1") {
  auto topo = heng::parse_json_file(kDataDir + "/reference6.json");
  topo["pipes"][0]["length_m"] = -5.0;
  auto path = write_temp("bad_network.json", topo.dump(2));
  auto r = run("validate " + path);
  CHECK(r.code == 1);
  CHECK(r.err.find("length") != std::string::npos);
}

TEST_CASE("malformed json and missing files exit 2") {
  auto path = write_temp("broken.json", "{\"nodes\": [");
  auto broken = run("validate " + path);
  CHECK(broken.code == 2);
  CHECK(broken.err.find("error:") != std::string::npos);

  auto missing = run("validate " + (work_dir() / "nope.json").string());
  CHECK(missing.code == 2);
}

TEST_CASE("bare invocation and --help") {
  CHECK(run("").code == 2);
  auto help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(help.out.find("gen-dataset") != std::string::npos);
}

TEST_CASE("simulate writes a csv and manifest, reruns byte-identical") {
  auto out1 = (work_dir() / "sim1.csv").string();
  auto out2 = (work_dir() / "sim2.csv").string();
  auto cmd = "simulate " + kDataDir + "/y_network.json " + kDataDir +
             "/scenario_y_blend.json --out ";
  auto r = run(cmd + out1);
  CHECK(r.code == 0);
  CHECK(r.out.find("snapshots") != std::string::npos);

  auto csv = heng::read_file(out1);
  CHECK(csv.rfind("time_s,pipe_id,cell_index,x_m,fraction\n", 0) == 0);
  auto manifest = heng::parse_json_file(out1 + ".manifest.json");
  CHECK(manifest.at("command") == "simulate");
  CHECK(manifest.at("input_hashes").size() == 2);

  CHECK(run(cmd + out2).code == 0);
  CHECK(heng::read_file(out2) == csv);
}

TEST_CASE("simulate rejects an unstable time step") {
  auto scenario = heng::parse_json_file(kDataDir + "/scenario_y_blend.json");
  scenario["dt_s"] = 1e6;
  auto path = write_temp("bad_scenario.json", scenario.dump(2));
  auto r = run("simulate " + kDataDir + "/y_network.json " + path + " --out " +
               (work_dir() / "unused.csv").string());
  CHECK(r.code == 1);
  CHECK(r.err.find("CFL") != std::string::npos);
}

TEST_CASE("gen-dataset is reproducible across output directories") {
  const auto& s = shared();
  auto second = (work_dir() / "ds2").string();
  auto config = write_temp("sampling2.json", tiny_sampling().to_json().dump(2));
  auto r = run("gen-dataset " + kDataDir + "/reference6.json " + config +
               " --out-dir " + second);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("train: ") != std::string::npos);

  CHECK(heng::read_file(s.dataset) ==
        heng::read_file(second + "/dataset.jsonl"));
  CHECK(heng::read_file(s.dataset_dir + "/samples.csv") ==
        heng::read_file(second + "/samples.csv"));
  CHECK(fs::exists(second + "/manifest.json"));
}

TEST_CASE("train writes checkpoint, loss log, and manifest") {
  const auto& s = shared();
  CHECK(fs::exists(s.checkpoint));
  CHECK(fs::exists(s.checkpoint + ".manifest.json"));
  auto loss = heng::read_file(s.checkpoint + ".loss.csv");
  CHECK(loss.rfind("epoch,train_mse,val_mse\n", 0) == 0);

  auto cp = heng::parse_json_file(s.checkpoint);
  CHECK(cp.at("kind") == "graph");
}

TEST_CASE("train --baseline produces a vanilla checkpoint") {
  const auto& s = shared();
  auto model_config = write_temp("model_v.json", tiny_model_config().dump(2));
  auto out = (work_dir() / "vanilla.ckpt").string();
  auto r = run("train " + s.dataset + " " + model_config + " --out " + out +
               " --baseline --seed 1");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("vanilla") != std::string::npos);
  CHECK(heng::parse_json_file(out).at("kind") == "vanilla");
}

TEST_CASE("train reports divergence as a domain error") {
  const auto& s = shared();
  auto config = tiny_model_config();
  config["lr"] = 1e3;
  config["epochs"] = 30;
  auto path = write_temp("model_hot.json", config.dump(2));
  auto r = run("train " + s.dataset + " " + path + " --out " +
               (work_dir() / "hot.ckpt").string() + " --seed 1");
  CHECK(r.code == 1);
  CHECK(r.err.find("diverged") != std::string::npos);
}

TEST_CASE("eval prints metrics json") {
  const auto& s = shared();
  auto out = (work_dir() / "metrics.json").string();
  auto r = run("eval " + s.checkpoint + " " + s.dataset + " --split val --out " +
               out);
  REQUIRE(r.code == 0);
  auto j = Json::parse(r.out);
  CHECK(j.at("split") == "val");
  CHECK(j.at("model_kind") == "graph");
  CHECK(j.at("rmse").get<double>() >= 0.0);
  CHECK(j.at("baseline_rmse").get<double>() > 0.0);
  CHECK(j.at("parameter_count").contains("total"));
  CHECK(heng::parse_json_file(out) == j);
}

TEST_CASE("eval refuses a dataset from another network") {
  const auto& s = shared();
  auto config = tiny_sampling();
  config.scenario_count = 2;
  auto path = write_temp("sampling_y.json", config.to_json().dump(2));
  auto dir = (work_dir() / "ds_y").string();
  REQUIRE(run("gen-dataset " + kDataDir + "/y_network.json " + path +
              " --out-dir " + dir).code == 0);
  auto r = run("eval " + s.checkpoint + " " + dir + "/dataset.jsonl");
  CHECK(r.code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("query estimates a fraction at a physical point") {
  const auto& s = shared();
  auto cmd = "query " + s.checkpoint + " " + kDataDir + "/reference6.json " +
             s.branch_inputs;
  auto r = run(cmd + " --pipe p4 --x 60 --t 40");
  REQUIRE(r.code == 0);
  double w = std::stod(r.out);
  CHECK(w >= 0.0);
  CHECK(w <= 1.0);

  CHECK(run(cmd + " --pipe p4 --x 200 --t 40").code == 1);
  CHECK(run(cmd + " --pipe p4 --x 60 --t 1e6").code == 1);
  auto ghost = run(cmd + " --pipe p9 --x 60 --t 40");
  CHECK(ghost.code == 1);
  CHECK(ghost.err.find("unknown pipe") != std::string::npos);
}

TEST_CASE("query rejects a mismatched network file") {
  const auto& s = shared();
  auto r = run("query " + s.checkpoint + " " + kDataDir + "/y_network.json " +
               s.branch_inputs + " --pipe p4 --x 60 --t 40");
  CHECK(r.code == 1);
  CHECK(r.err.find("topology") != std::string::npos);
}
