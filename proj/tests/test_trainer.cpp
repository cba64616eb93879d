#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "heng/dataset.hpp"
#include "heng/errors.hpp"
#include "heng/network.hpp"
#include "heng/trainer.hpp"

using namespace heng;

namespace {

const std::string kDataDir = HENG_DATA_DIR;

ModelDims tiny_dims() {
  ModelDims d;
  d.sensor_count = 2;
  d.boundary_samples = 4;
  d.feature_dim = 4;
  d.head_dim = 2;
  d.embed_dim = 2;
  d.rounds = 1;
  d.branch_hidden = {8};
  d.trunk_hidden = {8};
  return d;
}

Dataset tiny_dataset(std::size_t scenarios = 6, double train = 0.7,
                     double val = 0.15, double test = 0.15) {
  SamplingConfig c;
  c.scenario_count = scenarios;
  c.queries_per_scenario = 16;
  c.cells_per_pipe = 12;
  c.horizon_s = 80.0;
  c.snapshot_stride = 4;
  c.sensor_count = 2;
  c.boundary_samples = 4;
  c.seed = 5;
  c.split_train = train;
  c.split_val = val;
  c.split_test = test;
  return generate_dataset(load_topology(kDataDir + "/reference6.json"), c);
}

OperatorModel fresh_model(const Dataset& ds, std::uint64_t seed,
                          ModelKind kind = ModelKind::kGraph) {
  auto dims = tiny_dims();
  auto model = OperatorModel::create(kind, ds.pipe_ids, dims);
  Rng rng(seed);
  model.init_parameters(rng);
  return model;
}

}  // namespace

TEST_CASE("training reduces the loss") {
  auto ds = tiny_dataset();
  auto model = fresh_model(ds, 1);
  AdamState adam(model.params().size(), AdamConfig{});
  TrainConfig config;
  config.epochs = 30;
  config.batch_size = 32;
  Rng rng(2);

  auto result = train_model(model, adam, ds, config, rng);
  REQUIRE(result.log.size() == 30);
  CHECK(result.log.front().epoch == 1);
  CHECK(result.log.back().epoch == 30);
  CHECK(result.log.back().train_mse < 0.5 * result.log.front().train_mse);
  CHECK(std::isfinite(result.log.back().val_mse));
  CHECK(adam.step_count() > 0);
}

TEST_CASE("training is deterministic across thread counts") {
  auto ds = tiny_dataset();
  TrainConfig config;
  config.epochs = 4;
  config.batch_size = 24;

  auto run = [&](std::size_t threads) {
    auto model = fresh_model(ds, 11);
    AdamState adam(model.params().size(), AdamConfig{});
    auto cfg = config;
    cfg.threads = threads;
    Rng rng(3);
    auto result = train_model(model, adam, ds, cfg, rng);
    return std::pair{model.params().values(), training_log_csv(result)};
  };

  auto [params1, log1] = run(1);
  auto [params2, log2] = run(2);
  auto [params4, log4] = run(4);
  CHECK(params1 == params2);
  CHECK(params1 == params4);
  CHECK(log1 == log2);
  CHECK(log1 == log4);
}

TEST_CASE("oversized learning rate trips the divergence guard") {
  auto ds = tiny_dataset();
  auto model = fresh_model(ds, 1);
  AdamConfig ac;
  ac.lr = 1e3;
  AdamState adam(model.params().size(), ac);
  TrainConfig config;
  config.epochs = 50;
  config.batch_size = 32;
  config.lr = 1e3;
  Rng rng(2);
  CHECK_THROWS_WITH_AS(train_model(model, adam, ds, config, rng),
                       doctest::Contains("diverged"), DomainError);
}

TEST_CASE("train model guards its inputs") {
  auto ds = tiny_dataset();
  auto model = fresh_model(ds, 1);
  AdamState adam(model.params().size(), AdamConfig{});
  Rng rng(2);

  TrainConfig zero_batch;
  zero_batch.batch_size = 0;
  CHECK_THROWS_AS(train_model(model, adam, ds, zero_batch, rng), DomainError);

  AdamState wrong(3, AdamConfig{});
  CHECK_THROWS_AS(train_model(model, wrong, ds, TrainConfig{}, rng),
                  DomainError);

  auto wrong_dims = tiny_dims();
  wrong_dims.sensor_count = 3;
  auto mismatched =
      OperatorModel::create(ModelKind::kGraph, ds.pipe_ids, wrong_dims);
  AdamState adam2(mismatched.params().size(), AdamConfig{});
  CHECK_THROWS_AS(train_model(mismatched, adam2, ds, TrainConfig{}, rng),
                  DomainError);

  auto no_train = tiny_dataset(4, 0.0, 0.5, 0.5);
  auto model2 = fresh_model(no_train, 1);
  AdamState adam3(model2.params().size(), AdamConfig{});
  CHECK_THROWS_AS(train_model(model2, adam3, no_train, TrainConfig{}, rng),
                  DomainError);
}

TEST_CASE("dataset mse agrees with a manual pass") {
  auto ds = tiny_dataset();
  auto model = fresh_model(ds, 7);
  auto idx = ds.split_sample_indices("val");
  REQUIRE_FALSE(idx.empty());

  double sq = 0.0;
  for (auto i : idx) {
    const auto& s = ds.samples[i];
    auto enc = encode(nullptr, model, ds.scenario(s.scenario_id).inputs,
                      ds.adjacency);
    double d = head(nullptr, model, enc, s.query).v[0] - s.target;
    sq += d * d;
  }
  CHECK(dataset_mse(model, ds, idx) ==
        doctest::Approx(sq / static_cast<double>(idx.size())).epsilon(1e-15));
  CHECK(std::isnan(dataset_mse(model, ds, {})));
}

TEST_CASE("evaluation metrics are internally consistent") {
  auto ds = tiny_dataset();
  auto model = fresh_model(ds, 7);
  auto metrics = evaluate_model(model, ds, "test");

  CHECK(metrics.split == "test");
  CHECK(metrics.sample_count == ds.split_sample_indices("test").size());
  CHECK(metrics.mae <= metrics.rmse + 1e-12);
  CHECK(metrics.rmse <= metrics.max_abs_error + 1e-12);
  CHECK(metrics.max_abs_error <= 1.0);  // clamped predictions, targets in [0,1]
  CHECK(metrics.parameter_count.total() == model.params().size());

  // Constant baseline: RMSE of the train-target mean over the test split.
  auto train_idx = ds.split_sample_indices("train");
  double mean = 0.0;
  for (auto i : train_idx) mean += ds.samples[i].target;
  mean /= static_cast<double>(train_idx.size());
  double sq = 0.0;
  auto test_idx = ds.split_sample_indices("test");
  for (auto i : test_idx) {
    double d = mean - ds.samples[i].target;
    sq += d * d;
  }
  CHECK(metrics.baseline_rmse ==
        doctest::Approx(std::sqrt(sq / static_cast<double>(test_idx.size())))
            .epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_model(model, ds, "nope"), DomainError);
}

TEST_CASE("training log csv format") {
  TrainResult result;
  result.log.push_back({1, 0.5, 0.25});
  result.log.push_back({2, 0.125,
                        std::numeric_limits<double>::quiet_NaN()});
  auto csv = training_log_csv(result);
  CHECK(csv == "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.125,\n");
}
