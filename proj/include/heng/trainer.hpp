#pragma once

#include "heng/dataset.hpp"
#include "heng/model.hpp"

namespace heng {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::size_t threads = 1;

  Json to_json() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;  // NaN when the dataset has no val split
};

struct TrainResult {
  std::vector<EpochStats> log;
};

/// Mini-batch Adam on the raw-output MSE. Each epoch shuffles scenarios,
/// then queries within each scenario, and slices the stream into batches,
/// so a batch spans few scenarios and each scenario's conditions are
/// encoded once per batch. Group gradients are reduced in sorted scenario
/// order, so results are byte-identical for any thread count. Throws
/// DomainError when a batch loss diverges (non-finite or implausibly
/// large).
TrainResult train_model(OperatorModel& model, AdamState& adam,
                        const Dataset& data, const TrainConfig& config,
                        Rng& rng);

/// Raw-output MSE over the given sample indices; NaN for an empty list.
double dataset_mse(const OperatorModel& model, const Dataset& data,
                   const std::vector<std::size_t>& indices);

std::string training_log_csv(const TrainResult& result);

struct EvalMetrics {
  std::string split;
  std::size_t sample_count = 0;
  double rmse = 0.0;
  double mae = 0.0;
  double max_abs_error = 0.0;
  /// RMSE of predicting the mean training target everywhere.
  double baseline_rmse = 0.0;
  ParameterCounts parameter_count;

  Json to_json() const;
};

/// Metrics over one split with predictions clamped to [0,1] (reporting
/// convention). The constant baseline uses the train-split target mean.
EvalMetrics evaluate_model(const OperatorModel& model, const Dataset& data,
                           const std::string& split);

}  // namespace heng
