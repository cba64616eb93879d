#include "heng/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "heng/errors.hpp"

namespace heng {

namespace {

// Raw-output squared errors cannot legitimately reach this: predictions are
// a bounded dot product plus the head bias.
constexpr double kDivergedMse = 1e5;

void check_model_matches_dataset(const OperatorModel& model,
                                 const Dataset& data) {
  if (model.dims().sensor_count != data.sensor_count ||
      model.dims().boundary_samples != data.boundary_samples)
    throw DomainError("model S/K do not match the dataset");
  if (model.pipe_ids() != data.pipe_ids)
    throw DomainError("model pipe set does not match the dataset");
}

/// One scenario group of a batch: encode once, evaluate every sample, run
/// a single seeded reverse sweep. The tape is reused across batches to
/// avoid large-allocation churn. Returns the group's squared-error sum;
/// the group gradient stays readable via tape.parameter_gradient().
double process_group(const OperatorModel& model, const Dataset& data,
                     const std::string& scenario_id,
                     const std::vector<std::size_t>& sample_indices,
                     std::size_t batch_size, GradientTape& tape) {
  tape.reset(model.params().size());
  EncodedScenario enc =
      encode(&tape, model, data.scenario(scenario_id).inputs, data.adjacency);
  std::vector<GradientTape::Seed> seeds;
  seeds.reserve(sample_indices.size());
  double sq_sum = 0.0;
  for (auto i : sample_indices) {
    const SampleEntry& s = data.samples[i];
    Value out = head(&tape, model, enc, s.query);
    double d = out.v[0] - s.target;
    sq_sum += d * d;
    seeds.push_back({out.node, 2.0 * d / static_cast<double>(batch_size)});
  }
  tape.backward_seeded(seeds);
  return sq_sum;
}

/// Training samples regrouped by scenario, in dataset order. Scenario-major
/// batches keep the per-scenario encode cost amortized over many queries;
/// sample-level shuffling would touch nearly every scenario in every batch.
std::vector<std::pair<std::string, std::vector<std::size_t>>>
scenario_blocks(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> blocks;
  for (auto i : indices) {
    const std::string& sid = data.samples[i].scenario_id;
    if (blocks.empty() || blocks.back().first != sid)
      blocks.push_back({sid, {}});
    blocks.back().second.push_back(i);
  }
  return blocks;
}

}  // namespace

Json TrainConfig::to_json() const {
  return Json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"lr", lr},
              {"threads", threads}};
}

TrainResult train_model(OperatorModel& model, AdamState& adam,
                        const Dataset& data, const TrainConfig& config,
                        Rng& rng) {
  if (config.batch_size == 0) throw DomainError("batch_size must be positive");
  check_model_matches_dataset(model, data);
  if (adam.size() != model.params().size())
    throw DomainError("optimizer state does not match the model");

  auto train_idx = data.split_sample_indices("train");
  if (train_idx.empty()) throw DomainError("dataset has no training samples");
  auto val_idx = data.split_sample_indices("val");
  auto blocks = scenario_blocks(data, train_idx);

  TrainResult result;
  std::vector<double> grad_total(model.params().size());
  std::vector<GradientTape> tapes;
  std::vector<double> sq_sums;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(blocks);
    train_idx.clear();
    for (auto& [sid, idx] : blocks) {
      rng.shuffle(idx);
      train_idx.insert(train_idx.end(), idx.begin(), idx.end());
    }
    double epoch_sq = 0.0;
    for (std::size_t start = 0; start < train_idx.size();
         start += config.batch_size) {
      auto end = std::min(start + config.batch_size, train_idx.size());
      std::map<std::string, std::vector<std::size_t>> groups;
      for (std::size_t k = start; k < end; ++k)
        groups[data.samples[train_idx[k]].scenario_id].push_back(train_idx[k]);

      std::vector<const std::pair<const std::string,
                                  std::vector<std::size_t>>*> order;
      order.reserve(groups.size());
      for (const auto& g : groups) order.push_back(&g);
      if (tapes.size() < order.size()) tapes.resize(order.size());
      sq_sums.assign(order.size(), 0.0);
      std::fill(grad_total.begin(), grad_total.end(), 0.0);

      std::size_t workers = std::min(config.threads, order.size());
      if (workers > 1) {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
          pool.emplace_back([&] {
            for (std::size_t g; (g = next.fetch_add(1)) < order.size();)
              sq_sums[g] = process_group(model, data, order[g]->first,
                                         order[g]->second, end - start,
                                         tapes[g]);
          });
        for (auto& t : pool) t.join();
        for (std::size_t g = 0; g < order.size(); ++g) {
          const auto& gg = tapes[g].parameter_gradient();
          for (std::size_t i = 0; i < grad_total.size(); ++i)
            grad_total[i] += gg[i];
        }
      } else {
        for (std::size_t g = 0; g < order.size(); ++g) {
          sq_sums[g] = process_group(model, data, order[g]->first,
                                     order[g]->second, end - start, tapes[0]);
          const auto& gg = tapes[0].parameter_gradient();
          for (std::size_t i = 0; i < grad_total.size(); ++i)
            grad_total[i] += gg[i];
        }
      }

      double batch_sq = 0.0;
      for (std::size_t g = 0; g < order.size(); ++g) batch_sq += sq_sums[g];
      double batch_mse = batch_sq / static_cast<double>(end - start);
      if (!std::isfinite(batch_mse) || batch_mse > kDivergedMse)
        throw DomainError(
            "training diverged at epoch " + std::to_string(epoch) +
            ": batch MSE " + std::to_string(batch_mse) +
            "; reduce the learning rate");
      epoch_sq += batch_sq;
      adam_step(adam, model.params(), grad_total);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = epoch_sq / static_cast<double>(train_idx.size());
    stats.val_mse = dataset_mse(model, data, val_idx);
    result.log.push_back(stats);
  }
  return result;
}

double dataset_mse(const OperatorModel& model, const Dataset& data,
                   const std::vector<std::size_t>& indices) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (auto i : indices) groups[data.samples[i].scenario_id].push_back(i);
  double sq = 0.0;
  for (const auto& [sid, idx] : groups) {
    EncodedScenario enc =
        encode(nullptr, model, data.scenario(sid).inputs, data.adjacency);
    for (auto i : idx) {
      const SampleEntry& s = data.samples[i];
      double d = head(nullptr, model, enc, s.query).v[0] - s.target;
      sq += d * d;
    }
  }
  return sq / static_cast<double>(indices.size());
}

std::string training_log_csv(const TrainResult& result) {
  std::string csv = "epoch,train_mse,val_mse\n";
  for (const auto& e : result.log) {
    csv += std::to_string(e.epoch);
    csv += ',';
    csv += format_double(e.train_mse);
    csv += ',';
    if (std::isfinite(e.val_mse)) csv += format_double(e.val_mse);
    csv += '\n';
  }
  return csv;
}

Json EvalMetrics::to_json() const {
  return Json{{"split", split},
              {"sample_count", sample_count},
              {"rmse", rmse},
              {"mae", mae},
              {"max_abs_error", max_abs_error},
              {"baseline_rmse", baseline_rmse},
              {"parameter_count", parameter_count.to_json()}};
}

EvalMetrics evaluate_model(const OperatorModel& model, const Dataset& data,
                           const std::string& split) {
  check_model_matches_dataset(model, data);
  auto idx = data.split_sample_indices(split);
  if (idx.empty())
    throw DomainError("split \"" + split + "\" has no samples");
  auto train_idx = data.split_sample_indices("train");
  if (train_idx.empty())
    throw DomainError("dataset has no training samples for the baseline");

  double mean = 0.0;
  for (auto i : train_idx) mean += data.samples[i].target;
  mean /= static_cast<double>(train_idx.size());

  EvalMetrics m;
  m.split = split;
  m.sample_count = idx.size();
  m.parameter_count = model.parameter_count();

  std::map<std::string, std::vector<std::size_t>> groups;
  for (auto i : idx) groups[data.samples[i].scenario_id].push_back(i);
  double sq = 0.0, abs_sum = 0.0, base_sq = 0.0;
  for (const auto& [sid, gidx] : groups) {
    EncodedScenario enc =
        encode(nullptr, model, data.scenario(sid).inputs, data.adjacency);
    for (auto i : gidx) {
      const SampleEntry& s = data.samples[i];
      double pred =
          std::clamp(head(nullptr, model, enc, s.query).v[0], 0.0, 1.0);
      double err = std::abs(pred - s.target);
      sq += err * err;
      abs_sum += err;
      m.max_abs_error = std::max(m.max_abs_error, err);
      base_sq += (mean - s.target) * (mean - s.target);
    }
  }
  auto n = static_cast<double>(idx.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = abs_sum / n;
  m.baseline_rmse = std::sqrt(base_sq / n);
  return m;
}

}  // namespace heng
