#pragma once

#include <map>
#include <string>
#include <vector>

#include "heng/network.hpp"
#include "heng/nn.hpp"

namespace heng {

/// Per-pipe condition vector fed to that pipe's branch net. `mask` carries
/// S sensor-validity flags plus one trailing flag that is 1.0 when u_bound
/// is the pipe's own inlet signal and 0.0 when it is an upstream proxy.
struct BranchInput {
  std::vector<double> u_init;   // length S, values in [0,1]
  std::vector<double> mask;     // length S+1, entries 0 or 1
  std::vector<double> u_bound;  // length K, values in [0,1]
};

using BranchInputs = std::map<std::string, BranchInput>;  // keyed by pipe id

struct TrunkQuery {
  std::string pipe_id;
  double x_rel = 0.0;  // in [0,1]
  double t_rel = 0.0;  // in [0,1]
};

Json branch_inputs_to_json(const BranchInputs& inputs);
BranchInputs branch_inputs_from_json(const Json& j, const std::string& origin);

/// Hyperparameters shared by both model kinds. feature_dim and rounds are
/// ignored by the vanilla baseline.
struct ModelDims {
  std::size_t sensor_count = 4;      // S
  std::size_t boundary_samples = 16; // K
  std::size_t feature_dim = 32;      // d
  std::size_t head_dim = 16;         // p
  std::size_t embed_dim = 8;         // d_e
  std::size_t rounds = 2;            // R
  std::vector<std::size_t> branch_hidden = {64, 64};
  std::vector<std::size_t> trunk_hidden = {64, 64};

  std::size_t branch_input_dim() const {
    return 2 * sensor_count + 1 + boundary_samples;
  }

  Json to_json() const;
  static ModelDims from_json(const Json& j, const std::string& origin);
};

/// Mean-neighbor message passing: rounds applications of
/// h'_p = act(W_self h_p + W_nbr mean_{q in adj(p)} h_q + bias), with one
/// weight set shared across rounds and pipes. rounds == 0 is the identity.
struct Aggregator {
  std::size_t w_self_offset = 0;  // dim x dim, row-major
  std::size_t w_nbr_offset = 0;   // dim x dim, row-major
  std::size_t bias_offset = 0;    // dim
  std::size_t dim = 0;
  std::size_t rounds = 0;
  Activation activation = Activation::kTanh;

  std::size_t parameter_count() const { return 2 * dim * dim + dim; }
};

std::map<std::string, Value> aggregate(GradientTape* tape,
                                       const ParameterVector& params,
                                       const Aggregator& agg,
                                       const std::map<std::string, Value>& features,
                                       const AdjacencyMap& adjacency);

enum class ModelKind { kGraph, kVanilla };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ParameterCounts {
  std::size_t branch = 0;
  std::size_t aggregator = 0;
  std::size_t projection = 0;
  std::size_t trunk = 0;
  std::size_t embeddings = 0;
  std::size_t head_bias = 1;

  std::size_t total() const {
    return branch + aggregator + projection + trunk + embeddings + head_bias;
  }
  Json to_json() const;
};

/// The estimator. Graph kind: per-pipe branch nets (out dim d), shared
/// aggregator over the pipe adjacency, projection p x d, trunk net over
/// [embedding; x_rel; t_rel], dot-product head with scalar bias. Vanilla
/// kind: per-pipe branch nets emit p directly and combine by elementwise
/// product over all pipes; no aggregator or projection.
class OperatorModel {
 public:
  static OperatorModel create(ModelKind kind,
                              const std::vector<std::string>& pipe_ids,
                              const ModelDims& dims);

  ModelKind kind() const { return kind_; }
  const std::vector<std::string>& pipe_ids() const { return pipe_ids_; }
  const ModelDims& dims() const { return dims_; }
  const Mlp& branch_mlp(const std::string& pipe_id) const;
  const Aggregator& aggregator() const { return aggregator_; }
  const Mlp& trunk_mlp() const { return trunk_mlp_; }
  std::size_t projection_offset() const { return projection_offset_; }
  std::size_t embedding_offset(const std::string& pipe_id) const;
  std::size_t head_bias_offset() const { return head_bias_offset_; }

  ParameterVector& params() { return params_; }
  const ParameterVector& params() const { return params_; }

  /// Contiguous parameter slice of one pipe's branch net, as
  /// (offset, length). Used by relabeling tests to transplant weights.
  std::pair<std::size_t, std::size_t> branch_param_span(
      const std::string& pipe_id) const;

  ParameterCounts parameter_count() const;

  /// Glorot-uniform init of every weight matrix and bias, embeddings
  /// uniform in [-1,1], head bias zero. Draw order is fixed: branch nets in
  /// sorted pipe order, aggregator, projection, trunk, embeddings, bias.
  void init_parameters(Rng& rng);

 private:
  ModelKind kind_ = ModelKind::kGraph;
  std::vector<std::string> pipe_ids_;  // sorted
  ModelDims dims_;
  std::map<std::string, Mlp> branch_mlps_;
  Aggregator aggregator_;
  std::size_t projection_offset_ = 0;
  Mlp trunk_mlp_;
  std::map<std::string, std::size_t> embedding_offsets_;
  std::size_t head_bias_offset_ = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> branch_spans_;
  ParameterVector params_;
};

/// Everything about one scenario's conditions that the head reuses across
/// queries: per-pipe projected feature vectors (graph) or the combined
/// product vector (vanilla).
struct EncodedScenario {
  std::map<std::string, Value> per_pipe;
  Value shared;
};

std::map<std::string, Value> branch_forward(GradientTape* tape,
                                            const OperatorModel& model,
                                            const BranchInputs& inputs);

std::map<std::string, Value> aggregate(GradientTape* tape,
                                       const OperatorModel& model,
                                       const std::map<std::string, Value>& features,
                                       const AdjacencyMap& adjacency);

EncodedScenario encode(GradientTape* tape, const OperatorModel& model,
                       const BranchInputs& inputs,
                       const AdjacencyMap& adjacency);

/// Raw (unclamped) scalar estimate for one query against an encoded
/// scenario. Throws DomainError on unknown pipe or out-of-range x/t.
Value head(GradientTape* tape, const OperatorModel& model,
           const EncodedScenario& encoded, const TrunkQuery& query);

Value estimate(GradientTape* tape, const OperatorModel& model,
               const BranchInputs& inputs, const AdjacencyMap& adjacency,
               const TrunkQuery& query);

Value estimate_vanilla(GradientTape* tape, const OperatorModel& model,
                       const BranchInputs& inputs, const TrunkQuery& query);

/// Clamped to [0,1] for reporting; training and metrics use raw outputs.
double estimate_reported(const OperatorModel& model, const BranchInputs& inputs,
                         const AdjacencyMap& adjacency,
                         const TrunkQuery& query);

/// On-disk model state. Self-contained: carries the adjacency and topology
/// hash of the network it was trained against, so evaluation can refuse
/// mismatched inputs.
struct Checkpoint {
  OperatorModel model;
  std::string topology_hash;
  double horizon_s = 0.0;
  AdjacencyMap adjacency;
  AdamState adam;
  std::string rng_state;

  Json to_json() const;
  static Checkpoint from_json(const Json& j, const std::string& origin);
};

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace heng
