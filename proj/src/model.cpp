#include "heng/model.hpp"

#include <algorithm>
#include <cmath>

#include "heng/errors.hpp"
#include "heng/version.hpp"

namespace heng {

namespace {

// Query coordinates sit on snapshot times; allow only rounding slack.
constexpr double kRelTol = 1e-9;

void check_unit_interval(const std::vector<double>& v, const std::string& what) {
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0))
      throw DomainError(what + " value " + std::to_string(x) +
                        " outside [0,1]");
}

}  // namespace

Json branch_inputs_to_json(const BranchInputs& inputs) {
  Json j = Json::object();
  for (const auto& [pipe, bi] : inputs)
    j[pipe] = Json{{"u_init", bi.u_init},
                   {"mask", bi.mask},
                   {"u_bound", bi.u_bound}};
  return j;
}

BranchInputs branch_inputs_from_json(const Json& j, const std::string& origin) {
  if (!j.is_object()) throw ParseError(origin + ": branch inputs not an object");
  BranchInputs inputs;
  for (const auto& [pipe, rec] : j.items()) {
    BranchInput bi;
    try {
      bi.u_init = require_key(rec, "u_init", origin).get<std::vector<double>>();
      bi.mask = require_key(rec, "mask", origin).get<std::vector<double>>();
      bi.u_bound =
          require_key(rec, "u_bound", origin).get<std::vector<double>>();
    } catch (const Json::exception& e) {
      throw ParseError(origin + ": pipe " + pipe + ": " + e.what());
    }
    check_unit_interval(bi.u_init, origin + ": u_init");
    check_unit_interval(bi.u_bound, origin + ": u_bound");
    for (double m : bi.mask)
      if (m != 0.0 && m != 1.0)
        throw DomainError(origin + ": mask entries must be 0 or 1");
    inputs[pipe] = std::move(bi);
  }
  return inputs;
}

Json ModelDims::to_json() const {
  return Json{{"sensor_count", sensor_count},
              {"boundary_samples", boundary_samples},
              {"feature_dim", feature_dim},
              {"head_dim", head_dim},
              {"embed_dim", embed_dim},
              {"rounds", rounds},
              {"branch_hidden", branch_hidden},
              {"trunk_hidden", trunk_hidden}};
}

ModelDims ModelDims::from_json(const Json& j, const std::string& origin) {
  ModelDims d;
  try {
    d.sensor_count = require_key(j, "sensor_count", origin).get<std::size_t>();
    d.boundary_samples =
        require_key(j, "boundary_samples", origin).get<std::size_t>();
    d.feature_dim = require_key(j, "feature_dim", origin).get<std::size_t>();
    d.head_dim = require_key(j, "head_dim", origin).get<std::size_t>();
    d.embed_dim = require_key(j, "embed_dim", origin).get<std::size_t>();
    d.rounds = require_key(j, "rounds", origin).get<std::size_t>();
    d.branch_hidden =
        require_key(j, "branch_hidden", origin).get<std::vector<std::size_t>>();
    d.trunk_hidden =
        require_key(j, "trunk_hidden", origin).get<std::vector<std::size_t>>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return d;
}

std::map<std::string, Value> aggregate(GradientTape* tape,
                                       const ParameterVector& params,
                                       const Aggregator& agg,
                                       const std::map<std::string, Value>& features,
                                       const AdjacencyMap& adjacency) {
  if (features.size() != adjacency.size())
    throw DomainError("aggregate: feature/adjacency key sets differ in size");
  for (const auto& [pipe, nbrs] : adjacency) {
    if (!features.count(pipe))
      throw DomainError("aggregate: no feature for pipe " + pipe);
    for (const auto& q : nbrs)
      if (!features.count(q))
        throw DomainError("aggregate: adjacency names unknown pipe " + q);
  }
  for (const auto& [pipe, f] : features)
    if (f.v.size() != agg.dim)
      throw DomainError("aggregate: feature for pipe " + pipe +
                        " has wrong dimension");

  std::map<std::string, Value> current = features;
  if (agg.rounds == 0) return current;

  Value bias = param_values(tape, params, agg.bias_offset, agg.dim);
  for (std::size_t r = 0; r < agg.rounds; ++r) {
    std::map<std::string, Value> next;
    for (const auto& [pipe, nbrs] : adjacency) {
      std::vector<Value> nbr_feats;
      nbr_feats.reserve(nbrs.size());
      for (const auto& q : nbrs) nbr_feats.push_back(current.at(q));
      Value m = mean_stable(tape, nbr_feats, agg.dim);
      Value s = linear(tape, params, agg.w_self_offset, agg.dim, agg.dim,
                       current.at(pipe));
      Value n = linear(tape, params, agg.w_nbr_offset, agg.dim, agg.dim, m);
      Value pre = add(tape, add(tape, s, n), bias);
      next[pipe] = activate(tape, agg.activation, pre);
    }
    current = std::move(next);
  }
  return current;
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kGraph ? "graph" : "vanilla";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "graph") return ModelKind::kGraph;
  if (s == "vanilla") return ModelKind::kVanilla;
  throw ParseError("unknown model kind '" + s + "'");
}

Json ParameterCounts::to_json() const {
  return Json{{"branch", branch},       {"aggregator", aggregator},
              {"projection", projection}, {"trunk", trunk},
              {"embeddings", embeddings}, {"head_bias", head_bias},
              {"total", total()}};
}

OperatorModel OperatorModel::create(ModelKind kind,
                                    const std::vector<std::string>& pipe_ids,
                                    const ModelDims& dims) {
  if (pipe_ids.empty()) throw DomainError("model: no pipes");
  if (dims.sensor_count == 0 || dims.boundary_samples == 0 ||
      dims.head_dim == 0 || dims.embed_dim == 0)
    throw DomainError("model: S, K, p, d_e must be positive");
  if (kind == ModelKind::kGraph && dims.feature_dim == 0)
    throw DomainError("model: feature_dim must be positive for the graph kind");

  OperatorModel m;
  m.kind_ = kind;
  m.pipe_ids_ = pipe_ids;
  std::sort(m.pipe_ids_.begin(), m.pipe_ids_.end());
  if (std::adjacent_find(m.pipe_ids_.begin(), m.pipe_ids_.end()) !=
      m.pipe_ids_.end())
    throw DomainError("model: duplicate pipe id");
  m.dims_ = dims;

  std::size_t branch_out =
      kind == ModelKind::kGraph ? dims.feature_dim : dims.head_dim;
  std::vector<std::size_t> branch_dims;
  branch_dims.push_back(dims.branch_input_dim());
  branch_dims.insert(branch_dims.end(), dims.branch_hidden.begin(),
                     dims.branch_hidden.end());
  branch_dims.push_back(branch_out);
  for (const auto& pipe : m.pipe_ids_) {
    std::size_t before = m.params_.size();
    m.branch_mlps_[pipe] = Mlp::create(m.params_, branch_dims,
                                       Activation::kTanh, Activation::kTanh);
    m.branch_spans_[pipe] = {before, m.params_.size() - before};
  }

  if (kind == ModelKind::kGraph) {
    m.aggregator_.dim = dims.feature_dim;
    m.aggregator_.rounds = dims.rounds;
    m.aggregator_.activation = Activation::kTanh;
    m.aggregator_.w_self_offset =
        m.params_.allocate(dims.feature_dim * dims.feature_dim);
    m.aggregator_.w_nbr_offset =
        m.params_.allocate(dims.feature_dim * dims.feature_dim);
    m.aggregator_.bias_offset = m.params_.allocate(dims.feature_dim);
    m.projection_offset_ =
        m.params_.allocate(dims.head_dim * dims.feature_dim);
  }

  std::vector<std::size_t> trunk_dims;
  trunk_dims.push_back(dims.embed_dim + 2);
  trunk_dims.insert(trunk_dims.end(), dims.trunk_hidden.begin(),
                    dims.trunk_hidden.end());
  trunk_dims.push_back(dims.head_dim);
  m.trunk_mlp_ = Mlp::create(m.params_, trunk_dims, Activation::kTanh,
                             Activation::kTanh);

  for (const auto& pipe : m.pipe_ids_)
    m.embedding_offsets_[pipe] = m.params_.allocate(dims.embed_dim);
  m.head_bias_offset_ = m.params_.allocate(1);

  if (m.parameter_count().total() != m.params_.size())
    throw DomainError("model: parameter accounting mismatch");
  return m;
}

const Mlp& OperatorModel::branch_mlp(const std::string& pipe_id) const {
  auto it = branch_mlps_.find(pipe_id);
  if (it == branch_mlps_.end())
    throw DomainError("model: unknown pipe " + pipe_id);
  return it->second;
}

std::size_t OperatorModel::embedding_offset(const std::string& pipe_id) const {
  auto it = embedding_offsets_.find(pipe_id);
  if (it == embedding_offsets_.end())
    throw DomainError("model: unknown pipe " + pipe_id);
  return it->second;
}

std::pair<std::size_t, std::size_t> OperatorModel::branch_param_span(
    const std::string& pipe_id) const {
  auto it = branch_spans_.find(pipe_id);
  if (it == branch_spans_.end())
    throw DomainError("model: unknown pipe " + pipe_id);
  return it->second;
}

ParameterCounts OperatorModel::parameter_count() const {
  ParameterCounts c;
  for (const auto& [pipe, mlp] : branch_mlps_) c.branch += mlp.parameter_count();
  if (kind_ == ModelKind::kGraph) {
    c.aggregator = aggregator_.parameter_count();
    c.projection = dims_.head_dim * dims_.feature_dim;
  }
  c.trunk = trunk_mlp_.parameter_count();
  c.embeddings = pipe_ids_.size() * dims_.embed_dim;
  c.head_bias = 1;
  return c;
}

void OperatorModel::init_parameters(Rng& rng) {
  for (const auto& pipe : pipe_ids_)
    glorot_init(branch_mlps_.at(pipe), params_, rng);
  if (kind_ == ModelKind::kGraph) {
    std::size_t d = dims_.feature_dim;
    double limit = std::sqrt(6.0 / static_cast<double>(2 * d));
    for (std::size_t i = 0; i < 2 * d * d + d; ++i)
      params_[aggregator_.w_self_offset + i] = rng.uniform(-limit, limit);
    double plimit =
        std::sqrt(6.0 / static_cast<double>(d + dims_.head_dim));
    for (std::size_t i = 0; i < dims_.head_dim * d; ++i)
      params_[projection_offset_ + i] = rng.uniform(-plimit, plimit);
  }
  glorot_init(trunk_mlp_, params_, rng);
  for (const auto& pipe : pipe_ids_)
    for (std::size_t i = 0; i < dims_.embed_dim; ++i)
      params_[embedding_offsets_.at(pipe) + i] = rng.uniform(-1.0, 1.0);
  params_[head_bias_offset_] = 0.0;
}

std::map<std::string, Value> branch_forward(GradientTape* tape,
                                            const OperatorModel& model,
                                            const BranchInputs& inputs) {
  if (inputs.size() != model.pipe_ids().size())
    for (const auto& [pipe, bi] : inputs)
      if (!std::binary_search(model.pipe_ids().begin(),
                              model.pipe_ids().end(), pipe))
        throw DomainError("branch_forward: input for unknown pipe " + pipe);
  const auto& dims = model.dims();
  std::map<std::string, Value> out;
  for (const auto& pipe : model.pipe_ids()) {
    auto it = inputs.find(pipe);
    if (it == inputs.end())
      throw DomainError("branch_forward: missing input for pipe " + pipe);
    const BranchInput& bi = it->second;
    if (bi.u_init.size() != dims.sensor_count ||
        bi.mask.size() != dims.sensor_count + 1 ||
        bi.u_bound.size() != dims.boundary_samples)
      throw DomainError("branch_forward: input lengths for pipe " + pipe +
                        " do not match S=" + std::to_string(dims.sensor_count) +
                        ", K=" + std::to_string(dims.boundary_samples));
    for (double m : bi.mask)
      if (m != 0.0 && m != 1.0)
        throw DomainError("branch_forward: mask entries for pipe " + pipe +
                          " must be 0 or 1");
    std::vector<double> x;
    x.reserve(dims.branch_input_dim());
    x.insert(x.end(), bi.u_init.begin(), bi.u_init.end());
    x.insert(x.end(), bi.mask.begin(), bi.mask.end());
    x.insert(x.end(), bi.u_bound.begin(), bi.u_bound.end());
    Value in = make_input(tape, std::move(x));
    out[pipe] = model.branch_mlp(pipe).forward(tape, model.params(), in);
  }
  return out;
}

std::map<std::string, Value> aggregate(GradientTape* tape,
                                       const OperatorModel& model,
                                       const std::map<std::string, Value>& features,
                                       const AdjacencyMap& adjacency) {
  if (model.kind() != ModelKind::kGraph)
    throw DomainError("aggregate: model has no aggregator (vanilla kind)");
  return aggregate(tape, model.params(), model.aggregator(), features,
                   adjacency);
}

EncodedScenario encode(GradientTape* tape, const OperatorModel& model,
                       const BranchInputs& inputs,
                       const AdjacencyMap& adjacency) {
  EncodedScenario enc;
  auto feats = branch_forward(tape, model, inputs);
  if (model.kind() == ModelKind::kGraph) {
    auto agg = aggregate(tape, model, feats, adjacency);
    for (const auto& pipe : model.pipe_ids())
      enc.per_pipe[pipe] =
          linear(tape, model.params(), model.projection_offset(),
                 model.dims().head_dim, model.dims().feature_dim,
                 agg.at(pipe));
  } else {
    std::vector<Value> outs;
    outs.reserve(model.pipe_ids().size());
    for (const auto& pipe : model.pipe_ids()) outs.push_back(feats.at(pipe));
    enc.shared = product_stable(tape, outs);
  }
  return enc;
}

Value head(GradientTape* tape, const OperatorModel& model,
           const EncodedScenario& encoded, const TrunkQuery& query) {
  if (!(query.x_rel >= -kRelTol && query.x_rel <= 1.0 + kRelTol))
    throw DomainError("head: x_rel outside [0,1]");
  if (!(query.t_rel >= -kRelTol && query.t_rel <= 1.0 + kRelTol))
    throw DomainError("head: t_rel outside [0,1]");
  std::size_t e_off = model.embedding_offset(query.pipe_id);
  Value emb = param_values(tape, model.params(), e_off, model.dims().embed_dim);
  Value xt = make_input(tape, {query.x_rel, query.t_rel});
  Value trunk_in = concat(tape, {emb, xt});
  Value tau = model.trunk_mlp().forward(tape, model.params(), trunk_in);
  const Value& b = model.kind() == ModelKind::kGraph
                       ? encoded.per_pipe.at(query.pipe_id)
                       : encoded.shared;
  Value d = dot(tape, b, tau);
  return add_param_scalar(tape, model.params(), model.head_bias_offset(), d);
}

Value estimate(GradientTape* tape, const OperatorModel& model,
               const BranchInputs& inputs, const AdjacencyMap& adjacency,
               const TrunkQuery& query) {
  if (model.kind() != ModelKind::kGraph)
    throw DomainError("estimate: model is not the graph kind");
  EncodedScenario enc = encode(tape, model, inputs, adjacency);
  return head(tape, model, enc, query);
}

Value estimate_vanilla(GradientTape* tape, const OperatorModel& model,
                       const BranchInputs& inputs, const TrunkQuery& query) {
  if (model.kind() != ModelKind::kVanilla)
    throw DomainError("estimate_vanilla: model is not the vanilla kind");
  EncodedScenario enc = encode(tape, model, inputs, {});
  return head(tape, model, enc, query);
}

double estimate_reported(const OperatorModel& model, const BranchInputs& inputs,
                         const AdjacencyMap& adjacency,
                         const TrunkQuery& query) {
  Value w = model.kind() == ModelKind::kGraph
                ? estimate(nullptr, model, inputs, adjacency, query)
                : estimate_vanilla(nullptr, model, inputs, query);
  return std::clamp(w.v[0], 0.0, 1.0);
}

Json Checkpoint::to_json() const {
  Json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["kind"] = to_string(model.kind());
  j["pipe_ids"] = model.pipe_ids();
  j["dims"] = model.dims().to_json();
  j["topology_hash"] = topology_hash;
  j["horizon_s"] = horizon_s;
  j["adjacency"] = adjacency_to_json(adjacency);
  j["parameters"] = model.params().values();
  j["adam"] = adam.to_json();
  j["rng_state"] = rng_state;
  return j;
}

Checkpoint Checkpoint::from_json(const Json& j, const std::string& origin) {
  int version = 0;
  try {
    version = require_key(j, "schema_version", origin).get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (version != kCheckpointSchemaVersion)
    throw ParseError(origin + ": unsupported checkpoint schema version " +
                     std::to_string(version));
  Checkpoint cp;
  try {
    ModelKind kind = model_kind_from_string(
        require_key(j, "kind", origin).get<std::string>());
    auto pipe_ids =
        require_key(j, "pipe_ids", origin).get<std::vector<std::string>>();
    ModelDims dims = ModelDims::from_json(require_key(j, "dims", origin), origin);
    cp.model = OperatorModel::create(kind, pipe_ids, dims);
    auto values =
        require_key(j, "parameters", origin).get<std::vector<double>>();
    if (values.size() != cp.model.params().size())
      throw ParseError(origin + ": parameter vector length " +
                       std::to_string(values.size()) + " does not match model (" +
                       std::to_string(cp.model.params().size()) + ")");
    cp.model.params().values() = std::move(values);
    cp.topology_hash =
        require_key(j, "topology_hash", origin).get<std::string>();
    cp.horizon_s = require_key(j, "horizon_s", origin).get<double>();
    cp.adjacency =
        adjacency_from_json(require_key(j, "adjacency", origin), origin);
    cp.adam = AdamState::from_json(require_key(j, "adam", origin), origin);
    cp.rng_state = require_key(j, "rng_state", origin).get<std::string>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (cp.adam.size() != cp.model.params().size())
    throw ParseError(origin + ": optimizer state does not match parameters");
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  write_file(path, cp.to_json().dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  return Checkpoint::from_json(parse_json_file(path), path);
}

}  // namespace heng
