#include "heng/nn.hpp"

#include <algorithm>
#include <cmath>

#include "heng/errors.hpp"

namespace heng {

void GradientTape::reset() {
  nodes_.clear();
  std::fill(param_grad_.begin(), param_grad_.end(), 0.0);
  swept_ = false;
}

void GradientTape::reset(std::size_t param_count) {
  nodes_.clear();
  param_grad_.assign(param_count, 0.0);
  swept_ = false;
}

std::size_t GradientTape::record(std::vector<double> value,
                                 std::function<void(GradientTape&)> back) {
  TapeNode node;
  node.adjoint.assign(value.size(), 0.0);
  node.value = std::move(value);
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void GradientTape::sweep() {
  if (swept_)
    throw DomainError("backward called twice on the same tape; reset first");
  swept_ = true;
  // Creation order is a topological order, so one reverse pass suffices.
  for (std::size_t i = nodes_.size(); i > 0; --i)
    if (nodes_[i - 1].back) nodes_[i - 1].back(*this);
}

const std::vector<double>& GradientTape::backward(
    std::size_t output_node, std::span<const double> output_gradient) {
  if (nodes_.empty())
    throw DomainError("backward without a recorded forward pass");
  if (output_node >= nodes_.size())
    throw DomainError("backward: unknown output node");
  auto& adj = nodes_[output_node].adjoint;
  if (output_gradient.size() != adj.size())
    throw DomainError("backward: output gradient length mismatch");
  for (std::size_t i = 0; i < adj.size(); ++i) adj[i] += output_gradient[i];
  sweep();
  return param_grad_;
}

const std::vector<double>& GradientTape::backward_seeded(
    std::span<const Seed> seeds) {
  if (nodes_.empty())
    throw DomainError("backward without a recorded forward pass");
  for (const auto& s : seeds) {
    auto& adj = nodes_[s.node].adjoint;
    if (adj.size() != 1)
      throw DomainError("backward_seeded: seed node is not scalar");
    adj[0] += s.gradient;
  }
  sweep();
  return param_grad_;
}

// ---------------------------------------------------------------------------

namespace {

void require_taped(const GradientTape* tape, const Value& x, const char* op) {
  if (tape && x.node == kNoNode)
    throw DomainError(std::string(op) +
                      ": taped op received an unrecorded input");
}

}  // namespace

Value make_input(GradientTape* tape, std::vector<double> v) {
  Value out;
  out.v = std::move(v);
  if (tape) out.node = tape->record(out.v);
  return out;
}

Value affine(GradientTape* tape, const ParameterVector& params,
             std::size_t w_offset, std::size_t b_offset, std::size_t in_dim,
             std::size_t out_dim, const Value& x) {
  if (x.v.size() != in_dim)
    throw DomainError("affine: input length " + std::to_string(x.v.size()) +
                      " != in_dim " + std::to_string(in_dim));
  require_taped(tape, x, "affine");
  Value out;
  out.v.resize(out_dim);
  const double* w = params.data() + w_offset;
  const double* b = params.data() + b_offset;
  for (std::size_t i = 0; i < out_dim; ++i) {
    double acc = b[i];
    const double* row = w + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * x.v[j];
    out.v[i] = acc;
  }
  if (tape) {
    out.node = tape->record(out.v);
    const ParameterVector* p = &params;
    std::size_t xid = x.node, yid = out.node;
    tape->set_back(yid, [=](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      const auto& xv = t.node_value(xid);
      auto& gx = t.node_adjoint(xid);
      const double* wp = p->data() + w_offset;
      for (std::size_t i = 0; i < out_dim; ++i) {
        double g = gy[i];
        if (g == 0.0) continue;
        t.accumulate_param(b_offset + i, g);
        const double* row = wp + i * in_dim;
        for (std::size_t j = 0; j < in_dim; ++j) {
          t.accumulate_param(w_offset + i * in_dim + j, g * xv[j]);
          gx[j] += row[j] * g;
        }
      }
    });
  }
  return out;
}

Value linear(GradientTape* tape, const ParameterVector& params,
             std::size_t w_offset, std::size_t rows, std::size_t cols,
             const Value& x) {
  if (x.v.size() != cols)
    throw DomainError("linear: input length mismatch");
  require_taped(tape, x, "linear");
  Value out;
  out.v.resize(rows);
  const double* w = params.data() + w_offset;
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    const double* row = w + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x.v[j];
    out.v[i] = acc;
  }
  if (tape) {
    out.node = tape->record(out.v);
    const ParameterVector* p = &params;
    std::size_t xid = x.node, yid = out.node;
    tape->set_back(yid, [=](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      const auto& xv = t.node_value(xid);
      auto& gx = t.node_adjoint(xid);
      const double* wp = p->data() + w_offset;
      for (std::size_t i = 0; i < rows; ++i) {
        double g = gy[i];
        if (g == 0.0) continue;
        const double* row = wp + i * cols;
        for (std::size_t j = 0; j < cols; ++j) {
          t.accumulate_param(w_offset + i * cols + j, g * xv[j]);
          gx[j] += row[j] * g;
        }
      }
    });
  }
  return out;
}

Value activate(GradientTape* tape, Activation act, const Value& x) {
  if (act == Activation::kIdentity) return x;
  require_taped(tape, x, "activate");
  Value out;
  out.v.resize(x.v.size());
  for (std::size_t i = 0; i < x.v.size(); ++i) out.v[i] = std::tanh(x.v[i]);
  if (tape) {
    out.node = tape->record(out.v);
    std::size_t xid = x.node, yid = out.node;
    tape->set_back(yid, [=](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      const auto& yv = t.node_value(yid);
      auto& gx = t.node_adjoint(xid);
      for (std::size_t i = 0; i < gy.size(); ++i)
        gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
    });
  }
  return out;
}

Value add(GradientTape* tape, const Value& a, const Value& b) {
  if (a.v.size() != b.v.size()) throw DomainError("add: length mismatch");
  require_taped(tape, a, "add");
  require_taped(tape, b, "add");
  Value out;
  out.v.resize(a.v.size());
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  if (tape) {
    out.node = tape->record(out.v);
    std::size_t aid = a.node, bid = b.node, yid = out.node;
    tape->set_back(yid, [=](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      auto& ga = t.node_adjoint(aid);
      auto& gb = t.node_adjoint(bid);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        ga[i] += gy[i];
        gb[i] += gy[i];
      }
    });
  }
  return out;
}

Value mean_stable(GradientTape* tape, const std::vector<Value>& xs,
                  std::size_t dim) {
  Value out;
  out.v.assign(dim, 0.0);
  if (!xs.empty()) {
    std::vector<double> column(xs.size());
    for (std::size_t c = 0; c < dim; ++c) {
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (xs[k].v.size() != dim)
          throw DomainError("mean_stable: element length mismatch");
        column[k] = xs[k].v[c];
      }
      // Value-sorted accumulation: the sum is invariant under any
      // reordering of the inputs, bit for bit.
      std::sort(column.begin(), column.end());
      double acc = 0.0;
      for (double v : column) acc += v;
      out.v[c] = acc / static_cast<double>(xs.size());
    }
  }
  if (tape) {
    std::vector<std::size_t> ids(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      require_taped(tape, xs[k], "mean_stable");
      ids[k] = xs[k].node;
    }
    out.node = tape->record(out.v);
    std::size_t yid = out.node;
    double scale = xs.empty() ? 0.0 : 1.0 / static_cast<double>(xs.size());
    tape->set_back(yid, [yid, ids, scale, dim](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      for (auto id : ids) {
        auto& gx = t.node_adjoint(id);
        for (std::size_t c = 0; c < dim; ++c) gx[c] += gy[c] * scale;
      }
    });
  }
  return out;
}

Value product_stable(GradientTape* tape, const std::vector<Value>& xs) {
  if (xs.empty()) throw DomainError("product_stable: empty factor list");
  std::size_t dim = xs.front().v.size();
  for (const auto& x : xs)
    if (x.v.size() != dim)
      throw DomainError("product_stable: element length mismatch");

  // Per component, multiply in value-sorted order so the result does not
  // depend on factor order.
  auto fold = [](std::vector<double>& vals) {
    std::sort(vals.begin(), vals.end());
    double acc = 1.0;
    for (double v : vals) acc *= v;
    return acc;
  };

  Value out;
  out.v.resize(dim);
  std::vector<double> column(xs.size());
  for (std::size_t c = 0; c < dim; ++c) {
    for (std::size_t k = 0; k < xs.size(); ++k) column[k] = xs[k].v[c];
    auto copy = column;
    out.v[c] = fold(copy);
  }

  if (tape) {
    std::vector<std::size_t> ids(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      require_taped(tape, xs[k], "product_stable");
      ids[k] = xs[k].node;
    }
    out.node = tape->record(out.v);
    std::size_t yid = out.node;
    tape->set_back(yid, [yid, ids, dim, fold](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      std::vector<double> others;
      others.reserve(ids.size());
      for (std::size_t k = 0; k < ids.size(); ++k) {
        auto& gx = t.node_adjoint(ids[k]);
        for (std::size_t c = 0; c < dim; ++c) {
          if (gy[c] == 0.0) continue;
          others.clear();
          for (std::size_t j = 0; j < ids.size(); ++j)
            if (j != k) others.push_back(t.node_value(ids[j])[c]);
          gx[c] += gy[c] * fold(others);
        }
      }
    });
  }
  return out;
}

Value concat(GradientTape* tape, const std::vector<Value>& xs) {
  Value out;
  std::size_t total = 0;
  for (const auto& x : xs) total += x.v.size();
  out.v.reserve(total);
  for (const auto& x : xs) out.v.insert(out.v.end(), x.v.begin(), x.v.end());
  if (tape) {
    std::vector<std::size_t> ids(xs.size());
    std::vector<std::size_t> lens(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      require_taped(tape, xs[k], "concat");
      ids[k] = xs[k].node;
      lens[k] = xs[k].v.size();
    }
    out.node = tape->record(out.v);
    std::size_t yid = out.node;
    tape->set_back(yid, [yid, ids, lens](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      std::size_t pos = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        auto& gx = t.node_adjoint(ids[k]);
        for (std::size_t i = 0; i < lens[k]; ++i) gx[i] += gy[pos + i];
        pos += lens[k];
      }
    });
  }
  return out;
}

Value param_values(GradientTape* tape, const ParameterVector& params,
                   std::size_t offset, std::size_t len) {
  Value out;
  out.v.assign(params.data() + offset, params.data() + offset + len);
  if (tape) {
    out.node = tape->record(out.v);
    std::size_t yid = out.node;
    tape->set_back(yid, [yid, offset, len](GradientTape& t) {
      const auto& gy = t.node_adjoint(yid);
      for (std::size_t i = 0; i < len; ++i)
        t.accumulate_param(offset + i, gy[i]);
    });
  }
  return out;
}

Value dot(GradientTape* tape, const Value& a, const Value& b) {
  if (a.v.size() != b.v.size()) throw DomainError("dot: length mismatch");
  require_taped(tape, a, "dot");
  require_taped(tape, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * b.v[i];
  Value out;
  out.v = {acc};
  if (tape) {
    out.node = tape->record(out.v);
    std::size_t aid = a.node, bid = b.node, yid = out.node;
    tape->set_back(yid, [=](GradientTape& t) {
      double g = t.node_adjoint(yid)[0];
      if (g == 0.0) return;
      const auto& av = t.node_value(aid);
      const auto& bv = t.node_value(bid);
      auto& ga = t.node_adjoint(aid);
      auto& gb = t.node_adjoint(bid);
      for (std::size_t i = 0; i < av.size(); ++i) {
        ga[i] += g * bv[i];
        gb[i] += g * av[i];
      }
    });
  }
  return out;
}

Value add_param_scalar(GradientTape* tape, const ParameterVector& params,
                       std::size_t offset, const Value& x) {
  if (x.v.size() != 1) throw DomainError("add_param_scalar: input not scalar");
  require_taped(tape, x, "add_param_scalar");
  Value out;
  out.v = {x.v[0] + params[offset]};
  if (tape) {
    out.node = tape->record(out.v);
    std::size_t xid = x.node, yid = out.node;
    tape->set_back(yid, [=](GradientTape& t) {
      double g = t.node_adjoint(yid)[0];
      t.node_adjoint(xid)[0] += g;
      t.accumulate_param(offset, g);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

Mlp Mlp::create(ParameterVector& params, const std::vector<std::size_t>& dims,
                Activation hidden, Activation output) {
  if (dims.size() < 2) throw DomainError("Mlp::create: need at least 2 dims");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.in_dim = dims[l];
    layer.out_dim = dims[l + 1];
    layer.w_offset = params.allocate(layer.in_dim * layer.out_dim);
    layer.b_offset = params.allocate(layer.out_dim);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    mlp.layers.push_back(layer);
  }
  return mlp;
}

Value Mlp::forward(GradientTape* tape, const ParameterVector& params,
                   const Value& input) const {
  Value h = input;
  for (const auto& layer : layers) {
    h = affine(tape, params, layer.w_offset, layer.b_offset, layer.in_dim,
               layer.out_dim, h);
    h = activate(tape, layer.activation, h);
  }
  return h;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.parameter_count();
  return n;
}

void glorot_init(const Mlp& mlp, ParameterVector& params, Rng& rng) {
  for (const auto& layer : mlp.layers) {
    double limit = std::sqrt(
        6.0 / static_cast<double>(layer.in_dim + layer.out_dim));
    for (std::size_t i = 0; i < layer.in_dim * layer.out_dim; ++i)
      params[layer.w_offset + i] = rng.uniform(-limit, limit);
    for (std::size_t i = 0; i < layer.out_dim; ++i)
      params[layer.b_offset + i] = rng.uniform(-limit, limit);
  }
}

MseResult mse_loss(std::span<const double> predictions,
                   std::span<const double> targets) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw DomainError("mse_loss: empty or mismatched vectors");
  MseResult r;
  r.gradient.resize(predictions.size());
  double n = static_cast<double>(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double d = predictions[i] - targets[i];
    r.loss += d * d;
    r.gradient[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

void adam_step(AdamState& state, ParameterVector& params,
               std::span<const double> grads) {
  if (grads.size() != params.size() || state.m_.size() != params.size())
    throw DomainError("adam_step: parameter/gradient length mismatch");
  for (double g : grads)
    if (!std::isfinite(g))
      throw DomainError("adam_step: non-finite gradient (training diverged)");
  const auto& c = state.cfg_;
  state.t_ += 1;
  double t = static_cast<double>(state.t_);
  double corr1 = 1.0 - std::pow(c.beta1, t);
  double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m_[i] = c.beta1 * state.m_[i] + (1.0 - c.beta1) * g;
    state.v_[i] = c.beta2 * state.v_[i] + (1.0 - c.beta2) * g * g;
    double m_hat = state.m_[i] / corr1;
    double v_hat = state.v_[i] / corr2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

Json AdamState::to_json() const {
  return Json{{"step", t_},
              {"lr", cfg_.lr},
              {"beta1", cfg_.beta1},
              {"beta2", cfg_.beta2},
              {"epsilon", cfg_.epsilon},
              {"m", m_},
              {"v", v_}};
}

AdamState AdamState::from_json(const Json& j, const std::string& origin) {
  AdamState s;
  try {
    s.t_ = require_key(j, "step", origin).get<std::uint64_t>();
    s.cfg_.lr = require_key(j, "lr", origin).get<double>();
    s.cfg_.beta1 = require_key(j, "beta1", origin).get<double>();
    s.cfg_.beta2 = require_key(j, "beta2", origin).get<double>();
    s.cfg_.epsilon = require_key(j, "epsilon", origin).get<double>();
    s.m_ = require_key(j, "m", origin).get<std::vector<double>>();
    s.v_ = require_key(j, "v", origin).get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (s.m_.size() != s.v_.size())
    throw ParseError(origin + ": adam moment vectors disagree in length");
  return s;
}

}  // namespace heng
