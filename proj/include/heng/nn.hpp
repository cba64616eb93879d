#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "heng/jsonio.hpp"
#include "heng/rng.hpp"

namespace heng {

enum class Activation { kIdentity, kTanh };

/// Flat storage for every trainable scalar of a model. Components allocate
/// contiguous slices and address them by offset.
class ParameterVector {
 public:
  std::size_t allocate(std::size_t n) {
    std::size_t offset = values_.size();
    values_.resize(values_.size() + n, 0.0);
    return offset;
  }

  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

/// A forward intermediate. `node` is set when the computation was recorded
/// on a tape; untaped evaluation carries only the value.
struct Value {
  std::vector<double> v;
  std::size_t node = kNoNode;
};

/// Records forward operations in evaluation order and accumulates parameter
/// gradients (aligned with the ParameterVector) on the reverse sweep.
class GradientTape {
 public:
  explicit GradientTape(std::size_t param_count = 0)
      : param_grad_(param_count, 0.0) {}

  /// Drop all recorded nodes and zero the gradient accumulators.
  void reset();
  void reset(std::size_t param_count);

  std::size_t param_count() const { return param_grad_.size(); }
  bool empty() const { return nodes_.empty(); }

  std::size_t record(std::vector<double> value,
                     std::function<void(GradientTape&)> back = {});
  /// Attach the reverse closure after recording (closures usually need
  /// their own node id).
  void set_back(std::size_t id, std::function<void(GradientTape&)> back) {
    nodes_[id].back = std::move(back);
  }
  const std::vector<double>& node_value(std::size_t id) const {
    return nodes_[id].value;
  }
  std::vector<double>& node_adjoint(std::size_t id) {
    return nodes_[id].adjoint;
  }
  void accumulate_param(std::size_t index, double g) { param_grad_[index] += g; }

  /// Reverse sweep from one output node. Returns the flat parameter
  /// gradient; every parameter gets exactly one accumulated entry.
  const std::vector<double>& backward(std::size_t output_node,
                                      std::span<const double> output_gradient);

  struct Seed {
    std::size_t node;     // scalar output node
    double gradient;
  };
  /// Reverse sweep seeded at several scalar outputs at once (one sweep,
  /// summed contributions), used for mini-batch losses.
  const std::vector<double>& backward_seeded(std::span<const Seed> seeds);

  const std::vector<double>& parameter_gradient() const { return param_grad_; }

 private:
  void sweep();

  struct TapeNode {
    std::vector<double> value;
    std::vector<double> adjoint;
    std::function<void(GradientTape&)> back;
  };
  std::vector<TapeNode> nodes_;
  std::vector<double> param_grad_;
  bool swept_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Each works with tape == nullptr (plain forward)
// or records enough state for an exact reverse sweep. Reductions over
// unordered collections (mean_stable, product_stable) accumulate in
// value-sorted order so results do not depend on element order.
// ---------------------------------------------------------------------------

Value make_input(GradientTape* tape, std::vector<double> v);

/// y = W x + b with W row-major (out_dim x in_dim) at w_offset, b at b_offset.
Value affine(GradientTape* tape, const ParameterVector& params,
             std::size_t w_offset, std::size_t b_offset, std::size_t in_dim,
             std::size_t out_dim, const Value& x);

/// y = W x, no bias.
Value linear(GradientTape* tape, const ParameterVector& params,
             std::size_t w_offset, std::size_t rows, std::size_t cols,
             const Value& x);

Value activate(GradientTape* tape, Activation act, const Value& x);

Value add(GradientTape* tape, const Value& a, const Value& b);

/// Componentwise mean over xs; the mean over an empty set is the zero vector.
Value mean_stable(GradientTape* tape, const std::vector<Value>& xs,
                  std::size_t dim);

/// Componentwise product over xs (at least one element).
Value product_stable(GradientTape* tape, const std::vector<Value>& xs);

Value concat(GradientTape* tape, const std::vector<Value>& xs);

/// A parameter slice used directly as a value (embeddings).
Value param_values(GradientTape* tape, const ParameterVector& params,
                   std::size_t offset, std::size_t len);

/// Scalar (length-1) dot product.
Value dot(GradientTape* tape, const Value& a, const Value& b);

/// y = x + params[offset], x scalar.
Value add_param_scalar(GradientTape* tape, const ParameterVector& params,
                       std::size_t offset, const Value& x);

// ---------------------------------------------------------------------------

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t w_offset = 0;
  std::size_t b_offset = 0;
  Activation activation = Activation::kIdentity;

  std::size_t parameter_count() const { return out_dim * in_dim + out_dim; }
};

struct Mlp {
  std::vector<DenseLayer> layers;

  /// Allocates parameter slices for dims[0] -> dims[1] -> ... -> dims.back()
  /// with `hidden` activation on interior layers and `output` on the last.
  static Mlp create(ParameterVector& params,
                    const std::vector<std::size_t>& dims, Activation hidden,
                    Activation output);

  Value forward(GradientTape* tape, const ParameterVector& params,
                const Value& input) const;

  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t output_dim() const { return layers.back().out_dim; }
  std::size_t parameter_count() const;
};

/// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(...)) over the layer's weights
/// and biases, drawn in allocation order.
void glorot_init(const Mlp& mlp, ParameterVector& params, Rng& rng);

struct MseResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// (1/n) sum (p_i - t_i)^2 and its gradient (2/n)(p_i - t_i).
MseResult mse_loss(std::span<const double> predictions,
                   std::span<const double> targets);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::size_t size() const { return m_.size(); }

  Json to_json() const;
  static AdamState from_json(const Json& j, const std::string& origin);

  friend void adam_step(AdamState& state, ParameterVector& params,
                        std::span<const double> grads);

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Standard Adam update with bias correction. Throws DomainError on a
/// non-finite gradient (diverged training).
void adam_step(AdamState& state, ParameterVector& params,
               std::span<const double> grads);

}  // namespace heng
