#ifndef QUATREC_AUTOGRAD_HPP_
#define QUATREC_AUTOGRAD_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quatrec/error.hpp"

namespace quatrec {

/// Which regularizer / update rule a parameter belongs to.
enum class ParamGroup {
  kEmbedding,  // user and item tables (E)
  kWeight,     // every other trainable array (Theta)
  kNoise,      // adversarial perturbations of the embedding tables (delta)
};

/// A named real array with a gradient slot of the same shape.
///
/// Quaternion parameters are [rows x cols] per part in the library-wide
/// [r | a | b | c] layout; real parameters are a plain [rows x cols] array.
struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kWeight;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool quaternion = true;
  /// Row 0 is reserved for padding and must stay zero.
  bool padding_row = false;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad();
  /// Writes zero into row 0 of every part (no-op without a padding row).
  void clear_padding_row();
};

/// Owns the parameters of a model. Addresses are stable for the store's lifetime.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Adds a zero-initialized parameter. Throws ContractError on a duplicate name.
  Parameter& add(std::string name, ParamGroup group, std::size_t rows, std::size_t cols,
                 bool quaternion = true, bool padding_row = false);

  bool contains(const std::string& name) const;
  /// Throws LookupError for unknown names.
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  void freeze(const std::set<std::string>& names);
  void unfreeze(const std::set<std::string>& names);
  bool is_frozen(const std::string& name) const;
  /// Names of parameters an optimizer may update, in insertion order.
  std::vector<std::string> trainable() const;
  std::set<std::string> names(ParamGroup group) const;
  std::set<std::string> all_names() const;

  void zero_grad();
  /// Copy of every gradient keyed by parameter name.
  std::map<std::string, std::vector<double>> gradients() const;

  std::size_t count() const noexcept { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  /// Total number of reals across all parameters.
  std::size_t total_size() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::string> frozen_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  std::size_t size() const;
  std::span<const double> value() const;
  /// Value of a single-element node.
  double scalar() const;
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so the
/// append order is a topological order and backward walks it in reverse.
///
/// Not thread-safe; build one tape per thread. Parameters are read through
/// pointers, so concurrent tapes may share a store as long as nobody writes it.
class Tape {
 public:
  enum class Mode { kRecord, kForwardOnly };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const noexcept { return mode_; }

  /// Drops every node but keeps the allocated storage for the next batch.
  void reset();

  /// Leaf bound to a parameter. Gradients land directly in param.grad.
  /// Repeated calls for the same parameter return the same node.
  Var param(Parameter& p);
  /// Leaf that takes no gradient.
  Var constant(std::span<const double> values);
  Var constant(double v);

  std::size_t size(Var v) const { return node(v.id).size; }
  std::span<const double> value(Var v) const;
  /// Gradient of the node after backward().
  std::span<const double> grad(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Propagates d(loss)/d(node) to every node. Parameter gradients are
  /// accumulated (+=) into Parameter::grad; zero them between batches.
  /// Throws ContractError if loss is not a single element or the tape is
  /// forward-only.
  void backward(Var loss);

  // ---- low-level interface used by operation implementations ----
  using BackwardFn = void (*)(Tape&, std::uint32_t self);

  struct Node {
    std::size_t offset = 0;
    std::size_t size = 0;
    Parameter* param = nullptr;
    std::size_t args_offset = 0;
    std::size_t args_count = 0;
    BackwardFn backward = nullptr;
    bool needs_grad = false;
  };

  /// Appends a node with `size` zero-initialized values; returns its id.
  std::uint32_t push(std::size_t size, bool needs_grad, BackwardFn fn,
                     std::span<const std::uint64_t> args);
  const Node& node(std::uint32_t id) const { return nodes_[id]; }
  std::span<double> mutable_value(std::uint32_t id);
  std::span<const double> value(std::uint32_t id) const;
  /// Gradient slot of a node; only valid during backward.
  std::span<double> grad_slot(std::uint32_t id);
  std::span<const std::uint64_t> args(std::uint32_t id) const;
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  bool recording() const noexcept { return mode_ == Mode::kRecord; }

 private:
  Mode mode_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint64_t> args_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
  bool have_grads_ = false;
};

/// Differentiable operations. Every operation computes its forward value
/// with the same kernels the inference path uses.
namespace ag {

Var add(Var x, Var y);
Var sub(Var x, Var y);
/// Element-wise product; on quaternion blocks this is the component-wise product.
Var mul(Var x, Var y);
Var scale(Var x, double s);
/// 1 - x element-wise.
Var one_minus(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var log_sigmoid(Var x);
/// Sum of all entries (single-element result).
Var sum(Var x);
/// Real inner product of two equal-length arrays.
Var dot(Var x, Var y);
/// Sum of squared entries.
Var sum_squares(Var x);
/// Sum of equally sized nodes.
Var add_n(std::span<const Var> xs);

/// Contiguous sub-range [offset, offset + count).
Var slice(Var x, std::size_t offset, std::size_t count);
/// Concatenation of nodes in order.
Var stack(std::span<const Var> xs);

/// Rows `ids` of a quaternion table with `cols` entries per part, stacked
/// item-major: each output block is one 4*cols quaternion vector. Row 0
/// (padding) is read but never receives gradient.
Var gather_rows(Var table, std::size_t rows, std::size_t cols,
                std::span<const std::uint32_t> ids);

/// Part-wise concatenation of two quaternion vectors.
Var component_concat(Var x, Var y);
/// Element-wise Hamilton product of two quaternion blocks.
Var hamilton(Var x, Var y);
/// Quaternion linear map W (x) x, W of shape [rows x cols] per part.
Var hamilton_matvec(Var w, Var x, std::size_t rows, std::size_t cols);
/// Per-part sums: a quaternion block of n entries becomes one quaternion.
Var component_sum(Var x);
/// Per-part inner products (four values).
Var component_dot(Var x, Var y);
/// Mean of the four per-part inner products (single value).
Var average_component_dot(Var x, Var y);

/// For each of `positions` stacked quaternion vectors p_k, the quaternion
/// sum_e (p_k (x) ctx)_e * scale, as a [positions x 4] block.
Var attention_logits(Var stacked, Var ctx, std::size_t positions, double scale);
/// Masked per-part softmax over the rows of a [positions x 4] block.
/// Throws EmptyHistoryError if every position is masked.
Var softmax_positions(Var logits, std::span<const std::uint8_t> mask);
/// sum_k weights_k x p_k with weights [positions x 4] and stacked p_k.
Var weighted_component_sum(Var weights, Var stacked, std::size_t positions);

}  // namespace ag

}  // namespace quatrec

#endif  // QUATREC_AUTOGRAD_HPP_
