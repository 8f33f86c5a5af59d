#ifndef QUATREC_LAYERS_HPP_
#define QUATREC_LAYERS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quatrec/autograd.hpp"
#include "quatrec/qtensor.hpp"

namespace quatrec::layers {

// ---------------------------------------------------------------------------
// Embedding tables

/// A quaternion embedding table: `count` entities plus the padding row 0,
/// each row a quaternion vector of size `dim`.
class QEmbeddingTable {
 public:
  explicit QEmbeddingTable(Parameter& storage);

  /// Registers a zeroed table named `name` with count + 1 rows.
  static QEmbeddingTable create(ParamStore& store, const std::string& name, std::size_t count,
                                std::size_t dim, ParamGroup group = ParamGroup::kEmbedding);

  std::size_t rows() const noexcept { return param_->rows; }
  std::size_t dim() const noexcept { return kParts * param_->cols; }
  Parameter& parameter() const noexcept { return *param_; }

  /// Value copies of the requested rows. Throws LookupError if an id is out of range.
  std::vector<QTensor> lookup(std::span<const std::uint32_t> ids) const;
  QTensor row(std::uint32_t id) const;

 private:
  Parameter* param_;
};

/// Stacked rows of `table` (plus the same rows of `noise`, if given) on a tape.
Var lookup(Tape& tape, Parameter& table, std::span<const std::uint32_t> ids,
           Parameter* noise = nullptr);

/// Validity mask of an id list: 1 for real ids, 0 for the padding id 0.
std::vector<std::uint8_t> padding_mask(std::span<const std::uint32_t> ids);

// ---------------------------------------------------------------------------
// Initialization

/// Uniform in +-sqrt(6 / (in/4 + out/4)) for a quaternion weight mapping
/// quaternion size `in` to `out`.
void init_quaternion_weight(Parameter& p, std::mt19937_64& rng);
/// Uniform in +-0.1 / sqrt(d/4), used for tables and context vectors.
void init_embedding(Parameter& p, std::mt19937_64& rng);
/// Uniform in +-sqrt(6 / (cols + rows)) for a real weight.
void init_real_weight(Parameter& p, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Attention

struct AttentionNodes {
  Var encoding;  // quaternion vector, size d
  Var scores;    // [positions x 4], one quaternion per position
};

/// Personalized quaternion self-attention: logits are the Hamilton inner
/// product of every item with the user's own context, scaled by 1/sqrt(d);
/// the encoding is the score-weighted component-wise sum of the items.
AttentionNodes personalized_attention(Var stacked_items, std::size_t positions, Var user_ctx,
                                      std::span<const std::uint8_t> mask);

/// Global-context attention over hidden states followed by tanh(W (x) .).
AttentionNodes global_attention(Var stacked_hiddens, std::size_t positions, Var context,
                                Var weight, std::span<const std::uint8_t> mask);

struct AttentionResult {
  QTensor encoding;
  std::vector<Quat> scores;
};

AttentionResult personalized_attention(std::span<const QTensor> items, const QTensor& user_ctx,
                                       std::span<const std::uint8_t> mask = {});
AttentionResult global_attention(std::span<const QTensor> hiddens, const QTensor& context,
                                 const QTensor& weight, std::span<const std::uint8_t> mask = {});

// ---------------------------------------------------------------------------
// Recurrent cells

enum class CellType { kLstm, kGru };

/// Gate order: LSTM uses (forget, input, output, candidate); GRU uses
/// (update, reset, candidate) and leaves the fourth slot unused.
struct RecurrentVars {
  CellType type = CellType::kLstm;
  std::size_t cols = 0;  // d / 4
  std::array<Var, 4> input{};
  std::array<Var, 4> recurrent{};
  std::array<Var, 4> bias{};
};

/// Registers the weights of a cell under `prefix` (e.g. "short/cell/W_f").
void create_recurrent(ParamStore& store, const std::string& prefix, CellType type,
                      std::size_t dim);
std::size_t gate_count(CellType type) noexcept;
std::string gate_name(CellType type, std::size_t gate);
RecurrentVars bind_recurrent(Tape& tape, ParamStore& store, const std::string& prefix,
                             CellType type, std::size_t dim);

struct QLstmNodes {
  Var h;
  Var c;
};

QLstmNodes qlstm_step(Var x, QLstmNodes state, const RecurrentVars& w);
/// h_t = (1 - z) x h_{t-1} + z x n, n = tanh(W_n (x) x + R_n (x) (r x h_{t-1}) + g_n).
Var qgru_step(Var x, Var h, const RecurrentVars& w);

struct QLSTMState {
  QTensor h;
  QTensor c;
};

/// Value-level weights for one cell: gates in the order of RecurrentVars.
struct RecurrentWeights {
  CellType type = CellType::kLstm;
  std::array<QTensor, 4> input;
  std::array<QTensor, 4> recurrent;
  std::array<QTensor, 4> bias;
};

QLSTMState qlstm_step(const QTensor& x, const QLSTMState& state, const RecurrentWeights& w);
QTensor qgru_step(const QTensor& x, const QTensor& h, const RecurrentWeights& w);

// ---------------------------------------------------------------------------
// Fusion gate

struct GateVars {
  std::size_t cols = 0;
  Var w_g1;  // [k x 2k] quaternion
  Var w_g2;  // [k x k]
  Var w_g3;  // [k x k]
  Var bias;  // quaternion vector
  Var w_o1;  // real, length d
  Var w_o2;  // real, length d
};

/// The user-dependent part of the gate pre-activation:
/// (W_g1 (x) [u_long, u_short] + W_g2 (x) u_ctx) + bias.
Var gate_user_term(const GateVars& g, Var u_long, Var u_short, Var u_ctx);

struct FusionNodes {
  Var score;
  Var gamma;
};

/// gamma = sigmoid(user_term + W_g3 (x) p_ctx);
/// score = W_o1 . [gamma x (u_long x p_long)] + W_o2 . [(1 - gamma) x (u_short x p_short)].
FusionNodes fusion_score(const GateVars& g, Var user_term, Var u_long, Var u_short, Var p_long,
                         Var p_short, Var p_ctx);

struct GateWeights {
  QTensor w_g1;
  QTensor w_g2;
  QTensor w_g3;
  QTensor bias;
  std::vector<double> w_o1;
  std::vector<double> w_o2;
};

struct FusionResult {
  double score = 0;
  QTensor gamma;
};

FusionResult fusion_gate(const QTensor& u_long, const QTensor& u_short, const QTensor& u_ctx,
                         const QTensor& p_long, const QTensor& p_short, const QTensor& p_ctx,
                         const GateWeights& gw);

/// Plain re-evaluation of fusion_score from precomputed values, performing
/// the same floating-point operations in the same order. `item_term` is
/// W_g3 (x) p_ctx.
double fusion_score_values(std::span<const double> user_term, std::span<const double> item_term,
                           std::span<const double> u_long, std::span<const double> u_short,
                           std::span<const double> p_long, std::span<const double> p_short,
                           std::span<const double> w_o1, std::span<const double> w_o2);

}  // namespace quatrec::layers

#endif  // QUATREC_LAYERS_HPP_
