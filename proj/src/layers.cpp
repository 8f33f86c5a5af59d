#include "quatrec/layers.hpp"

#include <cmath>

namespace quatrec::layers {

QEmbeddingTable::QEmbeddingTable(Parameter& storage) : param_(&storage) {
  if (!storage.quaternion || !storage.padding_row)
    throw ContractError("QEmbeddingTable: " + storage.name +
                        " is not a quaternion table with a padding row");
}

QEmbeddingTable QEmbeddingTable::create(ParamStore& store, const std::string& name,
                                        std::size_t count, std::size_t dim, ParamGroup group) {
  if (dim == 0 || dim % kParts != 0)
    throw DimensionError("embedding size " + std::to_string(dim) + " is not divisible by 4");
  return QEmbeddingTable(store.add(name, group, count + 1, dim / kParts, true, true));
}

QTensor QEmbeddingTable::row(std::uint32_t id) const {
  if (id >= rows())
    throw LookupError(param_->name + ": id " + std::to_string(id) + " outside [0, " +
                      std::to_string(rows()) + ")");
  const std::size_t k = param_->cols;
  QTensor out(k);
  for (std::size_t p = 0; p < kParts; ++p) {
    auto src = param_->value.begin() + static_cast<std::ptrdiff_t>(p * rows() * k + id * k);
    std::copy_n(src, k, out.part(static_cast<Part>(p)).begin());
  }
  return out;
}

std::vector<QTensor> QEmbeddingTable::lookup(std::span<const std::uint32_t> ids) const {
  std::vector<QTensor> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(row(id));
  return out;
}

Var lookup(Tape& tape, Parameter& table, std::span<const std::uint32_t> ids, Parameter* noise) {
  Var rows = ag::gather_rows(tape.param(table), table.rows, table.cols, ids);
  if (!noise) return rows;
  return ag::add(rows, ag::gather_rows(tape.param(*noise), noise->rows, noise->cols, ids));
}

std::vector<std::uint8_t> padding_mask(std::span<const std::uint32_t> ids) {
  std::vector<std::uint8_t> mask(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = ids[i] != 0 ? 1 : 0;
  return mask;
}

// ---------------------------------------------------------------------------

namespace {
void fill_uniform(Parameter& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value) v = dist(rng);
  p.clear_padding_row();
}
}  // namespace

void init_quaternion_weight(Parameter& p, std::mt19937_64& rng) {
  fill_uniform(p, std::sqrt(6.0 / static_cast<double>(p.cols + p.rows)), rng);
}

void init_embedding(Parameter& p, std::mt19937_64& rng) {
  fill_uniform(p, 0.1 / std::sqrt(static_cast<double>(p.cols)), rng);
}

void init_real_weight(Parameter& p, std::mt19937_64& rng) {
  fill_uniform(p, std::sqrt(6.0 / static_cast<double>(p.cols + p.rows)), rng);
}

// ---------------------------------------------------------------------------

AttentionNodes personalized_attention(Var stacked_items, std::size_t positions, Var user_ctx,
                                      std::span<const std::uint8_t> mask) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(user_ctx.size()));
  Var logits = ag::attention_logits(stacked_items, user_ctx, positions, scale);
  Var scores = ag::softmax_positions(logits, mask);
  return {ag::weighted_component_sum(scores, stacked_items, positions), scores};
}

AttentionNodes global_attention(Var stacked_hiddens, std::size_t positions, Var context,
                                Var weight, std::span<const std::uint8_t> mask) {
  AttentionNodes pooled = personalized_attention(stacked_hiddens, positions, context, mask);
  const std::size_t k = context.size() / kParts;
  pooled.encoding = ag::tanh(ag::hamilton_matvec(weight, pooled.encoding, k, k));
  return pooled;
}

namespace {

void require_vectors(std::span<const QTensor> xs, const QTensor& ctx, const char* op) {
  if (xs.empty()) throw EmptyHistoryError(std::string(op) + ": empty input list");
  for (const auto& x : xs)
    if (x.rows() != 1 || x.cols() != ctx.cols() || !ctx.is_vector())
      throw DimensionError(std::string(op) + ": item shape " + x.shape_string() +
                           " vs context " + ctx.shape_string());
}

Var stack_constants(Tape& t, std::span<const QTensor> xs) {
  std::vector<double> flat;
  for (const auto& x : xs) flat.insert(flat.end(), x.flat().begin(), x.flat().end());
  return t.constant(flat);
}

std::vector<Quat> to_quats(std::span<const double> scores) {
  std::vector<Quat> out(scores.size() / kParts);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = {scores[k * kParts], scores[k * kParts + 1], scores[k * kParts + 2],
              scores[k * kParts + 3]};
  return out;
}

}  // namespace

AttentionResult personalized_attention(std::span<const QTensor> items, const QTensor& user_ctx,
                                       std::span<const std::uint8_t> mask) {
  require_vectors(items, user_ctx, "personalized_attention");
  Tape t(Tape::Mode::kForwardOnly);
  auto nodes = personalized_attention(stack_constants(t, items), items.size(),
                                      t.constant(user_ctx.flat()), mask);
  return {QTensor::from_concat(nodes.encoding.value()), to_quats(nodes.scores.value())};
}

AttentionResult global_attention(std::span<const QTensor> hiddens, const QTensor& context,
                                 const QTensor& weight, std::span<const std::uint8_t> mask) {
  require_vectors(hiddens, context, "global_attention");
  if (weight.rows() != context.cols() || weight.cols() != context.cols())
    throw DimensionError("global_attention: weight " + weight.shape_string() +
                         " does not map context " + context.shape_string());
  Tape t(Tape::Mode::kForwardOnly);
  auto nodes = global_attention(stack_constants(t, hiddens), hiddens.size(),
                                t.constant(context.flat()), t.constant(weight.flat()), mask);
  return {QTensor::from_concat(nodes.encoding.value()), to_quats(nodes.scores.value())};
}

// ---------------------------------------------------------------------------

std::size_t gate_count(CellType type) noexcept { return type == CellType::kLstm ? 4 : 3; }

std::string gate_name(CellType type, std::size_t gate) {
  static const char* lstm[] = {"f", "i", "o", "c"};
  static const char* gru[] = {"z", "r", "n", "-"};
  return type == CellType::kLstm ? lstm[gate] : gru[gate];
}

void create_recurrent(ParamStore& store, const std::string& prefix, CellType type,
                      std::size_t dim) {
  const std::size_t k = dim / kParts;
  for (std::size_t g = 0; g < gate_count(type); ++g) {
    const std::string s = gate_name(type, g);
    store.add(prefix + "/W_" + s, ParamGroup::kWeight, k, k);
    store.add(prefix + "/R_" + s, ParamGroup::kWeight, k, k);
    store.add(prefix + "/g_" + s, ParamGroup::kWeight, 1, k);
  }
}

RecurrentVars bind_recurrent(Tape& tape, ParamStore& store, const std::string& prefix,
                             CellType type, std::size_t dim) {
  RecurrentVars v;
  v.type = type;
  v.cols = dim / kParts;
  for (std::size_t g = 0; g < gate_count(type); ++g) {
    const std::string s = gate_name(type, g);
    v.input[g] = tape.param(store.get(prefix + "/W_" + s));
    v.recurrent[g] = tape.param(store.get(prefix + "/R_" + s));
    v.bias[g] = tape.param(store.get(prefix + "/g_" + s));
  }
  return v;
}

namespace {
// W (x) x + R (x) h + g
Var gate_preactivation(const RecurrentVars& w, std::size_t g, Var x, Var h) {
  const std::size_t k = w.cols;
  return ag::add(ag::add(ag::hamilton_matvec(w.input[g], x, k, k),
                         ag::hamilton_matvec(w.recurrent[g], h, k, k)),
                 w.bias[g]);
}
}  // namespace

QLstmNodes qlstm_step(Var x, QLstmNodes state, const RecurrentVars& w) {
  if (w.type != CellType::kLstm) throw ContractError("qlstm_step: cell is not an LSTM");
  Var f = ag::sigmoid(gate_preactivation(w, 0, x, state.h));
  Var i = ag::sigmoid(gate_preactivation(w, 1, x, state.h));
  Var o = ag::sigmoid(gate_preactivation(w, 2, x, state.h));
  Var candidate = ag::tanh(gate_preactivation(w, 3, x, state.h));
  Var c = ag::add(ag::mul(f, state.c), ag::mul(i, candidate));
  Var h = ag::mul(o, ag::tanh(c));
  return {h, c};
}

Var qgru_step(Var x, Var h, const RecurrentVars& w) {
  if (w.type != CellType::kGru) throw ContractError("qgru_step: cell is not a GRU");
  const std::size_t k = w.cols;
  Var z = ag::sigmoid(gate_preactivation(w, 0, x, h));
  Var r = ag::sigmoid(gate_preactivation(w, 1, x, h));
  Var n = ag::tanh(ag::add(ag::add(ag::hamilton_matvec(w.input[2], x, k, k),
                                   ag::hamilton_matvec(w.recurrent[2], ag::mul(r, h), k, k)),
                           w.bias[2]));
  return ag::add(ag::mul(ag::one_minus(z), h), ag::mul(z, n));
}

namespace {
RecurrentVars constant_weights(Tape& t, const RecurrentWeights& w, std::size_t k) {
  RecurrentVars v;
  v.type = w.type;
  v.cols = k;
  for (std::size_t g = 0; g < gate_count(w.type); ++g) {
    if (w.input[g].cols() != k || w.input[g].rows() != k || w.recurrent[g].cols() != k ||
        w.recurrent[g].rows() != k || w.bias[g].cols() != k)
      throw DimensionError("recurrent weights for gate " + gate_name(w.type, g) +
                           " do not match hidden size " + std::to_string(kParts * k));
    v.input[g] = t.constant(w.input[g].flat());
    v.recurrent[g] = t.constant(w.recurrent[g].flat());
    v.bias[g] = t.constant(w.bias[g].flat());
  }
  return v;
}
}  // namespace

QLSTMState qlstm_step(const QTensor& x, const QLSTMState& state, const RecurrentWeights& w) {
  const std::size_t k = x.cols();
  if (state.h.cols() != k || state.c.cols() != k)
    throw DimensionError("qlstm_step: input " + x.shape_string() + " vs state " +
                         state.h.shape_string() + "/" + state.c.shape_string());
  Tape t(Tape::Mode::kForwardOnly);
  auto out = qlstm_step(t.constant(x.flat()), {t.constant(state.h.flat()), t.constant(state.c.flat())},
                        constant_weights(t, w, k));
  return {QTensor::from_concat(out.h.value()), QTensor::from_concat(out.c.value())};
}

QTensor qgru_step(const QTensor& x, const QTensor& h, const RecurrentWeights& w) {
  const std::size_t k = x.cols();
  if (h.cols() != k)
    throw DimensionError("qgru_step: input " + x.shape_string() + " vs state " + h.shape_string());
  Tape t(Tape::Mode::kForwardOnly);
  Var out = qgru_step(t.constant(x.flat()), t.constant(h.flat()), constant_weights(t, w, k));
  return QTensor::from_concat(out.value());
}

// ---------------------------------------------------------------------------

Var gate_user_term(const GateVars& g, Var u_long, Var u_short, Var u_ctx) {
  const std::size_t k = g.cols;
  Var joint = ag::component_concat(u_long, u_short);
  return ag::add(ag::add(ag::hamilton_matvec(g.w_g1, joint, k, 2 * k),
                         ag::hamilton_matvec(g.w_g2, u_ctx, k, k)),
                 g.bias);
}

FusionNodes fusion_score(const GateVars& g, Var user_term, Var u_long, Var u_short, Var p_long,
                         Var p_short, Var p_ctx) {
  const std::size_t k = g.cols;
  Var gamma = ag::sigmoid(ag::add(user_term, ag::hamilton_matvec(g.w_g3, p_ctx, k, k)));
  Var long_part = ag::mul(gamma, ag::mul(u_long, p_long));
  Var short_part = ag::mul(ag::one_minus(gamma), ag::mul(u_short, p_short));
  Var score = ag::add(ag::dot(g.w_o1, long_part), ag::dot(g.w_o2, short_part));
  return {score, gamma};
}

FusionResult fusion_gate(const QTensor& u_long, const QTensor& u_short, const QTensor& u_ctx,
                         const QTensor& p_long, const QTensor& p_short, const QTensor& p_ctx,
                         const GateWeights& gw) {
  const std::size_t k = u_long.cols();
  for (const QTensor* x : {&u_short, &u_ctx, &p_long, &p_short, &p_ctx, &gw.bias})
    if (!x->is_vector() || x->cols() != k)
      throw DimensionError("fusion_gate: encoding " + x->shape_string() + " vs " +
                           u_long.shape_string());
  if (gw.w_g1.rows() != k || gw.w_g1.cols() != 2 * k || gw.w_g2.rows() != k ||
      gw.w_g2.cols() != k || gw.w_g3.rows() != k || gw.w_g3.cols() != k ||
      gw.w_o1.size() != kParts * k || gw.w_o2.size() != kParts * k)
    throw DimensionError("fusion_gate: gate weights do not match size " +
                         std::to_string(kParts * k));
  Tape t(Tape::Mode::kForwardOnly);
  GateVars g{k,
             t.constant(gw.w_g1.flat()),
             t.constant(gw.w_g2.flat()),
             t.constant(gw.w_g3.flat()),
             t.constant(gw.bias.flat()),
             t.constant(gw.w_o1),
             t.constant(gw.w_o2)};
  Var ul = t.constant(u_long.flat());
  Var us = t.constant(u_short.flat());
  Var user_term = gate_user_term(g, ul, us, t.constant(u_ctx.flat()));
  auto out = fusion_score(g, user_term, ul, us, t.constant(p_long.flat()),
                          t.constant(p_short.flat()), t.constant(p_ctx.flat()));
  return {out.score.scalar(), QTensor::from_concat(out.gamma.value())};
}

double fusion_score_values(std::span<const double> user_term, std::span<const double> item_term,
                           std::span<const double> u_long, std::span<const double> u_short,
                           std::span<const double> p_long, std::span<const double> p_short,
                           std::span<const double> w_o1, std::span<const double> w_o2) {
  const std::size_t d = user_term.size();
  double long_sum = 0;
  double short_sum = 0;
  for (std::size_t e = 0; e < d; ++e) {
    const double gamma = kernels::sigmoid(user_term[e] + item_term[e]);
    const double long_part = gamma * (u_long[e] * p_long[e]);
    const double short_part = (1.0 - gamma) * (u_short[e] * p_short[e]);
    long_sum += w_o1[e] * long_part;
    short_sum += w_o2[e] * short_part;
  }
  return long_sum + short_sum;
}

}  // namespace quatrec::layers
