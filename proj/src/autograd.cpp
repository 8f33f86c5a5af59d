#include "quatrec/autograd.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "quatrec/qtensor.hpp"

namespace quatrec {

// ---------------------------------------------------------------------------
// Parameter / ParamStore

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Parameter::clear_padding_row() {
  if (!padding_row) return;
  const std::size_t parts = quaternion ? kParts : 1;
  const std::size_t per_part = rows * cols;
  for (std::size_t p = 0; p < parts; ++p)
    std::fill_n(value.begin() + static_cast<std::ptrdiff_t>(p * per_part), cols, 0.0);
}

ParamStore::ParamStore(const ParamStore& other)
    : index_(other.index_), frozen_(other.frozen_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParamStore::add(std::string name, ParamGroup group, std::size_t rows,
                           std::size_t cols, bool quaternion, bool padding_row) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->group = group;
  p->rows = rows;
  p->cols = cols;
  p->quaternion = quaternion;
  p->padding_row = padding_row;
  const std::size_t n = (quaternion ? kParts : 1) * rows * cols;
  p->value.assign(n, 0.0);
  p->grad.assign(n, 0.0);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter: " + name);
  return *params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter: " + name);
  return *params_[it->second];
}

void ParamStore::freeze(const std::set<std::string>& names) {
  for (const auto& n : names)
    if (!contains(n)) throw LookupError("freeze: unknown parameter: " + n);
  frozen_.insert(names.begin(), names.end());
}

void ParamStore::unfreeze(const std::set<std::string>& names) {
  for (const auto& n : names)
    if (!contains(n)) throw LookupError("unfreeze: unknown parameter: " + n);
  for (const auto& n : names) frozen_.erase(n);
}

bool ParamStore::is_frozen(const std::string& name) const { return frozen_.count(name) > 0; }

std::vector<std::string> ParamStore::trainable() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    if (!frozen_.count(p->name)) out.push_back(p->name);
  return out;
}

std::set<std::string> ParamStore::names(ParamGroup group) const {
  std::set<std::string> out;
  for (const auto& p : params_)
    if (p->group == group) out.insert(p->name);
  return out;
}

std::set<std::string> ParamStore::all_names() const {
  std::set<std::string> out;
  for (const auto& p : params_) out.insert(p->name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::map<std::string, std::vector<double>> ParamStore::gradients() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : params_) out.emplace(p->name, p->grad);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

// ---------------------------------------------------------------------------
// Var / Tape

std::size_t Var::size() const { return tape->size(*this); }
std::span<const double> Var::value() const { return tape->value(*this); }

double Var::scalar() const {
  auto v = value();
  if (v.size() != 1) throw ContractError("Var::scalar on a node of size " + std::to_string(v.size()));
  return v[0];
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.size = p.size();
  n.param = &p;
  n.needs_grad = recording();
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(n);
  param_nodes_.emplace(&p, id);
  return {this, id};
}

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
  args_.clear();
  param_nodes_.clear();
  have_grads_ = false;
}

Var Tape::constant(std::span<const double> values) {
  const auto id = push(values.size(), false, nullptr, {});
  std::copy(values.begin(), values.end(), mutable_value(id).begin());
  return {this, id};
}

Var Tape::constant(double v) { return constant(std::span<const double>(&v, 1)); }

std::uint32_t Tape::push(std::size_t size, bool needs_grad, BackwardFn fn,
                         std::span<const std::uint64_t> args) {
  Node n;
  n.offset = values_.size();
  n.size = size;
  n.needs_grad = needs_grad && recording();
  if (n.needs_grad) {
    n.backward = fn;
    n.args_offset = args_.size();
    n.args_count = args.size();
    args_.insert(args_.end(), args.begin(), args.end());
  }
  values_.resize(values_.size() + size, 0.0);
  nodes_.push_back(n);
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

std::span<double> Tape::mutable_value(std::uint32_t id) {
  const Node& n = nodes_[id];
  if (n.param) return n.param->value;
  return {values_.data() + n.offset, n.size};
}

std::span<const double> Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->value;
  return {values_.data() + n.offset, n.size};
}

std::span<const double> Tape::value(Var v) const { return value(v.id); }

std::span<double> Tape::grad_slot(std::uint32_t id) {
  const Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  return {grads_.data() + n.offset, n.size};
}

std::span<const double> Tape::grad(Var v) const {
  if (!have_grads_) throw ContractError("Tape::grad before backward()");
  const Node& n = nodes_[v.id];
  if (n.param) return n.param->grad;
  return {grads_.data() + n.offset, n.size};
}

std::span<const std::uint64_t> Tape::args(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return {args_.data() + n.args_offset, n.args_count};
}

void Tape::backward(Var loss) {
  if (!recording()) throw ContractError("backward on a forward-only tape");
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  if (size(loss) != 1)
    throw ContractError("backward: loss must be a scalar, got " + std::to_string(size(loss)) +
                        " elements");
  grads_.assign(values_.size(), 0.0);
  have_grads_ = true;
  if (!nodes_[loss.id].needs_grad) return;
  grad_slot(loss.id)[0] += 1.0;
  for (std::int64_t id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.needs_grad && n.backward) n.backward(*this, static_cast<std::uint32_t>(id));
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace ag {
namespace {

using Args = std::span<const std::uint64_t>;

Tape& tape_of(Var x) {
  if (!x.tape) throw ContractError("operation on a detached Var");
  return *x.tape;
}

void require_same_tape(Var x, Var y) {
  if (x.tape != y.tape) throw ContractError("operands live on different tapes");
}

void require_same_size(Tape& t, Var x, Var y, const char* op) {
  if (t.size(x) != t.size(y))
    throw DimensionError(std::string(op) + ": size mismatch " + std::to_string(t.size(x)) +
                         " vs " + std::to_string(t.size(y)));
}

void require_quaternion(std::size_t n, const char* op) {
  if (n % kParts != 0)
    throw DimensionError(std::string(op) + ": size " + std::to_string(n) +
                         " is not a quaternion block");
}

std::uint32_t id_of(std::uint64_t a) { return static_cast<std::uint32_t>(a); }
std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }
double real(std::uint64_t b) { return std::bit_cast<double>(b); }

bool wants(Tape& t, Var x) { return t.recording() && t.needs_grad(x.id); }

template <class F>
Var unary(Var x, Tape::BackwardFn bw, F f, std::uint64_t extra = 0) {
  Tape& t = tape_of(x);
  const std::uint64_t args[] = {x.id, extra};
  const auto id = t.push(t.size(x), wants(t, x), bw, args);
  auto out = t.mutable_value(id);
  auto xv = t.value(x.id);
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = f(xv[e]);
  return {&t, id};
}

template <class F>
Var binary(Var x, Var y, const char* name, Tape::BackwardFn bw, F f) {
  require_same_tape(x, y);
  Tape& t = tape_of(x);
  require_same_size(t, x, y, name);
  const std::uint64_t args[] = {x.id, y.id};
  const auto id = t.push(t.size(x), wants(t, x) || wants(t, y), bw, args);
  auto out = t.mutable_value(id);
  auto xv = t.value(x.id);
  auto yv = t.value(y.id);
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = f(xv[e], yv[e]);
  return {&t, id};
}

void add_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  for (int k = 0; k < 2; ++k) {
    const auto src = id_of(a[k]);
    if (!t.needs_grad(src)) continue;
    auto gs = t.grad_slot(src);
    for (std::size_t e = 0; e < g.size(); ++e) gs[e] += g[e];
  }
}

void sub_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  if (t.needs_grad(id_of(a[0]))) {
    auto gx = t.grad_slot(id_of(a[0]));
    for (std::size_t e = 0; e < g.size(); ++e) gx[e] += g[e];
  }
  if (t.needs_grad(id_of(a[1]))) {
    auto gy = t.grad_slot(id_of(a[1]));
    for (std::size_t e = 0; e < g.size(); ++e) gy[e] -= g[e];
  }
}

void mul_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  const auto x = id_of(a[0]), y = id_of(a[1]);
  auto xv = t.value(x);
  auto yv = t.value(y);
  if (t.needs_grad(x)) {
    auto gx = t.grad_slot(x);
    for (std::size_t e = 0; e < g.size(); ++e) gx[e] += g[e] * yv[e];
  }
  if (t.needs_grad(y)) {
    auto gy = t.grad_slot(y);
    for (std::size_t e = 0; e < g.size(); ++e) gy[e] += g[e] * xv[e];
  }
}

void scale_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  const double s = real(a[1]);
  auto gx = t.grad_slot(id_of(a[0]));
  for (std::size_t e = 0; e < g.size(); ++e) gx[e] += s * g[e];
}

void one_minus_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  auto gx = t.grad_slot(id_of(t.args(self)[0]));
  for (std::size_t e = 0; e < g.size(); ++e) gx[e] -= g[e];
}

void sigmoid_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  auto y = t.value(self);
  auto gx = t.grad_slot(id_of(t.args(self)[0]));
  for (std::size_t e = 0; e < g.size(); ++e) gx[e] += g[e] * y[e] * (1.0 - y[e]);
}

void tanh_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  auto y = t.value(self);
  auto gx = t.grad_slot(id_of(t.args(self)[0]));
  for (std::size_t e = 0; e < g.size(); ++e) gx[e] += g[e] * (1.0 - y[e] * y[e]);
}

void log_sigmoid_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  const auto x = id_of(t.args(self)[0]);
  auto xv = t.value(x);
  auto gx = t.grad_slot(x);
  for (std::size_t e = 0; e < g.size(); ++e) gx[e] += g[e] * kernels::sigmoid(-xv[e]);
}

void sum_bw(Tape& t, std::uint32_t self) {
  const double g = t.grad_slot(self)[0];
  auto gx = t.grad_slot(id_of(t.args(self)[0]));
  for (double& v : gx) v += g;
}

void dot_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  const double g = t.grad_slot(self)[0];
  const auto x = id_of(a[0]), y = id_of(a[1]);
  auto xv = t.value(x);
  auto yv = t.value(y);
  if (t.needs_grad(x)) {
    auto gx = t.grad_slot(x);
    for (std::size_t e = 0; e < gx.size(); ++e) gx[e] += g * yv[e];
  }
  if (t.needs_grad(y)) {
    auto gy = t.grad_slot(y);
    for (std::size_t e = 0; e < gy.size(); ++e) gy[e] += g * xv[e];
  }
}

void sum_squares_bw(Tape& t, std::uint32_t self) {
  const double g = t.grad_slot(self)[0];
  const auto x = id_of(t.args(self)[0]);
  auto xv = t.value(x);
  auto gx = t.grad_slot(x);
  for (std::size_t e = 0; e < gx.size(); ++e) gx[e] += 2.0 * g * xv[e];
}

void add_n_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  for (auto a : t.args(self)) {
    const auto src = id_of(a);
    if (!t.needs_grad(src)) continue;
    auto gs = t.grad_slot(src);
    for (std::size_t e = 0; e < g.size(); ++e) gs[e] += g[e];
  }
}

void slice_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  auto gx = t.grad_slot(id_of(a[0]));
  const std::size_t off = a[1];
  for (std::size_t e = 0; e < g.size(); ++e) gx[off + e] += g[e];
}

void stack_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  std::size_t off = 0;
  for (auto a : t.args(self)) {
    const auto src = id_of(a);
    const std::size_t n = t.node(src).size;
    if (t.needs_grad(src)) {
      auto gs = t.grad_slot(src);
      for (std::size_t e = 0; e < n; ++e) gs[e] += g[off + e];
    }
    off += n;
  }
}

// args: table, rows, cols, ids...
void gather_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  auto gt = t.grad_slot(id_of(a[0]));
  const std::size_t rows = a[1], cols = a[2];
  const std::size_t block = kParts * cols;
  for (std::size_t i = 3; i < a.size(); ++i) {
    const std::size_t row = a[i];
    if (row == 0) continue;
    const std::size_t out_base = (i - 3) * block;
    for (std::size_t p = 0; p < kParts; ++p) {
      double* dst = gt.data() + p * rows * cols + row * cols;
      const double* src = g.data() + out_base + p * cols;
      for (std::size_t e = 0; e < cols; ++e) dst[e] += src[e];
    }
  }
}

void concat_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  const auto x = id_of(a[0]), y = id_of(a[1]);
  const std::size_t nx = t.node(x).size / kParts, ny = t.node(y).size / kParts;
  for (std::size_t p = 0; p < kParts; ++p) {
    const double* src = g.data() + p * (nx + ny);
    if (t.needs_grad(x)) {
      auto gx = t.grad_slot(x);
      for (std::size_t e = 0; e < nx; ++e) gx[p * nx + e] += src[e];
    }
    if (t.needs_grad(y)) {
      auto gy = t.grad_slot(y);
      for (std::size_t e = 0; e < ny; ++e) gy[p * ny + e] += src[nx + e];
    }
  }
}

// For z = x (x) y per entry: dL/dx = g (x) conj(y), dL/dy = conj(x) (x) g.
void hamilton_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  const auto x = id_of(a[0]), y = id_of(a[1]);
  auto xv = t.value(x);
  auto yv = t.value(y);
  const std::size_t n = g.size() / kParts;
  for (std::size_t e = 0; e < n; ++e) {
    const Quat gq{g[e], g[n + e], g[2 * n + e], g[3 * n + e]};
    const Quat xq{xv[e], xv[n + e], xv[2 * n + e], xv[3 * n + e]};
    const Quat yq{yv[e], yv[n + e], yv[2 * n + e], yv[3 * n + e]};
    if (t.needs_grad(x)) {
      auto gx = t.grad_slot(x);
      const Quat d = quatrec::hamilton(gq, yq.conj());
      for (std::size_t p = 0; p < kParts; ++p) gx[p * n + e] += d[p];
    }
    if (t.needs_grad(y)) {
      auto gy = t.grad_slot(y);
      const Quat d = quatrec::hamilton(xq.conj(), gq);
      for (std::size_t p = 0; p < kParts; ++p) gy[p * n + e] += d[p];
    }
  }
}

void matvec_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  const auto w = id_of(a[0]), x = id_of(a[1]);
  std::span<double> gw, gx;
  if (t.needs_grad(w)) gw = t.grad_slot(w);
  if (t.needs_grad(x)) gx = t.grad_slot(x);
  kernels::hamilton_matvec_backward(t.value(w), t.value(x), t.grad_slot(self), gw, gx, a[2],
                                    a[3]);
}

void component_sum_bw(Tape& t, std::uint32_t self) {
  auto g = t.grad_slot(self);
  auto gx = t.grad_slot(id_of(t.args(self)[0]));
  const std::size_t n = gx.size() / kParts;
  for (std::size_t p = 0; p < kParts; ++p)
    for (std::size_t e = 0; e < n; ++e) gx[p * n + e] += g[p];
}

void component_dot_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  const auto x = id_of(a[0]), y = id_of(a[1]);
  auto xv = t.value(x);
  auto yv = t.value(y);
  const std::size_t n = xv.size() / kParts;
  for (std::size_t p = 0; p < kParts; ++p) {
    if (t.needs_grad(x)) {
      auto gx = t.grad_slot(x);
      for (std::size_t e = 0; e < n; ++e) gx[p * n + e] += g[p] * yv[p * n + e];
    }
    if (t.needs_grad(y)) {
      auto gy = t.grad_slot(y);
      for (std::size_t e = 0; e < n; ++e) gy[p * n + e] += g[p] * xv[p * n + e];
    }
  }
}

void avg_dot_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  const double g = t.grad_slot(self)[0] / 4.0;
  const auto x = id_of(a[0]), y = id_of(a[1]);
  auto xv = t.value(x);
  auto yv = t.value(y);
  if (t.needs_grad(x)) {
    auto gx = t.grad_slot(x);
    for (std::size_t e = 0; e < gx.size(); ++e) gx[e] += g * yv[e];
  }
  if (t.needs_grad(y)) {
    auto gy = t.grad_slot(y);
    for (std::size_t e = 0; e < gy.size(); ++e) gy[e] += g * xv[e];
  }
}

// args: stacked, ctx, positions, scale
void attention_logits_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  const auto xs = id_of(a[0]), ctx = id_of(a[1]);
  const std::size_t positions = a[2];
  const double s = real(a[3]);
  auto g = t.grad_slot(self);
  auto xv = t.value(xs);
  auto cv = t.value(ctx);
  const std::size_t block = xv.size() / positions;
  const std::size_t n = block / kParts;
  const bool gx_on = t.needs_grad(xs), gc_on = t.needs_grad(ctx);
  std::span<double> gx, gc;
  if (gx_on) gx = t.grad_slot(xs);
  if (gc_on) gc = t.grad_slot(ctx);
  for (std::size_t k = 0; k < positions; ++k) {
    const Quat gq{s * g[k * kParts], s * g[k * kParts + 1], s * g[k * kParts + 2],
                  s * g[k * kParts + 3]};
    if (gq == Quat{}) continue;
    const double* x = xv.data() + k * block;
    for (std::size_t e = 0; e < n; ++e) {
      const Quat xq{x[e], x[n + e], x[2 * n + e], x[3 * n + e]};
      const Quat cq{cv[e], cv[n + e], cv[2 * n + e], cv[3 * n + e]};
      if (gx_on) {
        const Quat d = quatrec::hamilton(gq, cq.conj());
        for (std::size_t p = 0; p < kParts; ++p) gx[k * block + p * n + e] += d[p];
      }
      if (gc_on) {
        const Quat d = quatrec::hamilton(xq.conj(), gq);
        for (std::size_t p = 0; p < kParts; ++p) gc[p * n + e] += d[p];
      }
    }
  }
}

// args: logits, positions, mask...
void softmax_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  auto g = t.grad_slot(self);
  auto y = t.value(self);
  auto gx = t.grad_slot(id_of(a[0]));
  const std::size_t positions = a[1];
  const bool masked = a.size() > 2;
  auto valid = [&](std::size_t p) { return !masked || a[2 + p] != 0; };
  for (std::size_t part = 0; part < kParts; ++part) {
    double inner = 0;
    for (std::size_t p = 0; p < positions; ++p)
      if (valid(p)) inner += y[p * kParts + part] * g[p * kParts + part];
    for (std::size_t p = 0; p < positions; ++p) {
      if (!valid(p)) continue;
      const std::size_t at = p * kParts + part;
      gx[at] += y[at] * (g[at] - inner);
    }
  }
}

// args: weights, stacked, positions
void weighted_sum_bw(Tape& t, std::uint32_t self) {
  auto a = t.args(self);
  const auto w = id_of(a[0]), xs = id_of(a[1]);
  const std::size_t positions = a[2];
  auto g = t.grad_slot(self);
  auto wv = t.value(w);
  auto xv = t.value(xs);
  const std::size_t block = g.size();
  const std::size_t n = block / kParts;
  for (std::size_t k = 0; k < positions; ++k) {
    const double* x = xv.data() + k * block;
    if (t.needs_grad(w)) {
      auto gw = t.grad_slot(w);
      for (std::size_t p = 0; p < kParts; ++p) {
        double s = 0;
        for (std::size_t e = 0; e < n; ++e) s += g[p * n + e] * x[p * n + e];
        gw[k * kParts + p] += s;
      }
    }
    if (t.needs_grad(xs)) {
      auto gx = t.grad_slot(xs);
      for (std::size_t p = 0; p < kParts; ++p) {
        const double wk = wv[k * kParts + p];
        if (wk == 0.0) continue;
        for (std::size_t e = 0; e < n; ++e) gx[k * block + p * n + e] += wk * g[p * n + e];
      }
    }
  }
}

}  // namespace

Var add(Var x, Var y) { return binary(x, y, "add", add_bw, std::plus<>{}); }
Var sub(Var x, Var y) { return binary(x, y, "sub", sub_bw, std::minus<>{}); }
Var mul(Var x, Var y) { return binary(x, y, "mul", mul_bw, std::multiplies<>{}); }

Var scale(Var x, double s) {
  return unary(x, scale_bw, [s](double v) { return s * v; }, bits(s));
}

Var one_minus(Var x) {
  return unary(x, one_minus_bw, [](double v) { return 1.0 - v; });
}

Var sigmoid(Var x) { return unary(x, sigmoid_bw, [](double v) { return kernels::sigmoid(v); }); }
Var tanh(Var x) { return unary(x, tanh_bw, [](double v) { return std::tanh(v); }); }
Var log_sigmoid(Var x) {
  return unary(x, log_sigmoid_bw, [](double v) { return kernels::log_sigmoid(v); });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  const std::uint64_t args[] = {x.id};
  const auto id = t.push(1, wants(t, x), sum_bw, args);
  double s = 0;
  for (double v : t.value(x.id)) s += v;
  t.mutable_value(id)[0] = s;
  return {&t, id};
}

Var dot(Var x, Var y) {
  require_same_tape(x, y);
  Tape& t = tape_of(x);
  require_same_size(t, x, y, "dot");
  const std::uint64_t args[] = {x.id, y.id};
  const auto id = t.push(1, wants(t, x) || wants(t, y), dot_bw, args);
  t.mutable_value(id)[0] = kernels::dot(t.value(x.id), t.value(y.id));
  return {&t, id};
}

Var sum_squares(Var x) {
  Tape& t = tape_of(x);
  const std::uint64_t args[] = {x.id};
  const auto id = t.push(1, wants(t, x), sum_squares_bw, args);
  auto xv = t.value(x.id);
  t.mutable_value(id)[0] = kernels::dot(xv, xv);
  return {&t, id};
}

Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("add_n: no operands");
  Tape& t = tape_of(xs[0]);
  std::vector<std::uint64_t> args;
  bool ng = false;
  for (Var x : xs) {
    require_same_tape(xs[0], x);
    require_same_size(t, xs[0], x, "add_n");
    args.push_back(x.id);
    ng = ng || wants(t, x);
  }
  const auto id = t.push(t.size(xs[0]), ng, add_n_bw, args);
  auto out = t.mutable_value(id);
  for (Var x : xs) {
    auto xv = t.value(x.id);
    for (std::size_t e = 0; e < out.size(); ++e) out[e] += xv[e];
  }
  return {&t, id};
}

Var slice(Var x, std::size_t offset, std::size_t count) {
  Tape& t = tape_of(x);
  if (offset + count > t.size(x))
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + count) + ") exceeds size " +
                         std::to_string(t.size(x)));
  const std::uint64_t args[] = {x.id, offset};
  const auto id = t.push(count, wants(t, x), slice_bw, args);
  auto xv = t.value(x.id);
  std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(offset), count, t.mutable_value(id).begin());
  return {&t, id};
}

Var stack(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("stack: no operands");
  Tape& t = tape_of(xs[0]);
  std::vector<std::uint64_t> args;
  std::size_t total = 0;
  bool ng = false;
  for (Var x : xs) {
    require_same_tape(xs[0], x);
    args.push_back(x.id);
    total += t.size(x);
    ng = ng || wants(t, x);
  }
  const auto id = t.push(total, ng, stack_bw, args);
  auto out = t.mutable_value(id);
  std::size_t off = 0;
  for (Var x : xs) {
    auto xv = t.value(x.id);
    std::copy(xv.begin(), xv.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    off += xv.size();
  }
  return {&t, id};
}

Var gather_rows(Var table, std::size_t rows, std::size_t cols,
                std::span<const std::uint32_t> ids) {
  Tape& t = tape_of(table);
  if (t.size(table) != kParts * rows * cols)
    throw DimensionError("gather_rows: table size " + std::to_string(t.size(table)) +
                         " does not match [4 x " + std::to_string(rows) + " x " +
                         std::to_string(cols) + "]");
  for (auto row : ids)
    if (row >= rows)
      throw LookupError("gather_rows: id " + std::to_string(row) + " outside [0, " +
                        std::to_string(rows) + ")");
  std::vector<std::uint64_t> args{table.id, rows, cols};
  args.insert(args.end(), ids.begin(), ids.end());
  const std::size_t block = kParts * cols;
  const auto id = t.push(ids.size() * block, wants(t, table), gather_bw, args);
  auto out = t.mutable_value(id);
  auto tv = t.value(table.id);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t p = 0; p < kParts; ++p)
      std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(p * rows * cols + ids[i] * cols), cols,
                  out.begin() + static_cast<std::ptrdiff_t>(i * block + p * cols));
  return {&t, id};
}

Var component_concat(Var x, Var y) {
  require_same_tape(x, y);
  Tape& t = tape_of(x);
  require_quaternion(t.size(x), "component_concat");
  require_quaternion(t.size(y), "component_concat");
  const std::uint64_t args[] = {x.id, y.id};
  const auto id = t.push(t.size(x) + t.size(y), wants(t, x) || wants(t, y), concat_bw, args);
  auto out = t.mutable_value(id);
  auto xv = t.value(x.id);
  auto yv = t.value(y.id);
  const std::size_t nx = xv.size() / kParts, ny = yv.size() / kParts;
  for (std::size_t p = 0; p < kParts; ++p) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(p * nx), nx,
                out.begin() + static_cast<std::ptrdiff_t>(p * (nx + ny)));
    std::copy_n(yv.begin() + static_cast<std::ptrdiff_t>(p * ny), ny,
                out.begin() + static_cast<std::ptrdiff_t>(p * (nx + ny) + nx));
  }
  return {&t, id};
}

Var hamilton(Var x, Var y) {
  require_same_tape(x, y);
  Tape& t = tape_of(x);
  require_same_size(t, x, y, "hamilton");
  require_quaternion(t.size(x), "hamilton");
  const std::uint64_t args[] = {x.id, y.id};
  const auto id = t.push(t.size(x), wants(t, x) || wants(t, y), hamilton_bw, args);
  kernels::hamilton(t.value(x.id), t.value(y.id), t.mutable_value(id));
  return {&t, id};
}

Var hamilton_matvec(Var w, Var x, std::size_t rows, std::size_t cols) {
  require_same_tape(w, x);
  Tape& t = tape_of(w);
  if (t.size(w) != kParts * rows * cols || t.size(x) != kParts * cols)
    throw DimensionError("hamilton_matvec: weight of size " + std::to_string(t.size(w)) +
                         " (expected [4 x " + std::to_string(rows) + " x " +
                         std::to_string(cols) + "]) cannot map input of size " +
                         std::to_string(t.size(x)));
  const std::uint64_t args[] = {w.id, x.id, rows, cols};
  const auto id = t.push(kParts * rows, wants(t, w) || wants(t, x), matvec_bw, args);
  kernels::hamilton_matvec(t.value(w.id), t.value(x.id), t.mutable_value(id), rows, cols);
  return {&t, id};
}

Var component_sum(Var x) {
  Tape& t = tape_of(x);
  require_quaternion(t.size(x), "component_sum");
  const std::uint64_t args[] = {x.id};
  const auto id = t.push(kParts, wants(t, x), component_sum_bw, args);
  auto xv = t.value(x.id);
  auto out = t.mutable_value(id);
  const std::size_t n = xv.size() / kParts;
  for (std::size_t p = 0; p < kParts; ++p)
    for (std::size_t e = 0; e < n; ++e) out[p] += xv[p * n + e];
  return {&t, id};
}

Var component_dot(Var x, Var y) {
  require_same_tape(x, y);
  Tape& t = tape_of(x);
  require_same_size(t, x, y, "component_dot");
  require_quaternion(t.size(x), "component_dot");
  const std::uint64_t args[] = {x.id, y.id};
  const auto id = t.push(kParts, wants(t, x) || wants(t, y), component_dot_bw, args);
  const Quat q = kernels::component_dot(t.value(x.id), t.value(y.id));
  auto out = t.mutable_value(id);
  for (std::size_t p = 0; p < kParts; ++p) out[p] = q[p];
  return {&t, id};
}

Var average_component_dot(Var x, Var y) {
  require_same_tape(x, y);
  Tape& t = tape_of(x);
  require_same_size(t, x, y, "average_component_dot");
  require_quaternion(t.size(x), "average_component_dot");
  const std::uint64_t args[] = {x.id, y.id};
  const auto id = t.push(1, wants(t, x) || wants(t, y), avg_dot_bw, args);
  t.mutable_value(id)[0] = kernels::average_component_dot(t.value(x.id), t.value(y.id));
  return {&t, id};
}

Var attention_logits(Var stacked, Var ctx, std::size_t positions, double scale) {
  require_same_tape(stacked, ctx);
  Tape& t = tape_of(stacked);
  const std::size_t block = t.size(ctx);
  require_quaternion(block, "attention_logits");
  if (positions == 0 || t.size(stacked) != positions * block)
    throw DimensionError("attention_logits: " + std::to_string(t.size(stacked)) +
                         " stacked values do not hold " + std::to_string(positions) +
                         " vectors of size " + std::to_string(block));
  const std::uint64_t args[] = {stacked.id, ctx.id, positions, bits(scale)};
  const auto id =
      t.push(positions * kParts, wants(t, stacked) || wants(t, ctx), attention_logits_bw, args);
  auto out = t.mutable_value(id);
  auto xv = t.value(stacked.id);
  auto cv = t.value(ctx.id);
  for (std::size_t k = 0; k < positions; ++k) {
    const Quat q = kernels::hamilton_inner(xv.subspan(k * block, block), cv);
    for (std::size_t p = 0; p < kParts; ++p) out[k * kParts + p] = q[p] * scale;
  }
  return {&t, id};
}

Var softmax_positions(Var logits, std::span<const std::uint8_t> mask) {
  Tape& t = tape_of(logits);
  require_quaternion(t.size(logits), "softmax_positions");
  const std::size_t positions = t.size(logits) / kParts;
  if (!mask.empty() && mask.size() != positions)
    throw DimensionError("softmax_positions: mask has " + std::to_string(mask.size()) +
                         " entries for " + std::to_string(positions) + " positions");
  std::vector<std::uint64_t> args{logits.id, positions};
  args.insert(args.end(), mask.begin(), mask.end());
  const auto id = t.push(t.size(logits), wants(t, logits), softmax_bw, args);
  if (!kernels::softmax_positions(t.value(logits.id), mask, t.mutable_value(id)))
    throw EmptyHistoryError("softmax_positions: every position is masked");
  return {&t, id};
}

Var weighted_component_sum(Var weights, Var stacked, std::size_t positions) {
  require_same_tape(weights, stacked);
  Tape& t = tape_of(weights);
  if (positions == 0 || t.size(weights) != positions * kParts ||
      t.size(stacked) % positions != 0)
    throw DimensionError("weighted_component_sum: " + std::to_string(t.size(weights)) +
                         " weights for " + std::to_string(positions) + " positions");
  const std::size_t block = t.size(stacked) / positions;
  require_quaternion(block, "weighted_component_sum");
  const std::uint64_t args[] = {weights.id, stacked.id, positions};
  const auto id =
      t.push(block, wants(t, weights) || wants(t, stacked), weighted_sum_bw, args);
  auto out = t.mutable_value(id);
  auto wv = t.value(weights.id);
  auto xv = t.value(stacked.id);
  const std::size_t n = block / kParts;
  for (std::size_t k = 0; k < positions; ++k)
    for (std::size_t p = 0; p < kParts; ++p) {
      const double wk = wv[k * kParts + p];
      const double* x = xv.data() + k * block + p * n;
      for (std::size_t e = 0; e < n; ++e) out[p * n + e] += wk * x[e];
    }
  return {&t, id};
}

}  // namespace ag
}  // namespace quatrec
