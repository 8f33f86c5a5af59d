#include "quatrec/models.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace quatrec {

namespace {

constexpr const char* kLongUser = "long/user_context";
constexpr const char* kLongItem = "long/item";
constexpr const char* kShortItem = "short/item";
constexpr const char* kCell = "short/cell";
constexpr const char* kShortContext = "short/context";
constexpr const char* kShortW = "short/W";
constexpr const char* kFusionUser = "fusion/user";
constexpr const char* kFusionItem = "fusion/item";

layers::CellType cell_type(ModelKind kind) {
  return kind == ModelKind::kQuaseGru ? layers::CellType::kGru : layers::CellType::kLstm;
}

std::vector<std::uint32_t> unpadded(const std::vector<std::uint32_t>& ids) {
  std::vector<std::uint32_t> out;
  out.reserve(ids.size());
  for (auto id : ids)
    if (id != 0) out.push_back(id);
  return out;
}

std::vector<double> copy_of(std::span<const double> v) { return {v.begin(), v.end()}; }

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kQuale: return "quale";
    case ModelKind::kQuaseLstm: return "quase-lstm";
    case ModelKind::kQuaseGru: return "quase-gru";
    case ModelKind::kQualse: return "qualse";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "quale") return ModelKind::kQuale;
  if (name == "quase" || name == "quase-lstm") return ModelKind::kQuaseLstm;
  if (name == "quase-gru") return ModelKind::kQuaseGru;
  if (name == "qualse") return ModelKind::kQualse;
  throw ContractError("unknown model '" + name +
                      "' (expected quale, quase-lstm, quase-gru or qualse)");
}

void ModelConfig::validate() const {
  if (dim == 0 || dim % kParts != 0)
    throw ContractError("embedding size d=" + std::to_string(dim) + " is not divisible by 4");
  if (n_users == 0 || n_items == 0)
    throw ContractError("model needs at least one user and one item");
  if (short_window == 0) throw ContractError("short window s must be at least 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"model", to_string(c.kind)},   {"n_users", c.n_users},
       {"n_items", c.n_items},         {"dim", c.dim},
       {"long_window", c.long_window}, {"short_window", c.short_window}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.kind = parse_model_kind(j.at("model").get<std::string>());
  c.n_users = j.at("n_users").get<std::size_t>();
  c.n_items = j.at("n_items").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.long_window = j.at("long_window").get<std::size_t>();
  c.short_window = j.at("short_window").get<std::size_t>();
}

// ---------------------------------------------------------------------------

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  create_parameters();
  initialize(seed);
}

Model::Model(const ModelConfig& config, ParamStore params) : config_(config) {
  config_.validate();
  create_parameters();
  for (std::size_t i = 0; i < params_.count(); ++i) {
    Parameter& want = params_.at(i);
    if (!params.contains(want.name))
      throw ContractError("parameter set lacks '" + want.name + "' required by " +
                          to_string(config_.kind));
    const Parameter& have = params.get(want.name);
    if (have.rows != want.rows || have.cols != want.cols || have.quaternion != want.quaternion)
      throw ContractError("parameter '" + want.name + "' has shape [" +
                          std::to_string(have.rows) + " x " + std::to_string(have.cols) +
                          "], expected [" + std::to_string(want.rows) + " x " +
                          std::to_string(want.cols) + "]");
    want.value = have.value;
  }
  if (!params.names(ParamGroup::kNoise).empty()) enable_noise();
}

bool Model::uses_long() const noexcept {
  return config_.kind == ModelKind::kQuale || config_.kind == ModelKind::kQualse;
}

bool Model::uses_short() const noexcept { return config_.kind != ModelKind::kQuale; }

void Model::create_parameters() {
  const std::size_t d = config_.dim;
  const std::size_t k = d / kParts;
  if (uses_long()) {
    layers::QEmbeddingTable::create(params_, kLongUser, config_.n_users, d);
    layers::QEmbeddingTable::create(params_, kLongItem, config_.n_items, d);
  }
  if (uses_short()) {
    layers::QEmbeddingTable::create(params_, kShortItem, config_.n_items, d);
    layers::create_recurrent(params_, kCell, cell_type(config_.kind), d);
    params_.add(kShortContext, ParamGroup::kWeight, 1, k);
    params_.add(kShortW, ParamGroup::kWeight, k, k);
  }
  if (config_.kind == ModelKind::kQualse) {
    layers::QEmbeddingTable::create(params_, kFusionUser, config_.n_users, d);
    layers::QEmbeddingTable::create(params_, kFusionItem, config_.n_items, d);
    params_.add("fusion/W_g1", ParamGroup::kWeight, k, 2 * k);
    params_.add("fusion/W_g2", ParamGroup::kWeight, k, k);
    params_.add("fusion/W_g3", ParamGroup::kWeight, k, k);
    params_.add("fusion/g", ParamGroup::kWeight, 1, k);
    params_.add("fusion/W_o1", ParamGroup::kWeight, 1, d, false);
    params_.add("fusion/W_o2", ParamGroup::kWeight, 1, d, false);
  }
}

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.count(); ++i) {
    Parameter& p = params_.at(i);
    const std::string& n = p.name;
    const bool is_bias = n == "fusion/g" || n.rfind(std::string(kCell) + "/g_", 0) == 0;
    if (is_bias) continue;
    if (p.group == ParamGroup::kEmbedding || n == kShortContext)
      layers::init_embedding(p, rng);
    else if (!p.quaternion)
      layers::init_real_weight(p, rng);
    else
      layers::init_quaternion_weight(p, rng);
  }
}

std::vector<std::string> Model::embedding_tables() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < params_.count(); ++i)
    if (params_.at(i).group == ParamGroup::kEmbedding) out.push_back(params_.at(i).name);
  return out;
}

void Model::enable_noise() {
  for (const auto& table : embedding_tables()) {
    const std::string name = noise_name(table);
    if (params_.contains(name)) continue;
    const Parameter& t = params_.get(table);
    params_.add(name, ParamGroup::kNoise, t.rows, t.cols, true, true);
  }
}

bool Model::has_noise() const { return !params_.names(ParamGroup::kNoise).empty(); }

std::vector<std::string> Model::noise_tables() const {
  std::vector<std::string> out;
  for (const auto& table : embedding_tables())
    if (params_.contains(noise_name(table))) out.push_back(noise_name(table));
  return out;
}

Parameter* Model::noise_for(const std::string& table, bool noisy) {
  if (!noisy) return nullptr;
  const std::string name = noise_name(table);
  if (!params_.contains(name))
    throw ContractError("noisy lookup requested but no noise table for '" + table + "'");
  return &params_.get(name);
}

void Model::check_item(std::uint32_t item) const {
  if (item == 0 || item > config_.n_items)
    throw LookupError("item id " + std::to_string(item) + " outside [1, " +
                      std::to_string(config_.n_items) + "]");
}

void Model::check_instance(const ScoringInstance& inst) const {
  if (inst.user == 0 || inst.user > config_.n_users)
    throw LookupError("user id " + std::to_string(inst.user) + " outside [1, " +
                      std::to_string(config_.n_users) + "]");
  for (const auto* list : {&inst.long_items, &inst.short_items})
    for (auto id : *list)
      if (id > config_.n_items)
        throw LookupError("history item id " + std::to_string(id) + " outside [0, " +
                          std::to_string(config_.n_items) + "]");
}

layers::GateVars Model::bind_gate(Tape& tape) {
  layers::GateVars g;
  g.cols = config_.dim / kParts;
  g.w_g1 = tape.param(params_.get("fusion/W_g1"));
  g.w_g2 = tape.param(params_.get("fusion/W_g2"));
  g.w_g3 = tape.param(params_.get("fusion/W_g3"));
  g.bias = tape.param(params_.get("fusion/g"));
  g.w_o1 = tape.param(params_.get("fusion/W_o1"));
  g.w_o2 = tape.param(params_.get("fusion/W_o2"));
  return g;
}

Model::Encoding Model::encode(Tape& tape, const ScoringInstance& inst, bool noisy) {
  check_instance(inst);
  const std::size_t d = config_.dim;
  Encoding enc;
  const std::array<std::uint32_t, 1> user{inst.user};

  if (uses_long()) {
    const auto ids = unpadded(inst.long_items);
    if (ids.empty())
      throw EmptyHistoryError("instance of user " + std::to_string(inst.user) +
                              " has an empty long-term history");
    Var ctx = layers::lookup(tape, params_.get(kLongUser), user, noise_for(kLongUser, noisy));
    Var items = layers::lookup(tape, params_.get(kLongItem), ids, noise_for(kLongItem, noisy));
    auto att = layers::personalized_attention(items, ids.size(), ctx, {});
    enc.u_long = att.encoding;
    enc.long_scores = att.scores;
  }

  if (uses_short()) {
    const auto ids = unpadded(inst.short_items);
    if (ids.empty())
      throw EmptyHistoryError("instance of user " + std::to_string(inst.user) +
                              " has an empty short-term history");
    Var items = layers::lookup(tape, params_.get(kShortItem), ids, noise_for(kShortItem, noisy));
    const auto type = cell_type(config_.kind);
    auto w = layers::bind_recurrent(tape, params_, kCell, type, d);
    const std::vector<double> zeros(d, 0.0);
    std::vector<Var> hiddens;
    hiddens.reserve(ids.size());
    if (type == layers::CellType::kLstm) {
      layers::QLstmNodes state{tape.constant(zeros), tape.constant(zeros)};
      for (std::size_t t = 0; t < ids.size(); ++t) {
        state = layers::qlstm_step(ag::slice(items, t * d, d), state, w);
        hiddens.push_back(state.h);
      }
    } else {
      Var h = tape.constant(zeros);
      for (std::size_t t = 0; t < ids.size(); ++t) {
        h = layers::qgru_step(ag::slice(items, t * d, d), h, w);
        hiddens.push_back(h);
      }
    }
    auto att = layers::global_attention(ag::stack(hiddens), ids.size(),
                                        tape.param(params_.get(kShortContext)),
                                        tape.param(params_.get(kShortW)), {});
    enc.u_short = att.encoding;
    enc.short_scores = att.scores;
  }

  if (config_.kind == ModelKind::kQualse) {
    Var u_ctx = layers::lookup(tape, params_.get(kFusionUser), user, noise_for(kFusionUser, noisy));
    enc.user_term = layers::gate_user_term(bind_gate(tape), enc.u_long, enc.u_short, u_ctx);
  }
  return enc;
}

Var Model::score(Tape& tape, const Encoding& enc, std::uint32_t item, bool noisy) {
  check_item(item);
  const std::array<std::uint32_t, 1> ids{item};
  switch (config_.kind) {
    case ModelKind::kQuale:
      return ag::average_component_dot(
          enc.u_long, layers::lookup(tape, params_.get(kLongItem), ids, noise_for(kLongItem, noisy)));
    case ModelKind::kQuaseLstm:
    case ModelKind::kQuaseGru:
      return ag::average_component_dot(
          enc.u_short,
          layers::lookup(tape, params_.get(kShortItem), ids, noise_for(kShortItem, noisy)));
    case ModelKind::kQualse: {
      Var p_long = layers::lookup(tape, params_.get(kLongItem), ids, noise_for(kLongItem, noisy));
      Var p_short =
          layers::lookup(tape, params_.get(kShortItem), ids, noise_for(kShortItem, noisy));
      Var p_ctx = layers::lookup(tape, params_.get(kFusionItem), ids, noise_for(kFusionItem, noisy));
      return layers::fusion_score(bind_gate(tape), enc.user_term, enc.u_long, enc.u_short, p_long,
                                  p_short, p_ctx)
          .score;
    }
  }
  throw ContractError("unreachable model kind");
}

// ---------------------------------------------------------------------------
// Inference path

UserVector Model::encode_user(const ScoringInstance& inst) const {
  // A forward-only tape never writes through its parameter pointers.
  auto& self = const_cast<Model&>(*this);
  Tape tape(Tape::Mode::kForwardOnly);
  Encoding enc = self.encode(tape, inst, false);
  UserVector u;
  if (enc.u_long.tape) u.u_long = copy_of(enc.u_long.value());
  if (enc.u_short.tape) u.u_short = copy_of(enc.u_short.value());
  if (enc.user_term.tape) u.user_term = copy_of(enc.user_term.value());
  return u;
}

std::vector<double> Model::item_row(const std::string& table, std::uint32_t item) const {
  const Parameter& p = params_.get(table);
  const std::size_t k = p.cols;
  std::vector<double> row(kParts * k);
  for (std::size_t part = 0; part < kParts; ++part)
    std::copy_n(p.value.begin() + static_cast<std::ptrdiff_t>(part * p.rows * k + item * k), k,
                row.begin() + static_cast<std::ptrdiff_t>(part * k));
  return row;
}

ItemCache Model::item_cache() const {
  const std::size_t d = config_.dim;
  const std::size_t k = d / kParts;
  const std::size_t rows = config_.n_items + 1;
  ItemCache cache;
  cache.dim = d;
  auto fill = [&](const char* table, std::vector<double>& out) {
    out.resize(rows * d);
    for (std::uint32_t i = 0; i < rows; ++i) {
      auto row = item_row(table, i);
      std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
  };
  if (uses_long()) fill(kLongItem, cache.p_long);
  if (uses_short()) fill(kShortItem, cache.p_short);
  if (config_.kind == ModelKind::kQualse) {
    const auto& w = params_.get("fusion/W_g3").value;
    cache.gate_term.resize(rows * d);
    for (std::uint32_t i = 0; i < rows; ++i) {
      auto row = item_row(kFusionItem, i);
      kernels::hamilton_matvec(w, row, std::span<double>(cache.gate_term).subspan(i * d, d), k, k);
    }
  }
  return cache;
}

double Model::score_item(const UserVector& user, const ItemCache& items,
                         std::uint32_t item) const {
  check_item(item);
  switch (config_.kind) {
    case ModelKind::kQuale:
      return kernels::average_component_dot(user.u_long, items.long_row(item));
    case ModelKind::kQuaseLstm:
    case ModelKind::kQuaseGru:
      return kernels::average_component_dot(user.u_short, items.short_row(item));
    case ModelKind::kQualse:
      return layers::fusion_score_values(user.user_term, items.gate_row(item), user.u_long,
                                         user.u_short, items.long_row(item),
                                         items.short_row(item), params_.get("fusion/W_o1").value,
                                         params_.get("fusion/W_o2").value);
  }
  throw ContractError("unreachable model kind");
}

double Model::score(const ScoringInstance& inst, std::uint32_t item) const {
  check_item(item);
  const UserVector user = encode_user(inst);
  const std::size_t d = config_.dim;
  // A cache holding only `item`, addressed as if it were complete.
  ItemCache one;
  one.dim = d;
  auto place = [&](const char* table, std::vector<double>& out) {
    out.assign((item + 1) * d, 0.0);
    auto row = item_row(table, item);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(item * d));
  };
  if (uses_long()) place(kLongItem, one.p_long);
  if (uses_short()) place(kShortItem, one.p_short);
  if (config_.kind == ModelKind::kQualse) {
    one.gate_term.assign((item + 1) * d, 0.0);
    kernels::hamilton_matvec(params_.get("fusion/W_g3").value, item_row(kFusionItem, item),
                             std::span<double>(one.gate_term).subspan(item * d, d), d / kParts,
                             d / kParts);
  }
  return score_item(user, one, item);
}

std::vector<Quat> Model::long_attention(const ScoringInstance& inst) const {
  if (!uses_long())
    throw ContractError(to_string(config_.kind) + " has no long-term attention");
  auto& self = const_cast<Model&>(*this);
  Tape tape(Tape::Mode::kForwardOnly);
  Encoding enc = self.encode(tape, inst, false);
  auto v = enc.long_scores.value();
  std::vector<Quat> out(v.size() / kParts);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {v[i * kParts], v[i * kParts + 1], v[i * kParts + 2], v[i * kParts + 3]};
  return out;
}

// ---------------------------------------------------------------------------

namespace {
double score_kind(const ScoringInstance& inst, const Model& model,
                  std::initializer_list<ModelKind> kinds, const char* op) {
  for (auto k : kinds)
    if (model.kind() == k) return model.score(inst, inst.target);
  throw ContractError(std::string(op) + " called on a " + to_string(model.kind()) + " model");
}

template <class E>
[[noreturn]] void rethrow_as(const E&, std::size_t index, const std::exception& e) {
  throw E("instance " + std::to_string(index) + ": " + e.what());
}

[[noreturn]] void rethrow_indexed(std::size_t index) {
  try {
    throw;
  } catch (const SamplingExhaustedError& e) {
    rethrow_as(e, index, e);
  } catch (const UndefinedCorrelationError& e) {
    rethrow_as(e, index, e);
  } catch (const DimensionError& e) {
    rethrow_as(e, index, e);
  } catch (const EmptyHistoryError& e) {
    rethrow_as(e, index, e);
  } catch (const LookupError& e) {
    rethrow_as(e, index, e);
  } catch (const ContractError& e) {
    rethrow_as(e, index, e);
  } catch (const DataError& e) {
    rethrow_as(e, index, e);
  } catch (const NumericError& e) {
    rethrow_as(e, index, e);
  }
}
}  // namespace

double score_quale(const ScoringInstance& inst, const Model& model) {
  return score_kind(inst, model, {ModelKind::kQuale}, "score_quale");
}

double score_quase(const ScoringInstance& inst, const Model& model) {
  return score_kind(inst, model, {ModelKind::kQuaseLstm, ModelKind::kQuaseGru}, "score_quase");
}

double score_qualse(const ScoringInstance& inst, const Model& model) {
  return score_kind(inst, model, {ModelKind::kQualse}, "score_qualse");
}

double score(const Model& model, const ScoringInstance& inst) {
  return model.score(inst, inst.target);
}

std::vector<std::vector<double>> score_batch(const Model& model,
                                             std::span<const ScoringInstance> instances,
                                             std::span<const std::uint32_t> candidates) {
  const ItemCache cache = model.item_cache();
  std::vector<std::vector<double>> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    try {
      const UserVector user = model.encode_user(instances[i]);
      out[i].reserve(candidates.size());
      for (auto c : candidates) out[i].push_back(model.score_item(user, cache, c));
    } catch (...) {
      rethrow_indexed(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'Q', 'R', 'E', 'C', 'C', 'K', 'P', '1'};

std::string group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEmbedding: return "embedding";
    case ParamGroup::kWeight: return "weight";
    case ParamGroup::kNoise: return "noise";
  }
  return "?";
}

ParamGroup parse_group(const std::string& s) {
  if (s == "embedding") return ParamGroup::kEmbedding;
  if (s == "weight") return ParamGroup::kWeight;
  if (s == "noise") return ParamGroup::kNoise;
  throw DataError("checkpoint: unknown parameter group '" + s + "'");
}
}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["config"] = model.config();
  header["extra"] = extra;
  header["params"] = nlohmann::json::array();
  std::vector<const Parameter*> stored;
  for (std::size_t i = 0; i < model.params().count(); ++i) {
    const Parameter& p = model.params().at(i);
    if (p.group == ParamGroup::kNoise) continue;
    stored.push_back(&p);
    header["params"].push_back({{"name", p.name},
                                {"group", group_name(p.group)},
                                {"rows", p.rows},
                                {"cols", p.cols},
                                {"quaternion", p.quaternion},
                                {"padding_row", p.padding_row}});
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : stored)
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError(path.string() + " is not a quatrec checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 30)) throw DataError("checkpoint " + path.string() + ": bad header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("checkpoint " + path.string() + ": truncated header");

  nlohmann::json header;
  ModelConfig config;
  ParamStore store;
  try {
    header = nlohmann::json::parse(text);
    config = header.at("config").get<ModelConfig>();
    for (const auto& pj : header.at("params")) {
      Parameter& p = store.add(pj.at("name").get<std::string>(),
                               parse_group(pj.at("group").get<std::string>()),
                               pj.at("rows").get<std::size_t>(), pj.at("cols").get<std::size_t>(),
                               pj.at("quaternion").get<bool>(), pj.at("padding_row").get<bool>());
      in.read(reinterpret_cast<char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
      if (!in) throw DataError("checkpoint " + path.string() + ": truncated at " + p.name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": malformed header: " + e.what());
  }
  try {
    return {Model(config, std::move(store)), header.value("extra", nlohmann::json::object())};
  } catch (const ContractError& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace quatrec
