#ifndef QUATREC_MODELS_HPP_
#define QUATREC_MODELS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quatrec/autograd.hpp"
#include "quatrec/instance.hpp"
#include "quatrec/layers.hpp"
#include "quatrec/quaternion.hpp"

namespace quatrec {

enum class ModelKind { kQuale, kQuaseLstm, kQuaseGru, kQualse };

/// "quale", "quase-lstm", "quase-gru", "qualse".
std::string to_string(ModelKind kind);
/// Inverse of to_string; "quase" is accepted as "quase-lstm". Throws ContractError.
ModelKind parse_model_kind(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::kQualse;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t dim = 64;
  std::size_t long_window = 0;
  std::size_t short_window = 5;

  /// Throws ContractError for unusable sizes (d not divisible by 4, empty vocabularies).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Plain per-item values the inference path needs, laid out item-major so
/// one candidate is a contiguous run of d reals.
struct ItemCache {
  std::size_t dim = 0;
  std::vector<double> p_long;
  std::vector<double> p_short;
  std::vector<double> gate_term;  // W_g3 (x) p_ctx

  std::span<const double> long_row(std::uint32_t item) const {
    return {p_long.data() + item * dim, p_long.empty() ? 0 : dim};
  }
  std::span<const double> short_row(std::uint32_t item) const {
    return {p_short.data() + item * dim, p_short.empty() ? 0 : dim};
  }
  std::span<const double> gate_row(std::uint32_t item) const {
    return {gate_term.data() + item * dim, gate_term.empty() ? 0 : dim};
  }
};

/// Encoded user side of one instance, as plain values.
struct UserVector {
  std::vector<double> u_long;
  std::vector<double> u_short;
  std::vector<double> user_term;
};

/// QUALE, QUASE (LSTM or GRU cell) or QUALSE with its parameters.
///
/// Parameter names:
///   long/user_context, long/item                     QUALE and QUALSE
///   short/item, short/cell/{W,R,g}_<gate>,
///   short/context, short/W                           QUASE and QUALSE
///   fusion/user, fusion/item, fusion/W_g1..W_g3,
///   fusion/g, fusion/W_o1, fusion/W_o2               QUALSE
///   noise/<table>                                    adversarial training only
class Model {
 public:
  /// Builds and randomly initializes every parameter.
  Model(const ModelConfig& config, std::uint64_t seed);
  /// Adopts existing parameters. Throws ContractError if names or shapes
  /// do not match the configuration.
  Model(const ModelConfig& config, ParamStore params);

  const ModelConfig& config() const noexcept { return config_; }
  ModelKind kind() const noexcept { return config_.kind; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  bool uses_long() const noexcept;
  bool uses_short() const noexcept;

  /// User and item tables (the E of the regularizer), in creation order.
  std::vector<std::string> embedding_tables() const;
  static std::string noise_name(const std::string& table) { return "noise/" + table; }
  /// Adds a zeroed perturbation table per embedding table (idempotent).
  void enable_noise();
  bool has_noise() const;
  std::vector<std::string> noise_tables() const;

  struct Encoding {
    Var u_long;
    Var u_short;
    Var user_term;
    Var long_scores;   // [positions x 4]
    Var short_scores;  // [positions x 4]
  };

  /// Records the user side of `inst` on `tape`. With `noisy`, every
  /// embedding lookup reads table + noise.
  Encoding encode(Tape& tape, const ScoringInstance& inst, bool noisy = false);
  /// Records the score of `item` given an encoding from the same tape.
  Var score(Tape& tape, const Encoding& enc, std::uint32_t item, bool noisy = false);

  UserVector encode_user(const ScoringInstance& inst) const;
  ItemCache item_cache() const;
  /// Same value as the tape path, bit for bit.
  double score_item(const UserVector& user, const ItemCache& items, std::uint32_t item) const;
  /// Convenience single score (builds a one-off cache row).
  double score(const ScoringInstance& inst, std::uint32_t item) const;

  /// Attention over the (unpadded) long-term history, one quaternion per
  /// history item in chronological order. QUALE and QUALSE only.
  std::vector<Quat> long_attention(const ScoringInstance& inst) const;

 private:
  void create_parameters();
  void initialize(std::uint64_t seed);
  void check_instance(const ScoringInstance& inst) const;
  void check_item(std::uint32_t item) const;
  Parameter* noise_for(const std::string& table, bool noisy);
  layers::GateVars bind_gate(Tape& tape);
  std::vector<double> item_row(const std::string& table, std::uint32_t item) const;

  ModelConfig config_;
  ParamStore params_;
};

/// Score of the instance's own target, with a kind check.
double score_quale(const ScoringInstance& inst, const Model& model);
double score_quase(const ScoringInstance& inst, const Model& model);
double score_qualse(const ScoringInstance& inst, const Model& model);
double score(const Model& model, const ScoringInstance& inst);

/// scores[i][c] is the score of candidates[c] for instances[i]. Errors are
/// rethrown with the same type and the failing instance index.
std::vector<std::vector<double>> score_batch(const Model& model,
                                             std::span<const ScoringInstance> instances,
                                             std::span<const std::uint32_t> candidates);

/// Binary checkpoint: magic, JSON header (config, parameter list, `extra`),
/// then every parameter as raw 64-bit reals. Noise tables are not stored.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  Model model;
  nlohmann::json extra;
};

/// Throws DataError on a missing, truncated or foreign file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace quatrec

#endif  // QUATREC_MODELS_HPP_
