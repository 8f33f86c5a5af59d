#include "quatrec/config.hpp"

#include <fstream>
#include <set>

namespace quatrec {

void ExperimentConfig::validate() const {
  parse_model_kind(model);
  parse_loss_kind(loss);
  if (dim == 0 || dim % kParts != 0)
    throw ContractError("dim=" + std::to_string(dim) + " is not divisible by 4");
  if (learning_rate <= 0) throw ContractError("learning_rate must be positive");
  if (reg_weight < 0 || reg_embedding < 0 || noise_reg < 0 || adv_weight < 0 || epsilon < 0)
    throw ContractError("regularizer weights, adv_weight and epsilon must be non-negative");
  if (batch_size == 0 || negatives == 0) throw ContractError("batch_size and negatives must be positive");
  if (eval_negatives == 0) throw ContractError("eval_negatives must be positive");
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.loss = parse_loss_kind(loss);
  t.learning_rate = learning_rate;
  t.reg_weight = reg_weight;
  t.reg_embedding = reg_embedding;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.negatives = negatives;
  t.adv_weight = adv_weight;
  t.epsilon = epsilon;
  t.noise_reg = noise_reg;
  t.seed = seed;
  t.validation.num_negatives = eval_negatives;
  t.validation.max_instances = val_max_instances;
  t.validation.threads = threads;
  t.validation.seed = seed + 1;
  return t;
}

#define QUATREC_CONFIG_FIELDS(X)                                                          \
  X(data_dir) X(output_dir) X(model) X(loss) X(dim) X(learning_rate) X(reg_weight)       \
  X(reg_embedding) X(epochs) X(batch_size) X(negatives) X(adv_weight) X(epsilon)          \
  X(noise_reg) X(pretrain_epochs) X(init_checkpoint) X(seed) X(eval_negatives)            \
  X(val_max_instances) X(threads)

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
#define QUATREC_PUT(f) j[#f] = c.f;
  QUATREC_CONFIG_FIELDS(QUATREC_PUT)
#undef QUATREC_PUT
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ContractError("experiment config must be a JSON object");
  static const std::set<std::string> known = {
#define QUATREC_NAME(f) #f,
      QUATREC_CONFIG_FIELDS(QUATREC_NAME)
#undef QUATREC_NAME
  };
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ContractError("unknown config key '" + key + "'");
  try {
#define QUATREC_GET(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    QUATREC_CONFIG_FIELDS(QUATREC_GET)
#undef QUATREC_GET
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("bad config value: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config " + path.string() + ": " + e.what());
  }
  return j.get<ExperimentConfig>();
}

}  // namespace quatrec
