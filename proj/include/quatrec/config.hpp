#ifndef QUATREC_CONFIG_HPP_
#define QUATREC_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "quatrec/models.hpp"
#include "quatrec/training.hpp"

namespace quatrec {

/// Everything needed to replay a training run. Stored next to each checkpoint.
struct ExperimentConfig {
  std::string data_dir;
  std::string output_dir;
  std::string model = "qualse";
  std::string loss = "bpr";
  std::size_t dim = 64;
  double learning_rate = 0.001;
  double reg_weight = 0.0001;
  double reg_embedding = 0.0001;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  std::size_t negatives = 4;
  double adv_weight = 1.0;
  double epsilon = 0.5;
  double noise_reg = 0.0;
  /// BPR epochs run before the minimax phase when no init checkpoint is given.
  std::size_t pretrain_epochs = 30;
  std::string init_checkpoint;
  std::uint64_t seed = 1;
  std::size_t eval_negatives = 1000;
  /// Validation instances ranked after each epoch (0 = all).
  std::size_t val_max_instances = 0;
  std::size_t threads = 1;

  /// Throws ContractError on values no run can use.
  void validate() const;
  /// Training parameters for the main phase.
  TrainConfig train_config() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys throw ContractError.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace quatrec

#endif  // QUATREC_CONFIG_HPP_
