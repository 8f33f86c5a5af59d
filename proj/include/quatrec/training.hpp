#ifndef QUATREC_TRAINING_HPP_
#define QUATREC_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quatrec/autograd.hpp"
#include "quatrec/eval.hpp"
#include "quatrec/instance.hpp"
#include "quatrec/models.hpp"

namespace quatrec {

/// A positive instance (by index into an instance list) with one sampled negative.
struct Triplet {
  std::uint32_t instance = 0;
  std::uint32_t negative = 0;
};

/// Uniform negatives over the items a user has not interacted with in training.
class NegativeSampler {
 public:
  /// `train_items[u]` must be sorted.
  NegativeSampler(const UserItemSets& train_items, std::size_t n_items);
  /// Throws SamplingExhaustedError when the user has seen every item.
  std::uint32_t sample(std::uint32_t user, std::mt19937_64& rng) const;

 private:
  const UserItemSets& train_items_;
  std::size_t n_items_;
};

struct BprWeights {
  double reg_weight = 0;     // lambda_Theta, on every kWeight parameter
  double reg_embedding = 0;  // lambda_E, on every kEmbedding parameter
};

/// -sum log sigma(o+ - o-) over the triplets plus the squared-L2 regularizers.
/// With `noisy`, embedding lookups read E + delta; the regularizers always
/// apply to E itself.
Var bpr_loss(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
             std::span<const Triplet> triplets, const BprWeights& weights, bool noisy = false);

/// Data term only: -sum log sigma(o+ - o-).
Var bpr_data_term(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
                  std::span<const Triplet> triplets, bool noisy = false);

/// Min-player objective L(E) + adv_weight * L(E + delta). Zero weight gives
/// plain BPR without touching the noise.
Var qabpr_loss(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
               std::span<const Triplet> triplets, const BprWeights& weights, double adv_weight);

/// Fast Gradient Method: epsilon * g / ||g||, the norm taken over every
/// array together. An all-zero g gives all-zero noise.
std::vector<std::vector<double>> fgm_noise(const std::vector<std::vector<double>>& grads,
                                           double epsilon);

struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One bias-corrected Adam update from Parameter::grad. Frozen parameters and
/// noise tables are skipped; padding rows are re-zeroed afterwards.
void adam_step(AdamState& opt, ParamStore& params);

enum class LossKind { kBpr, kQabpr };
std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  LossKind loss = LossKind::kBpr;
  double learning_rate = 0.001;
  double reg_weight = 0.0001;
  double reg_embedding = 0.0001;
  std::size_t epochs = 30;
  /// Positive instances per batch; each brings `negatives` triplets.
  std::size_t batch_size = 256;
  std::size_t negatives = 4;
  double adv_weight = 1.0;  // lambda_adv
  double epsilon = 0.5;
  double noise_reg = 0.0;  // lambda_delta in the max step
  std::uint64_t seed = 1;
  /// Validation ranking after every epoch (and before the first).
  EvalOptions validation{1000, {10, 100}, 7, 1, 0};
  /// Keep the parameters of the epoch with the best validation NDCG@100.
  bool select_best = true;
};

struct TrainingData {
  std::span<const ScoringInstance> train;
  std::span<const ScoringInstance> validation;
  const UserItemSets* train_items = nullptr;
  const UserItemSets* interacted = nullptr;
  std::size_t n_items = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0;  // mean per triplet
  double val_hit100 = 0;
  double val_ndcg100 = 0;
  double wall_seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 = initialization
  double best_val_ndcg100 = 0;
  double initial_val_ndcg100 = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct EpochStats {
  double loss = 0;
  std::size_t triplets = 0;
};

/// One pass of plain BPR over the shuffled training instances.
EpochStats bpr_epoch(Model& model, AdamState& opt, const TrainingData& data,
                     const TrainConfig& config, std::mt19937_64& rng);

/// One pass of the minimax game: per batch a max step (delta from FGM with
/// E and Theta frozen) then a min step on L(E) + adv_weight * L(E + delta)
/// with delta frozen. Creates the noise tables on first use.
EpochStats qabpr_epoch(Model& model, AdamState& opt, const TrainingData& data,
                       const TrainConfig& config, std::mt19937_64& rng);

/// Samples the batch triplets for instances [begin, end) of `order`.
std::vector<Triplet> sample_triplets(std::span<const ScoringInstance> instances,
                                     std::span<const std::uint32_t> order, std::size_t begin,
                                     std::size_t end, std::size_t negatives,
                                     const NegativeSampler& sampler, std::mt19937_64& rng);

/// Max step of one batch: sets the noise tables by FGM. Returns ||g||.
double adversarial_step(Model& model, std::span<const ScoringInstance> instances,
                        std::span<const Triplet> triplets, double epsilon, double noise_reg);
/// Same, recording on a caller-owned tape (reset first).
double adversarial_step(Tape& tape, Model& model, std::span<const ScoringInstance> instances,
                        std::span<const Triplet> triplets, double epsilon, double noise_reg);

/// Runs `config.epochs` epochs and leaves the best-validation parameters in
/// `model` (unless select_best is off).
TrainResult train(Model& model, const TrainingData& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace quatrec

#endif  // QUATREC_TRAINING_HPP_
