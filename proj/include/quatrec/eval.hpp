#ifndef QUATREC_EVAL_HPP_
#define QUATREC_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "quatrec/instance.hpp"
#include "quatrec/models.hpp"

namespace quatrec {

/// Sorted item ids per user (index = user id; entry 0 unused).
using UserItemSets = std::vector<std::vector<std::uint32_t>>;

bool contains(const UserItemSets& sets, std::uint32_t user, std::uint32_t item);

/// Anything that can score candidate items for an instance.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// out[c] = score of candidates[c]. Must be safe to call concurrently.
  virtual void score(const ScoringInstance& inst, std::span<const std::uint32_t> candidates,
                     std::span<double> out) const = 0;
};

class ModelScorer : public Scorer {
 public:
  /// Keeps a reference to `model`; the model must outlive the scorer and stay unchanged.
  explicit ModelScorer(const Model& model);
  void score(const ScoringInstance& inst, std::span<const std::uint32_t> candidates,
             std::span<double> out) const override;

 private:
  const Model& model_;
  ItemCache cache_;
};

/// Ranks items by training-set interaction count (the reference baseline).
class PopularityScorer : public Scorer {
 public:
  explicit PopularityScorer(std::vector<double> counts) : counts_(std::move(counts)) {}
  void score(const ScoringInstance& inst, std::span<const std::uint32_t> candidates,
             std::span<double> out) const override;

 private:
  std::vector<double> counts_;
};

/// Wraps a plain function.
class FunctionScorer : public Scorer {
 public:
  using Fn = std::function<double(const ScoringInstance&, std::uint32_t)>;
  explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
  void score(const ScoringInstance& inst, std::span<const std::uint32_t> candidates,
             std::span<double> out) const override;

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Metrics

/// 1 + number of negatives scoring >= the positive (ties count against it).
std::size_t pessimistic_rank(double positive, std::span<const double> negatives);
inline bool hit_at(std::size_t rank, std::size_t n) { return rank <= n; }
double ndcg_at(std::size_t rank, std::size_t n);

struct RankingResult {
  std::size_t instance = 0;
  std::size_t rank = 0;
  std::size_t candidates = 0;
};

struct EvalOptions {
  std::size_t num_negatives = 1000;
  std::vector<std::size_t> cutoffs{1, 10, 20, 50, 100};
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  /// Evaluate only the first n instances (0 = all).
  std::size_t max_instances = 0;
};

struct MetricReport {
  std::string model;
  std::vector<std::size_t> cutoffs;
  std::vector<double> hit;
  std::vector<double> ndcg;
  std::size_t instances = 0;
  /// Instances whose user had fewer eligible negatives than requested.
  std::size_t short_pool_instances = 0;
  std::uint64_t seed = 0;
  std::vector<RankingResult> rankings;

  double hit_at(std::size_t cutoff) const;
  double ndcg_at(std::size_t cutoff) const;
  nlohmann::json to_json() const;
};

/// Aggregates per-instance ranks into mean HIT@N / NDCG@N.
MetricReport summarize(std::vector<RankingResult> rankings, std::span<const std::size_t> cutoffs);

/// `count` distinct items drawn uniformly from [1, n_items] minus `excluded`
/// (sorted) and `positive`; every eligible item if fewer exist.
std::vector<std::uint32_t> sample_eval_negatives(std::span<const std::uint32_t> excluded,
                                                 std::uint32_t positive, std::size_t n_items,
                                                 std::size_t count, std::mt19937_64& rng);

/// Seed used for instance `index`; independent of thread count.
std::uint64_t instance_seed(std::uint64_t seed, std::size_t index);

/// Ranks each instance's target against sampled unobserved items.
/// `interacted` holds every item each user touched in any split.
MetricReport evaluate(const Scorer& scorer, std::span<const ScoringInstance> instances,
                      const UserItemSets& interacted, std::size_t n_items,
                      const EvalOptions& options);

// ---------------------------------------------------------------------------
// Analyses

/// Cosine similarity of two sorted sets viewed as multi-hot vectors.
double set_cosine(std::span<const std::uint32_t> x, std::span<const std::uint32_t> y);

struct TimedInteraction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;
};

enum class IntervalUnit { kPositions, kSeconds };

struct DensityOptions {
  IntervalUnit unit = IntervalUnit::kPositions;
  /// Width of one interval bucket in `unit`.
  double interval_width = 1;
  std::size_t max_interval_buckets = 20;
  std::size_t similarity_bins = 20;
};

/// density[b][s]: share of (user, item) pairs whose closest earlier item
/// (by cosine of user multi-hot vectors) sits in interval bucket b with
/// similarity in bin s. Rows sum to the share of pairs in that bucket.
struct DensityTable {
  std::vector<double> interval_edges;
  std::vector<double> similarity_edges;
  std::vector<std::vector<double>> density;
  std::size_t pairs = 0;
  /// (interval, max similarity) of every pair, in user then time order.
  std::vector<std::pair<double, double>> points;
};

/// Interactions must be given in chronological order.
DensityTable similarity_density(std::span<const TimedInteraction> interactions,
                                const DensityOptions& options);

/// Pearson correlation; throws UndefinedCorrelationError on zero variance or
/// fewer than two points.
double pearson(std::span<const double> x, std::span<const double> y);

/// Item-item PMI from co-occurrence in users' training histories.
class PmiTable {
 public:
  /// `sets[u]` are the (sorted, distinct) training items of user u.
  PmiTable(const UserItemSets& sets, std::size_t n_items);
  /// log(P(j,t) / (P(j)P(t))); -inf without co-occurrence.
  double pmi(std::uint32_t j, std::uint32_t t) const;
  std::size_t cooccurrence(std::uint32_t j, std::uint32_t t) const;

 private:
  std::size_t users_ = 0;
  std::vector<std::size_t> item_count_;
  std::unordered_map<std::uint64_t, std::size_t> pair_count_;
};

struct PmiPoint {
  std::uint32_t target = 0;
  std::uint32_t history_item = 0;
  double pmi = 0;        // softmax-normalized over the instance's history
  double attention = 0;  // mean of the four parts
};

struct PmiCorrelation {
  double rho = 0;
  std::vector<PmiPoint> points;
};

/// Attention of one instance: one quaternion per unpadded long-history item.
using AttentionFn = std::function<std::vector<Quat>(const ScoringInstance&)>;

/// Pearson correlation between softmax-normalized PMI and attention over
/// (target, history item) pairs with positive co-occurrence.
PmiCorrelation pmi_attention_correlation(const AttentionFn& attention,
                                         std::span<const ScoringInstance> instances,
                                         const PmiTable& pmi);

}  // namespace quatrec

#endif  // QUATREC_EVAL_HPP_
