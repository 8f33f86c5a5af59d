#include "quatrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <unordered_set>

namespace quatrec {

bool contains(const UserItemSets& sets, std::uint32_t user, std::uint32_t item) {
  if (user >= sets.size()) return false;
  return std::binary_search(sets[user].begin(), sets[user].end(), item);
}

ModelScorer::ModelScorer(const Model& model) : model_(model), cache_(model.item_cache()) {}

void ModelScorer::score(const ScoringInstance& inst, std::span<const std::uint32_t> candidates,
                        std::span<double> out) const {
  const UserVector user = model_.encode_user(inst);
  for (std::size_t c = 0; c < candidates.size(); ++c)
    out[c] = model_.score_item(user, cache_, candidates[c]);
}

void PopularityScorer::score(const ScoringInstance&, std::span<const std::uint32_t> candidates,
                             std::span<double> out) const {
  for (std::size_t c = 0; c < candidates.size(); ++c)
    out[c] = candidates[c] < counts_.size() ? counts_[candidates[c]] : 0.0;
}

void FunctionScorer::score(const ScoringInstance& inst, std::span<const std::uint32_t> candidates,
                           std::span<double> out) const {
  for (std::size_t c = 0; c < candidates.size(); ++c) out[c] = fn_(inst, candidates[c]);
}

// ---------------------------------------------------------------------------

std::size_t pessimistic_rank(double positive, std::span<const double> negatives) {
  std::size_t rank = 1;
  for (double s : negatives)
    if (s >= positive) ++rank;
  return rank;
}

double ndcg_at(std::size_t rank, std::size_t n) {
  return rank <= n ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double MetricReport::hit_at(std::size_t cutoff) const {
  for (std::size_t i = 0; i < cutoffs.size(); ++i)
    if (cutoffs[i] == cutoff) return hit[i];
  throw LookupError("no HIT@" + std::to_string(cutoff) + " in report");
}

double MetricReport::ndcg_at(std::size_t cutoff) const {
  for (std::size_t i = 0; i < cutoffs.size(); ++i)
    if (cutoffs[i] == cutoff) return ndcg[i];
  throw LookupError("no NDCG@" + std::to_string(cutoff) + " in report");
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cutoffs.size(); ++i)
    rows.push_back({{"model", model},
                    {"cutoff", cutoffs[i]},
                    {"hit", hit[i]},
                    {"ndcg", ndcg[i]},
                    {"instances", instances},
                    {"seed", seed}});
  return {{"model", model},
          {"instances", instances},
          {"seed", seed},
          {"short_pool_instances", short_pool_instances},
          {"metrics", rows}};
}

MetricReport summarize(std::vector<RankingResult> rankings, std::span<const std::size_t> cutoffs) {
  MetricReport r;
  r.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  r.hit.assign(cutoffs.size(), 0.0);
  r.ndcg.assign(cutoffs.size(), 0.0);
  r.instances = rankings.size();
  for (const auto& x : rankings)
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
      r.hit[i] += hit_at(x.rank, cutoffs[i]) ? 1.0 : 0.0;
      r.ndcg[i] += ndcg_at(x.rank, cutoffs[i]);
    }
  if (!rankings.empty())
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
      r.hit[i] /= static_cast<double>(rankings.size());
      r.ndcg[i] /= static_cast<double>(rankings.size());
    }
  r.rankings = std::move(rankings);
  return r;
}

std::vector<std::uint32_t> sample_eval_negatives(std::span<const std::uint32_t> excluded,
                                                 std::uint32_t positive, std::size_t n_items,
                                                 std::size_t count, std::mt19937_64& rng) {
  auto is_excluded = [&](std::uint32_t item) {
    return item == positive || std::binary_search(excluded.begin(), excluded.end(), item);
  };
  std::size_t blocked = std::count_if(excluded.begin(), excluded.end(), [&](std::uint32_t i) {
    return i >= 1 && i <= n_items && i != positive;
  });
  if (positive >= 1 && positive <= n_items) ++blocked;
  const std::size_t eligible = n_items - blocked;

  std::vector<std::uint32_t> out;
  if (eligible <= count || eligible < 2 * count) {
    // Dense case: enumerate, then take a uniform subset by partial shuffle.
    for (std::uint32_t i = 1; i <= n_items; ++i)
      if (!is_excluded(i)) out.push_back(i);
    if (out.size() > count) {
      for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, out.size() - 1);
        std::swap(out[i], out[pick(rng)]);
      }
      out.resize(count);
    }
    return out;
  }
  std::unordered_set<std::uint32_t> seen;
  std::uniform_int_distribution<std::uint32_t> dist(1, static_cast<std::uint32_t>(n_items));
  out.reserve(count);
  while (out.size() < count) {
    const std::uint32_t item = dist(rng);
    if (is_excluded(item) || !seen.insert(item).second) continue;
    out.push_back(item);
  }
  return out;
}

std::uint64_t instance_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 of (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

MetricReport evaluate(const Scorer& scorer, std::span<const ScoringInstance> instances,
                      const UserItemSets& interacted, std::size_t n_items,
                      const EvalOptions& options) {
  const std::size_t n = options.max_instances == 0
                            ? instances.size()
                            : std::min(options.max_instances, instances.size());
  std::vector<RankingResult> rankings(n);
  std::vector<std::uint8_t> short_pool(n, 0);
  static const std::vector<std::uint32_t> kNone;

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> candidates;
    std::vector<double> scores;
    for (std::size_t i = begin; i < end; ++i) {
      const ScoringInstance& inst = instances[i];
      std::mt19937_64 rng(instance_seed(options.seed, i));
      const auto& excluded = inst.user < interacted.size() ? interacted[inst.user] : kNone;
      auto negatives = sample_eval_negatives(excluded, inst.target, n_items,
                                             options.num_negatives, rng);
      short_pool[i] = negatives.size() < options.num_negatives;
      candidates.assign(1, inst.target);
      candidates.insert(candidates.end(), negatives.begin(), negatives.end());
      scores.assign(candidates.size(), 0.0);
      scorer.score(inst, candidates, scores);
      rankings[i] = {i, pessimistic_rank(scores[0], std::span<const double>(scores).subspan(1)),
                     candidates.size()};
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, n));
  if (threads <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          work(std::min(n, t * chunk), std::min(n, (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MetricReport report = summarize(std::move(rankings), options.cutoffs);
  report.seed = options.seed;
  report.short_pool_instances =
      static_cast<std::size_t>(std::count(short_pool.begin(), short_pool.end(), 1));
  return report;
}

// ---------------------------------------------------------------------------
// Similarity density

double set_cosine(std::span<const std::uint32_t> x, std::span<const std::uint32_t> y) {
  if (x.empty() || y.empty()) return 0.0;
  std::size_t common = 0;
  for (std::size_t i = 0, j = 0; i < x.size() && j < y.size();) {
    if (x[i] < y[j]) {
      ++i;
    } else if (y[j] < x[i]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) /
         std::sqrt(static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

DensityTable similarity_density(std::span<const TimedInteraction> interactions,
                                const DensityOptions& options) {
  if (options.interval_width <= 0 || options.max_interval_buckets == 0 ||
      options.similarity_bins == 0)
    throw ContractError("similarity_density: bucket sizes must be positive");
  std::uint32_t max_item = 0, max_user = 0;
  for (const auto& x : interactions) {
    max_item = std::max(max_item, x.item);
    max_user = std::max(max_user, x.user);
  }
  UserItemSets item_users(max_item + 1);
  std::vector<std::vector<const TimedInteraction*>> sequences(max_user + 1);
  for (const auto& x : interactions) {
    item_users[x.item].push_back(x.user);
    sequences[x.user].push_back(&x);
  }
  for (auto& s : item_users) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }

  DensityTable table;
  const std::size_t nb = options.max_interval_buckets, ns = options.similarity_bins;
  table.density.assign(nb, std::vector<double>(ns, 0.0));
  for (std::size_t b = 0; b <= nb; ++b)
    table.interval_edges.push_back(static_cast<double>(b) * options.interval_width);
  for (std::size_t s = 0; s <= ns; ++s)
    table.similarity_edges.push_back(static_cast<double>(s) / static_cast<double>(ns));

  for (const auto& seq : sequences) {
    for (std::size_t t = 1; t < seq.size(); ++t) {
      double best = -1;
      std::size_t best_j = t;
      for (std::size_t j = t; j-- > 0;) {
        const double sim = set_cosine(item_users[seq[t]->item], item_users[seq[j]->item]);
        if (sim > best) {
          best = sim;
          best_j = j;
        }
      }
      const double interval =
          options.unit == IntervalUnit::kPositions
              ? static_cast<double>(t - best_j)
              : static_cast<double>(seq[t]->timestamp - seq[best_j]->timestamp);
      const auto b = std::min<std::size_t>(
          nb - 1, static_cast<std::size_t>(std::max(0.0, interval) / options.interval_width));
      const auto s = std::min<std::size_t>(ns - 1, static_cast<std::size_t>(best * ns));
      table.density[b][s] += 1.0;
      table.points.emplace_back(interval, best);
      ++table.pairs;
    }
  }
  if (table.pairs > 0)
    for (auto& row : table.density)
      for (double& v : row) v /= static_cast<double>(table.pairs);
  return table;
}

// ---------------------------------------------------------------------------
// PMI vs attention

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionError("pearson: " + std::to_string(x.size()) + " vs " +
                         std::to_string(y.size()) + " values");
  if (x.size() < 2) throw UndefinedCorrelationError("pearson: fewer than two points");
  // Exact test: the centered sums of a constant like 0.1 keep round-off residue.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
  };
  if (constant(x) || constant(y)) throw UndefinedCorrelationError("pearson: zero variance input");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw UndefinedCorrelationError("pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

namespace {
std::uint64_t pair_key(std::uint32_t j, std::uint32_t t) {
  if (j > t) std::swap(j, t);
  return (static_cast<std::uint64_t>(j) << 32) | t;
}
}  // namespace

PmiTable::PmiTable(const UserItemSets& sets, std::size_t n_items) : item_count_(n_items + 1, 0) {
  for (const auto& s : sets) {
    if (s.empty()) continue;
    ++users_;
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (s[a] < item_count_.size()) ++item_count_[s[a]];
      for (std::size_t b = a + 1; b < s.size(); ++b) ++pair_count_[pair_key(s[a], s[b])];
    }
  }
}

std::size_t PmiTable::cooccurrence(std::uint32_t j, std::uint32_t t) const {
  if (j == t) return j < item_count_.size() ? item_count_[j] : 0;
  auto it = pair_count_.find(pair_key(j, t));
  return it == pair_count_.end() ? 0 : it->second;
}

double PmiTable::pmi(std::uint32_t j, std::uint32_t t) const {
  const std::size_t joint = cooccurrence(j, t);
  if (joint == 0) return -std::numeric_limits<double>::infinity();
  const double u = static_cast<double>(users_);
  return std::log(static_cast<double>(joint) * u /
                  (static_cast<double>(item_count_[j]) * static_cast<double>(item_count_[t])));
}

PmiCorrelation pmi_attention_correlation(const AttentionFn& attention,
                                         std::span<const ScoringInstance> instances,
                                         const PmiTable& pmi) {
  PmiCorrelation out;
  for (const auto& inst : instances) {
    std::vector<std::uint32_t> history;
    for (auto id : inst.long_items)
      if (id != 0) history.push_back(id);
    if (history.empty()) continue;
    std::vector<std::size_t> keep;
    std::vector<double> values;
    for (std::size_t p = 0; p < history.size(); ++p) {
      if (history[p] == inst.target) continue;
      const double v = pmi.pmi(history[p], inst.target);
      if (!std::isfinite(v)) continue;
      keep.push_back(p);
      values.push_back(v);
    }
    if (keep.empty()) continue;
    const auto att = attention(inst);
    if (att.size() != history.size())
      throw DimensionError("attention returned " + std::to_string(att.size()) +
                           " scores for a history of " + std::to_string(history.size()));
    const double hi = *std::max_element(values.begin(), values.end());
    double total = 0;
    for (double& v : values) total += (v = std::exp(v - hi));
    for (std::size_t i = 0; i < keep.size(); ++i)
      out.points.push_back(
          {inst.target, history[keep[i]], values[i] / total, att[keep[i]].mean()});
  }
  std::vector<double> x, y;
  for (const auto& p : out.points) {
    x.push_back(p.pmi);
    y.push_back(p.attention);
  }
  out.rho = pearson(x, y);
  return out;
}

}  // namespace quatrec
