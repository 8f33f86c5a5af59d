#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "oracle/fixtures.hpp"
#include "oracle/metric_fixture.hpp"
#include "quatrec/error.hpp"
#include "quatrec/eval.hpp"

namespace {

using namespace quatrec;

using oracle::FiveInstanceFixture;
using oracle::instance;
using oracle::random_instances;
using oracle::random_scorer;
using oracle::unit_hash;

TEST(Metrics, RankAndNdcgFormula) {
  const std::vector<double> neg{0.1, 0.5, 0.9};
  EXPECT_EQ(pessimistic_rank(1.0, neg), 1u);
  EXPECT_EQ(pessimistic_rank(0.7, neg), 2u);
  EXPECT_EQ(pessimistic_rank(0.5, neg), 3u);
  EXPECT_EQ(ndcg_at(1, 1), 1.0);
  EXPECT_NEAR(ndcg_at(2, 10), 0.6309, 5e-5);
  EXPECT_EQ(ndcg_at(11, 10), 0.0);
  EXPECT_TRUE(hit_at(10, 10));
  EXPECT_FALSE(hit_at(11, 10));
}

TEST(Evaluate, FiveInstanceFixture) {
  FiveInstanceFixture f;
  const auto report = evaluate(f.scorer, f.instances, f.interacted, 20, f.options);
  ASSERT_EQ(report.instances, 5u);
  std::vector<std::size_t> ranks;
  for (const auto& r : report.rankings) {
    ranks.push_back(r.rank);
    EXPECT_EQ(r.candidates, 20u);
  }
  EXPECT_EQ(ranks, (std::vector<std::size_t>{1, 2, 6, 13, 20}));
  EXPECT_DOUBLE_EQ(report.hit_at(1), 0.2);
  EXPECT_DOUBLE_EQ(report.hit_at(5), 0.4);
  EXPECT_DOUBLE_EQ(report.hit_at(10), 0.6);
  EXPECT_DOUBLE_EQ(report.hit_at(20), 1.0);
  EXPECT_DOUBLE_EQ(report.ndcg_at(1), 0.2);
  // (1 + 1/log2 3) / 5 and adding 1/log2 7, 1/log2 14, 1/log2 21.
  EXPECT_NEAR(report.ndcg_at(5), 0.3261860, 1e-7);
  EXPECT_NEAR(report.ndcg_at(10), 0.3974274, 1e-7);
  EXPECT_NEAR(report.ndcg_at(20), 0.4954913, 1e-7);
  EXPECT_EQ(report.short_pool_instances, 0u);
  EXPECT_THROW(report.hit_at(100), LookupError);
}

TEST(Evaluate, SecondPlaceGivesNdcgPointSixThree) {
  FiveInstanceFixture f;
  const std::vector<ScoringInstance> one{f.instances[1]};
  const auto report = evaluate(f.scorer, one, f.interacted, 20, f.options);
  EXPECT_NEAR(report.ndcg_at(10), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(report.ndcg_at(10), 0.6309, 5e-5);
}

TEST(Evaluate, TiesCountAgainstThePositive) {
  FiveInstanceFixture f;
  f.positive[1] = 20.0;
  const std::vector<ScoringInstance> one{f.instances[0]};
  EXPECT_EQ(evaluate(f.scorer, one, f.interacted, 20, f.options).rankings[0].rank, 2u);
}

TEST(Evaluate, ConstantScorerRanksLast) {
  FunctionScorer constant([](const ScoringInstance&, std::uint32_t) { return 0.5; });
  std::vector<ScoringInstance> instances;
  for (std::uint32_t u = 1; u <= 20; ++u) instances.push_back(instance(u, u));
  UserItemSets interacted(21);
  const auto report = evaluate(constant, instances, interacted, 2000, {1000, {1, 100}, 1, 1, 0});
  for (const auto& r : report.rankings) EXPECT_EQ(r.rank, 1001u);
  EXPECT_EQ(report.hit_at(100), 0.0);
  EXPECT_EQ(report.ndcg_at(1), 0.0);
}

TEST(Evaluate, OracleScorerRanksFirst) {
  FunctionScorer oracle_scorer(
      [](const ScoringInstance& inst, std::uint32_t item) { return item == inst.target ? 1.0 : 0.0; });
  std::vector<ScoringInstance> instances{instance(1, 4), instance(2, 9)};
  UserItemSets interacted(3);
  const auto report = evaluate(oracle_scorer, instances, interacted, 1500, {1000, {1}, 1, 1, 0});
  EXPECT_EQ(report.hit_at(1), 1.0);
  EXPECT_EQ(report.ndcg_at(1), 1.0);
}

TEST(Evaluate, RandomScorerHitsAtChance) {
  const std::size_t n = 10000, n_items = 3000;
  const auto instances = random_instances(n, n_items);
  UserItemSets interacted(n + 1);
  for (const auto& inst : instances) interacted[inst.user] = {inst.target};
  const auto report =
      evaluate(random_scorer(), instances, interacted, n_items, {1000, {10, 50, 100}, 9, 2, 0});
  const double p = 100.0 / 1001.0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(report.hit_at(100), p, 3 * sigma);
  EXPECT_LE(report.hit_at(10), report.hit_at(50));
  EXPECT_LE(report.hit_at(50), report.hit_at(100));
  for (std::size_t c : {10u, 50u, 100u}) EXPECT_LE(report.ndcg_at(c), report.hit_at(c));
  for (const auto& r : report.rankings) EXPECT_EQ(r.candidates, 1001u);
}

TEST(Evaluate, HitMonotoneAndNdcgBoundedForAnyScorer) {
  const auto instances = random_instances(300, 1200);
  UserItemSets interacted(301);
  std::vector<std::size_t> cutoffs;
  for (std::size_t c = 1; c <= 1001; c += 25) cutoffs.push_back(c);
  const auto report = evaluate(random_scorer(), instances, interacted, 1200, {1000, cutoffs, 2, 1, 0});
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    EXPECT_LE(report.ndcg[i], report.hit[i]);
    if (i > 0) {
      EXPECT_LE(report.hit[i - 1], report.hit[i]);
    }
  }
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  const auto instances = random_instances(500, 2000);
  UserItemSets interacted(501);
  for (std::size_t u = 1; u <= 500; ++u) interacted[u] = {3, 7, static_cast<std::uint32_t>(u)};
  for (auto& v : interacted) std::sort(v.begin(), v.end());
  const auto one = evaluate(random_scorer(), instances, interacted, 2000, {1000, {10, 100}, 4, 1, 0});
  for (std::size_t t : {2u, 3u, 8u}) {
    const auto many =
        evaluate(random_scorer(), instances, interacted, 2000, {1000, {10, 100}, 4, t, 0});
    ASSERT_EQ(many.rankings.size(), one.rankings.size());
    for (std::size_t i = 0; i < one.rankings.size(); ++i)
      EXPECT_EQ(many.rankings[i].rank, one.rankings[i].rank);
    EXPECT_EQ(many.hit, one.hit);
    EXPECT_EQ(many.ndcg, one.ndcg);
  }
}

TEST(Evaluate, SameSeedSameReportOtherSeedDiffers) {
  const auto instances = random_instances(200, 2000);
  UserItemSets interacted(201);
  const EvalOptions a{1000, {100}, 11, 1, 0}, b{1000, {100}, 12, 1, 0};
  const auto r1 = evaluate(random_scorer(), instances, interacted, 2000, a);
  const auto r2 = evaluate(random_scorer(), instances, interacted, 2000, a);
  const auto r3 = evaluate(random_scorer(), instances, interacted, 2000, b);
  EXPECT_EQ(r1.to_json(), r2.to_json());
  EXPECT_NE(r1.to_json(), r3.to_json());
}

TEST(Evaluate, MaxInstancesTakesAPrefix) {
  const auto instances = random_instances(50, 2000);
  UserItemSets interacted(51);
  const auto all = evaluate(random_scorer(), instances, interacted, 2000, {1000, {100}, 1, 1, 0});
  const auto head = evaluate(random_scorer(), instances, interacted, 2000, {1000, {100}, 1, 1, 10});
  ASSERT_EQ(head.instances, 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(head.rankings[i].rank, all.rankings[i].rank);
}

TEST(Evaluate, ShortPoolUsesEveryEligibleItem) {
  UserItemSets interacted(3);
  for (std::uint32_t i = 1; i <= 10; ++i) interacted[1].push_back(i);
  const std::vector<ScoringInstance> instances{instance(1, 4), instance(2, 4)};
  const auto report = evaluate(random_scorer(), instances, interacted, 15, {1000, {1}, 1, 1, 0});
  EXPECT_EQ(report.rankings[0].candidates, 6u);
  EXPECT_EQ(report.rankings[1].candidates, 15u);
  EXPECT_EQ(report.short_pool_instances, 2u);
}

TEST(EvalNegatives, DistinctUnobservedAndUniform) {
  const std::vector<std::uint32_t> excluded{2, 4, 6, 8};
  std::mt19937_64 rng(6);
  std::map<std::uint32_t, int> counts;
  for (int trial = 0; trial < 4000; ++trial) {
    const auto neg = sample_eval_negatives(excluded, 5, 30, 10, rng);
    ASSERT_EQ(neg.size(), 10u);
    std::set<std::uint32_t> distinct(neg.begin(), neg.end());
    ASSERT_EQ(distinct.size(), 10u);
    for (auto i : neg) {
      ASSERT_GE(i, 1u);
      ASSERT_LE(i, 30u);
      ASSERT_NE(i, 5u);
      ASSERT_FALSE(std::binary_search(excluded.begin(), excluded.end(), i));
      ++counts[i];
    }
  }
  ASSERT_EQ(counts.size(), 25u);
  const double p = 10.0 / 25.0, n = 4000;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (const auto& [item, c] : counts) EXPECT_NEAR(c, n * p, 4 * sigma) << item;
  // Sparse path: a large catalog.
  const auto big = sample_eval_negatives(excluded, 5, 100000, 1000, rng);
  EXPECT_EQ(std::set<std::uint32_t>(big.begin(), big.end()).size(), 1000u);
}

TEST(Scorers, ModelAndPopularity) {
  Model model(oracle::small_config(ModelKind::kQualse), 7);
  std::mt19937_64 rng(7);
  const auto inst = oracle::random_instance(rng, 4, 7, 4, 3, 5);
  ModelScorer scorer(model);
  const std::vector<std::uint32_t> items{1, 2, 3, 4, 5, 6, 7};
  std::vector<double> out(items.size());
  scorer.score(inst, items, out);
  for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(out[i], model.score(inst, items[i]));
  PopularityScorer pop({0, 5, 1, 9});
  std::vector<double> p(3);
  const std::vector<std::uint32_t> some{3, 1, 2};
  pop.score(inst, some, p);
  EXPECT_EQ(p, (std::vector<double>{9, 5, 1}));
}

// ---------------------------------------------------------------------------

TEST(Density, CosineExamples) {
  const std::vector<std::uint32_t> a{1, 3, 5}, b{1, 3, 5}, c{2, 4}, d{1, 2};
  EXPECT_DOUBLE_EQ(set_cosine(a, b), 1.0);
  EXPECT_DOUBLE_EQ(set_cosine(a, c), 0.0);
  EXPECT_DOUBLE_EQ(set_cosine(a, d), 1.0 / std::sqrt(6.0));
  EXPECT_DOUBLE_EQ(set_cosine({}, a), 0.0);
}

struct DensityOracle {
  std::vector<std::vector<double>> density;
  std::vector<std::pair<double, double>> points;
};

// Dense multi-hot vectors and a full scan of every earlier item.
DensityOracle density_oracle(const std::vector<TimedInteraction>& log, std::size_t n_users,
                             std::size_t n_items, const DensityOptions& o) {
  std::vector<std::vector<double>> hot(n_items + 1, std::vector<double>(n_users + 1, 0.0));
  for (const auto& x : log) hot[x.item][x.user] = 1.0;
  auto cosine = [&](std::uint32_t i, std::uint32_t j) {
    double dot = 0, ni = 0, nj = 0;
    for (std::size_t u = 0; u <= n_users; ++u) {
      dot += hot[i][u] * hot[j][u];
      ni += hot[i][u] * hot[i][u];
      nj += hot[j][u] * hot[j][u];
    }
    return dot / std::sqrt(ni * nj);
  };
  DensityOracle out;
  out.density.assign(o.max_interval_buckets, std::vector<double>(o.similarity_bins, 0.0));
  std::size_t pairs = 0;
  for (std::uint32_t u = 0; u <= n_users; ++u) {
    std::vector<TimedInteraction> seq;
    for (const auto& x : log)
      if (x.user == u) seq.push_back(x);
    for (std::size_t t = 1; t < seq.size(); ++t) {
      double best = -1;
      std::size_t best_j = 0;
      // Closest earlier item among equal maxima.
      for (std::size_t j = 0; j < t; ++j) {
        const double c = cosine(seq[t].item, seq[j].item);
        if (c >= best) {
          best = c;
          best_j = j;
        }
      }
      const double interval = o.unit == IntervalUnit::kPositions
                                  ? static_cast<double>(t - best_j)
                                  : static_cast<double>(seq[t].timestamp - seq[best_j].timestamp);
      std::size_t b = static_cast<std::size_t>(interval / o.interval_width);
      b = std::min(b, o.max_interval_buckets - 1);
      std::size_t s = static_cast<std::size_t>(best * static_cast<double>(o.similarity_bins));
      s = std::min(s, o.similarity_bins - 1);
      out.density[b][s] += 1;
      out.points.emplace_back(interval, best);
      ++pairs;
    }
  }
  for (auto& row : out.density)
    for (double& v : row) v /= static_cast<double>(pairs);
  return out;
}

TEST(Density, TenUserToyMatchesQuadraticOracle) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::uint32_t> item(1, 8);
  std::uniform_int_distribution<std::int64_t> gap(1, 500);
  std::vector<TimedInteraction> log;
  for (std::uint32_t u = 1; u <= 10; ++u) {
    std::int64_t t = 1000;
    for (int k = 0; k < 9; ++k) log.push_back({u, item(rng), t += gap(rng)});
  }
  std::stable_sort(log.begin(), log.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  for (const DensityOptions& o : {DensityOptions{IntervalUnit::kPositions, 1, 6, 5},
                                  DensityOptions{IntervalUnit::kSeconds, 400, 5, 10}}) {
    const auto table = similarity_density(log, o);
    const auto expected = density_oracle(log, 10, 8, o);
    EXPECT_EQ(table.pairs, 80u);
    ASSERT_EQ(table.points.size(), expected.points.size());
    for (std::size_t i = 0; i < table.points.size(); ++i) {
      EXPECT_EQ(table.points[i].first, expected.points[i].first) << i;
      EXPECT_NEAR(table.points[i].second, expected.points[i].second, 1e-12) << i;
    }
    double total = 0;
    for (std::size_t b = 0; b < o.max_interval_buckets; ++b)
      for (std::size_t s = 0; s < o.similarity_bins; ++s) {
        EXPECT_NEAR(table.density[b][s], expected.density[b][s], 1e-12);
        total += table.density[b][s];
      }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(table.interval_edges.size(), o.max_interval_buckets + 1);
    EXPECT_EQ(table.similarity_edges.back(), 1.0);
  }
}

TEST(Density, IdenticalUserSetsAtDistanceOne) {
  // Items 1 and 2 are always consumed together, so each pair is cosine 1.
  std::vector<TimedInteraction> log{{1, 1, 10}, {1, 2, 20}, {2, 1, 30}, {2, 2, 40}};
  const auto table = similarity_density(log, {IntervalUnit::kPositions, 1, 3, 4});
  ASSERT_EQ(table.pairs, 2u);
  EXPECT_EQ(table.density[1][3], 1.0);
  EXPECT_THROW(similarity_density(log, {IntervalUnit::kPositions, 0, 3, 4}), ContractError);
}

// ---------------------------------------------------------------------------

TEST(Pmi, AlwaysCoConsumedItems) {
  UserItemSets sets(11);
  for (std::uint32_t u = 1; u <= 10; ++u) sets[u] = {5};
  for (std::uint32_t u = 1; u <= 3; ++u) sets[u] = {1, 2, 5};
  PmiTable pmi(sets, 6);
  EXPECT_NEAR(pmi.pmi(1, 2), std::log(1.0 / 0.3), 1e-12);
  EXPECT_GT(pmi.pmi(1, 2), 0.0);
  EXPECT_EQ(pmi.pmi(2, 1), pmi.pmi(1, 2));
  EXPECT_NEAR(pmi.pmi(1, 5), 0.0, 1e-12);  // item 5 is everywhere
  EXPECT_EQ(pmi.pmi(1, 6), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(pmi.cooccurrence(1, 2), 3u);
}

struct PmiToy {
  UserItemSets sets;
  std::vector<ScoringInstance> instances;
};

PmiToy pmi_toy() {
  PmiToy toy;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::uint32_t> item(1, 25);
  toy.sets.resize(201);
  for (std::uint32_t u = 1; u <= 200; ++u) {
    std::vector<std::uint32_t> seq(8);
    for (auto& x : seq) x = item(rng);
    auto& s = toy.sets[u];
    s = seq;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    ScoringInstance inst;
    inst.user = u;
    inst.target = seq.back();
    inst.long_items.assign(seq.begin(), seq.end() - 1);
    inst.long_items.insert(inst.long_items.begin(), 0);
    toy.instances.push_back(inst);
  }
  return toy;
}

TEST(Pmi, AttentionProportionalToPmiGivesRhoOne) {
  const auto toy = pmi_toy();
  PmiTable pmi(toy.sets, 25);
  AttentionFn proportional = [&](const ScoringInstance& inst) {
    std::vector<double> v;
    std::vector<Quat> out;
    double hi = -std::numeric_limits<double>::infinity();
    for (auto id : inst.long_items)
      if (id != 0) {
        const double x = id == inst.target ? -std::numeric_limits<double>::infinity()
                                           : pmi.pmi(id, inst.target);
        v.push_back(x);
        hi = std::max(hi, x);
      }
    double total = 0;
    for (double x : v) total += std::isfinite(x) ? std::exp(x - hi) : 0.0;
    for (double x : v) {
      const double a = std::isfinite(x) ? 3.0 * std::exp(x - hi) / total : 0.0;
      out.push_back({a, a, a, a});
    }
    return out;
  };
  const auto result = pmi_attention_correlation(proportional, toy.instances, pmi);
  EXPECT_GT(result.points.size(), 100u);
  EXPECT_NEAR(result.rho, 1.0, 1e-12);
  for (const auto& p : result.points) EXPECT_NEAR(p.attention, 3.0 * p.pmi, 1e-12);
}

TEST(Pmi, IndependentAttentionGivesRhoNearZero) {
  const auto toy = pmi_toy();
  PmiTable pmi(toy.sets, 25);
  AttentionFn noise = [](const ScoringInstance& inst) {
    std::vector<Quat> out;
    for (std::size_t p = 0; p < inst.long_items.size(); ++p)
      if (inst.long_items[p] != 0) {
        const double x = unit_hash(inst.user, p);
        out.push_back({x, x, x, x});
      }
    return out;
  };
  const auto result = pmi_attention_correlation(noise, toy.instances, pmi);
  const double n = static_cast<double>(result.points.size());
  EXPECT_NEAR(result.rho, 0.0, 3.0 / std::sqrt(n - 1));
}

TEST(Pmi, AttentionUsesTheMeanOfTheFourParts) {
  const auto toy = pmi_toy();
  PmiTable pmi(toy.sets, 25);
  AttentionFn parts = [](const ScoringInstance& inst) {
    std::vector<Quat> out;
    for (std::size_t p = 0; p < inst.long_items.size(); ++p)
      if (inst.long_items[p] != 0) {
        const double id = inst.long_items[p];
        out.push_back({0.3 * id, 2.0, -2.0, 0.1 * id});
      }
    return out;
  };
  const auto result = pmi_attention_correlation(parts, toy.instances, pmi);
  for (const auto& p : result.points) EXPECT_NEAR(p.attention, 0.1 * p.history_item, 1e-12);
}

TEST(Pmi, UndefinedCorrelation) {
  const auto toy = pmi_toy();
  PmiTable pmi(toy.sets, 25);
  AttentionFn flat = [](const ScoringInstance& inst) {
    std::size_t n = 0;
    for (auto id : inst.long_items) n += id != 0;
    return std::vector<Quat>(n, Quat{0.1, 0.1, 0.1, 0.1});
  };
  EXPECT_THROW(pmi_attention_correlation(flat, toy.instances, pmi), UndefinedCorrelationError);
  const std::vector<double> one{1.0};
  EXPECT_THROW(pearson(one, one), UndefinedCorrelationError);
  const std::vector<double> x{1, 2, 3}, y{2, 4, 6.5};
  EXPECT_GT(pearson(x, y), 0.99);
}

TEST(Pmi, WrongAttentionLengthIsDimensionError) {
  const auto toy = pmi_toy();
  PmiTable pmi(toy.sets, 25);
  AttentionFn wrong = [](const ScoringInstance&) { return std::vector<Quat>(1); };
  EXPECT_THROW(pmi_attention_correlation(wrong, toy.instances, pmi), DimensionError);
}

TEST(Pmi, ModelAttentionFeedsTheCorrelation) {
  auto config = oracle::small_config(ModelKind::kQuale, 8, 8, 3);
  config.n_users = 200;
  config.n_items = 25;
  Model model(config, 10);
  const auto toy = pmi_toy();
  PmiTable pmi(toy.sets, 25);
  const auto result = pmi_attention_correlation(
      [&](const ScoringInstance& inst) { return model.long_attention(inst); }, toy.instances, pmi);
  EXPECT_TRUE(std::isfinite(result.rho));
  for (const auto& p : result.points) {
    EXPECT_GT(p.attention, 0.0);
    EXPECT_LT(p.attention, 1.0);
  }
}

}  // namespace
