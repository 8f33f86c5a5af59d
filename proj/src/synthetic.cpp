#include "quatrec/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace quatrec {

InteractionLog generate_synthetic(const SyntheticConfig& c) {
  if (c.n_users == 0 || c.n_items < c.n_clusters || c.n_clusters == 0 || c.min_length == 0 ||
      c.max_length < c.min_length)
    throw ContractError("generate_synthetic: inconsistent configuration");
  std::mt19937_64 rng(c.seed);

  // Items are split into contiguous cluster blocks; successors are a random
  // permutation over the whole catalog, so short-term moves cross clusters.
  std::vector<std::uint32_t> successor(c.n_items + 1, 0);
  std::iota(successor.begin() + 1, successor.end(), 1u);
  std::shuffle(successor.begin() + 1, successor.end(), rng);
  auto cluster_begin = [&](std::size_t k) {
    return static_cast<std::uint32_t>(1 + k * c.n_items / c.n_clusters);
  };

  InteractionLog log;
  for (std::size_t i = 1; i <= c.n_items; ++i) log.item_ids.push_back("i" + std::to_string(i));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> any_item(1, static_cast<std::uint32_t>(c.n_items));
  std::uniform_int_distribution<std::size_t> length(c.min_length, c.max_length);
  std::uniform_int_distribution<std::size_t> cluster(0, c.n_clusters - 1);
  std::uniform_int_distribution<std::int64_t> start(0, c.time_span / 2);

  for (std::size_t u = 1; u <= c.n_users; ++u) {
    log.user_ids.push_back("u" + std::to_string(u));
    const std::size_t k = cluster(rng);
    std::uniform_int_distribution<std::uint32_t> in_cluster(cluster_begin(k),
                                                           cluster_begin(k + 1) - 1);
    const std::size_t n = length(rng);
    const std::int64_t mean_gap = c.time_span / 2 / static_cast<std::int64_t>(n);
    std::uniform_int_distribution<std::int64_t> gap(1, std::max<std::int64_t>(1, 2 * mean_gap));
    std::int64_t t = c.start_time + start(rng);
    std::uint32_t prev = 0;
    for (std::size_t step = 0; step < n; ++step) {
      std::uint32_t item;
      if (prev != 0 && unit(rng) < c.markov_prob)
        item = successor[prev];
      else if (unit(rng) < c.cluster_prob)
        item = in_cluster(rng);
      else
        item = any_item(rng);
      log.records.push_back({static_cast<std::uint32_t>(u), item, t});
      t += gap(rng);
      prev = item;
    }
  }
  return log;
}

}  // namespace quatrec
