#ifndef QUATREC_SYNTHETIC_HPP_
#define QUATREC_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>

#include "quatrec/data.hpp"

namespace quatrec {

/// Interaction logs with planted structure: each user belongs to one item
/// cluster (long-term taste) and, step to step, often follows a fixed
/// successor of the previous item (a first-order Markov chain).
struct SyntheticConfig {
  std::size_t n_users = 2000;
  std::size_t n_items = 500;
  std::size_t n_clusters = 10;
  std::size_t min_length = 10;
  std::size_t max_length = 30;
  /// Probability that the next item is the successor of the previous one.
  double markov_prob = 0.4;
  /// Otherwise, probability of drawing from the user's cluster (else any item).
  double cluster_prob = 0.8;
  std::uint64_t seed = 2024;
  std::int64_t start_time = 1'500'000'000;
  /// Users start within the first half of this span and spread over the rest.
  std::int64_t time_span = 100'000'000;
};

InteractionLog generate_synthetic(const SyntheticConfig& config);

}  // namespace quatrec

#endif  // QUATREC_SYNTHETIC_HPP_
