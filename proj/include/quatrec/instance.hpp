#ifndef QUATREC_INSTANCE_HPP_
#define QUATREC_INSTANCE_HPP_

#include <cstdint>
#include <vector>

namespace quatrec {

/// One (user, target item) prediction problem with its history windows.
///
/// Both windows are chronological and padded with id 0 at the front, so the
/// most recent item always sits in the last slot.
struct ScoringInstance {
  std::uint32_t user = 0;
  std::uint32_t target = 0;
  std::vector<std::uint32_t> long_items;
  std::vector<std::uint32_t> short_items;
  /// Global position of the target interaction in time order.
  std::uint64_t position = 0;
  std::int64_t timestamp = 0;

  std::vector<std::uint8_t> long_mask() const { return mask_of(long_items); }
  std::vector<std::uint8_t> short_mask() const { return mask_of(short_items); }

  static std::vector<std::uint8_t> mask_of(const std::vector<std::uint32_t>& ids) {
    std::vector<std::uint8_t> m(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != 0;
    return m;
  }

  friend bool operator==(const ScoringInstance&, const ScoringInstance&) = default;
};

}  // namespace quatrec

#endif  // QUATREC_INSTANCE_HPP_
