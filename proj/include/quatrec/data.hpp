#ifndef QUATREC_DATA_HPP_
#define QUATREC_DATA_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quatrec/eval.hpp"
#include "quatrec/instance.hpp"

namespace quatrec {

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Interactions over dense ids. user_ids[u] / item_ids[i] give the raw id of
/// dense id u / i; entry 0 is the reserved padding id and holds "".
struct InteractionLog {
  std::vector<Interaction> records;
  std::vector<std::string> user_ids{""};
  std::vector<std::string> item_ids{""};

  std::size_t n_users() const noexcept { return user_ids.size() - 1; }
  std::size_t n_items() const noexcept { return item_ids.size() - 1; }
};

enum class FileFormat { kAuto, kCsv, kTsv };

/// Parses integer seconds, decimal seconds (floored) or ISO-8601 dates
/// ("2014-03-01", "2014-03-01T12:30:00", optional trailing Z). Throws DataError.
std::int64_t parse_timestamp(const std::string& text);

/// Reads user,item,timestamp[,rating] rows. A first row whose timestamp
/// does not parse is taken as a header. Identical (user, item, timestamp)
/// rows collapse into one. Dense ids follow first appearance.
InteractionLog ingest(const std::filesystem::path& path, FileFormat format = FileFormat::kAuto);
InteractionLog parse_interactions(std::istream& in, char delimiter, const std::string& source);
/// Writes raw ids as CSV (user,item,timestamp) in record order.
void export_csv(const InteractionLog& log, const std::filesystem::path& path);

/// Iteratively drops users and items with fewer than k interactions until
/// nothing changes, then renumbers the survivors contiguously from 1 in
/// order of first appearance. Throws DataError if nothing survives.
InteractionLog k_core(const InteractionLog& log, std::size_t k);

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };
std::string to_string(Split s);

/// Records in global time order (stable for ties) with two cut points.
struct SplitDataset {
  InteractionLog log;
  std::size_t train_end = 0;       // floor(0.7 N)
  std::size_t validation_end = 0;  // floor(0.8 N)

  Split split_of(std::size_t position) const noexcept {
    return position < train_end        ? Split::kTrain
           : position < validation_end ? Split::kValidation
                                       : Split::kTest;
  }
  std::span<const Interaction> part(Split s) const;
  std::size_t count(Split s) const { return part(s).size(); }
};

/// Throws DataError when fewer than 10 interactions or fractions do not sum to 1.
SplitDataset chrono_split(InteractionLog log, std::array<double, 3> fractions = {0.7, 0.1, 0.2});

/// Training interactions per user, for users with at least one.
std::vector<std::size_t> train_sequence_lengths(const SplitDataset& data);

/// Type-7 (linear interpolation) quantile of sorted data.
double quantile(std::span<const double> sorted, double q);

/// ceil(Q3 + 1.5 IQR) of the lengths. Throws DataError with fewer than 4 users.
std::size_t compute_l(std::span<const std::size_t> lengths);

struct InstanceSet {
  std::vector<ScoringInstance> train;
  std::vector<ScoringInstance> validation;
  std::vector<ScoringInstance> test;
  /// Interactions skipped for lack of any earlier interaction, per split.
  std::array<std::size_t, 3> skipped{0, 0, 0};

  std::vector<ScoringInstance>& of(Split s);
  const std::vector<ScoringInstance>& of(Split s) const;
};

/// Every interaction with at least one earlier interaction of the same user
/// (in global order) becomes an instance in its own split, with the l and s
/// most recent earlier items as front-padded windows.
InstanceSet build_instances(const SplitDataset& data, std::size_t l, std::size_t s);

/// Sorted distinct items per user over the given splits.
UserItemSets user_items(const SplitDataset& data, std::initializer_list<Split> splits);
/// Training interaction count per item (index = item id).
std::vector<double> item_popularity(const SplitDataset& data);

// ---------------------------------------------------------------------------
// Processed dataset directory

struct Manifest {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_actions = 0;
  double density = 0;
  std::size_t l = 0;
  std::size_t s = 0;
  std::size_t k = 0;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::size_t train_instances = 0;
  std::size_t validation_instances = 0;
  std::size_t test_instances = 0;
  std::array<std::size_t, 3> skipped{0, 0, 0};

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  /// "#users #items #actions density l" line.
  std::string stats_line() const;
};

struct PreparedDataset {
  SplitDataset split;
  Manifest manifest;
  InstanceSet instances;
};

/// ingest -> k_core -> chrono_split -> compute_l -> build_instances.
/// l is raised to s when the boxplot bound is smaller.
PreparedDataset prepare(InteractionLog log, std::size_t k, std::size_t s);

/// Writes manifest.json, users.tsv, items.tsv and train/validation/test.tsv.
void write_processed(const PreparedDataset& data, const std::filesystem::path& dir);
/// Reads a directory written by write_processed and rebuilds the instances.
PreparedDataset load_processed(const std::filesystem::path& dir);

}  // namespace quatrec

#endif  // QUATREC_DATA_HPP_
