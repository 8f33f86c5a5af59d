#include "quatrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace quatrec {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delimiter, start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_int(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::int64_t parse_date(const std::string& text) {
  // YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z]
  int y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0;
  std::string rest = text;
  if (!rest.empty() && (rest.back() == 'Z' || rest.back() == 'z')) rest.pop_back();
  if (rest.size() < 10 || rest[4] != '-' || rest[7] != '-') throw DataError("bad date");
  if (!parse_int(std::string_view(rest).substr(0, 4), y) ||
      !parse_int(std::string_view(rest).substr(5, 2), mo) ||
      !parse_int(std::string_view(rest).substr(8, 2), d))
    throw DataError("bad date");
  if (rest.size() > 10) {
    if ((rest[10] != 'T' && rest[10] != ' ') || rest.size() < 16 || rest[13] != ':')
      throw DataError("bad time");
    if (!parse_int(std::string_view(rest).substr(11, 2), h) ||
        !parse_int(std::string_view(rest).substr(14, 2), mi))
      throw DataError("bad time");
    if (rest.size() > 16) {
      if (rest[16] != ':') throw DataError("bad time");
      std::size_t used = 0;
      const std::string s = rest.substr(17);
      try {
        sec = std::stod(s, &used);
      } catch (const std::exception&) {
        throw DataError("bad seconds");
      }
      if (used != s.size()) throw DataError("bad seconds");
    }
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec < 0 || sec >= 61) throw DataError("bad date");
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 +
         static_cast<std::int64_t>(std::floor(sec));
}

}  // namespace

std::int64_t parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  std::int64_t v = 0;
  if (parse_int(text, v)) return v;
  if (!text.empty() && text.find('-', 1) == std::string::npos &&
      text.find_first_not_of("+-0123456789.eE") == std::string::npos) {
    try {
      std::size_t used = 0;
      const double d = std::stod(text, &used);
      if (used == text.size() && std::isfinite(d)) return static_cast<std::int64_t>(std::floor(d));
    } catch (const std::exception&) {
    }
    throw DataError("unparsable timestamp '" + text + "'");
  }
  try {
    return parse_date(text);
  } catch (const DataError&) {
    throw DataError("unparsable timestamp '" + text + "'");
  }
}

InteractionLog parse_interactions(std::istream& in, char delimiter, const std::string& source) {
  InteractionLog log;
  std::unordered_map<std::string, std::uint32_t> users, items;
  struct Key {
    std::uint32_t u, i;
    std::int64_t t;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(k.u) << 32) ^ k.i) ^
             std::hash<std::int64_t>()(k.t) * 0x9E3779B97F4A7C15ULL;
    }
  };
  std::unordered_set<Key, KeyHash> seen;
  auto intern = [](std::unordered_map<std::string, std::uint32_t>& map,
                   std::vector<std::string>& ids, const std::string& raw) {
    auto [it, fresh] = map.emplace(raw, static_cast<std::uint32_t>(ids.size()));
    if (fresh) ids.push_back(raw);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  bool first_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, delimiter);
    auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    if (fields.size() < 3 || fields.size() > 4)
      throw DataError(where() + "expected 3 or 4 fields (user, item, timestamp[, rating]), got " +
                      std::to_string(fields.size()));
    std::int64_t ts = 0;
    try {
      ts = parse_timestamp(fields[2]);
    } catch (const DataError& e) {
      if (first_row) {
        first_row = false;  // header
        continue;
      }
      throw DataError(where() + e.what());
    }
    first_row = false;
    if (fields[0].empty() || fields[1].empty())
      throw DataError(where() + "empty user or item id");
    const std::uint32_t u = intern(users, log.user_ids, fields[0]);
    const std::uint32_t i = intern(items, log.item_ids, fields[1]);
    if (seen.insert({u, i, ts}).second) log.records.push_back({u, i, ts});
  }
  if (log.records.empty()) throw DataError(source + ": no interactions");
  return log;
}

InteractionLog ingest(const std::filesystem::path& path, FileFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  char delimiter = ',';
  if (format == FileFormat::kTsv) {
    delimiter = '\t';
  } else if (format == FileFormat::kAuto) {
    const auto ext = path.extension().string();
    if (ext == ".tsv" || ext == ".tab") {
      delimiter = '\t';
    } else if (ext != ".csv") {
      std::string first;
      while (std::getline(in, first) && trim(first).empty()) {
      }
      delimiter = first.find('\t') != std::string::npos ? '\t' : ',';
      in.clear();
      in.seekg(0);
    }
  }
  return parse_interactions(in, delimiter, path.string());
}

void export_csv(const InteractionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user,item,timestamp\n";
  for (const auto& r : log.records)
    out << log.user_ids[r.user] << ',' << log.item_ids[r.item] << ',' << r.timestamp << '\n';
}

// ---------------------------------------------------------------------------

InteractionLog k_core(const InteractionLog& log, std::size_t k) {
  if (k == 0) throw ContractError("k_core: k must be at least 1");
  std::vector<std::uint8_t> alive(log.records.size(), 1);
  std::vector<std::size_t> user_deg(log.user_ids.size(), 0), item_deg(log.item_ids.size(), 0);
  for (const auto& r : log.records) {
    ++user_deg[r.user];
    ++item_deg[r.item];
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t n = 0; n < log.records.size(); ++n) {
      if (!alive[n]) continue;
      const auto& r = log.records[n];
      if (user_deg[r.user] < k || item_deg[r.item] < k) {
        alive[n] = 0;
        changed = true;
      }
    }
    std::fill(user_deg.begin(), user_deg.end(), 0);
    std::fill(item_deg.begin(), item_deg.end(), 0);
    for (std::size_t n = 0; n < log.records.size(); ++n)
      if (alive[n]) {
        ++user_deg[log.records[n].user];
        ++item_deg[log.records[n].item];
      }
  }

  InteractionLog out;
  std::vector<std::uint32_t> user_map(log.user_ids.size(), 0), item_map(log.item_ids.size(), 0);
  for (std::size_t n = 0; n < log.records.size(); ++n) {
    if (!alive[n]) continue;
    const auto& r = log.records[n];
    if (!user_map[r.user]) {
      user_map[r.user] = static_cast<std::uint32_t>(out.user_ids.size());
      out.user_ids.push_back(log.user_ids[r.user]);
    }
    if (!item_map[r.item]) {
      item_map[r.item] = static_cast<std::uint32_t>(out.item_ids.size());
      out.item_ids.push_back(log.item_ids[r.item]);
    }
    out.records.push_back({user_map[r.user], item_map[r.item], r.timestamp});
  }
  if (out.records.empty())
    throw DataError("no interactions left after " + std::to_string(k) + "-core filtering");
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

std::span<const Interaction> SplitDataset::part(Split s) const {
  std::span<const Interaction> all = log.records;
  switch (s) {
    case Split::kTrain: return all.subspan(0, train_end);
    case Split::kValidation: return all.subspan(train_end, validation_end - train_end);
    case Split::kTest: return all.subspan(validation_end);
  }
  return {};
}

SplitDataset chrono_split(InteractionLog log, std::array<double, 3> fractions) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
    throw DataError("split fractions must be non-negative and sum to 1");
  const std::size_t n = log.records.size();
  if (n < 10)
    throw DataError("dataset too small to split: " + std::to_string(n) +
                    " interactions (need at least 10)");
  std::stable_sort(log.records.begin(), log.records.end(),
                   [](const Interaction& a, const Interaction& b) {
                     return a.timestamp < b.timestamp;
                   });
  // The slack keeps 0.7 + 0.1 of 10 at 8 despite 0.7 + 0.1 < 0.8 in binary.
  auto cut = [n](double fraction) {
    const double x = std::floor(fraction * static_cast<double>(n) + 1e-9);
    return std::min(n, static_cast<std::size_t>(x));
  };
  SplitDataset out;
  out.train_end = cut(fractions[0]);
  out.validation_end = cut(fractions[0] + fractions[1]);
  out.log = std::move(log);
  return out;
}

std::vector<std::size_t> train_sequence_lengths(const SplitDataset& data) {
  std::vector<std::size_t> count(data.log.user_ids.size(), 0);
  for (const auto& r : data.part(Split::kTrain)) ++count[r.user];
  std::vector<std::size_t> out;
  for (std::size_t u = 1; u < count.size(); ++u)
    if (count[u] > 0) out.push_back(count[u]);
  return out;
}

double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(sorted.size() - 1, lo + 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::size_t compute_l(std::span<const std::size_t> lengths) {
  if (lengths.size() < 4)
    throw DataError("boxplot window needs at least 4 users, got " +
                    std::to_string(lengths.size()));
  std::vector<double> sorted(lengths.begin(), lengths.end());
  std::sort(sorted.begin(), sorted.end());
  const double q1 = quantile(sorted, 0.25);
  const double q3 = quantile(sorted, 0.75);
  return static_cast<std::size_t>(std::ceil(q3 + 1.5 * (q3 - q1)));
}

std::vector<ScoringInstance>& InstanceSet::of(Split s) {
  return s == Split::kTrain ? train : s == Split::kValidation ? validation : test;
}

const std::vector<ScoringInstance>& InstanceSet::of(Split s) const {
  return s == Split::kTrain ? train : s == Split::kValidation ? validation : test;
}

InstanceSet build_instances(const SplitDataset& data, std::size_t l, std::size_t s) {
  if (s == 0 || l < s) throw ContractError("windows need l >= s >= 1");
  InstanceSet out;
  std::vector<std::vector<std::uint32_t>> history(data.log.user_ids.size());
  for (std::size_t pos = 0; pos < data.log.records.size(); ++pos) {
    const auto& r = data.log.records[pos];
    auto& h = history[r.user];
    const Split split = data.split_of(pos);
    if (h.empty()) {
      ++out.skipped[static_cast<std::size_t>(split)];
    } else {
      ScoringInstance inst;
      inst.user = r.user;
      inst.target = r.item;
      inst.position = pos;
      inst.timestamp = r.timestamp;
      auto window = [&](std::size_t w) {
        std::vector<std::uint32_t> ids(w, 0);
        const std::size_t take = std::min(w, h.size());
        std::copy(h.end() - static_cast<std::ptrdiff_t>(take), h.end(),
                  ids.end() - static_cast<std::ptrdiff_t>(take));
        return ids;
      };
      inst.long_items = window(l);
      inst.short_items = window(s);
      out.of(split).push_back(std::move(inst));
    }
    h.push_back(r.item);
  }
  return out;
}

UserItemSets user_items(const SplitDataset& data, std::initializer_list<Split> splits) {
  UserItemSets sets(data.log.user_ids.size());
  for (Split s : splits)
    for (const auto& r : data.part(s)) sets[r.user].push_back(r.item);
  for (auto& v : sets) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return sets;
}

std::vector<double> item_popularity(const SplitDataset& data) {
  std::vector<double> counts(data.log.item_ids.size(), 0.0);
  for (const auto& r : data.part(Split::kTrain)) counts[r.item] += 1.0;
  return counts;
}

// ---------------------------------------------------------------------------

nlohmann::json Manifest::to_json() const {
  return {{"n_users", n_users},
          {"n_items", n_items},
          {"n_actions", n_actions},
          {"density", density},
          {"l", l},
          {"s", s},
          {"k", k},
          {"interactions", {{"train", train}, {"validation", validation}, {"test", test}}},
          {"instances",
           {{"train", train_instances},
            {"validation", validation_instances},
            {"test", test_instances}}},
          {"skipped_without_history",
           {{"train", skipped[0]}, {"validation", skipped[1]}, {"test", skipped[2]}}}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.n_users = j.at("n_users");
    m.n_items = j.at("n_items");
    m.n_actions = j.at("n_actions");
    m.density = j.at("density");
    m.l = j.at("l");
    m.s = j.at("s");
    m.k = j.at("k");
    m.train = j.at("interactions").at("train");
    m.validation = j.at("interactions").at("validation");
    m.test = j.at("interactions").at("test");
    m.train_instances = j.at("instances").at("train");
    m.validation_instances = j.at("instances").at("validation");
    m.test_instances = j.at("instances").at("test");
    const auto& sk = j.at("skipped_without_history");
    m.skipped = {sk.at("train"), sk.at("validation"), sk.at("test")};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::string Manifest::stats_line() const {
  std::ostringstream s;
  s << "#users " << n_users << "  #items " << n_items << "  #actions " << n_actions
    << "  density " << density * 100.0 << "%  l " << l << "  s " << this->s;
  return s.str();
}

namespace {
Manifest make_manifest(const SplitDataset& split, const InstanceSet& inst, std::size_t l,
                       std::size_t s, std::size_t k) {
  Manifest m;
  m.n_users = split.log.n_users();
  m.n_items = split.log.n_items();
  m.n_actions = split.log.records.size();
  m.density = static_cast<double>(m.n_actions) /
              (static_cast<double>(m.n_users) * static_cast<double>(m.n_items));
  m.l = l;
  m.s = s;
  m.k = k;
  m.train = split.count(Split::kTrain);
  m.validation = split.count(Split::kValidation);
  m.test = split.count(Split::kTest);
  m.train_instances = inst.train.size();
  m.validation_instances = inst.validation.size();
  m.test_instances = inst.test.size();
  m.skipped = inst.skipped;
  return m;
}
}  // namespace

PreparedDataset prepare(InteractionLog log, std::size_t k, std::size_t s) {
  if (s == 0) throw ContractError("short window s must be at least 1");
  PreparedDataset out;
  out.split = chrono_split(k_core(log, k));
  const std::size_t l = std::max(compute_l(train_sequence_lengths(out.split)), s);
  out.instances = build_instances(out.split, l, s);
  out.manifest = make_manifest(out.split, out.instances, l, s, k);
  return out;
}

void write_processed(const PreparedDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("manifest.json");
    out << data.manifest.to_json().dump(2) << '\n';
  }
  {
    auto out = open("users.tsv");
    for (std::size_t u = 1; u < data.split.log.user_ids.size(); ++u)
      out << u << '\t' << data.split.log.user_ids[u] << '\n';
  }
  {
    auto out = open("items.tsv");
    for (std::size_t i = 1; i < data.split.log.item_ids.size(); ++i)
      out << i << '\t' << data.split.log.item_ids[i] << '\n';
  }
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    auto out = open((to_string(s) + ".tsv").c_str());
    for (const auto& r : data.split.part(s))
      out << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
  }
}

PreparedDataset load_processed(const std::filesystem::path& dir) {
  auto open = [&](const std::string& name) {
    std::ifstream in(dir / name);
    if (!in) throw DataError("cannot open " + (dir / name).string());
    return in;
  };
  PreparedDataset out;
  {
    auto in = open("manifest.json");
    try {
      out.manifest = Manifest::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest.json: " + std::string(e.what()));
    }
  }
  auto read_ids = [&](const std::string& name, std::vector<std::string>& ids, std::size_t n) {
    auto in = open(name);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      std::size_t id = 0;
      if (tab == std::string::npos || !parse_int(std::string_view(line).substr(0, tab), id) ||
          id != ids.size())
        throw DataError(name + ":" + std::to_string(line_no) + ": malformed id row");
      ids.push_back(line.substr(tab + 1));
    }
    if (ids.size() != n + 1)
      throw DataError(name + ": " + std::to_string(ids.size() - 1) + " ids, manifest says " +
                      std::to_string(n));
  };
  read_ids("users.tsv", out.split.log.user_ids, out.manifest.n_users);
  read_ids("items.tsv", out.split.log.item_ids, out.manifest.n_items);

  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    const std::string name = to_string(s) + ".tsv";
    auto in = open(name);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto f = split_fields(line, '\t');
      Interaction r;
      if (f.size() != 3 || !parse_int(f[0], r.user) || !parse_int(f[1], r.item) ||
          !parse_int(f[2], r.timestamp) || r.user == 0 || r.user > out.manifest.n_users ||
          r.item == 0 || r.item > out.manifest.n_items)
        throw DataError(name + ":" + std::to_string(line_no) + ": malformed interaction");
      out.split.log.records.push_back(r);
    }
    if (s == Split::kTrain) out.split.train_end = out.split.log.records.size();
    if (s == Split::kValidation) out.split.validation_end = out.split.log.records.size();
  }
  out.instances = build_instances(out.split, out.manifest.l, out.manifest.s);
  return out;
}

}  // namespace quatrec
