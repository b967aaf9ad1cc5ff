#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace medsurv {

enum class Status : std::uint8_t { censored = 0, event = 1 };

/// One right-censored observation: the observed time min(T, C) and whether
/// it was the event (T <= C) or a censoring.
struct Observation {
  double time;
  Status status;

  bool is_event() const noexcept { return status == Status::event; }
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// The observations of one group. Always non-empty with positive finite times.
class SurvivalSample {
 public:
  SurvivalSample(std::vector<Observation> observations, std::string label = {});

  const std::vector<Observation>& observations() const noexcept { return observations_; }
  const std::string& label() const noexcept { return label_; }
  std::size_t size() const noexcept { return observations_.size(); }
  std::size_t event_count() const noexcept;
  double censoring_fraction() const noexcept;

  friend bool operator==(const SurvivalSample&, const SurvivalSample&) = default;

 private:
  std::vector<Observation> observations_;
  std::string label_;
};

struct Factor {
  std::string name;
  std::vector<std::string> levels;

  friend bool operator==(const Factor&, const Factor&) = default;
};

/// Crossed factors and the map between level multi-indices and flat group
/// positions. The first factor varies slowest and the last fastest, so a 2x2
/// layout is ordered (a1,b1), (a1,b2), (a2,b1), (a2,b2).
class FactorialLayout {
 public:
  explicit FactorialLayout(std::vector<Factor> factors);

  /// Single factor "group" with levels "1".."k".
  static FactorialLayout one_way(std::size_t k);
  /// Factors "A" and "B" with levels a1..aA and b1..bB.
  static FactorialLayout two_way(std::size_t a, std::size_t b);

  const std::vector<Factor>& factors() const noexcept { return factors_; }
  std::size_t factor_count() const noexcept { return factors_.size(); }
  std::size_t cells() const noexcept;
  std::vector<std::size_t> level_counts() const;
  std::optional<std::size_t> factor_index(std::string_view name) const;

  std::size_t flatten(std::span<const std::size_t> index) const;
  std::vector<std::size_t> unflatten(std::size_t position) const;

  /// Level names of a cell joined by "×", e.g. "a2×b2".
  std::string cell_name(std::size_t position) const;

  friend bool operator==(const FactorialLayout&, const FactorialLayout&) = default;

 private:
  std::vector<Factor> factors_;
};

/// k groups arranged on a factorial layout; group i sits at flat position i.
class FactorialDataset {
 public:
  FactorialDataset(std::vector<SurvivalSample> groups, FactorialLayout layout);

  const std::vector<SurvivalSample>& groups() const noexcept { return groups_; }
  const SurvivalSample& group(std::size_t i) const { return groups_.at(i); }
  const FactorialLayout& layout() const noexcept { return layout_; }
  std::size_t group_count() const noexcept { return groups_.size(); }
  std::size_t total_size() const noexcept;
  std::vector<std::size_t> group_sizes() const;

  friend bool operator==(const FactorialDataset&, const FactorialDataset&) = default;

 private:
  std::vector<SurvivalSample> groups_;
  FactorialLayout layout_;
};

struct CsvConfig {
  std::string time_column = "time";
  std::string status_column = "status";
  std::vector<std::string> factor_columns;
};

/// Reads a comma-separated table with a header row. Status is 1/0 or
/// true/false (1 = event). Levels of each factor are ordered naturally
/// (numerically when every level is a number, otherwise lexicographically).
/// Without factor columns the whole table is a single group.
FactorialDataset parse_csv(std::istream& in, const CsvConfig& config);

/// Writes time,status,<factors...> rows that parse_csv reads back unchanged.
void write_csv(std::ostream& out, const FactorialDataset& data, const CsvConfig& config = {});

/// Breaks ties in the pooled observation times by adding Uniform(-epsilon,
/// epsilon) noise to every tied time until all times are distinct. Statuses
/// are untouched; the result depends only on the data and the seed.
FactorialDataset jitter_ties(const FactorialDataset& data, double epsilon, std::uint64_t seed);

struct GroupSummary {
  std::string group;
  std::size_t n;
  double censoring_rate;
  std::optional<double> median;
};

struct DatasetSummary {
  std::vector<GroupSummary> groups;
  std::size_t n;
  std::size_t k;
};

DatasetSummary summarize(const FactorialDataset& data);
nlohmann::json to_json(const DatasetSummary& summary);

}  // namespace medsurv
