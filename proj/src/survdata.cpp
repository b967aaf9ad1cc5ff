#include "medsurv/survdata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "medsurv/errors.hpp"
#include "medsurv/estimator.hpp"
#include "medsurv/rng.hpp"

namespace medsurv {

SurvivalSample::SurvivalSample(std::vector<Observation> observations, std::string label)
    : observations_(std::move(observations)), label_(std::move(label)) {
  if (observations_.empty())
    throw DataError("group '" + label_ + "' has no observations");
  for (const auto& o : observations_) {
    if (!(o.time > 0.0) || !std::isfinite(o.time))
      throw DataError("group '" + label_ + "': observation times must be positive and finite");
    if (o.status != Status::event && o.status != Status::censored)
      throw DataError("group '" + label_ + "': invalid status");
  }
}

std::size_t SurvivalSample::event_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(observations_.begin(), observations_.end(),
                    [](const Observation& o) { return o.is_event(); }));
}

double SurvivalSample::censoring_fraction() const noexcept {
  return 1.0 - static_cast<double>(event_count()) / static_cast<double>(size());
}

// ---------------------------------------------------------------------------

FactorialLayout::FactorialLayout(std::vector<Factor> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw DataError("layout needs at least one factor");
  for (const auto& f : factors_) {
    if (f.levels.empty()) throw DataError("factor '" + f.name + "' has no levels");
    auto sorted = f.levels;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw DataError("factor '" + f.name + "' has duplicate levels");
  }
}

FactorialLayout FactorialLayout::one_way(std::size_t k) {
  Factor f{"group", {}};
  for (std::size_t i = 1; i <= k; ++i) f.levels.push_back(std::to_string(i));
  return FactorialLayout({std::move(f)});
}

FactorialLayout FactorialLayout::two_way(std::size_t a, std::size_t b) {
  Factor fa{"A", {}}, fb{"B", {}};
  for (std::size_t i = 1; i <= a; ++i) fa.levels.push_back("a" + std::to_string(i));
  for (std::size_t i = 1; i <= b; ++i) fb.levels.push_back("b" + std::to_string(i));
  return FactorialLayout({std::move(fa), std::move(fb)});
}

std::size_t FactorialLayout::cells() const noexcept {
  std::size_t c = 1;
  for (const auto& f : factors_) c *= f.levels.size();
  return c;
}

std::vector<std::size_t> FactorialLayout::level_counts() const {
  std::vector<std::size_t> counts;
  for (const auto& f : factors_) counts.push_back(f.levels.size());
  return counts;
}

std::optional<std::size_t> FactorialLayout::factor_index(std::string_view name) const {
  for (std::size_t i = 0; i < factors_.size(); ++i)
    if (factors_[i].name == name) return i;
  return std::nullopt;
}

std::size_t FactorialLayout::flatten(std::span<const std::size_t> index) const {
  if (index.size() != factors_.size()) throw DataError("multi-index has wrong length");
  std::size_t pos = 0;
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    if (index[f] >= factors_[f].levels.size()) throw DataError("level index out of range");
    pos = pos * factors_[f].levels.size() + index[f];
  }
  return pos;
}

std::vector<std::size_t> FactorialLayout::unflatten(std::size_t position) const {
  if (position >= cells()) throw DataError("cell position out of range");
  std::vector<std::size_t> index(factors_.size());
  for (std::size_t f = factors_.size(); f-- > 0;) {
    index[f] = position % factors_[f].levels.size();
    position /= factors_[f].levels.size();
  }
  return index;
}

std::string FactorialLayout::cell_name(std::size_t position) const {
  const auto index = unflatten(position);
  std::string name;
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    if (f) name += "×";
    name += factors_[f].levels[index[f]];
  }
  return name;
}

// ---------------------------------------------------------------------------

FactorialDataset::FactorialDataset(std::vector<SurvivalSample> groups, FactorialLayout layout)
    : groups_(std::move(groups)), layout_(std::move(layout)) {
  if (groups_.size() != layout_.cells())
    throw DataError("layout has " + std::to_string(layout_.cells()) + " cells but " +
                    std::to_string(groups_.size()) + " groups were given");
}

std::size_t FactorialDataset::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.size();
  return n;
}

std::vector<std::size_t> FactorialDataset::group_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& g : groups_) sizes.push_back(g.size());
  return sizes;
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

std::optional<double> parse_number(const std::string& s) {
  double value = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

Status parse_status(const std::string& text, std::size_t line) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "true") return Status::event;
  if (s == "0" || s == "false") return Status::censored;
  throw DataError("line " + std::to_string(line) + ": unknown status code '" + text + "'");
}

// Numeric order when every level is a number, lexicographic otherwise.
void order_levels(std::vector<std::string>& levels) {
  const bool numeric = std::all_of(levels.begin(), levels.end(),
                                   [](const std::string& l) { return parse_number(l).has_value(); });
  if (numeric) {
    std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  } else {
    std::sort(levels.begin(), levels.end());
  }
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos && trim(s) == s) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

FactorialDataset parse_csv(std::istream& in, const CsvConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("missing header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  const std::size_t time_col = column_index(header, config.time_column);
  const std::size_t status_col = column_index(header, config.status_column);
  std::vector<std::size_t> factor_cols;
  for (const auto& f : config.factor_columns) factor_cols.push_back(column_index(header, f));

  struct Row {
    Observation obs;
    std::vector<std::string> levels;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    const auto time = parse_number(fields[time_col]);
    if (!time) throw DataError("line " + std::to_string(line_no) + ": time '" + fields[time_col] +
                               "' is not a number");
    if (!(*time > 0.0) || !std::isfinite(*time))
      throw DataError("line " + std::to_string(line_no) + ": non-positive time " +
                      fields[time_col]);
    Row row{{*time, parse_status(fields[status_col], line_no)}, {}};
    for (std::size_t f = 0; f < factor_cols.size(); ++f) {
      const auto& level = fields[factor_cols[f]];
      if (level.empty())
        throw DataError("line " + std::to_string(line_no) + ": empty value in factor column '" +
                        config.factor_columns[f] + "'");
      row.levels.push_back(level);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("no data rows");

  std::vector<Factor> factors;
  if (factor_cols.empty()) {
    factors.push_back({"group", {"all"}});
  } else {
    for (std::size_t f = 0; f < factor_cols.size(); ++f) {
      std::vector<std::string> levels;
      for (const auto& r : rows) levels.push_back(r.levels[f]);
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      order_levels(levels);
      factors.push_back({config.factor_columns[f], std::move(levels)});
    }
  }
  FactorialLayout layout(std::move(factors));

  std::vector<std::vector<Observation>> cells(layout.cells());
  for (const auto& r : rows) {
    std::vector<std::size_t> index;
    for (std::size_t f = 0; f < r.levels.size(); ++f) {
      const auto& levels = layout.factors()[f].levels;
      index.push_back(static_cast<std::size_t>(
          std::find(levels.begin(), levels.end(), r.levels[f]) - levels.begin()));
    }
    const std::size_t pos = index.empty() ? 0 : layout.flatten(index);
    cells[pos].push_back(r.obs);
  }

  std::vector<SurvivalSample> groups;
  for (std::size_t pos = 0; pos < cells.size(); ++pos) {
    if (cells[pos].empty())
      throw DataError("cell " + layout.cell_name(pos) + " has no observations");
    groups.emplace_back(std::move(cells[pos]), layout.cell_name(pos));
  }
  return FactorialDataset(std::move(groups), std::move(layout));
}

void write_csv(std::ostream& out, const FactorialDataset& data, const CsvConfig& config) {
  const auto& factors = data.layout().factors();
  out << config.time_column << ',' << config.status_column;
  for (const auto& f : factors) out << ',' << quote_if_needed(f.name);
  out << '\n';
  std::ostringstream number;
  number << std::setprecision(17);
  for (std::size_t pos = 0; pos < data.group_count(); ++pos) {
    const auto index = data.layout().unflatten(pos);
    for (const auto& o : data.group(pos).observations()) {
      number.str({});
      number << o.time;
      out << number.str() << ',' << (o.is_event() ? 1 : 0);
      for (std::size_t f = 0; f < factors.size(); ++f)
        out << ',' << quote_if_needed(factors[f].levels[index[f]]);
      out << '\n';
    }
  }
}

FactorialDataset jitter_ties(const FactorialDataset& data, double epsilon, std::uint64_t seed) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw DataError("jitter epsilon must be positive");

  std::vector<std::vector<Observation>> groups;
  for (const auto& g : data.groups()) groups.push_back(g.observations());

  std::vector<Observation*> pooled;
  for (auto& g : groups)
    for (auto& o : g) pooled.push_back(&o);
  std::vector<double> original;
  for (const auto* o : pooled) original.push_back(o->time);

  // Pooled positions whose time equals another's, in dataset order.
  auto find_tied = [&] {
    std::vector<std::size_t> order(pooled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return pooled[a]->time < pooled[b]->time;
    });
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i + 1;
      while (j < order.size() && pooled[order[j]]->time == pooled[order[i]]->time) ++j;
      if (j - i > 1) tied.insert(tied.end(), order.begin() + static_cast<std::ptrdiff_t>(i),
                                 order.begin() + static_cast<std::ptrdiff_t>(j));
      i = j;
    }
    std::sort(tied.begin(), tied.end());
    return tied;
  };

  auto tied = find_tied();
  for (const auto p : tied)
    if (original[p] - epsilon <= 0.0)
      throw DataError("jitter epsilon too large: tied time " + std::to_string(original[p]) +
                      " could become non-positive");

  CounterRng rng(seed, 0x6a17);
  for (int round = 0; !tied.empty(); ++round) {
    if (round == 1000) throw DataError("could not break ties; epsilon too small");
    for (const auto p : tied) pooled[p]->time = original[p] + rng.uniform(-epsilon, epsilon);
    tied = find_tied();
  }

  std::vector<SurvivalSample> samples;
  for (std::size_t i = 0; i < groups.size(); ++i)
    samples.emplace_back(std::move(groups[i]), data.group(i).label());
  return FactorialDataset(std::move(samples), data.layout());
}

DatasetSummary summarize(const FactorialDataset& data) {
  DatasetSummary summary{{}, data.total_size(), data.group_count()};
  for (const auto& g : data.groups()) {
    const auto median = km_quantile(km_estimate(g), 0.5);
    summary.groups.push_back({g.label(), g.size(), g.censoring_fraction(), median.value});
  }
  return summary;
}

nlohmann::json to_json(const DatasetSummary& summary) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : summary.groups) {
    groups.push_back({{"group", g.group},
                      {"n", g.n},
                      {"censoring_rate", g.censoring_rate},
                      {"median", g.median ? nlohmann::json(*g.median) : nlohmann::json(nullptr)}});
  }
  return {{"n", summary.n}, {"k", summary.k}, {"groups", std::move(groups)}};
}

}  // namespace medsurv
