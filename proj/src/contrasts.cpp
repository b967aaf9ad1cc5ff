#include "medsurv/contrasts.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "medsurv/errors.hpp"

namespace medsurv {

std::string HypothesisSpec::describe() const {
  switch (kind) {
    case Kind::k_sample_equality: return "equality";
    case Kind::main_effect: return "main-effect:" + factor;
    case Kind::interaction: return "interaction";
    case Kind::custom: return "custom";
  }
  return "unknown";
}

HypothesisSpec parse_hypothesis(std::string_view text) {
  if (text == "equality") return HypothesisSpec::equality();
  if (text == "interaction") return HypothesisSpec::interaction();
  constexpr std::string_view main_prefix = "main-effect:";
  constexpr std::string_view custom_prefix = "custom:";
  if (text.starts_with(main_prefix)) {
    auto factor = text.substr(main_prefix.size());
    if (factor.empty()) throw DataError("main-effect hypothesis needs a factor name");
    return HypothesisSpec::main_effect(std::string(factor));
  }
  if (text.starts_with(custom_prefix)) {
    const std::string path(text.substr(custom_prefix.size()));
    std::ifstream in(path);
    if (!in) throw DataError("cannot open contrast matrix file '" + path + "'");
    return HypothesisSpec::custom(read_matrix_csv(in));
  }
  throw DataError("unknown hypothesis '" + std::string(text) +
                  "' (expected equality, interaction, main-effect:<factor> or custom:<file>)");
}

Eigen::MatrixXd hypothesis_matrix(const HypothesisSpec& spec, const FactorialLayout& layout) {
  const auto k = static_cast<Eigen::Index>(layout.cells());
  const auto counts = layout.level_counts();
  switch (spec.kind) {
    case HypothesisSpec::Kind::k_sample_equality:
      if (k < 2) throw DataError("equality hypothesis needs at least two groups");
      return centering(k);

    case HypothesisSpec::Kind::main_effect: {
      const auto which = layout.factor_index(spec.factor);
      if (!which) throw DataError("layout has no factor named '" + spec.factor + "'");
      if (counts[*which] < 2)
        throw DataError("factor '" + spec.factor + "' needs at least two levels");
      Eigen::MatrixXd h = Eigen::MatrixXd::Ones(1, 1);
      for (std::size_t f = 0; f < counts.size(); ++f) {
        const auto levels = static_cast<Eigen::Index>(counts[f]);
        h = f == *which ? kronecker(h, centering(levels)) : kronecker(h, averaging(levels));
      }
      return h;
    }

    case HypothesisSpec::Kind::interaction: {
      if (counts.size() < 2) throw DataError("interaction hypothesis needs at least two factors");
      Eigen::MatrixXd h = Eigen::MatrixXd::Ones(1, 1);
      for (const auto c : counts) {
        if (c < 2) throw DataError("interaction hypothesis needs every factor to have two levels");
        h = kronecker(h, centering(static_cast<Eigen::Index>(c)));
      }
      return h;
    }

    case HypothesisSpec::Kind::custom: {
      const auto& h = spec.matrix;
      if (h.rows() == 0 || h.cols() != k)
        throw DataError("contrast matrix must have " + std::to_string(k) + " columns, found " +
                        std::to_string(h.cols()));
      if (!h.allFinite()) throw DataError("contrast matrix has non-finite entries");
      for (Eigen::Index r = 0; r < h.rows(); ++r)
        if (std::abs(h.row(r).sum()) > 1e-12)
          throw DataError("row " + std::to_string(r + 1) + " of the contrast matrix does not sum to 0");
      return h;
    }
  }
  throw DataError("unknown hypothesis kind");
}

Eigen::MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      const auto b = field.find_first_not_of(" \t\r");
      const auto e = field.find_last_not_of(" \t\r");
      if (b == std::string::npos) throw DataError("empty entry in matrix row " + std::to_string(rows.size() + 1));
      const std::string token = field.substr(b, e - b + 1);
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc() || ptr != token.data() + token.size())
        throw DataError("matrix entry '" + token + "' is not a number");
      row.push_back(value);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError("matrix rows have different lengths");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("matrix file is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  const auto precision = out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
  out.precision(precision);
}

}  // namespace medsurv
