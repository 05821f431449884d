#include "pbcox/survival.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

#include "pbcox/errors.hpp"

namespace pbcox {

SurvivalDataset::SurvivalDataset(Eigen::VectorXd times, Eigen::VectorXi status,
                                 Eigen::MatrixXd covariates, std::vector<std::string> covariate_names)
    : times_(std::move(times)),
      status_(std::move(status)),
      covariates_(std::move(covariates)),
      names_(std::move(covariate_names)) {
  const auto n = times_.size();
  if (status_.size() != n || covariates_.rows() != n) {
    throw StructureError(fmt::format("row counts disagree: times {}, status {}, covariates {}", n,
                                     status_.size(), covariates_.rows()));
  }
  if (n < 2) throw StructureError(fmt::format("need at least 2 subjects, got {}", n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(times_[i] > 0.0) || !std::isfinite(times_[i])) {
      throw DomainError(fmt::format("time {} at row {} is not a positive finite number", times_[i], i));
    }
    if (status_[i] != 0 && status_[i] != 1) {
      throw DomainError(fmt::format("status {} at row {} is not 0 or 1", status_[i], i));
    }
  }
  if (!covariates_.allFinite()) throw DomainError("covariates contain non-finite values");
  if (names_.empty()) {
    for (Eigen::Index c = 0; c < covariates_.cols(); ++c) names_.push_back(fmt::format("x{}", c + 1));
  } else if (names_.size() != static_cast<std::size_t>(covariates_.cols())) {
    throw StructureError("covariate name count does not match covariate columns");
  }
}

SurvivalDataset SurvivalDataset::with_times(Eigen::VectorXd times) const {
  return SurvivalDataset(std::move(times), status_, covariates_, names_);
}

SurvivalDataset SurvivalDataset::with_covariates(Eigen::MatrixXd covariates) const {
  return SurvivalDataset(times_, status_, std::move(covariates), names_);
}

std::vector<std::string> SurvivalDataset::warnings() const {
  std::vector<std::string> out;
  double last_event = -1.0;
  for (Eigen::Index i = 0; i < times_.size(); ++i) {
    if (status_[i] == 1) last_event = std::max(last_event, times_[i]);
  }
  if (last_event < 0.0) {
    out.emplace_back("no events observed");
    return out;
  }
  bool survivor = false;
  for (Eigen::Index i = 0; i < times_.size() && !survivor; ++i) {
    survivor = times_[i] > last_event || (times_[i] == last_event && status_[i] == 0);
  }
  if (!survivor) {
    out.emplace_back("no subject remains at risk without failing at the last event time");
  }
  return out;
}

int RiskStructure::max_ties() const noexcept {
  return d.empty() ? 0 : *std::max_element(d.begin(), d.end());
}

double group_time(double t, double tau) {
  if (!(tau > 0.0)) throw DomainError(fmt::format("grouping width {} must be positive", tau));
  const double ratio = t / tau;
  const double m = std::ceil(ratio - 1e-9 * std::abs(ratio));
  return tau * std::max(m, 1.0);
}

std::vector<double> group_times(std::span<const double> times, double tau) {
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(group_time(t, tau));
  return out;
}

Eigen::VectorXd group_times(const Eigen::VectorXd& times, double tau) {
  Eigen::VectorXd out(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i) out[i] = group_time(times[i], tau);
  return out;
}

RiskStructure build_risk_structure(const SurvivalDataset& data) {
  const auto& t = data.times();
  const auto& s = data.status();
  const auto n = static_cast<int>(data.size());

  std::set<double> distinct;
  for (int i = 0; i < n; ++i) {
    if (s[i] == 1) distinct.insert(t[i]);
  }
  if (distinct.empty()) throw StructureError("dataset has no events");

  RiskStructure rs;
  rs.event_times.assign(distinct.begin(), distinct.end());
  const std::size_t k = rs.event_times.size();
  rs.event_sets.resize(k);
  rs.risk_sets.resize(k);
  rs.d.resize(k);
  rs.n_at_risk.resize(k);

  for (std::size_t j = 0; j < k; ++j) {
    const double tj = rs.event_times[j];
    auto& risk = rs.risk_sets[j];
    auto& events = rs.event_sets[j];
    for (int i = 0; i < n; ++i) {
      if (t[i] >= tj) {
        risk.push_back(i);
        if (t[i] == tj && s[i] == 1) events.push_back(i);
      }
    }
    rs.d[j] = static_cast<int>(events.size());
    rs.n_at_risk[j] = static_cast<int>(risk.size());
  }
  return rs;
}

StandardizedDataset standardize_covariates(const SurvivalDataset& data) {
  Eigen::MatrixXd x = data.covariates();
  const auto n = x.rows();
  std::vector<ColumnTransform> transforms(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto col = x.col(c);
    const bool binary = (col.array() == 0.0 || col.array() == 1.0).all();
    if (binary) continue;
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      throw DegenerateError(
          fmt::format("covariate '{}' has zero variance", data.covariate_names()[static_cast<std::size_t>(c)]));
    }
    col = (col.array() - mean) / sd;
    transforms[static_cast<std::size_t>(c)] = {mean, sd, true};
  }
  return {data.with_covariates(std::move(x)), std::move(transforms)};
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    cells.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return cells;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "NaN"; }

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError(fmt::format("line {}, column '{}': '{}' is not a number", line, column, cell), line,
                     column);
  }
  return v;
}

}  // namespace

CsvLoadResult load_csv(const std::filesystem::path& path, const std::string& time_col,
                       const std::string& status_col, const std::vector<std::string>& covariate_cols,
                       bool drop_missing) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));

  std::string line;
  if (!std::getline(in, line)) throw StructureError(fmt::format("'{}' is empty", path.string()));
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);

  auto locate = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw ParseError(fmt::format("column '{}' not found in header", name), 1, name);
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t time_idx = locate(time_col);
  const std::size_t status_idx = locate(status_col);
  std::vector<std::size_t> cov_idx;
  for (const auto& c : covariate_cols) cov_idx.push_back(locate(c));

  std::vector<double> times;
  std::vector<int> status;
  std::vector<std::vector<double>> rows;
  std::size_t dropped = 0;
  std::size_t line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(fmt::format("line {}: expected {} cells, found {}", line_no, header.size(), cells.size()),
                       line_no);
    }
    bool missing = is_missing(cells[time_idx]) || is_missing(cells[status_idx]);
    for (auto c : cov_idx) missing = missing || is_missing(cells[c]);
    if (missing) {
      if (drop_missing) {
        ++dropped;
        continue;
      }
      throw ParseError(fmt::format("line {}: missing value in a selected column", line_no), line_no);
    }

    const double t = parse_number(cells[time_idx], line_no, time_col);
    if (!(t > 0.0)) {
      throw ParseError(fmt::format("line {}, column '{}': time {} must be positive", line_no, time_col, t),
                       line_no, time_col);
    }
    const double st = parse_number(cells[status_idx], line_no, status_col);
    if (st != 0.0 && st != 1.0) {
      throw ParseError(
          fmt::format("line {}, column '{}': status '{}' must be 0 or 1", line_no, status_col, cells[status_idx]),
          line_no, status_col);
    }
    std::vector<double> row;
    row.reserve(cov_idx.size());
    for (std::size_t c = 0; c < cov_idx.size(); ++c) {
      row.push_back(parse_number(cells[cov_idx[c]], line_no, covariate_cols[c]));
    }
    times.push_back(t);
    status.push_back(static_cast<int>(st));
    rows.push_back(std::move(row));
  }

  if (times.empty()) throw StructureError(fmt::format("'{}' has no data rows", path.string()));

  const auto n = static_cast<Eigen::Index>(times.size());
  Eigen::VectorXd tv = Eigen::Map<Eigen::VectorXd>(times.data(), n);
  Eigen::VectorXi sv = Eigen::Map<Eigen::VectorXi>(status.data(), n);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cov_idx.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  return {SurvivalDataset(std::move(tv), std::move(sv), std::move(x), covariate_cols), dropped};
}

}  // namespace pbcox
