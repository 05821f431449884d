#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pbcox {

// Right-censored survival data: observed time, event indicator (1 = event)
// and an n x p covariate matrix. Immutable after construction.
class SurvivalDataset {
 public:
  // Throws StructureError on inconsistent row counts or n < 2,
  // DomainError on non-positive times or status outside {0, 1}.
  SurvivalDataset(Eigen::VectorXd times, Eigen::VectorXi status, Eigen::MatrixXd covariates,
                  std::vector<std::string> covariate_names = {});

  const Eigen::VectorXd& times() const noexcept { return times_; }
  const Eigen::VectorXi& status() const noexcept { return status_; }
  const Eigen::MatrixXd& covariates() const noexcept { return covariates_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  std::size_t size() const noexcept { return static_cast<std::size_t>(times_.size()); }
  std::size_t num_covariates() const noexcept { return static_cast<std::size_t>(covariates_.cols()); }
  int num_events() const noexcept { return status_.sum(); }

  SurvivalDataset with_times(Eigen::VectorXd times) const;
  SurvivalDataset with_covariates(Eigen::MatrixXd covariates) const;

  // Soft conditions that do not invalidate the data: no events, or nobody
  // left at risk without failing at the last event time.
  std::vector<std::string> warnings() const;

 private:
  Eigen::VectorXd times_;
  Eigen::VectorXi status_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> names_;
};

// Distinct event times with their event and risk sets. Subjects censored at
// an event time stay in that time's risk set.
struct RiskStructure {
  std::vector<double> event_times;
  std::vector<std::vector<int>> event_sets;
  std::vector<std::vector<int>> risk_sets;
  std::vector<int> d;
  std::vector<int> n_at_risk;

  std::size_t k() const noexcept { return event_times.size(); }
  int max_ties() const noexcept;
};

// tau * ceil(t / tau), with a 1e-9 relative tolerance so exact multiples are fixed points.
double group_time(double t, double tau);
std::vector<double> group_times(std::span<const double> times, double tau);
Eigen::VectorXd group_times(const Eigen::VectorXd& times, double tau);

RiskStructure build_risk_structure(const SurvivalDataset& data);

struct ColumnTransform {
  double mean = 0.0;
  double sd = 1.0;
  bool standardized = false;  // false for binary columns
};

struct StandardizedDataset {
  SurvivalDataset data;
  std::vector<ColumnTransform> transforms;
};

// Non-binary columns to mean 0, sd 1 (divisor n - 1). A column is binary iff
// its values are a subset of {0, 1}. Zero-variance non-binary columns throw DegenerateError.
StandardizedDataset standardize_covariates(const SurvivalDataset& data);

struct CsvLoadResult {
  SurvivalDataset data;
  std::size_t dropped_rows = 0;
};

// Comma-separated, header row first, columns chosen by name. Empty or "NA"
// cells in the selected columns are a ParseError unless drop_missing is set,
// in which case those rows are skipped and counted.
CsvLoadResult load_csv(const std::filesystem::path& path, const std::string& time_col,
                       const std::string& status_col, const std::vector<std::string>& covariate_cols,
                       bool drop_missing = false);

}  // namespace pbcox
