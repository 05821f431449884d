#pragma once

// Grouping sweep on a real dataset: regroup the scaled times at each width,
// refit all three estimators and record how far the classical estimates
// drift from the PB estimate.

#include <Eigen/Core>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pbcox/estimation.hpp"
#include "pbcox/survival.hpp"

namespace pbcox {

// Divides every time by the largest observed time.
SurvivalDataset scale_times(const SurvivalDataset& data);

// 0, 0.01, ..., 0.25 (26 values).
std::vector<double> default_tau_grid();

// max_l exp(|beta_l - beta_pb_l|) - 1
double estimation_discrepancy(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta_pb);

// (1/k) sum_j (1/n_j) sum_{i in R_j} p_ij^2 at the fitted PB quantities.
double sum_squared_hazards(const Eigen::VectorXd& beta_pb, const HazardIncrements& lambdas_pb,
                           const RiskStructure& risk, const Eigen::MatrixXd& covariates);

struct AplGoodness {
  double breslow;
  double efron;
  double pb;
  bool flagged = false;
};

// log APL of each method's coefficients, all evaluated at the same PB baseline.
AplGoodness apl_goodness(const Eigen::VectorXd& beta_breslow, const Eigen::VectorXd& beta_efron,
                         const Eigen::VectorXd& beta_pb, const HazardIncrements& lambdas_pb,
                         const RiskStructure& risk, const Eigen::MatrixXd& covariates);

struct TauSweepRecord {
  double tau = 0.0;
  int k = 0;
  int max_ties = 0;
  double ed_breslow = 0.0;
  double ed_efron = 0.0;
  double ssh = 0.0;
  double logL_b = 0.0;
  double logL_e = 0.0;
  double logL_pb = 0.0;
  Eigen::VectorXd beta_breslow, beta_efron, beta_pb;
  Eigen::VectorXd se_breslow, se_efron, se_pb;
  bool flagged = false;  // some fit failed or an APL evaluation hit log(0)
  std::string error;
};

// Expects scaled, standardized data. tau = 0 keeps the original times.
// Per-tau failures are recorded on the record and the sweep continues.
std::vector<TauSweepRecord> tau_sweep(const SurvivalDataset& data, std::span<const double> taus,
                                      unsigned threads = 1);

// One row per (tau, method).
void write_sweep_long_csv(std::ostream& out, const std::vector<TauSweepRecord>& records,
                          const std::vector<std::string>& covariate_names);
// One row per tau with the plotted quantities.
void write_sweep_wide_csv(std::ostream& out, const std::vector<TauSweepRecord>& records);

}  // namespace pbcox
