#pragma once

// Monte Carlo study of the estimators under a Weibull proportional-hazards
// model with one normal covariate, Weibull censoring truncated at the study
// end, and optional grouping of event and censoring times.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbcox/estimation.hpp"
#include "pbcox/survival.hpp"

namespace pbcox {

struct SimulationConfig {
  double beta = 1.0;
  double sigma_x = 1.5;
  double tau = 0.0;  // 0 disables grouping
  int n = 100;
  int B = 1000;
  double eta = 1.31;
  double gamma = 1.5;
  double eta_c = 1.31;
  double gamma_c = 1.5;
  double zeta = 1.0;
  std::uint64_t seed = 20240917;
  double ci_level = 0.95;

  // Throws DomainError naming the first offending field.
  void validate() const;
};

nlohmann::json to_json(const SimulationConfig& c);
// Missing fields keep their defaults; unknown fields are a DomainError.
SimulationConfig simulation_config_from_json(const nlohmann::json& j);

// Replicate generation is keyed by (seed, replicate_index) only, so replicates
// are independent of execution order.
SurvivalDataset generate_replicate(const SimulationConfig& config, std::uint64_t replicate_index);

struct ReplicateEstimate {
  bool ok = false;
  double beta_hat = 0.0;
  double std_err = 0.0;
  double seconds = 0.0;
};

struct MethodSummary {
  std::string method;
  double scaled_rmse = 0.0;
  double scaled_abs_bias = 0.0;
  double empirical_sd = 0.0;
  double coverage = 0.0;
  double mean_se = 0.0;
  double mean_beta = 0.0;
  double mean_fit_seconds = 0.0;
  int successes = 0;
  int failures = 0;
};

struct SimulationSummary {
  SimulationConfig config;
  std::vector<MethodSummary> methods;
  // replicates[r][m]: estimate of method m on replicate r.
  std::vector<std::vector<ReplicateEstimate>> replicates;
  bool valid = true;  // false when some method failed on more than 5% of replicates

  const MethodSummary& at(const std::string& method) const;
};

// Aggregates one method's replicate estimates. Metrics are scaled by |beta|
// (by 1 when beta is 0); failed replicates are excluded from the moments.
MethodSummary summarize_method(const std::string& name, double beta_true, double ci_level,
                               const std::vector<ReplicateEstimate>& estimates);

// Fits every method on one replicate; result order matches the method names.
using ReplicateFitter = std::function<std::vector<ReplicateEstimate>(const SurvivalDataset&)>;

SimulationSummary run_simulation(const SimulationConfig& config, const std::vector<std::string>& method_names,
                                 const ReplicateFitter& fitter, unsigned threads = 1);

// The standard estimators; PB follows the Efron fit, Efron baseline, PB fit sequence by default.
SimulationSummary run_simulation(const SimulationConfig& config, const std::vector<Estimator>& methods,
                                 unsigned threads = 1, const PbInit& init = {});

void write_summary_csv(std::ostream& out, const SimulationSummary& s, bool include_timing = false);
nlohmann::json summary_to_json(const SimulationSummary& s, bool include_timing = false);

}  // namespace pbcox
