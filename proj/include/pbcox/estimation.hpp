#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pbcox/likelihood.hpp"
#include "pbcox/optimize.hpp"
#include "pbcox/survival.hpp"

namespace pbcox {

enum class Estimator { breslow, efron, pb };

std::string_view to_string(Estimator e);
Estimator estimator_from_string(std::string_view name);

struct FitResult {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd std_err;  // +inf where the information matrix was not invertible
  double loglik_at_optimum = 0.0;
  HazardIncrements baseline;
  Estimator method = Estimator::breslow;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  // PB only: trial points rejected for a -inf APL during line search.
  int rejected_evaluations = 0;
  // PB only: event times whose baseline update hit the cap.
  std::vector<int> capped_baseline_times;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, FitResult last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const FitResult& last_iterate() const noexcept { return last_; }

 private:
  FitResult last_;
};

FitResult fit_breslow(const SurvivalDataset& data, const RiskStructure& risk, const OptimizerOptions& opts = {});
FitResult fit_efron(const SurvivalDataset& data, const RiskStructure& risk, const OptimizerOptions& opts = {});

// Maximizes log_apl(beta, init_lambdas) over beta with init_lambdas held fixed,
// then refreshes the baseline with update_baseline_pb. Standard errors come
// from the Breslow information at the PB estimate.
FitResult fit_pb(const SurvivalDataset& data, const RiskStructure& risk, const Eigen::VectorXd& init_beta,
                 const HazardIncrements& init_lambdas, const OptimizerOptions& opts = {});

HazardIncrements baseline_breslow(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                  const Eigen::MatrixXd& covariates);
HazardIncrements baseline_efron(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                const Eigen::MatrixXd& covariates);
HazardIncrements baseline_nelson_aalen(const RiskStructure& risk);

// Per event time, lambda maximizing the APL numerator A_j(beta, lambda):
// the root of sum_D r_i / expm1(r_i lambda) = sum_{R \ D} r_i, r_i = exp(x_i' beta).
// The root is searched in [1e-12, 50 / min_D r_i]; when nobody survives the
// event time the upper end is returned and the time is listed in capped_times.
struct PbBaselineUpdate {
  HazardIncrements lambdas;
  std::vector<int> capped_times;
};
PbBaselineUpdate update_baseline_pb(const Eigen::VectorXd& beta_pb, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates, const HazardIncrements& init_lambdas);

struct WaldInterval {
  double lower;
  double upper;
  bool unbounded = false;   // infinite standard error
  bool degenerate = false;  // zero standard error
};
std::vector<WaldInterval> wald_ci(const FitResult& fit, double level);

// Sources for the PB starting point.
enum class InitBeta { efron, breslow, zero };
enum class InitLambda { efron, breslow, nelson_aalen };
InitBeta init_beta_from_string(std::string_view name);
InitLambda init_lambda_from_string(std::string_view name);

struct PbInit {
  InitBeta beta = InitBeta::efron;
  InitLambda lambda = InitLambda::efron;
};

struct MethodOutcome {
  std::optional<FitResult> fit;
  std::string error;  // empty on success
  double seconds = 0.0;
};

struct FitBundle {
  std::optional<MethodOutcome> breslow;
  std::optional<MethodOutcome> efron;
  std::optional<MethodOutcome> pb;

  const std::optional<MethodOutcome>& get(Estimator e) const;
};

// Fits the requested estimators, reusing the Breslow/Efron fits as the PB
// starting point. Failures are recorded per method rather than thrown.
FitBundle fit_methods(const SurvivalDataset& data, const RiskStructure& risk, const std::vector<Estimator>& methods,
                      const PbInit& init = {}, const OptimizerOptions& opts = {});

}  // namespace pbcox
