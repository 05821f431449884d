#pragma once

// Partial-likelihood variants for the Cox model with tied event times.
//
// log_apl() evaluates the accurate partial likelihood: at each distinct event
// time the exact probability that precisely the observed subjects fail,
// conditional on d_j failures among the n_j at risk. The numerator is a
// product of Bernoulli terms; the denominator is a Poisson-binomial pmf.
// The classical corrections (Breslow, Efron, Cox, Kalbfleisch-Prentice) are
// provided for comparison. All functions are pure.
//
// Breslow log-likelihoods omit the beta-free sum of log(d_j!), so compare
// methods through likelihood differences or the shared APL metric, never by
// raw cross-method values.

#include <Eigen/Core>
#include <cstddef>
#include <string_view>
#include <vector>

#include "pbcox/survival.hpp"

namespace pbcox {

// Baseline hazard jumps lambda_j at the distinct event times.
class HazardIncrements {
 public:
  HazardIncrements() = default;
  // Throws DomainError on negative or NaN entries.
  explicit HazardIncrements(Eigen::VectorXd values);

  const Eigen::VectorXd& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t j) const { return values_[static_cast<Eigen::Index>(j)]; }

  // Running sum: the step-function cumulative hazard at each event time.
  Eigen::VectorXd cumulative() const;
  HazardIncrements scaled(double factor) const;

 private:
  Eigen::VectorXd values_;
};

enum class LikelihoodMethod { pb_exact, breslow, efron, cox_correction, kalbfleisch_prentice, no_ties_approx };

std::string_view to_string(LikelihoodMethod m);

struct LikelihoodEvaluation {
  double loglik = 0.0;
  std::vector<double> per_time_terms;
  LikelihoodMethod method = LikelihoodMethod::breslow;
  // Set when a term hit log(0): zero hazard at an event time, or an underflowed denominator.
  bool flagged = false;
};

// Caps on the combinatorial comparison methods.
inline constexpr double kCoxSubsetCap = 1.0e6;
inline constexpr int kKpMaxTies = 9;

// 1 - exp(-exp(x_beta) * lambda), via expm1.
double event_prob(double x_beta, double lambda);

LikelihoodEvaluation log_apl(const Eigen::VectorXd& beta, const HazardIncrements& lambdas,
                             const RiskStructure& risk, const Eigen::MatrixXd& covariates);

// Analytic beta-gradient of log_apl. The denominator derivative uses
// leave-one-out Poisson-binomial pmfs from prefix/suffix convolutions.
struct AplValueGradient {
  LikelihoodEvaluation evaluation;
  Eigen::VectorXd gradient;
};
AplValueGradient log_apl_with_gradient(const Eigen::VectorXd& beta, const HazardIncrements& lambdas,
                                       const RiskStructure& risk, const Eigen::MatrixXd& covariates);

LikelihoodEvaluation log_pl_breslow(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates);
LikelihoodEvaluation log_pl_efron(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                  const Eigen::MatrixXd& covariates);
// Throws CapacityError when some C(n_j, d_j) exceeds kCoxSubsetCap.
LikelihoodEvaluation log_pl_cox_correction(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                           const Eigen::MatrixXd& covariates);
// Throws CapacityError when some d_j exceeds kKpMaxTies.
LikelihoodEvaluation log_pl_kp_correction(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                          const Eigen::MatrixXd& covariates);
// The untied approximation; throws DomainError if any d_j > 1.
LikelihoodEvaluation log_pl_no_ties(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates);

// Log-likelihood, score and observed information in one pass.
struct PlDerivatives {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};
PlDerivatives breslow_derivatives(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                  const Eigen::MatrixXd& covariates);
PlDerivatives efron_derivatives(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                const Eigen::MatrixXd& covariates);

Eigen::VectorXd breslow_score(const Eigen::VectorXd& beta, const RiskStructure& risk,
                              const Eigen::MatrixXd& covariates);
Eigen::MatrixXd breslow_information(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates);

}  // namespace pbcox
