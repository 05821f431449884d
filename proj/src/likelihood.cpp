#include "pbcox/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fmt/format.h>
#include <numeric>

#include "pbcox/errors.hpp"
#include "pbcox/pb.hpp"

namespace pbcox {

HazardIncrements::HazardIncrements(Eigen::VectorXd values) : values_(std::move(values)) {
  for (Eigen::Index j = 0; j < values_.size(); ++j) {
    if (!(values_[j] >= 0.0)) {
      throw DomainError(fmt::format("hazard increment {} at index {} is negative or NaN", values_[j], j));
    }
  }
}

Eigen::VectorXd HazardIncrements::cumulative() const {
  Eigen::VectorXd out(values_.size());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < values_.size(); ++j) out[j] = (acc += values_[j]);
  return out;
}

HazardIncrements HazardIncrements::scaled(double factor) const {
  return HazardIncrements(values_ * factor);
}

std::string_view to_string(LikelihoodMethod m) {
  switch (m) {
    case LikelihoodMethod::pb_exact: return "pb_exact";
    case LikelihoodMethod::breslow: return "breslow";
    case LikelihoodMethod::efron: return "efron";
    case LikelihoodMethod::cox_correction: return "cox_correction";
    case LikelihoodMethod::kalbfleisch_prentice: return "kalbfleisch_prentice";
    case LikelihoodMethod::no_ties_approx: return "no_ties_approx";
  }
  return "unknown";
}

double event_prob(double x_beta, double lambda) {
  if (lambda <= 0.0) return 0.0;
  return -std::expm1(-std::exp(x_beta) * lambda);
}

namespace {

Eigen::VectorXd linear_predictor(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x) {
  if (beta.size() != x.cols()) {
    throw DomainError(fmt::format("coefficient length {} does not match {} covariates", beta.size(), x.cols()));
  }
  return x * beta;
}

LikelihoodEvaluation finish(std::vector<double> terms, LikelihoodMethod method, bool flagged = false) {
  LikelihoodEvaluation ev;
  ev.per_time_terms = std::move(terms);
  ev.method = method;
  ev.flagged = flagged;
  ev.loglik = 0.0;
  for (double t : ev.per_time_terms) ev.loglik += t;
  if (ev.loglik < kLogZero) ev.loglik = kLogZero;
  return ev;
}

double sum_over(const std::vector<int>& idx, const Eigen::VectorXd& v) {
  double s = 0.0;
  for (int i : idx) s += v[i];
  return s;
}

// Shifted risk scores exp(eta - max eta); the shift cancels in every ratio.
struct RiskScores {
  Eigen::VectorXd eta;
  Eigen::VectorXd w;
  double shift;
};

RiskScores risk_scores(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x) {
  RiskScores rs;
  rs.eta = linear_predictor(beta, x);
  rs.shift = rs.eta.size() > 0 ? rs.eta.maxCoeff() : 0.0;
  rs.w = (rs.eta.array() - rs.shift).exp();
  return rs;
}

void check_lambdas(const HazardIncrements& lambdas, const RiskStructure& risk) {
  if (lambdas.size() != risk.k()) {
    throw DomainError(fmt::format("{} hazard increments for {} event times", lambdas.size(), risk.k()));
  }
}

// log A_j; fills probs with the risk-set event probabilities. NaN when lambda <= 0.
double apl_log_numerator(const RiskStructure& risk, std::size_t j, const Eigen::VectorXd& eta, double lambda,
                         std::vector<double>& probs, std::vector<char>& is_event) {
  probs.clear();
  if (lambda <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  const auto& dset = risk.event_sets[j];
  for (int i : dset) is_event[static_cast<std::size_t>(i)] = 1;
  double log_a = 0.0;
  for (int i : risk.risk_sets[j]) {
    const double rl = std::exp(eta[i]) * lambda;
    const double p = -std::expm1(-rl);
    probs.push_back(p);
    log_a += is_event[static_cast<std::size_t>(i)] ? std::log(p) : -rl;
  }
  for (int i : dset) is_event[static_cast<std::size_t>(i)] = 0;
  return log_a;
}

struct AplTerm {
  double value;
  bool flagged;
};

AplTerm apl_term(double log_a, double b) {
  if (!(b > 0.0) || !std::isfinite(log_a)) return {kLogZero, true};
  return {std::min(log_a - std::log(b), 0.0), false};
}

}  // namespace

LikelihoodEvaluation log_apl(const Eigen::VectorXd& beta, const HazardIncrements& lambdas,
                             const RiskStructure& risk, const Eigen::MatrixXd& covariates) {
  check_lambdas(lambdas, risk);
  const Eigen::VectorXd eta = linear_predictor(beta, covariates);
  std::vector<double> terms(risk.k());
  std::vector<double> probs;
  std::vector<char> is_event(static_cast<std::size_t>(covariates.rows()), 0);
  bool flagged = false;
  for (std::size_t j = 0; j < risk.k(); ++j) {
    const double log_a = apl_log_numerator(risk, j, eta, lambdas[j], probs, is_event);
    const double b = probs.empty() ? 0.0 : pb_pmf(PbInput(probs), risk.d[j]).value;
    const auto t = apl_term(log_a, b);
    terms[j] = t.value;
    flagged = flagged || t.flagged;
  }
  return finish(std::move(terms), LikelihoodMethod::pb_exact, flagged);
}

AplValueGradient log_apl_with_gradient(const Eigen::VectorXd& beta, const HazardIncrements& lambdas,
                                       const RiskStructure& risk, const Eigen::MatrixXd& covariates) {
  check_lambdas(lambdas, risk);
  const Eigen::VectorXd eta = linear_predictor(beta, covariates);
  const auto p_dim = covariates.cols();
  std::vector<double> terms(risk.k());
  std::vector<double> probs;
  std::vector<double> rl;
  std::vector<char> is_event(static_cast<std::size_t>(covariates.rows()), 0);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p_dim);
  bool flagged = false;

  for (std::size_t j = 0; j < risk.k(); ++j) {
    const double log_a = apl_log_numerator(risk, j, eta, lambdas[j], probs, is_event);
    if (probs.empty()) {
      terms[j] = kLogZero;
      flagged = true;
      continue;
    }
    // B_j from the truncated convolution that also yields its derivatives, so
    // value and gradient share one evaluation with full relative precision.
    const auto sens = pb_pmf_sensitivity(probs, risk.d[j]);
    const auto t = apl_term(log_a, sens.value);
    terms[j] = t.value;
    if (t.flagged) {
      flagged = true;
      continue;
    }
    const auto& rset = risk.risk_sets[j];
    const auto& dset = risk.event_sets[j];
    const double lambda = lambdas[j];
    rl.resize(rset.size());
    for (std::size_t a = 0; a < rset.size(); ++a) rl[a] = std::exp(eta[rset[a]]) * lambda;

    for (int i : dset) is_event[static_cast<std::size_t>(i)] = 1;
    for (std::size_t a = 0; a < rset.size(); ++a) {
      const int i = rset[a];
      // d log A / d eta_i
      const double da = is_event[static_cast<std::size_t>(i)] ? rl[a] / std::expm1(rl[a]) : -rl[a];
      // d log B / d eta_i, with dp/d eta = (1 - p) * r * lambda
      const double db = sens.d_value_d_prob[a] * (1.0 - probs[a]) * rl[a] / sens.value;
      const double coef = da - db;
      if (coef != 0.0) grad.noalias() += coef * covariates.row(i).transpose();
    }
    for (int i : dset) is_event[static_cast<std::size_t>(i)] = 0;
  }
  return {finish(std::move(terms), LikelihoodMethod::pb_exact, flagged), std::move(grad)};
}

LikelihoodEvaluation log_pl_breslow(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates) {
  const auto rs = risk_scores(beta, covariates);
  std::vector<double> terms(risk.k());
  for (std::size_t j = 0; j < risk.k(); ++j) {
    const double s0 = sum_over(risk.risk_sets[j], rs.w);
    terms[j] = sum_over(risk.event_sets[j], rs.eta) - risk.d[j] * (std::log(s0) + rs.shift);
  }
  return finish(std::move(terms), LikelihoodMethod::breslow);
}

LikelihoodEvaluation log_pl_no_ties(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates) {
  if (risk.max_ties() > 1) throw DomainError("untied approximation requested for data with tied events");
  auto ev = log_pl_breslow(beta, risk, covariates);
  ev.method = LikelihoodMethod::no_ties_approx;
  return ev;
}

LikelihoodEvaluation log_pl_efron(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                  const Eigen::MatrixXd& covariates) {
  const auto rs = risk_scores(beta, covariates);
  std::vector<double> terms(risk.k());
  for (std::size_t j = 0; j < risk.k(); ++j) {
    const double s0 = sum_over(risk.risk_sets[j], rs.w);
    const double d0 = sum_over(risk.event_sets[j], rs.w);
    const int d = risk.d[j];
    double term = sum_over(risk.event_sets[j], rs.eta);
    for (int l = 0; l < d; ++l) {
      const double arg = s0 - (static_cast<double>(l) / d) * d0;
      if (!(arg > 0.0)) {
        throw EvaluationError(fmt::format("Efron denominator {} at event time {} is not positive", arg, j));
      }
      term -= std::log(arg) + rs.shift;
    }
    terms[j] = term;
  }
  return finish(std::move(terms), LikelihoodMethod::efron);
}

namespace {

double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Sum over size-d subsets of the product of weights, by depth-first enumeration.
double subset_product_sum(const std::vector<double>& w, std::size_t start, int remaining, double prod) {
  if (remaining == 0) return prod;
  double acc = 0.0;
  const std::size_t last = w.size() - static_cast<std::size_t>(remaining);
  for (std::size_t i = start; i <= last; ++i) {
    acc += subset_product_sum(w, i + 1, remaining - 1, prod * w[i]);
  }
  return acc;
}

}  // namespace

LikelihoodEvaluation log_pl_cox_correction(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                           const Eigen::MatrixXd& covariates) {
  for (std::size_t j = 0; j < risk.k(); ++j) {
    if (log_binomial(risk.n_at_risk[j], risk.d[j]) > std::log(kCoxSubsetCap) + 1e-9) {
      throw CapacityError(fmt::format("Cox correction needs C({}, {}) subsets at event time {} (cap {})",
                                      risk.n_at_risk[j], risk.d[j], j, kCoxSubsetCap));
    }
  }
  const auto rs = risk_scores(beta, covariates);
  std::vector<double> terms(risk.k());
  std::vector<double> w;
  for (std::size_t j = 0; j < risk.k(); ++j) {
    w.clear();
    for (int i : risk.risk_sets[j]) w.push_back(rs.w[i]);
    const int d = risk.d[j];
    const double denom = subset_product_sum(w, 0, d, 1.0);
    terms[j] = sum_over(risk.event_sets[j], rs.eta) - (std::log(denom) + d * rs.shift);
  }
  return finish(std::move(terms), LikelihoodMethod::cox_correction);
}

LikelihoodEvaluation log_pl_kp_correction(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                          const Eigen::MatrixXd& covariates) {
  if (risk.max_ties() > kKpMaxTies) {
    throw CapacityError(
        fmt::format("Kalbfleisch-Prentice correction needs {}! orderings (cap {} ties)", risk.max_ties(), kKpMaxTies));
  }
  const auto rs = risk_scores(beta, covariates);
  std::vector<double> terms(risk.k());
  for (std::size_t j = 0; j < risk.k(); ++j) {
    const double s0 = sum_over(risk.risk_sets[j], rs.w);
    std::vector<int> order = risk.event_sets[j];
    std::sort(order.begin(), order.end());
    const int d = risk.d[j];
    double total = 0.0;
    long count = 0;
    do {
      double removed = 0.0;
      double prod = 1.0;
      for (int m = 0; m < d; ++m) {
        prod /= s0 - removed;
        removed += rs.w[order[static_cast<std::size_t>(m)]];
      }
      total += prod;
      ++count;
    } while (std::next_permutation(order.begin(), order.end()));
    terms[j] = sum_over(risk.event_sets[j], rs.eta) + std::log(total / static_cast<double>(count)) - d * rs.shift;
  }
  return finish(std::move(terms), LikelihoodMethod::kalbfleisch_prentice);
}

PlDerivatives breslow_derivatives(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                  const Eigen::MatrixXd& covariates) {
  const auto rs = risk_scores(beta, covariates);
  const auto p = covariates.cols();
  PlDerivatives out{0.0, Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
  Eigen::VectorXd s1(p);
  Eigen::MatrixXd s2(p, p);
  for (std::size_t j = 0; j < risk.k(); ++j) {
    double s0 = 0.0;
    s1.setZero();
    s2.setZero();
    for (int i : risk.risk_sets[j]) {
      const double wi = rs.w[i];
      const auto xi = covariates.row(i).transpose();
      s0 += wi;
      s1.noalias() += wi * xi;
      s2.noalias() += wi * xi * xi.transpose();
    }
    const double d = risk.d[j];
    const Eigen::VectorXd mean = s1 / s0;
    for (int i : risk.event_sets[j]) out.score.noalias() += covariates.row(i).transpose();
    out.score.noalias() -= d * mean;
    out.information.noalias() += d * (s2 / s0 - mean * mean.transpose());
    out.loglik += sum_over(risk.event_sets[j], rs.eta) - d * (std::log(s0) + rs.shift);
  }
  return out;
}

PlDerivatives efron_derivatives(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                const Eigen::MatrixXd& covariates) {
  const auto rs = risk_scores(beta, covariates);
  const auto p = covariates.cols();
  PlDerivatives out{0.0, Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
  Eigen::VectorXd s1(p), e1(p), a1(p);
  Eigen::MatrixXd s2(p, p), e2(p, p);
  for (std::size_t j = 0; j < risk.k(); ++j) {
    double s0 = 0.0;
    s1.setZero();
    s2.setZero();
    for (int i : risk.risk_sets[j]) {
      const double wi = rs.w[i];
      const auto xi = covariates.row(i).transpose();
      s0 += wi;
      s1.noalias() += wi * xi;
      s2.noalias() += wi * xi * xi.transpose();
    }
    double e0 = 0.0;
    e1.setZero();
    e2.setZero();
    for (int i : risk.event_sets[j]) {
      const double wi = rs.w[i];
      const auto xi = covariates.row(i).transpose();
      e0 += wi;
      e1.noalias() += wi * xi;
      e2.noalias() += wi * xi * xi.transpose();
      out.score.noalias() += xi;
    }
    out.loglik += sum_over(risk.event_sets[j], rs.eta);
    const int d = risk.d[j];
    for (int l = 0; l < d; ++l) {
      const double f = static_cast<double>(l) / d;
      const double a0 = s0 - f * e0;
      if (!(a0 > 0.0)) {
        throw EvaluationError(fmt::format("Efron denominator {} at event time {} is not positive", a0, j));
      }
      a1 = s1 - f * e1;
      const Eigen::VectorXd mean = a1 / a0;
      out.loglik -= std::log(a0) + rs.shift;
      out.score.noalias() -= mean;
      out.information.noalias() += (s2 - f * e2) / a0 - mean * mean.transpose();
    }
  }
  return out;
}

Eigen::VectorXd breslow_score(const Eigen::VectorXd& beta, const RiskStructure& risk,
                              const Eigen::MatrixXd& covariates) {
  return breslow_derivatives(beta, risk, covariates).score;
}

Eigen::MatrixXd breslow_information(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates) {
  return breslow_derivatives(beta, risk, covariates).information;
}

}  // namespace pbcox
