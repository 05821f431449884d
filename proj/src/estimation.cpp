#include "pbcox/estimation.hpp"

#include <Eigen/Cholesky>
#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "pbcox/errors.hpp"

namespace pbcox {

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::breslow: return "breslow";
    case Estimator::efron: return "efron";
    case Estimator::pb: return "pb";
  }
  return "unknown";
}

Estimator estimator_from_string(std::string_view name) {
  if (name == "breslow") return Estimator::breslow;
  if (name == "efron") return Estimator::efron;
  if (name == "pb") return Estimator::pb;
  throw DomainError(fmt::format("unknown estimator '{}'", name));
}

InitBeta init_beta_from_string(std::string_view name) {
  if (name == "efron") return InitBeta::efron;
  if (name == "breslow") return InitBeta::breslow;
  if (name == "zero") return InitBeta::zero;
  throw DomainError(fmt::format("unknown initial beta source '{}'", name));
}

InitLambda init_lambda_from_string(std::string_view name) {
  if (name == "efron") return InitLambda::efron;
  if (name == "breslow") return InitLambda::breslow;
  if (name == "nelson-aalen" || name == "nelson_aalen") return InitLambda::nelson_aalen;
  throw DomainError(fmt::format("unknown initial baseline source '{}'", name));
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& info) {
  const auto p = info.rows();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) {
    return Eigen::VectorXd::Constant(p, kInf);
  }
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd se = inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (!se.allFinite()) se.setConstant(kInf);
  return se;
}

// Breslow and Efron refuse a singular information at the optimum.
Eigen::VectorXd checked_standard_errors(const Eigen::MatrixXd& info, Estimator method) {
  Eigen::VectorXd se = standard_errors(info);
  if (!se.allFinite()) {
    throw DegenerateError(fmt::format("{} information matrix is singular at the optimum", to_string(method)));
  }
  return se;
}

Eigen::MatrixXd inverse_or_identity(const Eigen::MatrixXd& info) {
  const auto p = info.rows();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
    return ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  }
  return Eigen::MatrixXd::Identity(p, p);
}

void check_fit_inputs(const SurvivalDataset& data, const RiskStructure& risk) {
  if (risk.k() == 0) throw StructureError("risk structure has no event times");
  if (data.num_covariates() == 0) throw DomainError("at least one covariate is required");
}

FitResult from_optimizer(const OptimizerResult& opt, Estimator method) {
  FitResult fit;
  fit.beta_hat = opt.x;
  fit.loglik_at_optimum = opt.value;
  fit.method = method;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.grad_norm = opt.gradient.lpNorm<Eigen::Infinity>();
  fit.rejected_evaluations = opt.rejected_evaluations;
  return fit;
}

[[noreturn]] void throw_nonconvergence(FitResult fit) {
  const auto what = fmt::format("{} fit did not converge after {} iterations (gradient max-norm {:.3g})",
                                to_string(fit.method), fit.iterations, fit.grad_norm);
  throw NonConvergenceError(what, std::move(fit));
}

}  // namespace

FitResult fit_breslow(const SurvivalDataset& data, const RiskStructure& risk, const OptimizerOptions& opts) {
  check_fit_inputs(data, risk);
  const auto& x = data.covariates();
  auto objective = [&](const Eigen::VectorXd& b) {
    auto d = breslow_derivatives(b, risk, x);
    return ValueGradientHessian{d.loglik, std::move(d.score), -d.information};
  };
  const auto opt = maximize_newton(objective, Eigen::VectorXd::Zero(x.cols()), opts);
  FitResult fit = from_optimizer(opt, Estimator::breslow);
  fit.std_err = checked_standard_errors(breslow_information(fit.beta_hat, risk, x), Estimator::breslow);
  fit.baseline = baseline_breslow(fit.beta_hat, risk, x);
  if (!fit.converged) throw_nonconvergence(std::move(fit));
  return fit;
}

FitResult fit_efron(const SurvivalDataset& data, const RiskStructure& risk, const OptimizerOptions& opts) {
  check_fit_inputs(data, risk);
  const auto& x = data.covariates();
  const Eigen::VectorXd start = Eigen::VectorXd::Zero(x.cols());
  auto objective = [&](const Eigen::VectorXd& b) {
    auto d = efron_derivatives(b, risk, x);
    return ValueGradient{d.loglik, std::move(d.score)};
  };
  const auto h0 = inverse_or_identity(efron_derivatives(start, risk, x).information);
  const auto opt = maximize_bfgs(objective, start, h0, opts);
  FitResult fit = from_optimizer(opt, Estimator::efron);
  fit.std_err = checked_standard_errors(efron_derivatives(fit.beta_hat, risk, x).information, Estimator::efron);
  fit.baseline = baseline_efron(fit.beta_hat, risk, x);
  if (!fit.converged) throw_nonconvergence(std::move(fit));
  return fit;
}

FitResult fit_pb(const SurvivalDataset& data, const RiskStructure& risk, const Eigen::VectorXd& init_beta,
                 const HazardIncrements& init_lambdas, const OptimizerOptions& opts) {
  check_fit_inputs(data, risk);
  if (!init_beta.allFinite()) throw DomainError("initial coefficients must be finite");
  if (init_lambdas.size() != risk.k()) {
    throw DomainError(fmt::format("{} initial hazard increments for {} event times", init_lambdas.size(), risk.k()));
  }
  for (std::size_t j = 0; j < risk.k(); ++j) {
    if (!(init_lambdas[j] > 0.0) || !std::isfinite(init_lambdas[j])) {
      throw DomainError(fmt::format("initial hazard increment at event time {} must be positive", j));
    }
  }
  const auto& x = data.covariates();
  auto objective = [&](const Eigen::VectorXd& b) {
    auto vg = log_apl_with_gradient(b, init_lambdas, risk, x);
    const double v = vg.evaluation.flagged ? -kInf : vg.evaluation.loglik;
    return ValueGradient{v, std::move(vg.gradient)};
  };
  const auto h0 = inverse_or_identity(breslow_information(init_beta, risk, x));
  const auto opt = maximize_bfgs(objective, init_beta, h0, opts);
  FitResult fit = from_optimizer(opt, Estimator::pb);
  fit.std_err = standard_errors(breslow_information(fit.beta_hat, risk, x));
  auto update = update_baseline_pb(fit.beta_hat, risk, x, init_lambdas);
  fit.baseline = std::move(update.lambdas);
  fit.capped_baseline_times = std::move(update.capped_times);
  if (!fit.converged) throw_nonconvergence(std::move(fit));
  return fit;
}

HazardIncrements baseline_breslow(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                  const Eigen::MatrixXd& covariates) {
  const Eigen::VectorXd r = (covariates * beta).array().exp();
  Eigen::VectorXd out(static_cast<Eigen::Index>(risk.k()));
  for (std::size_t j = 0; j < risk.k(); ++j) {
    double s0 = 0.0;
    for (int i : risk.risk_sets[j]) s0 += r[i];
    out[static_cast<Eigen::Index>(j)] = risk.d[j] / s0;
  }
  return HazardIncrements(std::move(out));
}

HazardIncrements baseline_efron(const Eigen::VectorXd& beta, const RiskStructure& risk,
                                const Eigen::MatrixXd& covariates) {
  const Eigen::VectorXd r = (covariates * beta).array().exp();
  Eigen::VectorXd out(static_cast<Eigen::Index>(risk.k()));
  for (std::size_t j = 0; j < risk.k(); ++j) {
    double s0 = 0.0;
    double e0 = 0.0;
    for (int i : risk.risk_sets[j]) s0 += r[i];
    for (int i : risk.event_sets[j]) e0 += r[i];
    const int d = risk.d[j];
    const double mean_event = e0 / d;
    double lam = 0.0;
    for (int g = 0; g < d; ++g) lam += 1.0 / (s0 - g * mean_event);
    out[static_cast<Eigen::Index>(j)] = lam;
  }
  return HazardIncrements(std::move(out));
}

HazardIncrements baseline_nelson_aalen(const RiskStructure& risk) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(risk.k()));
  for (std::size_t j = 0; j < risk.k(); ++j) {
    out[static_cast<Eigen::Index>(j)] = static_cast<double>(risk.d[j]) / risk.n_at_risk[j];
  }
  return HazardIncrements(std::move(out));
}

namespace {

constexpr double kLambdaFloor = 1e-12;
constexpr double kCapNumerator = 50.0;

// Safeguarded Newton in u = log(lambda) on the decreasing function
// g(lambda) = sum_D r / expm1(r lambda) - survivors.
double solve_pb_increment(const std::vector<double>& event_r, double survivors, double lo, double hi,
                          double guess) {
  auto g = [&](double lam) {
    double v = -survivors;
    for (double r : event_r) v += r / std::expm1(r * lam);
    return v;
  };
  // lambda * g'(lambda), the derivative in u.
  auto dg_du = [&](double lam) {
    double v = 0.0;
    for (double r : event_r) {
      const double rl = r * lam;
      if (rl > 700.0) continue;
      const double em = std::expm1(rl);
      v -= r * rl * (em + 1.0) / (em * em);
    }
    return v;
  };

  double ulo = std::log(lo);
  double uhi = std::log(hi);
  double u = (guess > lo && guess < hi) ? std::log(guess) : 0.5 * (ulo + uhi);
  for (int it = 0; it < 200; ++it) {
    const double lam = std::exp(u);
    const double gv = g(lam);
    if (gv == 0.0) return lam;
    if (gv > 0.0) ulo = u; else uhi = u;
    const double slope = dg_du(lam);
    double next = (slope < 0.0) ? u - gv / slope : 0.5 * (ulo + uhi);
    if (!(next > ulo && next < uhi)) next = 0.5 * (ulo + uhi);
    if (std::abs(next - u) <= 1e-15 * std::max(1.0, std::abs(u)) || uhi - ulo <= 1e-15 * std::max(1.0, std::abs(u))) {
      return std::exp(next);
    }
    u = next;
  }
  return std::exp(u);
}

}  // namespace

PbBaselineUpdate update_baseline_pb(const Eigen::VectorXd& beta_pb, const RiskStructure& risk,
                                    const Eigen::MatrixXd& covariates, const HazardIncrements& init_lambdas) {
  if (init_lambdas.size() != risk.k()) {
    throw DomainError(fmt::format("{} initial hazard increments for {} event times", init_lambdas.size(), risk.k()));
  }
  const Eigen::VectorXd r = (covariates * beta_pb).array().exp();
  Eigen::VectorXd out(static_cast<Eigen::Index>(risk.k()));
  std::vector<int> capped;
  std::vector<char> is_event(static_cast<std::size_t>(covariates.rows()), 0);
  std::vector<double> event_r;

  for (std::size_t j = 0; j < risk.k(); ++j) {
    if (risk.d[j] < 1) throw DomainError(fmt::format("event time {} has no events", j));
    event_r.clear();
    double min_r = kInf;
    for (int i : risk.event_sets[j]) {
      is_event[static_cast<std::size_t>(i)] = 1;
      event_r.push_back(r[i]);
      min_r = std::min(min_r, r[i]);
    }
    double survivors = 0.0;
    for (int i : risk.risk_sets[j]) {
      if (!is_event[static_cast<std::size_t>(i)]) survivors += r[i];
    }
    for (int i : risk.event_sets[j]) is_event[static_cast<std::size_t>(i)] = 0;

    const double cap = kCapNumerator / min_r;
    double lam;
    double g_cap = -survivors;
    for (double ri : event_r) g_cap += ri / std::expm1(ri * cap);
    if (survivors <= 0.0 || g_cap >= 0.0) {
      lam = cap;
      capped.push_back(static_cast<int>(j));
    } else {
      lam = solve_pb_increment(event_r, survivors, kLambdaFloor, cap, init_lambdas[j]);
    }
    out[static_cast<Eigen::Index>(j)] = lam;
  }
  return {HazardIncrements(std::move(out)), std::move(capped)};
}

std::vector<WaldInterval> wald_ci(const FitResult& fit, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError(fmt::format("confidence level {} outside (0, 1)", level));
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 0.5 * (1.0 + level));
  std::vector<WaldInterval> out;
  for (Eigen::Index l = 0; l < fit.beta_hat.size(); ++l) {
    const double b = fit.beta_hat[l];
    const double se = fit.std_err.size() > l ? fit.std_err[l] : kInf;
    WaldInterval w{b - z * se, b + z * se};
    w.unbounded = !std::isfinite(se);
    if (w.unbounded) {
      w.lower = -kInf;
      w.upper = kInf;
    }
    w.degenerate = se == 0.0;
    out.push_back(w);
  }
  return out;
}

const std::optional<MethodOutcome>& FitBundle::get(Estimator e) const {
  switch (e) {
    case Estimator::breslow: return breslow;
    case Estimator::efron: return efron;
    case Estimator::pb: break;
  }
  return pb;
}

namespace {

template <class F>
MethodOutcome timed(F&& f) {
  MethodOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    out.fit = f();
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

bool wants(const std::vector<Estimator>& methods, Estimator e) {
  return std::find(methods.begin(), methods.end(), e) != methods.end();
}

}  // namespace

FitBundle fit_methods(const SurvivalDataset& data, const RiskStructure& risk, const std::vector<Estimator>& methods,
                      const PbInit& init, const OptimizerOptions& opts) {
  FitBundle bundle;
  const bool want_pb = wants(methods, Estimator::pb);
  const bool need_breslow = wants(methods, Estimator::breslow) ||
                            (want_pb && (init.beta == InitBeta::breslow || init.lambda == InitLambda::breslow));
  const bool need_efron = wants(methods, Estimator::efron) ||
                          (want_pb && (init.beta == InitBeta::efron || init.lambda == InitLambda::efron));

  if (need_breslow) bundle.breslow = timed([&] { return fit_breslow(data, risk, opts); });
  if (need_efron) bundle.efron = timed([&] { return fit_efron(data, risk, opts); });

  if (want_pb) {
    bundle.pb = timed([&]() -> FitResult {
      auto require = [&](const std::optional<MethodOutcome>& o, Estimator e) -> const FitResult& {
        if (!o || !o->fit) {
          throw std::runtime_error(fmt::format("PB initialization needs the {} fit, which failed: {}", to_string(e),
                                               o ? o->error : std::string("not run")));
        }
        return *o->fit;
      };
      Eigen::VectorXd beta0;
      switch (init.beta) {
        case InitBeta::efron: beta0 = require(bundle.efron, Estimator::efron).beta_hat; break;
        case InitBeta::breslow: beta0 = require(bundle.breslow, Estimator::breslow).beta_hat; break;
        case InitBeta::zero: beta0 = Eigen::VectorXd::Zero(data.covariates().cols()); break;
      }
      HazardIncrements lambda0;
      switch (init.lambda) {
        case InitLambda::efron: lambda0 = require(bundle.efron, Estimator::efron).baseline; break;
        case InitLambda::breslow: lambda0 = require(bundle.breslow, Estimator::breslow).baseline; break;
        case InitLambda::nelson_aalen: lambda0 = baseline_nelson_aalen(risk); break;
      }
      return fit_pb(data, risk, beta0, lambda0, opts);
    });
  }

  if (!wants(methods, Estimator::breslow)) bundle.breslow.reset();
  if (!wants(methods, Estimator::efron)) bundle.efron.reset();
  return bundle;
}

}  // namespace pbcox
