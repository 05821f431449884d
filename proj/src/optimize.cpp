#include "pbcox/optimize.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "pbcox/errors.hpp"

namespace pbcox {

namespace {

constexpr double kArmijo = 1e-4;

// Tolerated decrease attributable to rounding in the objective itself.
double rounding_slack(double f) { return 1e-12 * (1.0 + std::abs(f)); }

struct Trial {
  bool accepted = false;
  Eigen::VectorXd x;
};

template <class Eval>
Trial backtrack(const Eval& eval, const Eigen::VectorXd& x, double f, double slope,
                const Eigen::VectorXd& dir, const OptimizerOptions& opts, int& rejected) {
  double alpha = 1.0;
  for (int h = 0; h <= opts.max_halvings; ++h, alpha *= 0.5) {
    Eigen::VectorXd trial = x + alpha * dir;
    const double ft = eval(trial);
    if (!std::isfinite(ft)) {
      ++rejected;
      continue;
    }
    if (ft >= f + kArmijo * alpha * slope - rounding_slack(f)) return {true, std::move(trial)};
  }
  return {};
}

bool finite_value(double v) { return std::isfinite(v); }

}  // namespace

OptimizerResult maximize_newton(const std::function<ValueGradientHessian(const Eigen::VectorXd&)>& f,
                                Eigen::VectorXd x0, const OptimizerOptions& opts) {
  OptimizerResult res;
  res.x = std::move(x0);
  auto cur = f(res.x);
  if (!finite_value(cur.value)) throw EvaluationError("objective is not finite at the starting point");

  auto value_only = [&](const Eigen::VectorXd& x) { return f(x).value; };
  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    if (cur.gradient.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd info = -cur.hessian;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) {
      throw DegenerateError("information matrix is singular or indefinite");
    }
    const Eigen::VectorXd dir = ldlt.solve(cur.gradient);
    const double slope = cur.gradient.dot(dir);
    auto trial = backtrack(value_only, res.x, cur.value, slope, dir, opts, res.rejected_evaluations);
    if (!trial.accepted) break;
    res.x = std::move(trial.x);
    cur = f(res.x);
  }
  if (!res.converged && cur.gradient.lpNorm<Eigen::Infinity>() <= opts.grad_tol) res.converged = true;
  res.value = cur.value;
  res.gradient = cur.gradient;
  return res;
}

OptimizerResult maximize_bfgs(const std::function<ValueGradient(const Eigen::VectorXd&)>& f,
                              Eigen::VectorXd x0, const Eigen::MatrixXd& initial_inverse,
                              const OptimizerOptions& opts) {
  OptimizerResult res;
  res.x = std::move(x0);
  auto cur = f(res.x);
  if (!finite_value(cur.value)) throw EvaluationError("objective is not finite at the starting point");

  const auto n = res.x.size();
  Eigen::MatrixXd hinv = initial_inverse;
  bool fresh = true;
  auto value_only = [&](const Eigen::VectorXd& x) { return f(x).value; };

  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    if (cur.gradient.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd dir = hinv * cur.gradient;
    double slope = cur.gradient.dot(dir);
    if (!(slope > 0.0)) {
      hinv = initial_inverse;
      fresh = true;
      dir = hinv * cur.gradient;
      slope = cur.gradient.dot(dir);
      if (!(slope > 0.0)) {
        dir = cur.gradient;
        slope = dir.squaredNorm();
      }
    }
    auto trial = backtrack(value_only, res.x, cur.value, slope, dir, opts, res.rejected_evaluations);
    if (!trial.accepted) {
      if (fresh) break;
      hinv = initial_inverse;
      fresh = true;
      continue;
    }
    auto next = f(trial.x);
    const Eigen::VectorXd s = trial.x - res.x;
    const Eigen::VectorXd y = cur.gradient - next.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      hinv = (eye - rho * s * y.transpose()) * hinv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
      fresh = false;
    }
    res.x = std::move(trial.x);
    cur = std::move(next);
  }
  if (!res.converged && cur.gradient.lpNorm<Eigen::Infinity>() <= opts.grad_tol) res.converged = true;
  res.value = cur.value;
  res.gradient = cur.gradient;
  return res;
}

}  // namespace pbcox
