#pragma once

// Small dense maximizers used by the estimators. Objectives may return a
// non-finite value to reject a trial point; the line search halves the step.

#include <Eigen/Core>
#include <functional>

namespace pbcox {

struct OptimizerOptions {
  double grad_tol = 1e-8;  // max-norm of the gradient
  int max_iter = 200;
  int max_halvings = 40;
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  int rejected_evaluations = 0;  // non-finite trial values seen during line search
};

struct ValueGradient {
  double value;
  Eigen::VectorXd gradient;
};

struct ValueGradientHessian {
  double value;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Newton ascent; throws DegenerateError when -hessian is not positive definite.
OptimizerResult maximize_newton(const std::function<ValueGradientHessian(const Eigen::VectorXd&)>& f,
                                Eigen::VectorXd x0, const OptimizerOptions& opts = {});

// BFGS ascent. initial_inverse approximates the inverse of -hessian at x0.
OptimizerResult maximize_bfgs(const std::function<ValueGradient(const Eigen::VectorXd&)>& f,
                              Eigen::VectorXd x0, const Eigen::MatrixXd& initial_inverse,
                              const OptimizerOptions& opts = {});

}  // namespace pbcox
