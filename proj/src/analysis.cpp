#include "pbcox/analysis.hpp"

#include <atomic>
#include <cmath>
#include <fmt/format.h>
#include <ostream>
#include <thread>

#include "pbcox/errors.hpp"
#include "pbcox/format.hpp"
#include "pbcox/likelihood.hpp"

namespace pbcox {

SurvivalDataset scale_times(const SurvivalDataset& data) {
  const double max_t = data.times().maxCoeff();
  return data.with_times(data.times() / max_t);
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 25; ++i) grid.push_back(i / 100.0);
  return grid;
}

double estimation_discrepancy(const Eigen::VectorXd& beta_hat, const Eigen::VectorXd& beta_pb) {
  if (beta_hat.size() != beta_pb.size()) {
    throw DomainError(fmt::format("coefficient lengths differ: {} vs {}", beta_hat.size(), beta_pb.size()));
  }
  if (beta_hat.size() == 0) return 0.0;
  return std::expm1((beta_hat - beta_pb).cwiseAbs().maxCoeff());
}

double sum_squared_hazards(const Eigen::VectorXd& beta_pb, const HazardIncrements& lambdas_pb,
                           const RiskStructure& risk, const Eigen::MatrixXd& covariates) {
  if (lambdas_pb.size() != risk.k()) throw DomainError("hazard increments do not match event times");
  const Eigen::VectorXd eta = covariates * beta_pb;
  double total = 0.0;
  for (std::size_t j = 0; j < risk.k(); ++j) {
    double ss = 0.0;
    for (int i : risk.risk_sets[j]) {
      const double p = event_prob(eta[i], lambdas_pb[j]);
      ss += p * p;
    }
    total += ss / risk.n_at_risk[j];
  }
  return total / static_cast<double>(risk.k());
}

AplGoodness apl_goodness(const Eigen::VectorXd& beta_breslow, const Eigen::VectorXd& beta_efron,
                         const Eigen::VectorXd& beta_pb, const HazardIncrements& lambdas_pb,
                         const RiskStructure& risk, const Eigen::MatrixXd& covariates) {
  const auto b = log_apl(beta_breslow, lambdas_pb, risk, covariates);
  const auto e = log_apl(beta_efron, lambdas_pb, risk, covariates);
  const auto p = log_apl(beta_pb, lambdas_pb, risk, covariates);
  return {b.loglik, e.loglik, p.loglik, b.flagged || e.flagged || p.flagged};
}

namespace {

TauSweepRecord sweep_one(const SurvivalDataset& data, double tau) {
  TauSweepRecord rec;
  rec.tau = tau;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rec.ed_breslow = rec.ed_efron = rec.ssh = rec.logL_b = rec.logL_e = rec.logL_pb = nan;
  try {
    const SurvivalDataset grouped = tau > 0.0 ? data.with_times(group_times(data.times(), tau)) : data;
    const auto risk = build_risk_structure(grouped);
    rec.k = static_cast<int>(risk.k());
    rec.max_ties = risk.max_ties();

    const auto bundle = fit_methods(grouped, risk, {Estimator::breslow, Estimator::efron, Estimator::pb});
    std::string errors;
    auto take = [&](const std::optional<MethodOutcome>& o, Estimator e, Eigen::VectorXd& beta, Eigen::VectorXd& se) {
      if (o && o->fit) {
        beta = o->fit->beta_hat;
        se = o->fit->std_err;
        return true;
      }
      errors += fmt::format("{}{}: {}", errors.empty() ? "" : "; ", to_string(e), o ? o->error : "not run");
      return false;
    };
    const bool ok_b = take(bundle.breslow, Estimator::breslow, rec.beta_breslow, rec.se_breslow);
    const bool ok_e = take(bundle.efron, Estimator::efron, rec.beta_efron, rec.se_efron);
    const bool ok_pb = take(bundle.pb, Estimator::pb, rec.beta_pb, rec.se_pb);
    rec.error = errors;
    rec.flagged = !errors.empty();
    if (!ok_pb) return rec;

    const auto& lambdas_pb = bundle.pb->fit->baseline;
    const auto& x = grouped.covariates();
    rec.ssh = sum_squared_hazards(rec.beta_pb, lambdas_pb, risk, x);
    if (ok_b) rec.ed_breslow = estimation_discrepancy(rec.beta_breslow, rec.beta_pb);
    if (ok_e) rec.ed_efron = estimation_discrepancy(rec.beta_efron, rec.beta_pb);
    rec.logL_pb = log_apl(rec.beta_pb, lambdas_pb, risk, x).loglik;
    if (ok_b) rec.logL_b = log_apl(rec.beta_breslow, lambdas_pb, risk, x).loglik;
    if (ok_e) rec.logL_e = log_apl(rec.beta_efron, lambdas_pb, risk, x).loglik;
  } catch (const std::exception& e) {
    rec.flagged = true;
    rec.error = e.what();
  }
  return rec;
}

}  // namespace

std::vector<TauSweepRecord> tau_sweep(const SurvivalDataset& data, std::span<const double> taus, unsigned threads) {
  for (double t : taus) {
    if (!(t >= 0.0)) throw DomainError(fmt::format("grouping width {} must be nonnegative", t));
  }
  std::vector<TauSweepRecord> out(taus.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < taus.size(); i = next++) out[i] = sweep_one(data, taus[i]);
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

namespace {

std::string vec_cells(const Eigen::VectorXd& v, std::size_t width) {
  std::string s;
  for (std::size_t l = 0; l < width; ++l) {
    s += ',';
    s += static_cast<Eigen::Index>(l) < v.size() ? fmt9(v[static_cast<Eigen::Index>(l)]) : "nan";
  }
  return s;
}

std::string csv_text(std::string s) {
  for (auto& c : s) {
    if (c == ',' || c == '\n' || c == '"') c = ' ';
  }
  return s;
}

}  // namespace

void write_sweep_long_csv(std::ostream& out, const std::vector<TauSweepRecord>& records,
                          const std::vector<std::string>& covariate_names) {
  out << "tau,method,k,max_ties,ssh,ed,apl_loglik";
  for (const auto& n : covariate_names) out << ",beta_" << n;
  for (const auto& n : covariate_names) out << ",se_" << n;
  out << ",error\n";
  const std::size_t p = covariate_names.size();
  for (const auto& r : records) {
    struct Row {
      const char* name;
      double ed;
      double logl;
      const Eigen::VectorXd* beta;
      const Eigen::VectorXd* se;
    };
    const Row rows[] = {{"breslow", r.ed_breslow, r.logL_b, &r.beta_breslow, &r.se_breslow},
                        {"efron", r.ed_efron, r.logL_e, &r.beta_efron, &r.se_efron},
                        {"pb", 0.0, r.logL_pb, &r.beta_pb, &r.se_pb}};
    for (const auto& row : rows) {
      out << fmt9(r.tau) << ',' << row.name << ',' << r.k << ',' << r.max_ties << ',' << fmt9(r.ssh) << ','
          << fmt9(row.ed) << ',' << fmt9(row.logl) << vec_cells(*row.beta, p) << vec_cells(*row.se, p) << ','
          << csv_text(r.error) << '\n';
    }
  }
}

void write_sweep_wide_csv(std::ostream& out, const std::vector<TauSweepRecord>& records) {
  out << "tau,k,max_ties,ssh,ed_breslow,ed_efron,logL_b,logL_e,logL_pb,apl_ratio_pb_b,apl_ratio_pb_e,flagged\n";
  for (const auto& r : records) {
    out << fmt9(r.tau) << ',' << r.k << ',' << r.max_ties << ',' << fmt9(r.ssh) << ',' << fmt9(r.ed_breslow) << ','
        << fmt9(r.ed_efron) << ',' << fmt9(r.logL_b) << ',' << fmt9(r.logL_e) << ',' << fmt9(r.logL_pb) << ','
        << fmt9(std::exp(r.logL_pb - r.logL_b)) << ',' << fmt9(std::exp(r.logL_pb - r.logL_e)) << ','
        << (r.flagged ? 1 : 0) << '\n';
  }
}

}  // namespace pbcox
