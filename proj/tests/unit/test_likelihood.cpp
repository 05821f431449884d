#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "pbcox/errors.hpp"
#include "pbcox/likelihood.hpp"
#include "pbcox/pb.hpp"

using namespace pbcox;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

SurvivalDataset make(std::vector<double> t, std::vector<int> s, const Eigen::MatrixXd& x) {
  const auto n = static_cast<Eigen::Index>(t.size());
  return SurvivalDataset(Eigen::Map<Eigen::VectorXd>(t.data(), n), Eigen::Map<Eigen::VectorXi>(s.data(), n), x);
}

// Three subjects x = (0, 1, 2); rows 0 and 1 tied at t = 1, row 2 censored at t = 2.
SurvivalDataset tied3() { return make({1, 1, 2}, {1, 1, 0}, vec({0, 1, 2})); }

// Random dataset with p covariates; integer times in [1, tmax] create ties when tmax is small.
SurvivalDataset random_dataset(std::mt19937_64& rng, int n, int p, int tmax, bool distinct = false) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> t(static_cast<std::size_t>(n));
  std::vector<int> s(static_cast<std::size_t>(n));
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    t[static_cast<std::size_t>(i)] = distinct ? 1.0 + i + 0.5 * (rng() % 2) / (n + 1.0) : 1.0 + rng() % tmax;
    s[static_cast<std::size_t>(i)] = rng() % 4 != 0;
    for (int c = 0; c < p; ++c) x(i, c) = z(rng);
  }
  s[0] = 1;
  return make(t, s, x);
}

double fd_derivative(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("event_prob examples") {
  CHECK(event_prob(0.0, 0.1) == doctest::Approx(0.0951626).epsilon(1e-7));
  CHECK(event_prob(0.0, 0.0) == 0.0);
  CHECK(event_prob(std::log(2.0), 0.1) == doctest::Approx(0.1812692).epsilon(1e-7));
  CHECK(event_prob(0.0, 1e-20) == doctest::Approx(1e-20).epsilon(1e-12));
}

TEST_CASE("hazard increments") {
  CHECK_THROWS_AS(HazardIncrements(vec({0.1, -0.1})), DomainError);
  const HazardIncrements h(vec({0.1, 0.2, 0.3}));
  CHECK(h.cumulative()[2] == doctest::Approx(0.6));
  CHECK(h.scaled(2.0)[1] == doctest::Approx(0.4));
}

TEST_CASE("log_apl examples") {
  // p = (0.1, 0.2): lambda = -log 0.9, second risk score log 0.8 / log 0.9.
  const double lam = -std::log(0.9);
  const double x1 = std::log(std::log(0.8) / std::log(0.9));
  const auto d = make({1, 2}, {1, 0}, vec({0.0, x1}));
  const auto risk = build_risk_structure(d);
  const auto ev = log_apl(vec({1.0}), HazardIncrements(vec({lam})), risk, d.covariates());
  CHECK(ev.per_time_terms[0] == doctest::Approx(-1.178655).epsilon(1e-6));
  CHECK(ev.loglik == doctest::Approx(std::log(0.08 / 0.26)).epsilon(1e-12));
  CHECK_FALSE(ev.flagged);

  // everyone at risk fails: conditioning is vacuous
  const auto all = make({1, 1, 1}, {1, 1, 1}, vec({0.3, -1, 2}));
  const auto r2 = build_risk_structure(all);
  CHECK(log_apl(vec({0.7}), HazardIncrements(vec({0.4})), r2, all.covariates()).loglik == doctest::Approx(0.0));

  // zero hazard at an event time
  const auto z = log_apl(vec({0.7}), HazardIncrements(vec({0.0})), r2, all.covariates());
  CHECK(z.flagged);
  CHECK(z.loglik <= kLogZero);

  CHECK_THROWS_AS(log_apl(vec({0.7}), HazardIncrements(vec({0.1, 0.2})), r2, all.covariates()), DomainError);
}

TEST_CASE("log_apl terms are log conditional probabilities") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = random_dataset(rng, 30, 2, 5);
    const auto risk = build_risk_structure(d);
    Eigen::VectorXd lam(static_cast<Eigen::Index>(risk.k()));
    for (auto& v : lam) v = u(rng);
    const auto ev = log_apl(vec({u(rng) - 1.0, u(rng) - 1.0}), HazardIncrements(lam), risk, d.covariates());
    for (double t : ev.per_time_terms) {
      CHECK(t <= 0.0);
      CHECK(std::exp(t) > 0.0);
    }
  }
}

TEST_CASE("log_apl small sets match enumeration") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = random_dataset(rng, 15, 1, 4);
    const auto risk = build_risk_structure(d);
    const Eigen::VectorXd beta = vec({0.4});
    Eigen::VectorXd lam = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(risk.k()), 0.3);
    const auto ev = log_apl(beta, HazardIncrements(lam), risk, d.covariates());
    for (std::size_t j = 0; j < risk.k(); ++j) {
      std::vector<double> p;
      double log_a = 0.0;
      for (int i : risk.risk_sets[j]) {
        const double pi = event_prob(d.covariates()(i, 0) * beta[0], lam[static_cast<Eigen::Index>(j)]);
        p.push_back(pi);
        const bool ev_i = std::find(risk.event_sets[j].begin(), risk.event_sets[j].end(), i) !=
                          risk.event_sets[j].end();
        log_a += std::log(ev_i ? pi : 1.0 - pi);
      }
      const double b = pb_pmf_enum(PbInput(p), risk.d[j]).value;
      CHECK(ev.per_time_terms[j] == doctest::Approx(log_a - std::log(b)).epsilon(1e-10));
    }
  }
}

TEST_CASE("analytic APL gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 0.5);
  for (int rep = 0; rep < 30; ++rep) {
    const int n = 20 + static_cast<int>(rng() % 100);
    const auto d = random_dataset(rng, n, 3, 6);
    const auto risk = build_risk_structure(d);
    Eigen::VectorXd lam(static_cast<Eigen::Index>(risk.k()));
    for (auto& v : lam) v = u(rng);
    const HazardIncrements h(lam);
    const Eigen::VectorXd beta = vec({0.3, -0.5, 0.8});
    const auto vg = log_apl_with_gradient(beta, h, risk, d.covariates());
    CHECK(vg.evaluation.loglik == doctest::Approx(log_apl(beta, h, risk, d.covariates()).loglik).epsilon(1e-10));
    for (int l = 0; l < 3; ++l) {
      auto f = [&](double b) {
        Eigen::VectorXd bb = beta;
        bb[l] = b;
        // the convolution-backed value: DFT round-off would swamp the difference quotient at larger n
        return log_apl_with_gradient(bb, h, risk, d.covariates()).evaluation.loglik;
      };
      const double fd = fd_derivative(f, beta[l], 1e-5);
      CHECK(vg.gradient[l] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("breslow examples") {
  const auto d = make({1, 2, 3}, {1, 1, 0}, vec({0, 1, 2}));
  const auto risk = build_risk_structure(d);
  CHECK(log_pl_breslow(vec({0.0}), risk, d.covariates()).loglik == doctest::Approx(-1.791759).epsilon(1e-6));

  const auto t = tied3();
  const auto rt = build_risk_structure(t);
  CHECK(log_pl_breslow(vec({0.0}), rt, t.covariates()).loglik == doctest::Approx(-2.197225).epsilon(1e-6));

  // beta = 0: -sum d_j log n_j
  std::mt19937_64 rng(6);
  const auto r = random_dataset(rng, 40, 2, 8);
  const auto rr = build_risk_structure(r);
  double expect = 0.0;
  for (std::size_t j = 0; j < rr.k(); ++j) expect -= rr.d[j] * std::log(rr.n_at_risk[j]);
  CHECK(log_pl_breslow(vec({0.0, 0.0}), rr, r.covariates()).loglik == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("efron examples") {
  const auto t = tied3();
  const auto rt = build_risk_structure(t);
  const auto e = log_pl_efron(vec({0.0}), rt, t.covariates());
  CHECK(e.per_time_terms[0] == doctest::Approx(-1.791759).epsilon(1e-6));
  CHECK(e.method == LikelihoodMethod::efron);
}

TEST_CASE("cox correction examples") {
  const auto t = tied3();
  const auto rt = build_risk_structure(t);
  CHECK(log_pl_cox_correction(vec({1.0}), rt, t.covariates()).per_time_terms[0] ==
        doctest::Approx(-2.407606).epsilon(1e-6));
  CHECK(log_pl_cox_correction(vec({0.0}), rt, t.covariates()).per_time_terms[0] ==
        doctest::Approx(-std::log(3.0)).epsilon(1e-12));

  // 40 at risk with 20 tied: C(40, 20) > 1e6
  std::vector<double> tt(40, 1.0);
  std::vector<int> ss(40, 0);
  for (int i = 0; i < 20; ++i) ss[static_cast<std::size_t>(i)] = 1;
  const auto big = make(tt, ss, Eigen::MatrixXd::Zero(40, 1));
  CHECK_THROWS_AS(log_pl_cox_correction(vec({0.0}), build_risk_structure(big), big.covariates()), CapacityError);
}

TEST_CASE("kalbfleisch-prentice examples") {
  const auto t = tied3();
  const auto rt = build_risk_structure(t);
  CHECK(log_pl_kp_correction(vec({0.0}), rt, t.covariates()).per_time_terms[0] ==
        doctest::Approx(std::log(1.0 / 6.0)).epsilon(1e-12));

  // d_j = 2: average of the two sequential orderings
  const double b = 0.7;
  const double r0 = 1.0, r1 = std::exp(b), r2 = std::exp(2 * b);
  const double s = r0 + r1 + r2;
  const double expect = std::log(0.5 * (r0 / s * r1 / (s - r0) + r1 / s * r0 / (s - r1)));
  CHECK(log_pl_kp_correction(vec({b}), rt, t.covariates()).per_time_terms[0] ==
        doctest::Approx(expect).epsilon(1e-12));

  std::vector<double> tt(12, 1.0);
  std::vector<int> ss(12, 1);
  ss[11] = 0;
  const auto big = make(tt, ss, Eigen::MatrixXd::Zero(12, 1));
  CHECK_THROWS_AS(log_pl_kp_correction(vec({0.0}), build_risk_structure(big), big.covariates()), CapacityError);
}

TEST_CASE("no-ties approximation refuses tied data") {
  const auto t = tied3();
  CHECK_THROWS_AS(log_pl_no_ties(vec({0.0}), build_risk_structure(t), t.covariates()), DomainError);
}

TEST_CASE("all corrections coincide without ties") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_dataset(rng, 25, 2, 0, true);
    const auto risk = build_risk_structure(d);
    REQUIRE(risk.max_ties() == 1);
    const Eigen::VectorXd beta = vec({0.5, -1.2});
    const auto b = log_pl_breslow(beta, risk, d.covariates());
    const auto e = log_pl_efron(beta, risk, d.covariates());
    const auto c = log_pl_cox_correction(beta, risk, d.covariates());
    const auto k = log_pl_kp_correction(beta, risk, d.covariates());
    const auto n = log_pl_no_ties(beta, risk, d.covariates());
    for (std::size_t j = 0; j < risk.k(); ++j) {
      CHECK(std::abs(b.per_time_terms[j] - e.per_time_terms[j]) <= 1e-12);
      CHECK(std::abs(b.per_time_terms[j] - c.per_time_terms[j]) <= 1e-12);
      CHECK(std::abs(b.per_time_terms[j] - k.per_time_terms[j]) <= 1e-12);
      CHECK(std::abs(b.per_time_terms[j] - n.per_time_terms[j]) <= 1e-12);
    }
  }
}

TEST_CASE("breslow score and information") {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_dataset(rng, 40, 3, 7);
    const auto risk = build_risk_structure(d);
    const Eigen::VectorXd beta = vec({0.2, -0.4, 0.6});
    const auto u = breslow_score(beta, risk, d.covariates());
    const auto info = breslow_information(beta, risk, d.covariates());
    const auto all = breslow_derivatives(beta, risk, d.covariates());
    CHECK((all.score - u).norm() <= 1e-12);
    CHECK((all.information - info).norm() <= 1e-12);
    CHECK((info - info.transpose()).norm() <= 1e-12);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(info).eigenvalues().minCoeff() >= -1e-12);
    for (int l = 0; l < 3; ++l) {
      auto f = [&](double b) {
        Eigen::VectorXd bb = beta;
        bb[l] = b;
        return log_pl_breslow(bb, risk, d.covariates()).loglik;
      };
      CHECK(u[l] == doctest::Approx(fd_derivative(f, beta[l], 1e-5)).epsilon(1e-6));
      for (int m = 0; m < 3; ++m) {
        auto g = [&](double b) {
          Eigen::VectorXd bb = beta;
          bb[m] = b;
          return breslow_score(bb, risk, d.covariates())[l];
        };
        CHECK(-info(l, m) == doctest::Approx(fd_derivative(g, beta[m], 1e-5)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("breslow information hand values") {
  const auto d = make({1, 2}, {1, 0}, vec({0, 1}));
  const auto risk = build_risk_structure(d);
  CHECK(breslow_information(vec({0.0}), risk, d.covariates())(0, 0) == doctest::Approx(0.25));

  Eigen::MatrixXd x(3, 2);
  x << 0.5, 3, -1, 3, 2, 3;
  const auto c = make({1, 2, 3}, {1, 1, 0}, x);
  const auto info = breslow_information(vec({0.3, 0.1}), build_risk_structure(c), c.covariates());
  CHECK(info(1, 1) == doctest::Approx(0.0).scale(1.0));
  CHECK(info(0, 1) == doctest::Approx(0.0).scale(1.0));

  // the last risk set is just its event subject and adds nothing
  const auto solo = make({1, 2}, {1, 1}, vec({3, 5}));
  const auto rs = build_risk_structure(solo);
  const double w0 = std::exp(1.2), w1 = std::exp(2.0);
  CHECK(breslow_score(vec({0.4}), rs, solo.covariates())[0] == doctest::Approx(3.0 - (3 * w0 + 5 * w1) / (w0 + w1)));
}

TEST_CASE("efron derivatives match finite differences") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_dataset(rng, 50, 2, 5);
    const auto risk = build_risk_structure(d);
    const Eigen::VectorXd beta = vec({-0.3, 0.9});
    const auto der = efron_derivatives(beta, risk, d.covariates());
    CHECK(der.loglik == doctest::Approx(log_pl_efron(beta, risk, d.covariates()).loglik).epsilon(1e-12));
    for (int l = 0; l < 2; ++l) {
      auto f = [&](double b) {
        Eigen::VectorXd bb = beta;
        bb[l] = b;
        return log_pl_efron(bb, risk, d.covariates()).loglik;
      };
      CHECK(der.score[l] == doctest::Approx(fd_derivative(f, beta[l], 1e-5)).epsilon(1e-6));
      for (int m = 0; m < 2; ++m) {
        auto g = [&](double b) {
          Eigen::VectorXd bb = beta;
          bb[m] = b;
          return efron_derivatives(bb, risk, d.covariates()).score[l];
        };
        CHECK(-der.information(l, m) == doctest::Approx(fd_derivative(g, beta[m], 1e-5)).epsilon(1e-5));
      }
    }
  }
}

// Replace B_j by its Poisson approximation (mean lambda_j S0_j) and the event
// probabilities in A_j by exp(x'beta) lambda_j: the beta-gradient is the Breslow score.
TEST_CASE("linearized Poisson APL reproduces the Breslow score") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.01, 0.3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = random_dataset(rng, 30, 2, 6);
    const auto risk = build_risk_structure(d);
    Eigen::VectorXd lam(static_cast<Eigen::Index>(risk.k()));
    for (auto& v : lam) v = u(rng);
    const Eigen::MatrixXd& x = d.covariates();
    auto objective = [&](const Eigen::VectorXd& beta) {
      const Eigen::VectorXd eta = x * beta;
      double total = 0.0;
      for (std::size_t j = 0; j < risk.k(); ++j) {
        const double l = lam[static_cast<Eigen::Index>(j)];
        double s0 = 0.0;
        for (int i : risk.risk_sets[j]) s0 += std::exp(eta[i]);
        double log_a = -l * s0;  // exact sum over R of log(1 - p), survivors and events alike
        for (int i : risk.event_sets[j]) log_a += eta[i] + std::log(l);  // linearized event odds
        const double mu = l * s0;
        const int dj = risk.d[j];
        const double log_b = dj * std::log(mu) - mu - std::lgamma(dj + 1.0);
        total += log_a - log_b;
      }
      return total;
    };
    const Eigen::VectorXd beta = vec({0.4, -0.7});
    const auto score = breslow_score(beta, risk, x);
    for (int l = 0; l < 2; ++l) {
      Eigen::VectorXd hi = beta, lo = beta;
      const double h = 1e-6;
      hi[l] += h;
      lo[l] -= h;
      const double fd = (objective(hi) - objective(lo)) / (2 * h);
      CHECK(std::abs(fd - score[l]) <= 1e-8 * std::max(1.0, std::abs(score[l])) + 5e-9);
    }
  }
}

TEST_CASE("APL approaches Breslow as hazards shrink on untied data") {
  std::mt19937_64 rng(11);
  const auto d = random_dataset(rng, 30, 1, 0, true);
  const auto risk = build_risk_structure(d);
  const Eigen::VectorXd beta = vec({0.8});
  const auto b = log_pl_breslow(beta, risk, d.covariates());
  const HazardIncrements base(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(risk.k()), 0.5));
  double prev_gap = 1e300;
  for (double eps : {1.0, 0.1, 0.01, 0.001, 1e-4}) {
    const auto h = base.scaled(eps);
    const auto a = log_apl(beta, h, risk, d.covariates());
    double gap = 0.0, maxp = 0.0;
    for (std::size_t j = 0; j < risk.k(); ++j) {
      gap = std::max(gap, std::abs(a.per_time_terms[j] - b.per_time_terms[j]));
      for (int i : risk.risk_sets[j]) maxp = std::max(maxp, event_prob(d.covariates()(i, 0) * beta[0], h[j]));
    }
    CHECK(gap < prev_gap);
    CHECK(gap <= 2.0 * maxp);
    prev_gap = gap;
  }
  CHECK(prev_gap < 1e-3);
}

TEST_CASE("classical corrections are invariant to covariate location shifts") {
  std::mt19937_64 rng(12);
  const auto d = random_dataset(rng, 30, 2, 5);
  const auto risk = build_risk_structure(d);
  Eigen::MatrixXd shifted = d.covariates();
  shifted.col(1).array() += 3.5;
  const Eigen::VectorXd b1 = vec({0.2, 0.3}), b2 = vec({-0.5, 1.1});
  using Fn = LikelihoodEvaluation (*)(const Eigen::VectorXd&, const RiskStructure&, const Eigen::MatrixXd&);
  for (Fn f : {Fn(&log_pl_breslow), Fn(&log_pl_efron), Fn(&log_pl_cox_correction), Fn(&log_pl_kp_correction)}) {
    const double diff = f(b1, risk, d.covariates()).loglik - f(b2, risk, d.covariates()).loglik;
    const double diff_s = f(b1, risk, shifted).loglik - f(b2, risk, shifted).loglik;
    CHECK(diff == doctest::Approx(diff_s).epsilon(1e-10));
  }
}

TEST_CASE("loglik equals the sum of its terms") {
  std::mt19937_64 rng(13);
  const auto d = random_dataset(rng, 30, 2, 5);
  const auto risk = build_risk_structure(d);
  const Eigen::VectorXd beta = vec({0.2, 0.3});
  for (const auto& ev : {log_pl_breslow(beta, risk, d.covariates()), log_pl_efron(beta, risk, d.covariates()),
                         log_apl(beta, HazardIncrements(Eigen::VectorXd::Constant(
                                           static_cast<Eigen::Index>(risk.k()), 0.1)),
                                 risk, d.covariates())}) {
    double s = 0.0;
    for (double t : ev.per_time_terms) s += t;
    CHECK(ev.loglik == doctest::Approx(s).epsilon(1e-14));
  }
}
