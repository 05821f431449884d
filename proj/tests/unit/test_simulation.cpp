#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "pbcox/errors.hpp"
#include "pbcox/simulation.hpp"

using namespace pbcox;

TEST_CASE("config validation and json") {
  SimulationConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = {};
  c.n = 1;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = {};
  c.tau = -0.1;
  CHECK_THROWS_AS(c.validate(), DomainError);

  c = {};
  c.beta = 1.5;
  c.n = 200;
  c.seed = 99;
  const auto back = simulation_config_from_json(to_json(c));
  CHECK(back.beta == 1.5);
  CHECK(back.n == 200);
  CHECK(back.seed == 99);
  CHECK(back.eta == doctest::Approx(1.31));

  const auto partial = simulation_config_from_json(nlohmann::json{{"tau", 0.2}});
  CHECK(partial.tau == 0.2);
  CHECK(partial.B == 1000);
  CHECK_THROWS_AS(simulation_config_from_json(nlohmann::json{{"bogus", 1}}), DomainError);
  CHECK_THROWS_AS(simulation_config_from_json(nlohmann::json{{"n", "many"}}), DomainError);
  CHECK_THROWS_AS(simulation_config_from_json(nlohmann::json{{"n", 1}}), DomainError);
}

TEST_CASE("event-time marginal is Weibull when beta = 0") {
  SimulationConfig c;
  c.beta = 0.0;
  c.n = 100000;
  c.eta_c = 1e9;  // censoring effectively never happens
  c.zeta = 1e12;
  const auto d = generate_replicate(c, 0);
  std::vector<double> t(d.times().data(), d.times().data() + d.times().size());
  std::sort(t.begin(), t.end());
  double ks = 0.0;
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double f = 1.0 - std::exp(-std::pow(t[i] / c.eta, c.gamma));
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(ks <= 0.01);
  CHECK(d.num_events() == static_cast<int>(d.size()));
}

TEST_CASE("covariate effect on event times") {
  // hazard ratio exp(beta) per unit x: the larger-x half fails earlier
  SimulationConfig c;
  c.beta = 2.0;
  c.n = 4000;
  c.zeta = 1e12;
  c.eta_c = 1e9;
  const auto d = generate_replicate(c, 3);
  double hi = 0.0, lo = 0.0;
  int nh = 0, nl = 0;
  for (Eigen::Index i = 0; i < d.times().size(); ++i) {
    if (d.covariates()(i, 0) > 0) {
      hi += std::log(d.times()[i]);
      ++nh;
    } else {
      lo += std::log(d.times()[i]);
      ++nl;
    }
  }
  CHECK(hi / nh < lo / nl);
}

TEST_CASE("grouping and censoring postconditions") {
  SimulationConfig c;
  c.tau = 0.1;
  c.n = 500;
  const auto d = generate_replicate(c, 5);
  for (Eigen::Index i = 0; i < d.times().size(); ++i) {
    const double m = d.times()[i] / 0.1;
    CHECK(std::abs(m - std::round(m)) < 1e-9);
    CHECK(d.times()[i] <= 1.0 + 1e-12);  // administrative censoring at zeta = 1
  }
  CHECK(d.num_events() > 0);
  CHECK(d.num_events() < static_cast<int>(d.size()));
}

TEST_CASE("replicates are deterministic and keyed by index") {
  SimulationConfig c;
  c.tau = 0.01;
  const auto a = generate_replicate(c, 17);
  const auto b = generate_replicate(c, 17);
  const auto other = generate_replicate(c, 18);
  CHECK((a.times().array() == b.times().array()).all());
  CHECK((a.covariates().array() == b.covariates().array()).all());
  CHECK((a.status().array() == b.status().array()).all());
  CHECK_FALSE((a.times().array() == other.times().array()).all());
  c.seed += 1;
  CHECK_FALSE((generate_replicate(c, 17).times().array() == a.times().array()).all());
}

TEST_CASE("zero-event replicates are an error after one redraw") {
  SimulationConfig c;
  c.n = 2;
  c.eta = 1e6;  // events essentially never before zeta
  CHECK_THROWS_AS(generate_replicate(c, 0), StructureError);
}

TEST_CASE("harness self-test with a stub estimator") {
  SimulationConfig c;
  c.B = 50;
  c.n = 20;
  auto truth = [&](const SurvivalDataset&) {
    return std::vector<ReplicateEstimate>{{true, c.beta, 0.1, 0.0}, {true, c.beta + 0.5, 0.1, 0.0}};
  };
  const auto s = run_simulation(c, {"truth", "shifted"}, truth);
  CHECK(s.valid);
  const auto& t = s.at("truth");
  CHECK(t.scaled_rmse == 0.0);
  CHECK(t.scaled_abs_bias == 0.0);
  CHECK(t.coverage == 1.0);
  CHECK(t.mean_se == doctest::Approx(0.1));
  CHECK(t.successes == 50);
  const auto& sh = s.at("shifted");
  CHECK(sh.coverage == 0.0);
  CHECK(sh.scaled_abs_bias == doctest::Approx(0.5));
  CHECK(sh.scaled_rmse == doctest::Approx(0.5));
  CHECK_THROWS_AS(s.at("missing"), DomainError);
}

TEST_CASE("failure accounting") {
  SimulationConfig c;
  c.B = 40;
  c.n = 20;
  int calls = 0;
  std::mutex mu;
  auto flaky = [&](const SurvivalDataset&) {
    std::lock_guard<std::mutex> lock(mu);
    const bool ok = (calls++ % 10) != 0;  // 10% failures
    return std::vector<ReplicateEstimate>{{ok, 1.0, 0.1, 0.0}};
  };
  const auto s = run_simulation(c, {"flaky"}, flaky);
  CHECK(s.methods[0].failures == 4);
  CHECK_FALSE(s.valid);

  auto thrower = [](const SurvivalDataset&) -> std::vector<ReplicateEstimate> { throw std::runtime_error("boom"); };
  const auto t = run_simulation(c, {"x"}, thrower);
  CHECK(t.methods[0].failures == 40);
  CHECK(std::isnan(t.methods[0].coverage));
  CHECK_FALSE(t.valid);
}

TEST_CASE("moment decomposition and scheduling independence") {
  SimulationConfig c;
  c.B = 60;
  c.n = 100;
  c.tau = 0.1;
  const std::vector<Estimator> methods{Estimator::breslow, Estimator::efron, Estimator::pb};
  const auto s1 = run_simulation(c, methods, 1);
  const auto s3 = run_simulation(c, methods, 3);
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& a = s1.methods[m];
    const auto& b = s3.methods[m];
    CHECK(a.mean_beta == b.mean_beta);
    CHECK(a.scaled_rmse == b.scaled_rmse);
    CHECK(a.coverage == b.coverage);
    CHECK(a.coverage >= 0.0);
    CHECK(a.coverage <= 1.0);
    const double bsz = a.successes;
    const double rmse2 = std::pow(a.scaled_rmse * c.beta, 2);
    const double bias2 = std::pow(a.scaled_abs_bias * c.beta, 2);
    CHECK(rmse2 == doctest::Approx(bias2 + a.empirical_sd * a.empirical_sd * (bsz - 1) / bsz).epsilon(1e-10));
  }
  std::ostringstream c1, c3;
  write_summary_csv(c1, s1);
  write_summary_csv(c3, s3);
  CHECK(c1.str() == c3.str());
  CHECK(summary_to_json(s1).dump() == summary_to_json(s3).dump());
}

TEST_CASE("untied data: breslow and efron agree replicate by replicate") {
  SimulationConfig c;
  c.B = 30;
  c.n = 60;
  c.tau = 0.0;
  const auto s = run_simulation(c, std::vector<Estimator>{Estimator::breslow, Estimator::efron, Estimator::pb});
  for (const auto& rep : s.replicates) {
    REQUIRE(rep[0].ok);
    CHECK(std::abs(rep[0].beta_hat - rep[1].beta_hat) <= 1e-6);
    // PB keeps odds exp(r lambda) - 1 rather than r lambda, so with finite
    // increments it only tracks Breslow to a fraction of a standard error
    CHECK(std::abs(rep[0].beta_hat - rep[2].beta_hat) <= 0.5 * rep[0].std_err);
  }
}

TEST_CASE("summary output format") {
  SimulationConfig c;
  c.B = 5;
  c.n = 30;
  const auto s = run_simulation(c, std::vector<Estimator>{Estimator::breslow, Estimator::pb});
  std::ostringstream out;
  write_summary_csv(out, s, true);
  const auto text = out.str();
  CHECK(text.rfind("method,scaled_rmse,scaled_abs_bias,empirical_sd,coverage,mean_se,mean_beta,successes,failures,"
                   "mean_fit_seconds\n",
                   0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  const auto j = summary_to_json(s);
  CHECK(j["methods"].size() == 2);
  CHECK(j["config"]["seed"] == c.seed);
}

TEST_CASE("stress pattern across grouping widths" * doctest::timeout(900)) {
  SimulationConfig c;
  c.beta = 1.5;
  c.sigma_x = 2.0;
  c.n = 200;
  c.B = 1000;
  const std::vector<Estimator> methods{Estimator::breslow, Estimator::efron, Estimator::pb};
  double prev_breslow = 2.0;
  for (double tau : {0.01, 0.1, 0.2}) {
    c.tau = tau;
    const auto s = run_simulation(c, methods, 2);
    const double cov_b = s.at("breslow").coverage;
    CHECK(cov_b <= prev_breslow);
    prev_breslow = cov_b;
    if (tau == 0.2) {
      CHECK(s.at("pb").coverage > s.at("breslow").coverage);
      CHECK(s.at("pb").coverage > s.at("efron").coverage);
    }
  }
}
