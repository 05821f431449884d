#include "pbcox/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <fmt/format.h>
#include <ostream>
#include <random>
#include <thread>

#include "pbcox/errors.hpp"
#include "pbcox/format.hpp"

namespace pbcox {

void SimulationConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(fmt::format("{} must be positive, got {}", name, v));
  };
  positive(eta, "eta");
  positive(gamma, "gamma");
  positive(eta_c, "eta_c");
  positive(gamma_c, "gamma_c");
  positive(sigma_x, "sigma_x");
  positive(zeta, "zeta");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw DomainError(fmt::format("tau must be nonnegative, got {}", tau));
  if (n < 2) throw DomainError(fmt::format("n must be at least 2, got {}", n));
  if (B < 1) throw DomainError(fmt::format("B must be at least 1, got {}", B));
  if (!std::isfinite(beta)) throw DomainError("beta must be finite");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw DomainError(fmt::format("ci_level {} outside (0, 1)", ci_level));
}

nlohmann::json to_json(const SimulationConfig& c) {
  return nlohmann::json{{"beta", c.beta},   {"sigma_x", c.sigma_x}, {"tau", c.tau},         {"n", c.n},
                        {"B", c.B},         {"eta", c.eta},         {"gamma", c.gamma},     {"eta_c", c.eta_c},
                        {"gamma_c", c.gamma_c}, {"zeta", c.zeta},   {"seed", c.seed},       {"ci_level", c.ci_level}};
}

SimulationConfig simulation_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DomainError("simulation config must be a JSON object");
  SimulationConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "beta") c.beta = value.get<double>();
      else if (key == "sigma_x") c.sigma_x = value.get<double>();
      else if (key == "tau") c.tau = value.get<double>();
      else if (key == "n") c.n = value.get<int>();
      else if (key == "B") c.B = value.get<int>();
      else if (key == "eta") c.eta = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "eta_c") c.eta_c = value.get<double>();
      else if (key == "gamma_c") c.gamma_c = value.get<double>();
      else if (key == "zeta") c.zeta = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "ci_level") c.ci_level = value.get<double>();
      else throw DomainError(fmt::format("unknown simulation config field '{}'", key));
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(fmt::format("simulation config field '{}': {}", key, e.what()));
    }
  }
  c.validate();
  return c;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t attempt) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ replicate) ^ (attempt + 0x5bd1e995ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(attempt)};
  return std::mt19937_64(seq);
}

// Uniform on the open interval (0, 1).
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

SurvivalDataset draw(const SimulationConfig& c, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(c.n);
  std::normal_distribution<double> normal(0.0, c.sigma_x);
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd t(n);
  Eigen::VectorXi status(n);
  const double sigma = 1.0 / c.gamma;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = normal(rng);
    // Smallest-extreme-value W = log(-log U); log-location-scale Weibull event time.
    const double w = std::log(-std::log(open_uniform(rng)));
    const double mu = std::log(c.eta) - xi * c.beta / c.gamma;
    double event = std::exp(mu + sigma * w);
    double censor = c.eta_c * std::pow(-std::log(open_uniform(rng)), 1.0 / c.gamma_c);
    censor = std::min(censor, c.zeta);
    if (c.tau > 0.0) {
      event = group_time(event, c.tau);
      censor = group_time(censor, c.tau);
    }
    x(i, 0) = xi;
    status[i] = event <= censor ? 1 : 0;
    t[i] = std::min(event, censor);
  }
  return SurvivalDataset(std::move(t), std::move(status), std::move(x), {"x"});
}

}  // namespace

SurvivalDataset generate_replicate(const SimulationConfig& config, std::uint64_t replicate_index) {
  config.validate();
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    auto rng = substream(config.seed, replicate_index, attempt);
    auto data = draw(config, rng);
    if (data.num_events() > 0) return data;
  }
  throw StructureError(fmt::format("replicate {} produced no events after resampling", replicate_index));
}

const MethodSummary& SimulationSummary::at(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw DomainError(fmt::format("no summary for method '{}'", method));
}

MethodSummary summarize_method(const std::string& name, double beta_true, double ci_level,
                               const std::vector<ReplicateEstimate>& estimates) {
  MethodSummary s;
  s.method = name;
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 0.5 * (1.0 + ci_level));
  const double scale = beta_true != 0.0 ? std::abs(beta_true) : 1.0;

  double sum = 0.0, sum_sq_err = 0.0, sum_se = 0.0, sum_sec = 0.0;
  int covered = 0;
  for (const auto& e : estimates) {
    if (!e.ok) {
      ++s.failures;
      continue;
    }
    ++s.successes;
    sum += e.beta_hat;
    sum_sq_err += (e.beta_hat - beta_true) * (e.beta_hat - beta_true);
    sum_se += e.std_err;
    sum_sec += e.seconds;
    if (std::abs(e.beta_hat - beta_true) <= z * e.std_err) ++covered;
  }
  if (s.successes == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.scaled_rmse = s.scaled_abs_bias = s.empirical_sd = s.coverage = s.mean_se = s.mean_beta = nan;
    return s;
  }
  const double m = s.successes;
  s.mean_beta = sum / m;
  s.scaled_rmse = std::sqrt(sum_sq_err / m) / scale;
  s.scaled_abs_bias = std::abs(s.mean_beta - beta_true) / scale;
  double ss = 0.0;
  for (const auto& e : estimates) {
    if (e.ok) ss += (e.beta_hat - s.mean_beta) * (e.beta_hat - s.mean_beta);
  }
  s.empirical_sd = s.successes > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
  s.coverage = covered / m;
  s.mean_se = sum_se / m;
  s.mean_fit_seconds = sum_sec / m;
  return s;
}

SimulationSummary run_simulation(const SimulationConfig& config, const std::vector<std::string>& method_names,
                                 const ReplicateFitter& fitter, unsigned threads) {
  config.validate();
  const auto b = static_cast<std::size_t>(config.B);
  const std::size_t m = method_names.size();
  std::vector<std::vector<ReplicateEstimate>> results(b, std::vector<ReplicateEstimate>(m));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < b; r = next++) {
      try {
        auto data = generate_replicate(config, r);
        auto est = fitter(data);
        if (est.size() == m) results[r] = std::move(est);
      } catch (const std::exception&) {
        // counted as a failure for every method
      }
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SimulationSummary summary;
  summary.config = config;
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<ReplicateEstimate> column;
    column.reserve(b);
    for (std::size_t r = 0; r < b; ++r) column.push_back(results[r][k]);
    auto ms = summarize_method(method_names[k], config.beta, config.ci_level, column);
    if (ms.failures > 0.05 * static_cast<double>(b)) summary.valid = false;
    summary.methods.push_back(std::move(ms));
  }
  summary.replicates = std::move(results);
  return summary;
}

SimulationSummary run_simulation(const SimulationConfig& config, const std::vector<Estimator>& methods,
                                 unsigned threads, const PbInit& init) {
  std::vector<std::string> names;
  for (auto e : methods) names.emplace_back(to_string(e));
  auto fitter = [&](const SurvivalDataset& data) {
    const auto risk = build_risk_structure(data);
    const auto bundle = fit_methods(data, risk, methods, init);
    std::vector<ReplicateEstimate> out;
    for (auto e : methods) {
      ReplicateEstimate est;
      const auto& o = bundle.get(e);
      if (o && o->fit && std::isfinite(o->fit->std_err[0])) {
        est.ok = true;
        est.beta_hat = o->fit->beta_hat[0];
        est.std_err = o->fit->std_err[0];
        est.seconds = o->seconds;
      }
      out.push_back(est);
    }
    return out;
  };
  return run_simulation(config, names, fitter, threads);
}

void write_summary_csv(std::ostream& out, const SimulationSummary& s, bool include_timing) {
  out << "method,scaled_rmse,scaled_abs_bias,empirical_sd,coverage,mean_se,mean_beta,successes,failures";
  if (include_timing) out << ",mean_fit_seconds";
  out << '\n';
  for (const auto& m : s.methods) {
    out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{}", m.method, m.scaled_rmse,
                       m.scaled_abs_bias, m.empirical_sd, m.coverage, m.mean_se, m.mean_beta, m.successes,
                       m.failures);
    if (include_timing) out << fmt::format(",{:.9g}", m.mean_fit_seconds);
    out << '\n';
  }
}

nlohmann::json summary_to_json(const SimulationSummary& s, bool include_timing) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : s.methods) {
    nlohmann::json r{{"method", m.method},
                     {"scaled_rmse", round9(m.scaled_rmse)},
                     {"scaled_abs_bias", round9(m.scaled_abs_bias)},
                     {"empirical_sd", round9(m.empirical_sd)},
                     {"coverage", round9(m.coverage)},
                     {"mean_se", round9(m.mean_se)},
                     {"mean_beta", round9(m.mean_beta)},
                     {"successes", m.successes},
                     {"failures", m.failures}};
    if (include_timing) r["mean_fit_seconds"] = round9(m.mean_fit_seconds);
    rows.push_back(std::move(r));
  }
  return nlohmann::json{{"config", to_json(s.config)}, {"valid", s.valid}, {"methods", std::move(rows)}};
}

}  // namespace pbcox
