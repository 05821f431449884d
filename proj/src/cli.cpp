#include "pbcox/cli.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pbcox/analysis.hpp"
#include "pbcox/errors.hpp"
#include "pbcox/estimation.hpp"
#include "pbcox/format.hpp"
#include "pbcox/pb.hpp"
#include "pbcox/simulation.hpp"
#include "pbcox/survival.hpp"

namespace pbcox {
namespace {

using nlohmann::json;

// Thrown for bad flag values discovered after CLI11 parsing.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\n' || c == '\t' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw InputError(fmt::format("{}: '{}' is not a number", what, tok));
    }
    out.push_back(v);
  }
  if (out.empty()) throw InputError(fmt::format("{}: empty list", what));
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Estimator> parse_methods(const std::string& names) {
  std::vector<Estimator> out;
  for (const auto& tok : split_list(names)) {
    if (tok == "all") return {Estimator::breslow, Estimator::efron, Estimator::pb};
    try {
      out.push_back(estimator_from_string(tok));
    } catch (const std::exception&) {
      throw InputError(fmt::format("unknown method '{}' (expected breslow, efron, pb or all)", tok));
    }
  }
  if (out.empty()) throw InputError("no methods requested");
  return out;
}

unsigned default_threads() {
  if (const char* env = std::getenv("PBCOX_THREADS")) {
    unsigned v = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size() && v > 0) return v;
  }
  return 1;
}

double json_num(double v) { return round9(v); }

json number_or_null(double v) { return std::isfinite(v) ? json(round9(v)) : json(nullptr); }

void write_error(std::ostream& err, const std::string& kind, const std::string& message, std::size_t row = 0,
                 const std::string& column = {}) {
  json rec{{"error", kind}, {"message", message}};
  if (row > 0) rec["row"] = row;
  if (!column.empty()) rec["column"] = column;
  err << rec.dump() << '\n';
}

// Output goes to --output when given, else to the caller's stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw InputError(fmt::format("cannot write '{}'", path));
    }
    stream_ = path.empty() ? &fallback : &file_;
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

struct DataArgs {
  std::string input;
  std::string time_col = "time";
  std::string status_col = "status";
  std::string covariates;
  bool drop_missing = false;

  void add_to(CLI::App* app) {
    app->add_option("--input,-i", input, "CSV file with a header row")->required();
    app->add_option("--time", time_col, "time column")->capture_default_str();
    app->add_option("--status", status_col, "event indicator column (1 = event)")->capture_default_str();
    app->add_option("--covariates,-x", covariates, "comma-separated covariate columns")->required();
    app->add_flag("--drop-missing", drop_missing, "skip rows with missing selected cells");
  }

  CsvLoadResult load(std::ostream& err) const {
    auto res = load_csv(input, time_col, status_col, split_list(covariates), drop_missing);
    if (res.dropped_rows > 0) err << fmt::format("dropped {} rows with missing values\n", res.dropped_rows);
    return res;
  }
};

// ---- fit ----

struct FitArgs {
  DataArgs data;
  std::string methods = "all";
  double tau = 0.0;
  double ci_level = 0.95;
  std::string init_beta = "efron";
  std::string init_lambda = "efron";
  std::string format = "csv";
  std::string output;
  bool standardize = false;
  bool scale = false;
};

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  const auto methods = parse_methods(a.methods);
  PbInit init;
  try {
    init.beta = init_beta_from_string(a.init_beta);
    init.lambda = init_lambda_from_string(a.init_lambda);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }

  SurvivalDataset data = a.data.load(err).data;
  for (const auto& w : data.warnings()) err << "warning: " << w << '\n';
  if (a.scale) data = scale_times(data);
  if (a.standardize) data = standardize_covariates(data).data;
  if (a.tau > 0.0) data = data.with_times(group_times(data.times(), a.tau));
  const auto risk = build_risk_structure(data);
  const auto bundle = fit_methods(data, risk, methods, init);
  const auto& names = data.covariate_names();

  Sink sink(a.output, out);
  std::ostream& os = sink.get();
  std::vector<std::string> failures;
  json doc{{"input", a.data.input},  {"n", data.size()},       {"events", data.num_events()},
           {"tau", json_num(a.tau)}, {"ci_level", json_num(a.ci_level)}, {"event_times", risk.k()},
           {"max_ties", risk.max_ties()}};
  json jmethods = json::array();
  std::ostringstream coef_csv, base_csv;
  coef_csv << "method,covariate,beta,se,ci_lower,ci_upper,loglik,converged,iterations\n";
  base_csv << "method,event_time,lambda\n";

  for (auto m : methods) {
    const auto& o = bundle.get(m);
    if (!o || !o->fit) {
      failures.push_back(fmt::format("{}: {}", to_string(m), o ? o->error : "not run"));
      continue;
    }
    const FitResult& f = *o->fit;
    const auto ci = wald_ci(f, a.ci_level);
    json coefs = json::array();
    for (std::size_t l = 0; l < names.size(); ++l) {
      const auto li = static_cast<Eigen::Index>(l);
      coefs.push_back({{"name", names[l]},
                       {"beta", json_num(f.beta_hat[li])},
                       {"se", number_or_null(f.std_err[li])},
                       {"ci_lower", number_or_null(ci[l].lower)},
                       {"ci_upper", number_or_null(ci[l].upper)}});
      coef_csv << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(m), names[l], fmt9(f.beta_hat[li]),
                              fmt9(f.std_err[li]), fmt9(ci[l].lower), fmt9(ci[l].upper), fmt9(f.loglik_at_optimum),
                              f.converged ? 1 : 0, f.iterations);
    }
    json lambdas = json::array();
    for (std::size_t j = 0; j < f.baseline.size(); ++j) {
      lambdas.push_back(json_num(f.baseline[j]));
      base_csv << fmt::format("{},{},{}\n", to_string(m), fmt9(risk.event_times[j]), fmt9(f.baseline[j]));
    }
    json entry{{"method", to_string(m)},
               {"converged", f.converged},
               {"iterations", f.iterations},
               {"loglik", number_or_null(f.loglik_at_optimum)},
               {"grad_norm", number_or_null(f.grad_norm)},
               {"coefficients", std::move(coefs)},
               {"baseline", std::move(lambdas)}};
    if (!f.capped_baseline_times.empty()) entry["capped_baseline_times"] = f.capped_baseline_times;
    jmethods.push_back(std::move(entry));
  }

  if (a.format == "json") {
    doc["methods"] = std::move(jmethods);
    doc["errors"] = failures;
    os << doc.dump(2) << '\n';
  } else {
    os << coef_csv.str() << '\n' << base_csv.str();
  }
  if (!failures.empty()) {
    for (const auto& f : failures) write_error(err, "fit_failed", f);
    return kExitNumeric;
  }
  return kExitOk;
}

// ---- pb ----

struct PbArgs {
  std::string probs;
  std::string probs_file;
  int d = -1;
  std::string algo = "auto";
};

int cmd_pb(const PbArgs& a, std::ostream& out, std::ostream& err) {
  if (a.probs.empty() == a.probs_file.empty()) throw InputError("give exactly one of --probs and --probs-file");
  const std::string text = a.probs.empty() ? read_file(a.probs_file) : a.probs;
  const PbInput input(parse_doubles(text, "probabilities"));
  if (a.d < 0 || static_cast<std::size_t>(a.d) > input.size()) {
    throw InputError(fmt::format("d = {} outside [0, {}]", a.d, input.size()));
  }

  out << "algorithm,value\n";
  auto row = [&](PbResult r) { out << fmt::format("{},{}\n", to_string(r.algorithm), fmt9(r.value)); };
  if (a.algo == "auto") {
    row(pb_pmf(input, a.d));
  } else if (a.algo == "enum") {
    row(pb_pmf_enum(input, a.d));
  } else if (a.algo == "dft") {
    row(pb_pmf_dft(input, a.d));
  } else if (a.algo == "conv") {
    row(pb_pmf_conv(input, a.d));
  } else if (a.algo == "poisson") {
    row(pb_pmf_poisson(input, a.d));
  } else {  // all
    if (input.size() <= kEnumerationCap) {
      row(pb_pmf_enum(input, a.d));
    } else {
      out << "enumeration,nan\n";
      err << fmt::format("enumeration skipped: n = {} exceeds {}\n", input.size(), kEnumerationCap);
    }
    row(pb_pmf_dft(input, a.d));
    row(pb_pmf_conv(input, a.d));
    row(pb_pmf_poisson(input, a.d));
  }
  out << fmt::format("lecam_bound,{}\n", fmt9(lecam_bound(input)));
  return kExitOk;
}

// ---- simulate ----

struct SimulateArgs {
  std::string config;
  std::optional<double> beta, sigma_x, tau, eta, gamma, eta_c, gamma_c, zeta, ci_level;
  std::optional<int> n, B;
  std::optional<std::uint64_t> seed;
  std::string methods = "all";
  std::string init_beta = "efron";
  std::string init_lambda = "efron";
  unsigned threads = 0;
  std::string output_dir = ".";
  bool timing = false;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  SimulationConfig c;
  if (!a.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(a.config));
    } catch (const json::exception& e) {
      throw InputError(fmt::format("config '{}': {}", a.config, e.what()));
    }
    c = simulation_config_from_json(j);
  }
  auto over = [](auto& field, const auto& opt) {
    if (opt) field = *opt;
  };
  over(c.beta, a.beta);
  over(c.sigma_x, a.sigma_x);
  over(c.tau, a.tau);
  over(c.eta, a.eta);
  over(c.gamma, a.gamma);
  over(c.eta_c, a.eta_c);
  over(c.gamma_c, a.gamma_c);
  over(c.zeta, a.zeta);
  over(c.ci_level, a.ci_level);
  over(c.n, a.n);
  over(c.B, a.B);
  over(c.seed, a.seed);
  c.validate();
  const auto methods = parse_methods(a.methods);
  PbInit init;
  try {
    init.beta = init_beta_from_string(a.init_beta);
    init.lambda = init_lambda_from_string(a.init_lambda);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const unsigned threads = a.threads > 0 ? a.threads : default_threads();

  std::filesystem::create_directories(a.output_dir);
  out << to_json(c).dump() << '\n';
  const auto summary = run_simulation(c, methods, threads, init);

  const auto dir = std::filesystem::path(a.output_dir);
  {
    std::ofstream csv(dir / "summary.csv");
    if (!csv) throw InputError(fmt::format("cannot write '{}'", (dir / "summary.csv").string()));
    write_summary_csv(csv, summary, a.timing);
  }
  {
    std::ofstream js(dir / "summary.json");
    if (!js) throw InputError(fmt::format("cannot write '{}'", (dir / "summary.json").string()));
    js << summary_to_json(summary, a.timing).dump(2) << '\n';
  }
  write_summary_csv(out, summary, a.timing);
  if (!summary.valid) {
    write_error(err, "invalid_summary", "some method failed on more than 5% of replicates");
    return kExitNumeric;
  }
  return kExitOk;
}

// ---- sweep ----

struct SweepArgs {
  DataArgs data;
  std::string taus;
  unsigned threads = 0;
  std::string output_dir = ".";
};

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<double> grid = a.taus.empty() ? default_tau_grid() : parse_doubles(a.taus, "taus");
  for (double t : grid) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw InputError(fmt::format("tau {} must be nonnegative", t));
  }
  const unsigned threads = a.threads > 0 ? a.threads : default_threads();
  auto loaded = a.data.load(err);
  const auto prepared = standardize_covariates(scale_times(loaded.data)).data;
  std::filesystem::create_directories(a.output_dir);

  const auto records = tau_sweep(prepared, grid, threads);
  const auto dir = std::filesystem::path(a.output_dir);
  {
    std::ofstream f(dir / "sweep.csv");
    if (!f) throw InputError(fmt::format("cannot write '{}'", (dir / "sweep.csv").string()));
    write_sweep_long_csv(f, records, prepared.covariate_names());
  }
  {
    std::ofstream f(dir / "sweep_wide.csv");
    if (!f) throw InputError(fmt::format("cannot write '{}'", (dir / "sweep_wide.csv").string()));
    write_sweep_wide_csv(f, records);
  }
  write_sweep_wide_csv(out, records);
  std::size_t flagged = 0;
  for (const auto& r : records) {
    if (!r.error.empty()) {
      ++flagged;
      err << fmt::format("tau {}: {}\n", fmt9(r.tau), r.error);
    }
  }
  if (flagged == records.size()) {
    write_error(err, "sweep_failed", "every grid point failed");
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cox regression with tied event times via the accurate partial likelihood", "pbcox"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit Breslow, Efron and PB estimators to a CSV dataset");
  fa.data.add_to(fit);
  fit->add_option("--method,-m", fa.methods, "comma-separated subset of breslow,efron,pb or all")
      ->capture_default_str();
  fit->add_option("--tau", fa.tau, "group times to multiples of tau before fitting")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--ci-level", fa.ci_level, "Wald interval level")->check(CLI::Range(0.0, 1.0));
  fit->add_option("--init-beta", fa.init_beta, "PB starting coefficients")
      ->check(CLI::IsMember({"efron", "breslow", "zero"}));
  fit->add_option("--init-lambda", fa.init_lambda, "PB starting baseline")
      ->check(CLI::IsMember({"efron", "breslow", "nelson-aalen"}));
  fit->add_option("--format", fa.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  fit->add_option("--output,-o", fa.output, "write the report here instead of stdout");
  fit->add_flag("--standardize", fa.standardize, "standardize non-binary covariates");
  fit->add_flag("--scale-times", fa.scale, "divide times by their maximum before grouping");

  PbArgs pa;
  auto* pb = app.add_subcommand("pb", "evaluate the Poisson-binomial pmf");
  pb->add_option("--probs,-p", pa.probs, "comma-separated probabilities");
  pb->add_option("--probs-file", pa.probs_file, "file of probabilities separated by commas or whitespace");
  pb->add_option("--d,-d", pa.d, "number of events")->required();
  pb->add_option("--algo", pa.algo, "evaluator")->check(CLI::IsMember({"auto", "enum", "dft", "conv", "poisson", "all"}));

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison of the estimators");
  sim->add_option("--config,-c", sa.config, "JSON config; flags below override its fields");
  sim->add_option("--beta", sa.beta);
  sim->add_option("--sigma-x", sa.sigma_x);
  sim->add_option("--tau", sa.tau);
  sim->add_option("--n", sa.n);
  sim->add_option("--B", sa.B, "replicates");
  sim->add_option("--seed", sa.seed);
  sim->add_option("--ci-level", sa.ci_level);
  sim->add_option("--eta", sa.eta);
  sim->add_option("--gamma", sa.gamma);
  sim->add_option("--eta-c", sa.eta_c);
  sim->add_option("--gamma-c", sa.gamma_c);
  sim->add_option("--zeta", sa.zeta, "administrative censoring time");
  sim->add_option("--methods,-m", sa.methods)->capture_default_str();
  sim->add_option("--init-beta", sa.init_beta)->check(CLI::IsMember({"efron", "breslow", "zero"}));
  sim->add_option("--init-lambda", sa.init_lambda)->check(CLI::IsMember({"efron", "breslow", "nelson-aalen"}));
  sim->add_option("--threads,-j", sa.threads, "worker threads (default: PBCOX_THREADS or 1)");
  sim->add_option("--output-dir,-o", sa.output_dir)->capture_default_str();
  sim->add_flag("--timing", sa.timing, "add mean fit seconds to the summaries");

  SweepArgs wa;
  auto* sweep = app.add_subcommand("sweep", "refit over a grid of grouping widths");
  wa.data.add_to(sweep);
  sweep->add_option("--taus", wa.taus, "comma-separated grid (default 0, 0.01, ..., 0.25)");
  sweep->add_option("--threads,-j", wa.threads, "worker threads (default: PBCOX_THREADS or 1)");
  sweep->add_option("--output-dir,-o", wa.output_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    write_error(err, "usage", e.what());
    return kExitInput;
  }

  try {
    if (*fit) return cmd_fit(fa, out, err);
    if (*pb) return cmd_pb(pa, out, err);
    if (*sim) return cmd_simulate(sa, out, err);
    return cmd_sweep(wa, out, err);
  } catch (const ParseError& e) {
    write_error(err, "parse_error", e.what(), e.row(), e.column());
    return kExitInput;
  } catch (const InputError& e) {
    write_error(err, "input_error", e.what());
    return kExitInput;
  } catch (const DomainError& e) {
    write_error(err, "domain_error", e.what());
    return kExitInput;
  } catch (const StructureError& e) {
    write_error(err, "structure_error", e.what());
    return kExitInput;
  } catch (const CapacityError& e) {
    write_error(err, "capacity_error", e.what());
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    write_error(err, "io_error", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    write_error(err, "numeric_error", e.what());
    return kExitNumeric;
  }
}

}  // namespace pbcox
