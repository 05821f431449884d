#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pbcox/analysis.hpp"
#include "pbcox/errors.hpp"
#include "pbcox/estimation.hpp"
#include "pbcox/likelihood.hpp"
#include "pbcox/pb.hpp"
#include "pbcox/simulation.hpp"
#include "pbcox/survival.hpp"

namespace py = pybind11;
using namespace pbcox;

namespace {

std::vector<Estimator> parse_methods(const std::vector<std::string>& names) {
  std::vector<Estimator> out;
  for (const auto& n : names) out.push_back(estimator_from_string(n));
  return out;
}

py::dict fit_to_dict(const FitResult& f, const RiskStructure& risk, double ci_level) {
  const auto ci = wald_ci(f, ci_level);
  Eigen::VectorXd lo(f.beta_hat.size()), hi(f.beta_hat.size());
  for (Eigen::Index l = 0; l < f.beta_hat.size(); ++l) {
    lo[l] = ci[static_cast<std::size_t>(l)].lower;
    hi[l] = ci[static_cast<std::size_t>(l)].upper;
  }
  py::dict d;
  d["method"] = std::string(to_string(f.method));
  d["beta"] = f.beta_hat;
  d["se"] = f.std_err;
  d["ci_lower"] = lo;
  d["ci_upper"] = hi;
  d["loglik"] = f.loglik_at_optimum;
  d["converged"] = f.converged;
  d["iterations"] = f.iterations;
  d["grad_norm"] = f.grad_norm;
  d["event_times"] = risk.event_times;
  d["baseline"] = f.baseline.values();
  d["capped_baseline_times"] = f.capped_baseline_times;
  return d;
}

PbResult run_pb(const std::vector<double>& probs, int d, const std::string& algo) {
  const PbInput in(probs);
  if (algo == "auto") return pb_pmf(in, d);
  if (algo == "enum") return pb_pmf_enum(in, d);
  if (algo == "dft") return pb_pmf_dft(in, d);
  if (algo == "conv") return pb_pmf_conv(in, d);
  if (algo == "poisson") return pb_pmf_poisson(in, d);
  throw DomainError("algorithm must be one of auto, enum, dft, conv, poisson");
}

// Round-trips through the json module: configs and summaries are small.
nlohmann::json to_cpp(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict sweep_record(const TauSweepRecord& r) {
  py::dict d;
  d["tau"] = r.tau;
  d["k"] = r.k;
  d["max_ties"] = r.max_ties;
  d["ssh"] = r.ssh;
  d["ed_breslow"] = r.ed_breslow;
  d["ed_efron"] = r.ed_efron;
  d["logL_b"] = r.logL_b;
  d["logL_e"] = r.logL_e;
  d["logL_pb"] = r.logL_pb;
  d["beta_breslow"] = r.beta_breslow;
  d["beta_efron"] = r.beta_efron;
  d["beta_pb"] = r.beta_pb;
  d["flagged"] = r.flagged;
  d["error"] = r.error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cox regression with tied event times: Poisson-binomial likelihood, fits and simulation";

  static py::exception<DomainError> domain_exc(m, "DomainError", PyExc_ValueError);
  static py::exception<CapacityError> capacity_exc(m, "CapacityError", PyExc_ValueError);
  static py::exception<StructureError> structure_exc(m, "StructureError", PyExc_ValueError);
  static py::exception<DegenerateError> degenerate_exc(m, "DegenerateError", PyExc_ArithmeticError);
  static py::exception<EvaluationError> evaluation_exc(m, "EvaluationError", PyExc_ArithmeticError);
  static py::exception<ParseError> parse_exc(m, "ParseError", PyExc_ValueError);
  static py::exception<NonConvergenceError> nonconv_exc(m, "NonConvergenceError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const NonConvergenceError& e) {
      PyErr_SetString(nonconv_exc.ptr(), e.what());
    } catch (const ParseError& e) {
      PyErr_SetString(parse_exc.ptr(), e.what());
    } catch (const DomainError& e) {
      PyErr_SetString(domain_exc.ptr(), e.what());
    } catch (const CapacityError& e) {
      PyErr_SetString(capacity_exc.ptr(), e.what());
    } catch (const StructureError& e) {
      PyErr_SetString(structure_exc.ptr(), e.what());
    } catch (const DegenerateError& e) {
      PyErr_SetString(degenerate_exc.ptr(), e.what());
    } catch (const EvaluationError& e) {
      PyErr_SetString(evaluation_exc.ptr(), e.what());
    }
  });

  m.def(
      "pb_pmf", [](const std::vector<double>& probs, int d, const std::string& algo) { return run_pb(probs, d, algo).value; },
      py::arg("probs"), py::arg("d"), py::arg("algorithm") = "auto",
      "Pr(sum of independent Bernoulli(p_i) = d).");
  m.def(
      "pb_pmf_all",
      [](const std::vector<double>& probs, const std::string& algo) {
        const PbInput in(probs);
        if (algo == "enum") return pb_pmf_all_enum(in);
        if (algo == "dft") return pb_pmf_all_dft(in);
        if (algo == "conv") return pb_pmf_all_conv(in);
        throw DomainError("algorithm must be one of enum, dft, conv");
      },
      py::arg("probs"), py::arg("algorithm") = "conv");
  m.def(
      "lecam_bound", [](const std::vector<double>& probs) { return lecam_bound(PbInput(probs)); }, py::arg("probs"));

  m.def(
      "group_times", [](const Eigen::VectorXd& t, double tau) { return group_times(t, tau); }, py::arg("times"),
      py::arg("tau"));

  m.def(
      "fit",
      [](const Eigen::VectorXd& times, const Eigen::VectorXi& status, const Eigen::MatrixXd& x,
         const std::vector<std::string>& methods, double tau, double ci_level, const std::string& init_beta,
         const std::string& init_lambda) {
        SurvivalDataset data(times, status, x);
        if (tau > 0.0) data = data.with_times(group_times(data.times(), tau));
        const auto risk = build_risk_structure(data);
        const PbInit init{init_beta_from_string(init_beta), init_lambda_from_string(init_lambda)};
        FitBundle bundle;
        {
          py::gil_scoped_release release;
          bundle = fit_methods(data, risk, parse_methods(methods), init);
        }
        py::dict out;
        for (const auto& name : methods) {
          const auto& o = bundle.get(estimator_from_string(name));
          if (o && o->fit) {
            out[py::str(name)] = fit_to_dict(*o->fit, risk, ci_level);
          } else {
            py::dict err;
            err["error"] = o ? o->error : std::string("not run");
            out[py::str(name)] = err;
          }
        }
        return out;
      },
      py::arg("times"), py::arg("status"), py::arg("covariates"),
      py::arg("methods") = std::vector<std::string>{"breslow", "efron", "pb"}, py::arg("tau") = 0.0,
      py::arg("ci_level") = 0.95, py::arg("init_beta") = "efron", py::arg("init_lambda") = "efron",
      "Fit the requested estimators. Failed methods map to {'error': message}.");

  m.def(
      "log_apl",
      [](const Eigen::VectorXd& beta, const Eigen::VectorXd& lambdas, const Eigen::VectorXd& times,
         const Eigen::VectorXi& status, const Eigen::MatrixXd& x) {
        const SurvivalDataset data(times, status, x);
        const auto risk = build_risk_structure(data);
        const auto e = log_apl(beta, HazardIncrements(lambdas), risk, data.covariates());
        return py::make_tuple(e.loglik, e.per_time_terms, e.flagged);
      },
      py::arg("beta"), py::arg("lambdas"), py::arg("times"), py::arg("status"), py::arg("covariates"),
      "Accurate log partial likelihood: (total, per-time terms, flagged).");

  m.def(
      "simulate",
      [](const py::object& config, const std::vector<std::string>& methods, unsigned threads) {
        const auto c = simulation_config_from_json(config.is_none() ? nlohmann::json::object() : to_cpp(config));
        c.validate();
        const auto em = parse_methods(methods);
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          out = summary_to_json(run_simulation(c, em, threads), true);
        }
        return to_py(out);
      },
      py::arg("config") = py::none(),
      py::arg("methods") = std::vector<std::string>{"breslow", "efron", "pb"}, py::arg("threads") = 1u,
      "Monte Carlo study; returns the summary as a dict.");

  m.def(
      "tau_sweep",
      [](const Eigen::VectorXd& times, const Eigen::VectorXi& status, const Eigen::MatrixXd& x,
         std::vector<double> taus, unsigned threads) {
        if (taus.empty()) taus = default_tau_grid();
        const SurvivalDataset raw(times, status, x);
        const auto data = standardize_covariates(scale_times(raw)).data;
        std::vector<TauSweepRecord> rec;
        {
          py::gil_scoped_release release;
          rec = tau_sweep(data, taus, threads);
        }
        py::list out;
        for (const auto& r : rec) out.append(sweep_record(r));
        return out;
      },
      py::arg("times"), py::arg("status"), py::arg("covariates"), py::arg("taus") = std::vector<double>{},
      py::arg("threads") = 1u, "Scale, standardize and refit over a grid of grouping widths.");

  m.def(
      "load_csv",
      [](const std::string& path, const std::string& time_col, const std::string& status_col,
         const std::vector<std::string>& covariates, bool drop_missing) {
        const auto r = load_csv(path, time_col, status_col, covariates, drop_missing);
        py::dict d;
        d["times"] = r.data.times();
        d["status"] = r.data.status();
        d["covariates"] = r.data.covariates();
        d["names"] = r.data.covariate_names();
        d["dropped_rows"] = r.dropped_rows;
        return d;
      },
      py::arg("path"), py::arg("time"), py::arg("status"), py::arg("covariates"), py::arg("drop_missing") = false);
}
