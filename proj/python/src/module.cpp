// SPDX-License-Identifier: Apache-2.0
//
// Python bindings. Curves go in as sequences of floats and come back as
// lists; PPD objects wrap both inference paths behind one interface.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "lcx/cli.hpp"
#include "lcx/earlystop.hpp"
#include "lcx/error.hpp"
#include "lcx/eval.hpp"
#include "lcx/io.hpp"
#include "lcx/mcmc.hpp"
#include "lcx/normalize.hpp"
#include "lcx/pfn/checkpoint.hpp"
#include "lcx/pfn/predictor.hpp"
#include "lcx/predictive.hpp"
#include "lcx/prior.hpp"

namespace py = pybind11;
using namespace lcx;

namespace {

// Boxed so pybind11's std::variant caster does not try to unpack it.
struct Ppd {
  Predictive v;
};

io::RunConfig to_run_config(const std::map<std::string, py::object>& entries) {
  io::RunConfig cfg;
  for (const auto& [k, v] : entries) cfg.set(k, py::str(v).cast<std::string>());
  return cfg;
}

// Python-side provider: a pfn.Predictor or an MCMC chain config.
PpdProvider provider_of(const py::object& model) {
  if (py::isinstance<pfn::Predictor>(model)) return model.cast<const pfn::Predictor&>().provider();
  if (py::isinstance<mcmc::ChainConfig>(model)) return mcmc::make_mcmc_provider(model.cast<mcmc::ChainConfig>());
  throw py::type_error("model must be a Predictor or a ChainConfig");
}

}  // namespace

PYBIND11_MODULE(_lcx, m) {
  m.doc() = "Learning-curve extrapolation: prior, MCMC and PFN inference, evaluation, early stopping";

  // Module-lifetime references; the translator only reads them.
  static PyObject* base = PyErr_NewException("lcx._lcx.LcxError", PyExc_RuntimeError, nullptr);
  static PyObject* config_exc = PyErr_NewException("lcx._lcx.ConfigError", base, nullptr);
  static PyObject* io_exc = PyErr_NewException("lcx._lcx.IoError", base, nullptr);
  static PyObject* numeric_exc = PyErr_NewException("lcx._lcx.NumericError", base, nullptr);
  m.attr("LcxError") = py::reinterpret_borrow<py::object>(base);
  m.attr("ConfigError") = py::reinterpret_borrow<py::object>(config_exc);
  m.attr("IoError") = py::reinterpret_borrow<py::object>(io_exc);
  m.attr("NumericError") = py::reinterpret_borrow<py::object>(numeric_exc);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyObject* type = e.kind() == ErrorKind::config ? config_exc : e.kind() == ErrorKind::io ? io_exc : numeric_exc;
      PyErr_SetString(type, e.what());
    }
  });

  // prior ------------------------------------------------------------------
  m.def(
      "sample_prior",
      [](int n, int m_, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<std::vector<double>> ys, means;
        for (int i = 0; i < n; ++i) {
          auto s = sample_prior_curve(rng, m_);
          means.push_back(comb_curve(s.config, m_));
          ys.push_back(std::move(s.y));
        }
        return py::make_tuple(ys, means);
      },
      py::arg("n"), py::arg("m") = kDefaultHorizon, py::arg("seed") = 0,
      "n noisy prior curves and their noiseless means, as (curves, means)");

  // normalize --------------------------------------------------------------
  py::class_<NormalizationSpec>(m, "NormalizationSpec")
      .def(py::init([](bool minimize, double l_hard, double l_soft, double u_soft, double u_hard) {
             NormalizationSpec s{minimize, l_hard, u_hard, l_soft, u_soft};
             s.validate();
             return s;
           }),
           py::arg("minimize") = false, py::arg("l_hard") = 0.0, py::arg("l_soft") = 0.0, py::arg("u_soft") = 1.0,
           py::arg("u_hard") = 1.0)
      .def_readonly("minimize", &NormalizationSpec::minimize)
      .def_readonly("l_hard", &NormalizationSpec::l_hard)
      .def_readonly("l_soft", &NormalizationSpec::l_soft)
      .def_readonly("u_soft", &NormalizationSpec::u_soft)
      .def_readonly("u_hard", &NormalizationSpec::u_hard);
  m.def("normalize", &normalize_forward, py::arg("y"), py::arg("spec"));
  m.def("denormalize", &normalize_inverse, py::arg("y_norm"), py::arg("spec"));

  // PPDs -------------------------------------------------------------------
  py::class_<Ppd>(m, "PPD")
      .def("log_density", [](const Ppd& p, double y) { return log_density(p.v, y); }, py::arg("y"))
      .def("quantile", [](const Ppd& p, double q) { return quantile(p.v, q); }, py::arg("q"))
      .def("exceed_prob", [](const Ppd& p, double t) { return exceed_prob(p.v, t); }, py::arg("threshold"))
      .def_property_readonly("kind", [](const Ppd& p) { return p.v.index() == 0 ? "discrete" : "mixture"; });

  // mcmc -------------------------------------------------------------------
  py::class_<mcmc::ChainConfig>(m, "ChainConfig")
      .def(py::init([](int nwalkers, int nsamples, int burn_in, int thin, const std::string& init, std::uint64_t seed) {
             mcmc::ChainConfig c;
             c.nwalkers = nwalkers;
             c.nsamples = nsamples;
             c.burn_in = burn_in;
             c.thin = thin;
             c.init = mcmc::parse_init_strategy(init);
             c.seed = seed;
             c.validate();
             return c;
           }),
           py::arg("nwalkers") = 100, py::arg("nsamples") = 2000, py::arg("burn_in") = 500, py::arg("thin") = 1,
           py::arg("init") = "lse", py::arg("seed") = 0)
      .def_readonly("nwalkers", &mcmc::ChainConfig::nwalkers)
      .def_readonly("nsamples", &mcmc::ChainConfig::nsamples)
      .def_readonly("burn_in", &mcmc::ChainConfig::burn_in)
      .def_readonly("thin", &mcmc::ChainConfig::thin)
      .def_readonly("seed", &mcmc::ChainConfig::seed);

  // pfn --------------------------------------------------------------------
  py::class_<pfn::Predictor>(m, "Predictor")
      .def_static(
          "load",
          [](const std::string& path) {
            auto ck = pfn::load_checkpoint(path);
            return pfn::Predictor(std::move(ck.params), std::move(ck.grid));
          },
          py::arg("path"))
      .def_property_readonly("m", [](const pfn::Predictor& p) { return p.config().m; })
      .def_property_readonly("nbins", [](const pfn::Predictor& p) { return p.config().nbins; })
      .def_property_readonly("edges", [](const pfn::Predictor& p) { return p.grid().edges; });

  m.def(
      "predict",
      [](const py::object& model, const std::vector<double>& prefix, const std::vector<int>& queries) {
        const auto provider = provider_of(model);
        std::vector<Ppd> out;
        {
          py::gil_scoped_release release;
          for (auto& p : provider(prefix, queries)) out.push_back(Ppd{std::move(p)});
        }
        return out;
      },
      py::arg("model"), py::arg("prefix"), py::arg("queries"),
      "one PPD per query step given a normalized prefix; model is a Predictor or ChainConfig");

  // eval -------------------------------------------------------------------
  m.def("subsample", [](const std::vector<double>& v, int m_) { return eval::subsample(v, m_); }, py::arg("values"),
        py::arg("m") = kDefaultHorizon);
  m.def("cutoff_index", &eval::cutoff_index, py::arg("fraction"), py::arg("length"));
  m.def(
      "score",
      [](const py::object& model, const std::vector<double>& y, double cutoff) {
        const auto provider = provider_of(model);
        py::gil_scoped_release release;
        const auto s = eval::score(provider, y, cutoff);
        return std::pair{s.ll, s.mse};
      },
      py::arg("model"), py::arg("curve"), py::arg("cutoff"),
      "(mean log-likelihood, MSE of the median) over the censored part of a normalized curve");
  m.def(
      "rank_aggregate",
      [](const std::vector<std::tuple<std::string, std::string, double, double, double>>& rows) {
        std::vector<eval::EvalRecord> recs;
        for (const auto& [c, meth, cut, ll, mse] : rows) recs.push_back({c, meth, cut, ll, mse});
        std::vector<std::tuple<std::string, double, double, double, int>> out;
        for (const auto& r : eval::rank_aggregate(recs)) out.emplace_back(r.method, r.cutoff, r.ll_rank, r.mse_rank, r.n_curves);
        return out;
      },
      py::arg("records"),
      "records (curve, method, cutoff, ll, mse) -> (method, cutoff, mean LL rank, mean MSE rank, curves)");

  // earlystop --------------------------------------------------------------
  m.def(
      "simulate",
      [](const std::vector<std::vector<double>>& candidates, int budget, const std::string& policy, double confidence,
         const std::string& schedule, int k, const py::object& model) {
        earlystop::TerminationPolicy pol;
        switch (earlystop::parse_policy_kind(policy)) {
          case earlystop::PolicyKind::none: pol = earlystop::TerminationPolicy::none(); break;
          case earlystop::PolicyKind::predictive:
            pol = earlystop::TerminationPolicy::predictive(confidence, earlystop::parse_schedule(schedule));
            break;
          case earlystop::PolicyKind::patience: pol = earlystop::TerminationPolicy::patience(k); break;
        }
        std::optional<PpdProvider> provider;
        if (!model.is_none()) provider = provider_of(model);
        py::gil_scoped_release release;
        const auto s = earlystop::simulate(candidates, budget, pol, provider ? &*provider : nullptr);
        return std::pair{s.regret, s.epochs_per_run};
      },
      py::arg("candidates"), py::arg("budget"), py::arg("policy") = "none", py::arg("confidence") = 0.95,
      py::arg("schedule") = "fine", py::arg("k") = 3, py::arg("model") = py::none(),
      "(regret trajectory, epochs per started run)");

  // file-level commands (same behaviour as the lcx CLI) ---------------------
  auto c = m.def_submodule("commands", "file-based commands mirroring the CLI");
  c.def("sample_prior", &cli::sample_prior, py::arg("n"), py::arg("m"), py::arg("seed"), py::arg("out"),
        py::arg("means_out") = "");
  c.def(
      "build_bins",
      [](int draws, int m_, int nbins, std::uint64_t seed, const std::string& out) {
        return cli::build_bins(draws, m_, nbins, seed, out).edges;
      },
      py::arg("draws"), py::arg("m"), py::arg("nbins"), py::arg("seed"), py::arg("out"));
  c.def(
      "train",
      [](const std::map<std::string, py::object>& config, std::uint64_t seed, const std::string& out) {
        const auto cfg = to_run_config(config);
        py::gil_scoped_release release;
        cli::train(cfg, seed, out);
      },
      py::arg("config"), py::arg("seed"), py::arg("out"));
  c.def(
      "infer",
      [](const std::string& ckpt, const std::string& curves, double cutoff, const std::vector<int>& queries,
         const std::string& out) {
        py::gil_scoped_release release;
        cli::infer(ckpt, curves, cutoff, queries, out);
      },
      py::arg("checkpoint"), py::arg("curves"), py::arg("cutoff"), py::arg("queries") = std::vector<int>{},
      py::arg("out"));
  c.def(
      "eval",
      [](const std::map<std::string, py::object>& config, const std::string& curves, std::uint64_t seed, int threads,
         const std::string& out) {
        const auto cfg = to_run_config(config);
        py::gil_scoped_release release;
        cli::eval(cfg, curves, seed, threads, out);
      },
      py::arg("config"), py::arg("curves"), py::arg("seed"), py::arg("threads") = 1, py::arg("out"));
  c.def(
      "earlystop",
      [](const std::map<std::string, py::object>& config, const std::string& curves, std::uint64_t seed, int threads,
         const std::string& out) {
        const auto cfg = to_run_config(config);
        py::gil_scoped_release release;
        cli::earlystop(cfg, curves, seed, threads, out);
      },
      py::arg("config"), py::arg("curves"), py::arg("seed"), py::arg("threads") = 1, py::arg("out"));
}
