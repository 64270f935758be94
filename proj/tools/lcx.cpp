// SPDX-License-Identifier: Apache-2.0
//
// lcx: sample-prior | build-bins | train | infer | eval | earlystop
// Exit codes: 0 ok, 2 config, 3 io, 4 numeric.
#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lcx/cli.hpp"
#include "lcx/error.hpp"
#include "lcx/io.hpp"

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;  // key=value, applied after the config file
};

lcx::io::RunConfig load_config(const Globals& g) {
  lcx::io::RunConfig cfg = g.config_path.empty() ? lcx::io::RunConfig{} : lcx::io::RunConfig::load(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) lcx::throw_config("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::uint64_t seed_of(const Globals& g, const lcx::io::RunConfig& cfg) {
  if (g.seed) return *g.seed;
  const long long s = cfg.get_int("seed", 0);
  if (s < 0) lcx::throw_config("seed must be non-negative");
  return static_cast<std::uint64_t>(s);
}

int threads_of(const Globals& g, const lcx::io::RunConfig& cfg) {
  const long long t = g.threads ? *g.threads : cfg.get_int("threads", 1);
  if (t < 1 || t > 1024) lcx::throw_config("threads must lie in 1..1024");
  return static_cast<int>(t);
}

void add_common(CLI::App* sub, Globals& g, bool out_required = true) {
  sub->add_option("--seed", g.seed, "RNG seed (overrides config)");
  sub->add_option("--threads", g.threads, "worker threads (overrides config)");
  sub->add_option("--config", g.config_path, "flat key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", g.overrides, "extra config entries, key=value");
  auto* out = sub->add_option("--out", g.out, "output path");
  if (out_required) out->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learning-curve extrapolation toolkit"};
  app.require_subcommand(1);
  Globals g;

  int n = 10, m = 100, draws = 100000, nbins = 1000;
  std::string means_out, curves, checkpoint, methods, policy;
  double cutoff = 0.1;
  std::vector<int> queries;

  auto* sample = app.add_subcommand("sample-prior", "draw noisy curves from the prior");
  add_common(sample, g);
  sample->add_option("--n", n, "number of curves")->check(CLI::PositiveNumber);
  sample->add_option("--m", m, "curve length")->check(CLI::Range(2, 100000));
  sample->add_option("--means", means_out, "also write the noiseless means here");

  auto* bins = app.add_subcommand("build-bins", "bucket edges from pooled prior draws");
  add_common(bins, g);
  bins->add_option("--draws", draws, "prior curves to pool")->check(CLI::PositiveNumber);
  bins->add_option("--m", m, "curve length")->check(CLI::PositiveNumber);
  bins->add_option("--nbins", nbins, "bucket count")->check(CLI::Range(2, 1000000));

  auto* train = app.add_subcommand("train", "train a PFN checkpoint");
  add_common(train, g);

  auto* infer = app.add_subcommand("infer", "PPD quantiles for curve prefixes");
  add_common(infer, g);
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--curves", curves)->required();
  infer->add_option("--cutoff", cutoff, "observed fraction")->check(CLI::Range(0.0, 1.0));
  infer->add_option("--queries", queries, "query steps (default: the rest of the horizon)")->delimiter(',');

  auto* ev = app.add_subcommand("eval", "censored-curve log-likelihood, MSE and ranks");
  add_common(ev, g);
  ev->add_option("--curves", curves)->required();
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--methods", methods, "comma list: pfn, mcmc, mcmc-lse, mcmc-map, mcmc-default");

  auto* es = app.add_subcommand("earlystop", "replay model selection under a termination policy");
  add_common(es, g);
  es->add_option("--curves", curves)->required();
  es->add_option("--checkpoint", checkpoint);
  es->add_option("--policy", policy, "comma list: none, predictive, patience");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lcx::cli::config_error;
  }

  try {
    auto cfg = load_config(g);
    if (!checkpoint.empty()) cfg.set("checkpoint", checkpoint);
    if (!methods.empty()) cfg.set("methods", methods);
    if (!policy.empty()) cfg.set("policy", policy);
    const auto seed = seed_of(g, cfg);
    const int threads = threads_of(g, cfg);

    if (*sample) {
      lcx::cli::sample_prior(n, m, seed, g.out, means_out);
    } else if (*bins) {
      lcx::cli::build_bins(draws, m, nbins, seed, g.out);
    } else if (*train) {
      lcx::cli::train(cfg, seed, g.out, &std::cerr);
    } else if (*infer) {
      lcx::cli::infer(checkpoint, curves, cutoff, queries, g.out);
    } else if (*ev) {
      lcx::cli::eval(cfg, curves, seed, threads, g.out, &std::cerr);
    } else if (*es) {
      lcx::cli::earlystop(cfg, curves, seed, threads, g.out);
    }
  } catch (const lcx::Error& e) {
    static const char* names[] = {"config", "io", "numeric"};
    std::cerr << "lcx: " << names[static_cast<int>(e.kind())] << " error: " << e.what() << "\n";
    return lcx::cli::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "lcx: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
