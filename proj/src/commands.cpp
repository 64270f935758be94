// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "lcx/cli.hpp"
#include "lcx/error.hpp"
#include "lcx/eval.hpp"
#include "lcx/pfn/checkpoint.hpp"
#include "lcx/pfn/predictor.hpp"
#include "lcx/prior.hpp"
#include "lcx/text.hpp"

namespace lcx::cli {

namespace {

// Runs f(0..n-1) on up to `threads` workers. Output placement is the caller's
// job (index-addressed), so results never depend on scheduling.
template <class F>
void parallel_for(size_t n, int threads, F&& f) {
  const size_t workers = std::min(n, static_cast<size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t derive_seed(std::initializer_list<std::uint32_t> parts) {
  std::seed_seq seq(parts);
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split(text, ',')) out.push_back(parse_double(s));
  return out;
}

std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& s : split(text, ',')) {
    const std::string name(trim(s));
    if (name.empty()) throw_config("empty entry in list '" + text + "'");
    out.push_back(name);
  }
  return out;
}

int checked_int(const io::RunConfig& cfg, const std::string& key, long long fallback) {
  const long long v = cfg.get_int(key, fallback);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw_config("config key '" + key + "' out of range");
  return static_cast<int>(v);
}

pfn::Predictor load_predictor(const std::string& path) {
  auto ckpt = pfn::load_checkpoint(path);
  return pfn::Predictor(std::move(ckpt.params), std::move(ckpt.grid));
}

std::string require(const io::RunConfig& cfg, const std::string& key, const std::string& why) {
  if (!cfg.has(key)) throw_config("config key '" + key + "' is required " + why);
  return cfg.get(key, "");
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return config_error;
    case ErrorKind::io:
      return io_error;
    case ErrorKind::numeric:
      return numeric_error;
  }
  return 1;
}

pfn::ModelConfig model_config(const io::RunConfig& cfg) {
  pfn::ModelConfig c;
  c.nlayers = checked_int(cfg, "nlayers", c.nlayers);
  c.emsize = checked_int(cfg, "emsize", c.emsize);
  c.nheads = checked_int(cfg, "nheads", c.nheads);
  c.nhidden = checked_int(cfg, "nhidden", c.nhidden);
  c.nbins = checked_int(cfg, "nbins", c.nbins);
  c.m = checked_int(cfg, "m", c.m);
  c.validate();
  return c;
}

pfn::TrainConfig train_config(const io::RunConfig& cfg, std::uint64_t seed) {
  pfn::TrainConfig c;
  c.nb_data = cfg.get_int("nb_data", c.nb_data);
  c.batch_size = checked_int(cfg, "batch_size", c.batch_size);
  c.lr = cfg.get_double("lr", c.lr);
  c.warmup_fraction = cfg.get_double("warmup_fraction", c.warmup_fraction);
  c.materialize = cfg.get_bool("materialize", c.materialize);
  c.seed = seed;
  c.validate();
  return c;
}

mcmc::ChainConfig chain_config(const io::RunConfig& cfg, std::uint64_t seed) {
  mcmc::ChainConfig c;
  c.nwalkers = checked_int(cfg, "nwalkers", c.nwalkers);
  c.nsamples = checked_int(cfg, "nsamples", c.nsamples);
  c.burn_in = checked_int(cfg, "burn_in", c.burn_in);
  c.thin = checked_int(cfg, "thin", c.thin);
  c.stretch_scale = cfg.get_double("stretch_scale", c.stretch_scale);
  if (cfg.has("init")) c.init = mcmc::parse_init_strategy(cfg.get("init", ""));
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<earlystop::TerminationPolicy> policies(const io::RunConfig& cfg) {
  using namespace earlystop;
  std::vector<TerminationPolicy> out;
  for (const auto& name : parse_names(cfg.get("policy", "predictive"))) {
    TerminationPolicy p;
    switch (parse_policy_kind(name)) {
      case PolicyKind::none:
        p = TerminationPolicy::none();
        break;
      case PolicyKind::predictive:
        p = TerminationPolicy::predictive(cfg.get_double("confidence", 0.95),
                                          parse_schedule(cfg.get("schedule", "fine")),
                                          checked_int(cfg, "min_cutoff", 2));
        break;
      case PolicyKind::patience:
        p = TerminationPolicy::patience(checked_int(cfg, "k", 3));
        break;
    }
    p.validate();
    out.push_back(p);
  }
  return out;
}

void write_bins(const pfn::BinGrid& grid, const std::string& path) {
  grid.validate();
  std::ostringstream os;
  os << "edge\n";
  for (double e : grid.edges) os << format_double(e) << '\n';
  io::write_text(path, os.str());
}

pfn::BinGrid read_bins(const std::string& path) {
  pfn::BinGrid grid;
  bool header = true;
  for (const auto& line : split(io::read_text(path), '\n')) {
    const auto s = trim(line);
    if (s.empty()) continue;
    if (header && s == "edge") {
      header = false;
      continue;
    }
    header = false;
    try {
      grid.edges.push_back(parse_double(s));
    } catch (const Error& e) {
      throw_io(path + ": " + e.what());
    }
  }
  try {
    grid.validate();
  } catch (const Error& e) {
    throw_io(path + ": " + e.what());
  }
  return grid;
}

void sample_prior(int n, int m, std::uint64_t seed, const std::string& out, const std::string& means_out) {
  if (n < 1 || m < 2) throw_config("sample-prior needs n >= 1 and m >= 2");
  Rng rng(seed);
  io::CurveFile noisy, means;
  noisy.meta = {{"space", "normalized"}, {"source", "prior"}, {"m", std::to_string(m)},
                {"seed", std::to_string(seed)}};
  means.meta = noisy.meta;
  means.meta.emplace_back("noise", "none");
  const int width = std::max<int>(4, static_cast<int>(std::to_string(n - 1).size()));
  for (int i = 0; i < n; ++i) {
    const PriorSample s = sample_prior_curve(rng, m);
    std::string run = std::to_string(i);
    run.insert(0, static_cast<size_t>(width) - run.size(), '0');
    noisy.curves.push_back(eval::LearningCurve{"prior", "c" + run, s.y, {}, true});
    means.curves.push_back(eval::LearningCurve{"prior", "c" + run, comb_curve(s.config, m), {}, true});
  }
  io::write_curve_file(noisy, out);
  if (!means_out.empty()) io::write_curve_file(means, means_out);
}

pfn::BinGrid build_bins(int n_draws, int m, int nbins, std::uint64_t seed, const std::string& out) {
  if (n_draws < 1 || m < 1) throw_config("build-bins needs positive draw count and horizon");
  Rng rng(seed);
  auto grid = pfn::build_bins_from_prior(rng, n_draws, m, nbins);
  write_bins(grid, out);
  return grid;
}

void train(const io::RunConfig& cfg, std::uint64_t seed, const std::string& out, std::ostream* log) {
  const auto model = model_config(cfg);
  const auto tc = train_config(cfg, seed);
  pfn::BinGrid grid;
  if (cfg.has("bins")) {
    grid = read_bins(cfg.get("bins", ""));
  } else {
    const long long draws = cfg.get_int("bin_draws", 100000);
    if (draws < 1 || draws > std::numeric_limits<int>::max()) throw_config("bin_draws out of range");
    Rng rng(static_cast<std::uint64_t>(cfg.get_int("bin_seed", static_cast<long long>(seed))));
    grid = pfn::build_bins_from_prior(rng, static_cast<int>(draws), model.m, model.nbins);
  }
  if (grid.nbins() != model.nbins) throw_config("bin file has a different bucket count than nbins");

  std::ostringstream losses;
  losses << "step,loss,lr\n";
  const int every = std::max(1, tc.steps() / 50);
  auto result = pfn::train(model, grid, tc, [&](int step, double loss, double lr) {
    losses << step << ',' << format_double(loss) << ',' << format_double(lr) << '\n';
    if (log && (step % every == 0 || step + 1 == tc.steps()))
      *log << "step " << step << "/" << tc.steps() << " loss " << loss << std::endl;
  });
  pfn::save_checkpoint(out, pfn::Checkpoint{std::move(result.params), grid, seed});
  io::write_text(out + ".losses.csv", losses.str());
}

void infer(const std::string& checkpoint, const std::string& curves, double cutoff, const std::vector<int>& queries,
           const std::string& out) {
  const auto predictor = load_predictor(checkpoint);
  const int m = predictor.config().m;
  const auto file = io::read_curve_file(curves);
  std::ostringstream os;
  os << "curve_id,step,epoch,q05,q50,q95\n";
  for (const auto& curve : file.curves) {
    const auto normalized = curve.normalized();
    const int stride = eval::subsample_stride(normalized.size(), m);
    const auto y = eval::subsample(normalized, m);
    const int T = std::min(eval::cutoff_index(cutoff, y.size()), m - 1);
    std::vector<int> steps = queries;
    if (steps.empty())
      for (int t = T + 1; t <= m; ++t) steps.push_back(t);
    for (int t : steps)
      if (t < 1 || t > m) throw_config("query step " + std::to_string(t) + " outside 1.." + std::to_string(m));
    const auto ppds = predictor.predict(std::span(y).first(static_cast<size_t>(T)), steps);
    std::optional<Normalizer> norm;
    if (!curve.prenormalized) norm.emplace(curve.spec);
    auto raw = [&](double v) { return norm ? norm->inverse(v) : v; };
    for (size_t j = 0; j < steps.size(); ++j) {
      double q[3] = {pfn::ppd_quantile(ppds[j], 0.05), pfn::ppd_quantile(ppds[j], 0.5),
                     pfn::ppd_quantile(ppds[j], 0.95)};
      // A minimized metric reverses order under the inverse map.
      for (double& v : q) v = raw(v);
      if (q[0] > q[2]) std::swap(q[0], q[2]);
      os << curve.id() << ',' << steps[j] << ',' << (steps[j] - 1) * stride + 1 << ',' << format_double(q[0])
         << ',' << format_double(q[1]) << ',' << format_double(q[2]) << '\n';
    }
  }
  io::write_text(out, os.str());
}

void eval(const io::RunConfig& cfg, const std::string& curves, std::uint64_t seed, int threads,
          const std::string& out, std::ostream* log) {
  const auto methods = parse_names(cfg.get("methods", "pfn"));
  const auto cutoffs = parse_list(cfg.get("cutoffs", "0.1,0.2,0.4,0.8"));
  const int m = checked_int(cfg, "m", kDefaultHorizon);
  const auto file = io::read_curve_file(curves);
  if (file.curves.empty()) throw_config(curves + ": no curves");

  std::optional<pfn::Predictor> predictor;
  for (const auto& name : methods) {
    if (name == "pfn") {
      if (!predictor) predictor.emplace(load_predictor(require(cfg, "checkpoint", "for method pfn")));
      if (predictor->config().m != m) throw_config("checkpoint horizon differs from m");
    } else if (name != "mcmc" && name.rfind("mcmc-", 0) != 0) {
      throw_config("unknown method '" + name + "'");
    } else if (name != "mcmc") {
      (void)mcmc::parse_init_strategy(name.substr(5));
    }
  }

  // Jobs: curve-major so that the log shows steady progress.
  struct Job {
    size_t curve, method;
  };
  std::vector<Job> jobs;
  for (size_t c = 0; c < file.curves.size(); ++c)
    for (size_t k = 0; k < methods.size(); ++k) jobs.push_back({c, k});
  std::vector<std::vector<eval::EvalRecord>> results(jobs.size());
  std::atomic<size_t> done{0};
  std::mutex log_mu;

  parallel_for(jobs.size(), threads, [&](size_t j) {
    const auto& curve = file.curves[jobs[j].curve];
    const auto& name = methods[jobs[j].method];
    PpdProvider provider;
    if (name == "pfn") {
      provider = predictor->provider();
    } else {
      auto chain = chain_config(cfg, derive_seed({lo32(seed), hi32(seed), static_cast<std::uint32_t>(jobs[j].curve)}));
      if (name != "mcmc") chain.init = mcmc::parse_init_strategy(name.substr(5));
      provider = mcmc::make_mcmc_provider(chain, m);
    }
    for (double f : cutoffs) results[j].push_back(eval::evaluate(provider, curve, f, name, m));
    const size_t n = ++done;
    if (log) {
      std::lock_guard lock(log_mu);
      *log << "evaluated " << n << "/" << jobs.size() << " (" << curve.id() << ", " << name << ")" << std::endl;
    }
  });

  std::vector<eval::EvalRecord> records;
  for (auto& r : results) records.insert(records.end(), r.begin(), r.end());
  eval::write_records_csv(records, out);
  eval::write_ranks_csv(eval::rank_aggregate(records), out + ".ranks.csv");
}

std::vector<size_t> candidate_order(size_t n, std::uint64_t seed, size_t task, int ordering) {
  // Hand-rolled Fisher-Yates: std::shuffle is not specified bit-for-bit.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed({lo32(seed), hi32(seed), static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(ordering)}));
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

void earlystop(const io::RunConfig& cfg, const std::string& curves, std::uint64_t seed, int threads,
               const std::string& out) {
  const auto pols = policies(cfg);
  const int m = checked_int(cfg, "m", kDefaultHorizon);
  const int orderings = checked_int(cfg, "orderings", 10);
  const int budget = checked_int(cfg, "budget", earlystop::default_budget(m));
  if (orderings < 1) throw_config("orderings must be >= 1");
  const auto file = io::read_curve_file(curves);

  std::optional<pfn::Predictor> predictor;
  PpdProvider provider;
  for (const auto& p : pols)
    if (p.kind == earlystop::PolicyKind::predictive && !predictor) {
      predictor.emplace(load_predictor(require(cfg, "checkpoint", "for the predictive policy")));
      if (predictor->config().m != m) throw_config("checkpoint horizon differs from m");
      provider = predictor->provider();
    }

  std::vector<std::string> tasks;
  std::map<std::string, std::vector<std::vector<double>>> by_task;
  for (const auto& c : file.curves) {
    auto [it, fresh] = by_task.try_emplace(c.task_id);
    if (fresh) tasks.push_back(c.task_id);
    it->second.push_back(eval::subsample(c.normalized(), m));
  }

  struct Job {
    size_t task, policy;
    int ordering;
  };
  std::vector<Job> jobs;
  for (size_t t = 0; t < tasks.size(); ++t)
    for (size_t p = 0; p < pols.size(); ++p)
      for (int r = 0; r < orderings; ++r) jobs.push_back({t, p, r});
  std::vector<earlystop::Simulation> sims(jobs.size());

  parallel_for(jobs.size(), threads, [&](size_t j) {
    const auto& job = jobs[j];
    // Every policy sees the same orderings.
    const auto& pool = by_task.at(tasks[job.task]);
    std::vector<std::vector<double>> cands;
    for (size_t i : candidate_order(pool.size(), seed, job.task, job.ordering)) cands.push_back(pool[i]);
    sims[j] = earlystop::simulate(cands, budget, pols[job.policy], provider ? &provider : nullptr);
  });

  std::vector<earlystop::TrajectoryRow> rows;
  for (size_t j = 0; j < jobs.size(); ++j)
    rows.push_back({pols[jobs[j].policy].label(), tasks[jobs[j].task], jobs[j].ordering, &sims[j].regret});
  earlystop::write_trajectories_csv(rows, out);
}

}  // namespace lcx::cli
