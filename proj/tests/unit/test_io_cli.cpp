// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>

#include "lcx/cli.hpp"
#include "lcx/error.hpp"
#include "lcx/io.hpp"
#include "lcx/pfn/checkpoint.hpp"
#include "lcx/prior.hpp"
#include "lcx/text.hpp"

using namespace lcx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lcx_unit_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) { return io::read_text(p.string()); }

// A few-second checkpoint shared by the CLI tests.
const std::string& tiny_checkpoint() {
  static const std::string path = [] {
    io::RunConfig cfg = io::RunConfig::parse(
        "nlayers = 1\nemsize = 16\nnheads = 2\nnhidden = 32\nnbins = 50\n"
        "nb_data = 2000\nbatch_size = 20\nlr = 1e-3\nbin_draws = 2000\n");
    const auto p = scratch("tiny.ckpt").string();
    cli::train(cfg, 7, p);
    return p;
  }();
  return path;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LCX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("curve file parsing") {
  const std::string text =
      "#minimize=true\n#l_hard=0\n#u_hard=inf\n#l_soft=0\n#u_soft=2.5\n#origin=lab notebook\n"
      "task_id,run_id,step,value\n"
      "t1,a,1,2.0\nt1,a,2,1.5\nt1,a,3,1.2\n"
      "t1,b,1,2.2\nt1,b,2,1.9\n";
  const auto f = io::parse_curve_file(text);
  REQUIRE(f.curves.size() == 2);
  CHECK(f.curves[0].id() == "t1/a");
  CHECK(f.curves[0].values == std::vector<double>{2.0, 1.5, 1.2});
  CHECK(f.curves[1].spec.minimize);
  CHECK(std::isinf(f.curves[1].spec.u_hard));
  CHECK(f.curves[1].spec.u_soft == 2.5);
  CHECK(f.meta[5] == std::pair<std::string, std::string>{"origin", "lab notebook"});
  // parse -> write -> parse
  const auto again = io::parse_curve_file(io::format_curve_file(f));
  CHECK(io::format_curve_file(again) == io::format_curve_file(f));
  CHECK(again.curves[1].values == f.curves[1].values);
}

TEST_CASE("first value as soft upper bound") {
  const auto f = io::parse_curve_file("#minimize=true\n#u_hard=inf\n#u_soft=y0\nt,a,1,3.0\nt,a,2,1.0\nt,b,1,4.0\nt,b,2,2.0\n");
  CHECK(f.curves[0].spec.u_soft == 3.0);
  CHECK(f.curves[1].spec.u_soft == 4.0);
  CHECK(f.curves[0].normalized()[0] == doctest::Approx(normalize_forward(3.0, f.curves[0].spec)));
}

TEST_CASE("malformed curve files") {
  auto bad = [](const std::string& text) {
    try {
      io::parse_curve_file(text);
    } catch (const Error& e) {
      return e.kind() == ErrorKind::config;
    }
    return false;
  };
  CHECK(bad("t,a,2,0.5\nt,a,3,0.6\n"));               // steps must start at 1
  CHECK(bad("t,a,1,0.5\nt,a,3,0.6\n"));               // gap
  CHECK(bad("t,a,1,0.5\nt,a,2,0.6\nt,b,1,0.1\nt,b,2,0.2\nt,a,3,0.7\n"));  // run split
  CHECK(bad("t,a,1,0.5\nt,a,2,1.6\n"));               // outside default hard bounds
  CHECK(bad("t,a,1,0.5\n"));                          // single observation
  CHECK(bad("t,a,1,zero\nt,a,2,0.1\n"));
  CHECK(bad("t,a,1\n"));
  CHECK(bad("#space=weird\nt,a,1,0.5\nt,a,2,0.6\n"));
  CHECK(bad("t,a,1,0.5\n#l_soft=0\nt,a,2,0.6\n"));    // preamble after data
  CHECK(bad("#l_soft=0\n#l_soft=0.1\nt,a,1,0.5\nt,a,2,0.6\n"));
  CHECK_FALSE(bad("#space=normalized\nt,a,1,-0.02\nt,a,2,1.03\n"));
}

TEST_CASE("run config") {
  const auto c = io::RunConfig::parse("# model\nnlayers = 3\n\nlr=0.001\nmaterialize = true\npolicy = none, patience\n");
  CHECK(c.get_int("nlayers", 6) == 3);
  CHECK(c.get_int("emsize", 128) == 128);
  CHECK(c.get_double("lr", 0) == 0.001);
  CHECK(c.get_bool("materialize", false));
  CHECK(c.get("policy", "") == "none, patience");
  CHECK_THROWS_AS(io::RunConfig::parse("nlayer = 3\n"), Error);
  CHECK_THROWS_AS(io::RunConfig::parse("nlayers = 3\nnlayers = 4\n"), Error);
  CHECK_THROWS_AS(io::RunConfig::parse("nlayers\n"), Error);
  CHECK_THROWS_AS(io::RunConfig::parse("nlayers = many\n").get_int("nlayers", 1), Error);
  CHECK_THROWS_AS(io::RunConfig::load("/nonexistent/lcx.cfg"), Error);

  const auto mc = cli::model_config(c);
  CHECK(mc.nlayers == 3);
  CHECK(mc.emsize == 128);
  const auto pols = cli::policies(c);
  REQUIRE(pols.size() == 2);
  CHECK(pols[1].label() == "patience-3");
  CHECK_THROWS_AS(cli::train_config(io::RunConfig::parse("nb_data = 1001\n"), 0), Error);
}

TEST_CASE("sample-prior output") {
  const auto a = scratch("a.csv"), b = scratch("b.csv"), means = scratch("means.csv");
  cli::sample_prior(10, 100, 5, a.string(), means.string());
  cli::sample_prior(10, 100, 5, b.string());
  CHECK(slurp(a) == slurp(b));
  const auto f = io::read_curve_file(a.string());
  REQUIRE(f.curves.size() == 10);
  CHECK(f.curves[0].values.size() == 100);
  CHECK(io::format_curve_file(f) == slurp(a));
  const auto mf = io::read_curve_file(means.string());
  for (const auto& c : mf.curves)
    for (double v : c.values) REQUIRE((v >= 0.0 && v <= 1.0));
  CHECK_THROWS_AS(cli::sample_prior(3, 100, 5, "/nonexistent/dir/x.csv"), Error);
}

TEST_CASE("bins file roundtrip") {
  const auto p = scratch("bins.csv");
  const auto g = cli::build_bins(2000, 100, 50, 3, p.string());
  const auto back = cli::read_bins(p.string());
  CHECK(back.edges == g.edges);
}

TEST_CASE("checkpoint load/save/load is a fixpoint") {
  const auto& path = tiny_checkpoint();
  const auto a = pfn::load_checkpoint(path);
  const auto p2 = scratch("resaved.ckpt").string();
  pfn::save_checkpoint(p2, a);
  const auto b = pfn::load_checkpoint(p2);
  CHECK(slurp(path) == slurp(p2));
  CHECK(slurp(path + ".json") == slurp(p2 + ".json"));
  CHECK(b.grid.edges == a.grid.edges);
  CHECK(b.params.config == a.params.config);

  // Truncated binary -> io error.
  const auto broken = scratch("broken.ckpt").string();
  const auto bytes = slurp(path);
  io::write_text(broken, bytes.substr(0, bytes.size() / 2));
  io::write_text(broken + ".json", slurp(path + ".json"));
  try {
    pfn::load_checkpoint(broken);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
}

TEST_CASE("infer emits ordered quantiles in raw units") {
  const auto curves = scratch("raw.csv");
  io::write_text(curves.string(),
                 "#minimize=true\n#l_hard=0\n#u_hard=inf\n#l_soft=0\n#u_soft=2.3\n"
                 "t,a,1,2.2\nt,a,2,1.6\nt,a,3,1.2\nt,a,4,1.0\nt,a,5,0.9\nt,a,6,0.85\nt,a,7,0.8\nt,a,8,0.78\n"
                 "t,a,9,0.77\nt,a,10,0.76\n");
  const auto out = scratch("q.csv");
  cli::infer(tiny_checkpoint(), curves.string(), 0.5, {}, out.string());
  const auto lines = split(slurp(out), '\n');
  CHECK(lines[0] == "curve_id,step,epoch,q05,q50,q95");
  int rows = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto col = split(lines[i], ',');
    REQUIRE(col.size() == 6);
    const double q05 = parse_double(col[3]), q50 = parse_double(col[4]), q95 = parse_double(col[5]);
    CHECK(q05 <= q50);
    CHECK(q50 <= q95);
    CHECK(q05 >= 0.0);
    ++rows;
  }
  CHECK(rows == 95);  // steps 6..100

  const auto out2 = scratch("q2.csv");
  cli::infer(tiny_checkpoint(), curves.string(), 0.5, {7, 50}, out2.string());
  CHECK(split(slurp(out2), '\n').size() == 4);
  CHECK_THROWS_AS(cli::infer(tiny_checkpoint(), curves.string(), 0.5, {101}, out2.string()), Error);
}

TEST_CASE("eval with one method ranks everything first") {
  const auto curves = scratch("prior6.csv");
  cli::sample_prior(6, 100, 21, curves.string());
  auto cfg = io::RunConfig::parse("methods = pfn\ncutoffs = 0.1,0.4\n");
  cfg.set("checkpoint", tiny_checkpoint());
  const auto out = scratch("eval.csv"), out2 = scratch("eval2.csv");
  cli::eval(cfg, curves.string(), 0, 2, out.string());
  cli::eval(cfg, curves.string(), 0, 1, out2.string());
  CHECK(slurp(out) == slurp(out2));  // thread count does not matter
  const auto lines = split(slurp(out), '\n');
  CHECK(lines[0] == "curve_id,method,cutoff,ll,mse");
  CHECK(lines.size() == 1 + 12 + 1);
  const auto ranks = split(slurp(out.string() + ".ranks.csv"), '\n');
  REQUIRE(ranks.size() == 4);
  for (size_t i = 1; i < 3; ++i) {
    const auto col = split(ranks[i], ',');
    CHECK(col[2] == "1");
    CHECK(col[3] == "1");
    CHECK(col[4] == "6");
  }
  auto bad = io::RunConfig::parse("methods = pfn\n");
  CHECK_THROWS_AS(cli::eval(bad, curves.string(), 0, 1, out.string()), Error);  // no checkpoint
}

TEST_CASE("earlystop with no stopping matches a direct replay") {
  const auto curves = scratch("tasks.csv");
  {
    io::CurveFile f;
    f.meta = {{"space", "normalized"}};
    Rng rng(4);
    for (const char* task : {"alpha", "beta"})
      for (int r = 0; r < 8; ++r) {
        auto s = sample_prior_curve(rng, 100);
        f.curves.push_back(eval::LearningCurve{task, "r" + std::to_string(r), s.y, {}, true});
      }
    io::write_curve_file(f, curves.string());
  }
  auto cfg = io::RunConfig::parse("policy = none\norderings = 3\nbudget = 350\n");
  const auto out = scratch("es.csv");
  cli::earlystop(cfg, curves.string(), 11, 2, out.string());

  // Direct replay oracle: concatenate the runs in the same order, cut at the
  // budget, regret = best on task - running max.
  const auto f = io::read_curve_file(curves.string());
  std::vector<std::string> tasks;
  std::map<std::string, std::vector<std::vector<double>>> pool;
  for (const auto& c : f.curves) {
    if (!pool.count(c.task_id)) tasks.push_back(c.task_id);
    pool[c.task_id].push_back(c.values);
  }
  std::map<std::pair<std::string, int>, std::vector<double>> traj;
  const auto lines = split(slurp(out), '\n');
  CHECK(lines[0] == "policy,task,ordering,cum_epochs,regret");
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto col = split(lines[i], ',');
    CHECK(col[0] == "none");
    auto& t = traj[{col[1], static_cast<int>(parse_int(col[2]))}];
    CHECK(parse_int(col[3]) == static_cast<long long>(t.size()) + 1);
    t.push_back(parse_double(col[4]));
  }
  REQUIRE(traj.size() == 6);
  for (size_t ti = 0; ti < tasks.size(); ++ti) {
    const auto& runs = pool[tasks[ti]];
    double top = -1e300;
    for (const auto& r : runs)
      for (double v : r) top = std::max(top, v);
    for (int o = 0; o < 3; ++o) {
      std::vector<double> stream;
      for (size_t i : cli::candidate_order(runs.size(), 11, ti, o))
        stream.insert(stream.end(), runs[i].begin(), runs[i].end());
      stream.resize(350);
      const auto& got = traj[{tasks[ti], o}];
      REQUIRE(got.size() == 350);
      double seen = -1e300;
      for (size_t e = 0; e < 350; ++e) {
        seen = std::max(seen, stream[e]);
        REQUIRE(got[e] == top - seen);
      }
    }
  }
  CHECK(cli::candidate_order(8, 11, 0, 0) != cli::candidate_order(8, 11, 0, 1));
  const auto again = scratch("es2.csv");
  cli::earlystop(cfg, curves.string(), 11, 1, again.string());
  CHECK(slurp(out) == slurp(again));
}

TEST_CASE("exit codes") {
  CHECK(cli::exit_code_for(ErrorKind::config) == 2);
  CHECK(cli::exit_code_for(ErrorKind::io) == 3);
  CHECK(cli::exit_code_for(ErrorKind::numeric) == 4);
  const auto out = scratch("cli.csv").string();
  CHECK(run_cli("sample-prior --n 3 --seed 1 --out " + out) == 0);
  CHECK(run_cli("train --set bogus=1 --out " + out) == 2);
  CHECK(run_cli("infer --checkpoint /nonexistent.ckpt --curves " + out + " --out " + out + ".q") == 3);
  CHECK(run_cli("sample-prior --n 3 --out /nonexistent/dir/x.csv") == 3);
  CHECK(run_cli("no-such-command") == 2);
}
