// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "lcx/error.hpp"
#include "lcx/pfn/predictor.hpp"
#include "lcx/pfn/train.hpp"

using namespace lcx;
using namespace lcx::pfn;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.nlayers = 1;
  c.emsize = 16;
  c.nheads = 2;
  c.nhidden = 32;
  c.nbins = 20;
  c.m = 20;
  return c;
}

std::vector<float> flatten(const ModelParams<float>& p) {
  std::vector<float> out;
  p.visit([&out](std::string_view, std::span<const float> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.nb_data = 1000;
  c.batch_size = 10;  // 100 steps, 25 warmup
  c.lr = 1e-3;
  CHECK(learning_rate_at(c, 0) == doctest::Approx(1e-3 / 25));
  CHECK(learning_rate_at(c, 12) == doctest::Approx(1e-3 * 13 / 25));
  CHECK(learning_rate_at(c, 24) == doctest::Approx(1e-3));
  CHECK(learning_rate_at(c, 25) == doctest::Approx(1e-3));
  const double mid = 25 + 75 / 2.0;
  CHECK(learning_rate_at(c, static_cast<int>(mid)) ==
        doctest::Approx(1e-3 * 0.5 * (1 + std::cos(std::numbers::pi * (static_cast<int>(mid) - 25) / 75.0))));
  CHECK(learning_rate_at(c, 99) < 1e-6);
  for (int s = 26; s < 100; ++s) CHECK(learning_rate_at(c, s) <= learning_rate_at(c, s - 1));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.nb_data = 1001;
  CHECK_THROWS_AS(c.validate(), Error);
  c.nb_data = 1000;
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.lr = 1e-4;
  c.warmup_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("first Adam step moves each weight by about lr against its gradient") {
  Rng rng(1);
  auto p = ModelParams<float>::initialized(small_model(), rng);
  const auto before = flatten(p);
  auto g = ModelParams<float>::zeros(small_model());
  int i = 0;
  g.visit([&i](std::string_view, std::span<float> s) {
    for (auto& v : s) v = (i++ % 3 == 0) ? 0.5f : -2.0f;
  });
  Adam adam(p);
  adam.step(p, g, 0.01);
  CHECK(adam.steps_taken() == 1);
  const auto after = flatten(p);
  for (size_t k = 0; k < after.size(); ++k) {
    const double expect = (k % 3 == 0) ? -0.01 : 0.01;
    REQUIRE(after[k] - before[k] == doctest::Approx(expect).epsilon(1e-4));
  }
}

TEST_CASE("training batches") {
  Rng rng(3);
  const auto b = make_training_batch(rng, 4, 20, 5);
  CHECK(b.batch == 4);
  CHECK(b.n_context == 5);
  CHECK(b.n_query == 15);
  CHECK_NOTHROW(b.validate(20));
  CHECK(b.context_t[0] == 1.0);
  CHECK(b.query_t[0] == 6.0);
  const auto empty = make_training_batch(rng, 2, 20, 0);
  CHECK(empty.n_context == 0);
  CHECK_THROWS_AS(make_training_batch(rng, 2, 20, 20), Error);
}

TEST_CASE("a small model learns and training is reproducible") {
  TrainConfig tc;
  tc.nb_data = 6000;
  tc.batch_size = 20;
  tc.lr = 3e-3;
  tc.seed = 42;
  const auto grid = uniform_grid(20);
  const auto a = train(small_model(), grid, tc);
  REQUIRE(a.losses.size() == 300);
  CHECK(a.losses.front() == doctest::Approx(std::log(20.0)).epsilon(1e-6));
  const auto w = windowed_means(a.losses, 50);
  REQUIRE(w.size() == 6);
  CHECK(w.back() < w.front() - 0.3);
  for (double l : a.losses) REQUIRE(std::isfinite(l));

  const auto b = train(small_model(), grid, tc);
  CHECK(flatten(a.params) == flatten(b.params));
  CHECK(a.losses == b.losses);

  tc.materialize = true;
  const auto c = train(small_model(), grid, tc);
  CHECK(c.losses.size() == 300);
  CHECK(windowed_means(c.losses, 50).back() < w.front() - 0.3);

  // The trained model yields normalized PPDs.
  const Predictor pred(a.params, grid);
  const std::vector<double> prefix{0.2, 0.3, 0.35};
  const std::vector<int> q{4, 10, 20};
  for (const auto& ppd : pred.predict(prefix, q)) {
    double s = 0;
    for (double v : ppd.probs) s += v;
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("windowed means") {
  CHECK(windowed_means({1, 2, 3, 4, 5}, 2) == std::vector<double>{1.5, 3.5});
  CHECK(windowed_means({1, 2}, 5).empty());
}
