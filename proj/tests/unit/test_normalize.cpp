// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "lcx/error.hpp"
#include "lcx/normalize.hpp"

using namespace lcx;

namespace {
constexpr double kInf = INFINITY;

NormalizationSpec spec(bool minimize, double lh, double ls, double us, double uh) {
  return NormalizationSpec{minimize, lh, uh, ls, us};
}

double plain_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TEST_CASE("coefficients") {
  const auto canon = derive_coefficients(spec(false, -kInf, -1, 1, kInf));
  CHECK(canon.a == 1.0);
  CHECK(canon.b == 0.0);
  CHECK(canon.c == 1.0);
  CHECK(canon.d == 0.0);

  const auto acc = spec(false, 0, 0, 1, 1);
  CHECK(normalize_forward(0.0, acc) == 0.0);
  CHECK(normalize_forward(1.0, acc) == 1.0);

  // Log loss, minimized, unbounded above.
  const auto ll = spec(true, 0, 0, std::log(10.0), kInf);
  const auto k = derive_coefficients(ll);
  const double a = 2.0 / std::log(10.0), b = -1.0;
  CHECK(k.a == doctest::Approx(a).epsilon(1e-15));
  CHECK(k.b == doctest::Approx(b).epsilon(1e-15));
  const double s0 = plain_sigmoid(b);  // l(l_hard = 0)
  CHECK(k.c == doctest::Approx(1.0 / (1.0 - s0)).epsilon(1e-13));
  CHECK(k.d == doctest::Approx(-k.c * s0).epsilon(1e-13));
  CHECK(std::isfinite(k.c));
  CHECK(std::isfinite(k.d));

  CHECK_THROWS_AS(derive_coefficients(spec(false, 0, 0.5, 0.5, 1)), Error);
}

TEST_CASE("forward and inverse at known points") {
  CHECK(normalize_forward(0.0, spec(false, -kInf, -1, 1, kInf)) == doctest::Approx(0.5));
  CHECK(normalize_forward(0.5, spec(false, 0, 0, 1, 1)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(normalize_forward(0.0, spec(true, 0, 0, std::log(10.0), kInf)) == 1.0);
  CHECK(normalize_inverse(0.5, spec(false, -kInf, -1, 1, kInf)) == doctest::Approx(0.0).epsilon(1e-15));
  const auto ll = spec(true, 0, 0, std::log(10.0), kInf);
  CHECK(normalize_inverse(normalize_forward(2.3, ll), ll) == doctest::Approx(2.3).epsilon(1e-9));
  CHECK_THROWS_AS(normalize_inverse(0.0, ll), Error);  // loss -> +inf
  CHECK_THROWS_AS(normalize_forward(-0.1, ll), Error);
}

TEST_CASE("random roundtrips") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double ls = -2.0 + 4.0 * U(rng);
    const double us = ls + 0.05 + 3.0 * U(rng);
    const double lh = U(rng) < 0.3 ? -kInf : ls - 2.0 * U(rng);
    const double uh = U(rng) < 0.3 ? kInf : us + 2.0 * U(rng);
    const auto s = spec(U(rng) < 0.5, lh, ls, us, uh);
    // Within one soft width of the soft interval. Much further out the
    // output sits within machine epsilon of 0 or 1 and carries no information.
    const double lo = std::max(lh, ls - (us - ls));
    const double hi = std::min(uh, us + (us - ls));
    const double y = lo + (hi - lo) * U(rng);
    const Normalizer n(s);
    worst = std::max(worst, std::abs(n.inverse(n.forward(y)) - y));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("nearly linear on the soft interval when hard bounds are far") {
  const auto s = spec(false, -1e6, 0.0, 1.0, 1e6);
  const Normalizer n(s);
  const int K = 50;
  const double h = 1.0 / K;
  for (int i = 1; i < K; ++i) {
    const double d2 = n.forward((i + 1) * h) - 2 * n.forward(i * h) + n.forward((i - 1) * h);
    CHECK(std::abs(d2) <= 0.05 * h);
  }
}

TEST_CASE("spec validation") {
  CHECK_NOTHROW(spec(false, 0, 0, 1, 1).validate());
  CHECK_THROWS_AS(spec(false, 0.5, 0, 1, 1).validate(), Error);
  CHECK_THROWS_AS(spec(false, 0, 0, 1, 0.5).validate(), Error);
  CHECK_THROWS_AS(spec(false, 0, 1, 1, 2).validate(), Error);
  CHECK_THROWS_AS(spec(false, -kInf, -kInf, 1, 2).validate(), Error);
}
