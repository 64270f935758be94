// SPDX-License-Identifier: Apache-2.0
#include "lcx/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "lcx/error.hpp"

namespace lcx {

namespace {

// Exact at +-infinity (returns 1 / 0), no overflow for large |x|.
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// sigmoid(hi) - sigmoid(lo) without cancellation when both are saturated high.
double sigmoid_gap(double hi, double lo) {
  if (lo >= 0.0) return sigmoid(-lo) - sigmoid(-hi);
  return sigmoid(hi) - sigmoid(lo);
}

}  // namespace

void NormalizationSpec::validate() const {
  if (std::isnan(l_hard) || std::isnan(u_hard) || !std::isfinite(l_soft) || !std::isfinite(u_soft))
    throw_config("normalization soft bounds must be finite and hard bounds non-NaN");
  if (!(l_hard <= l_soft && l_soft < u_soft && u_soft <= u_hard))
    throw_config("normalization bounds must satisfy l_hard <= l_soft < u_soft <= u_hard");
}

TransformCoefficients derive_coefficients(const NormalizationSpec& spec) {
  if (!(spec.l_soft < spec.u_soft)) throw_numeric("normalization requires l_soft < u_soft");
  spec.validate();
  TransformCoefficients k;
  const double width = spec.u_soft - spec.l_soft;
  k.a = 2.0 / width;
  k.b = -(spec.u_soft + spec.l_soft) / width;
  // Infinite hard bounds give affine arguments of +-inf; sigmoid() returns the
  // exact limits 0 and 1 there.
  const double lo_arg = std::isinf(spec.l_hard) ? -INFINITY : k.a * spec.l_hard + k.b;
  const double hi_arg = std::isinf(spec.u_hard) ? INFINITY : k.a * spec.u_hard + k.b;
  k.c = 1.0 / sigmoid_gap(hi_arg, lo_arg);
  k.d = -k.c * sigmoid(lo_arg);
  return k;
}

Normalizer::Normalizer(const NormalizationSpec& spec) : spec_(spec), coef_(derive_coefficients(spec)) {}

double Normalizer::forward(double y_raw) const {
  if (std::isnan(y_raw) || y_raw < spec_.l_hard || y_raw > spec_.u_hard)
    throw_numeric("value " + std::to_string(y_raw) + " lies outside the hard bounds");
  double v;
  if (y_raw == spec_.l_hard) {
    v = 0.0;
  } else if (y_raw == spec_.u_hard) {
    v = 1.0;
  } else {
    v = std::clamp(coef_.c * sigmoid(coef_.a * y_raw + coef_.b) + coef_.d, 0.0, 1.0);
  }
  return spec_.minimize ? 1.0 - v : v;
}

double Normalizer::inverse(double y_norm) const {
  if (std::isnan(y_norm) || y_norm < 0.0 || y_norm > 1.0)
    throw_numeric("normalized value must lie in [0,1]");
  const double v = spec_.minimize ? 1.0 - y_norm : y_norm;
  if (v == 0.0 || v == 1.0) {
    const double bound = v == 0.0 ? spec_.l_hard : spec_.u_hard;
    if (std::isinf(bound)) throw_numeric("normalized endpoint maps to an infinite hard bound");
    return bound;
  }
  const double shifted = v - coef_.d;
  const double logit = std::log(shifted / (coef_.c - shifted));
  const double x = (logit - coef_.b) / coef_.a;
  return std::clamp(x, spec_.l_hard, spec_.u_hard);
}

double normalize_forward(double y_raw, const NormalizationSpec& spec) { return Normalizer(spec).forward(y_raw); }

double normalize_inverse(double y_norm, const NormalizationSpec& spec) { return Normalizer(spec).inverse(y_norm); }

}  // namespace lcx
