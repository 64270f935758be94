// SPDX-License-Identifier: Apache-2.0
//
// Invertible generalized-logistic map from raw metric values (accuracy,
// error rate, log loss, ...) into the increasing [0,1] curve convention.
#pragma once

#include <limits>

namespace lcx {

/// Bounds l_hard <= l_soft < u_soft <= u_hard; hard bounds may be infinite.
/// `minimize` reflects the map so that lower raw values map higher.
struct NormalizationSpec {
  bool minimize = false;
  double l_hard = 0.0;
  double u_hard = 1.0;
  double l_soft = 0.0;
  double u_soft = 1.0;

  /// Throws a config Error when the ordering invariant is violated.
  void validate() const;

  friend bool operator==(const NormalizationSpec&, const NormalizationSpec&) = default;
};

/// y = c * sigmoid(a * x + b) + d before reflection.
struct TransformCoefficients {
  double a = 1.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;
};

TransformCoefficients derive_coefficients(const NormalizationSpec& spec);

/// Raw value -> [0,1]. Throws a numeric Error outside the hard bounds.
double normalize_forward(double y_raw, const NormalizationSpec& spec);

/// [0,1] -> raw value. Endpoints map to the hard bounds; an endpoint whose
/// hard bound is infinite throws a numeric Error.
double normalize_inverse(double y_norm, const NormalizationSpec& spec);

/// Same maps with precomputed coefficients, for hot loops.
class Normalizer {
 public:
  explicit Normalizer(const NormalizationSpec& spec);

  double forward(double y_raw) const;
  double inverse(double y_norm) const;

  const NormalizationSpec& spec() const { return spec_; }
  const TransformCoefficients& coefficients() const { return coef_; }

 private:
  NormalizationSpec spec_;
  TransformCoefficients coef_;
};

}  // namespace lcx
