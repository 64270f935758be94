// SPDX-License-Identifier: Apache-2.0
#include "lcx/predictive.hpp"

namespace lcx {

namespace {
template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;
}  // namespace

double log_density(const Predictive& ppd, double y) {
  return std::visit(overloaded{[y](const pfn::DiscretePPD& d) { return pfn::ppd_loglik(d, y); },
                               [y](const MixturePPD& m) { return mixture_logpdf(m, y); }},
                    ppd);
}

double quantile(const Predictive& ppd, double q) {
  return std::visit(overloaded{[q](const pfn::DiscretePPD& d) { return pfn::ppd_quantile(d, q); },
                               [q](const MixturePPD& m) { return mixture_quantile(m, q); }},
                    ppd);
}

double exceed_prob(const Predictive& ppd, double threshold) {
  return std::visit(overloaded{[threshold](const pfn::DiscretePPD& d) { return pfn::ppd_exceed_prob(d, threshold); },
                               [threshold](const MixturePPD& m) { return mixture_exceed_prob(m, threshold); }},
                    ppd);
}

}  // namespace lcx
