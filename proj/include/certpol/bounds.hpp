#pragma once
// Distribution-free upper confidence bounds for a bounded mean: the
// Hoeffding-Bentkus bound (tight for two-point variables such as a binary
// loss times a weight) and a split-conformal quantile.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "certpol/error.hpp"

namespace certpol {

// Bernoulli KL divergence KL(a || q) with 0 log 0 = 0.
inline double kl_bernoulli(double a, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("kl_bernoulli: q must lie in (0,1)");
  if (!(a >= 0.0 && a <= 1.0)) throw DomainError("kl_bernoulli: a must lie in [0,1]");
  double out = 0.0;
  if (a > 0.0) out += a * std::log(a / q);
  if (a < 1.0) out += (1.0 - a) * std::log((1.0 - a) / (1.0 - q));
  return std::max(out, 0.0);
}

// P(Binomial(n, p) <= k).
//
// Terms are generated in log space by the ratio recurrence outward from the
// mode, so no lgamma of large arguments is needed. The lower sum is anchored
// at its own largest term and the total at the mode; terms more than
// exp(-60) below their anchor are dropped.
inline double binomial_cdf(long k, long n, double p) {
  if (n < 0) throw DomainError("binomial_cdf: n must be nonnegative");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binomial_cdf: p must lie in [0,1]");
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p == 0.0) return 1.0;
  if (p == 1.0) return 0.0;

  constexpr double kCut = 60.0;
  const double log_odds = std::log(p) - std::log1p(-p);
  auto step_up = [&](long i) {  // log t_{i+1} - log t_i
    return std::log(static_cast<double>(n - i)) - std::log(static_cast<double>(i + 1)) + log_odds;
  };
  const long mode = std::clamp(static_cast<long>(std::floor((static_cast<double>(n) + 1.0) * p)), 0L, n);

  // total mass relative to the mode term
  double total = 1.0;
  double lt = 0.0;
  for (long i = mode; i < n; ++i) {
    lt += step_up(i);
    if (lt < -kCut) break;
    total += std::exp(lt);
  }
  lt = 0.0;
  for (long i = mode; i > 0; --i) {
    lt -= step_up(i - 1);
    if (lt < -kCut) break;
    total += std::exp(lt);
  }

  // lower tail, anchored at its largest term t_top with top = min(k, mode)
  const long top = std::min(k, mode);
  double anchor = 0.0;
  for (long i = mode; i > top; --i) anchor -= step_up(i - 1);
  double lower = 1.0;
  lt = 0.0;
  for (long i = top; i < k; ++i) {
    lt += step_up(i);
    if (lt < -kCut) break;
    lower += std::exp(lt);
  }
  lt = 0.0;
  for (long i = top; i > 0; --i) {
    lt -= step_up(i - 1);
    if (lt < -kCut) break;
    lower += std::exp(lt);
  }
  return std::min(1.0, std::exp(anchor + std::log(lower) - std::log(total)));
}

// g(a; q) = min(exp(-n KL(a||q)), e * P(Binomial(n, q) <= ceil(n a))).
inline double bentkus_g(double a, double q, long n) {
  if (n < 1) throw DomainError("bentkus_g: n must be positive");
  const double hoeffding = std::exp(-static_cast<double>(n) * kl_bernoulli(a, q));
  // n*a that is an integer up to rounding must not round up to the next one
  const long k = static_cast<long>(std::ceil(static_cast<double>(n) * a - 1e-9));
  const double bentkus = std::numbers::e * binomial_cdf(k, n, q);
  return std::min(hoeffding, bentkus);
}

struct UcbInput {
  double mean = 0.0;  // empirical mean of the bounded variable
  long n = 1;
  double alpha = 0.1;
  double v_max = 1.0;  // the variable lies in [0, v_max]
};

inline constexpr double kUcbTolerance = 1e-9;

// v_max * sup{ q : g(mean / v_max; q, n) >= alpha }.
// For q <= mean/v_max the condition always holds, and g is non-increasing in
// q above that point, so bisection on [mean/v_max, 1 - 1e-12] finds the sup.
inline double bentkus_ucb(const UcbInput& in) {
  if (in.n < 1) throw DomainError("bentkus_ucb: n must be positive");
  if (!(in.alpha > 0.0 && in.alpha < 1.0)) throw DomainError("bentkus_ucb: alpha must lie in (0,1)");
  if (!(in.v_max > 0.0) || !std::isfinite(in.v_max)) throw DomainError("bentkus_ucb: v_max must be positive");
  if (!(in.mean >= 0.0)) throw DomainError("bentkus_ucb: mean must be nonnegative");
  const double a = std::min(in.mean / in.v_max, 1.0);
  double lo = a;
  double hi = 1.0 - 1e-12;
  if (lo >= hi) return in.v_max;
  if (bentkus_g(a, hi, in.n) >= in.alpha) return in.v_max;
  while (hi - lo > kUcbTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (bentkus_g(a, mid, in.n) >= in.alpha)
      lo = mid;
    else
      hi = mid;
  }
  return in.v_max * lo;
}

// The ceil((1-alpha)(l+1))-th smallest value; the maximum once that rank
// reaches l.
inline double conformal_quantile(std::span<const double> values, double alpha) {
  if (values.empty()) throw ArgumentError("conformal_quantile of an empty list");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("conformal_quantile: alpha must lie in (0,1)");
  const auto l = values.size();
  const double level = (1.0 - alpha) * static_cast<double>(l + 1);
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(level - 1e-9)));
  std::vector<double> v(values.begin(), values.end());
  if (rank >= l) return *std::max_element(v.begin(), v.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
  return v[rank - 1];
}

}  // namespace certpol
