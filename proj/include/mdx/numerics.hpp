#pragma once

#include <cmath>
#include <limits>
#include <vector>

// Log-domain arithmetic and Gaussian tail utilities shared by all modules.
// Everything works in natural logarithms; conversion to bits happens at the
// presentation layer only.

namespace mdx {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kLog2 = 0.69314718055994530941723212145818;
inline constexpr double kPi = 3.14159265358979323846264338327950;

inline double to_bits(double nats) { return nats / kLog2; }
inline double to_nats(double bits) { return bits * kLog2; }

// log(e^a + e^b) without overflow.
double log_add(double a, double b);

// log(e^a - e^b); requires a >= b.
double log_sub(double a, double b);

// log(1 - e^{-x}) for x > 0, accurate for both small and large x.
double log1mexp(double x);

// log(sum_i e^{v_i}); returns -inf on an empty list.
double log_sum_exp(const std::vector<double>& v);

// Streaming log-sum-exp accumulator (single pass, running max with rescale).
class LogAccumulator {
 public:
  void add(double log_term);
  double result() const;

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;  // sum of e^{term - max_}
};

// Gaussian upper tail Q(z) = P[N(0,1) > z] and friends.  The log version is
// accurate (relative error < 1e-12) over |z| <= 40 where the plain value
// underflows far earlier.
double gaussian_tail(double z);
double gaussian_tail_log(double z);
double gaussian_tail_inv(double p);          // Q^{-1}(p), p in (0,1)
double gaussian_tail_inv_log(double log_p);  // Q^{-1}(e^{log_p}), Newton on the log tail

// log of the standard normal density evaluated at (z - mu)/sigma, i.e.
// log phi(z; mu, sigma^2).
double gaussian_logpdf(double z, double mu, double var);

// Closed form for log of  integral_a^inf e^{b z} phi(z; mu, var) dz
//   = mu b + var b^2 / 2 + log Q((a - mu - b var)/sigma),
// evaluated as a single log-domain expression so the two factors may
// individually overflow/underflow.
double log_exp_gaussian_upper(double a, double b, double mu, double var);

// Same for integral_{-inf}^a e^{b z} phi(z; mu, var) dz.
double log_exp_gaussian_lower(double a, double b, double mu, double var);

// log of  sum over integers i in [i_min, i_max] of e^{b0 + b1 i + b2 i^2},
// with b2 < 0.  The sum is truncated to |i - peak| <= 40 standard units of the
// Gaussian profile (plus slack), which bounds the neglected mass below 1e-300
// relative.  Pass LLONG_MIN / LLONG_MAX for unbounded ends.
double log_quadratic_sum(double b0, double b1, double b2, long long i_min,
                         long long i_max);

// Relative / absolute tolerance comparison helpers.
inline bool nearly_equal(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace mdx
