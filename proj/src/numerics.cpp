#include "mdx/numerics.hpp"

#include <algorithm>
#include <climits>
#include <stdexcept>

namespace mdx {

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (b > a) throw std::domain_error("log_sub: negative difference");
  if (a == b) return kNegInf;
  return a + log1mexp(a - b);
}

double log1mexp(double x) {
  if (x <= 0) throw std::domain_error("log1mexp: argument must be positive");
  // Split at ln 2 for accuracy (Maechler's rule).
  if (x <= kLog2) return std::log(-std::expm1(-x));
  return std::log1p(-std::exp(-x));
}

double log_sum_exp(const std::vector<double>& v) {
  LogAccumulator acc;
  for (double t : v) acc.add(t);
  return acc.result();
}

void LogAccumulator::add(double log_term) {
  if (log_term == kNegInf) return;
  if (log_term <= max_) {
    sum_ += std::exp(log_term - max_);
  } else {
    sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
    max_ = log_term;
  }
}

double LogAccumulator::result() const {
  if (max_ == kNegInf) return kNegInf;
  return max_ + std::log(sum_);
}

double gaussian_tail(double z) { return 0.5 * std::erfc(z * M_SQRT1_2); }

namespace {

// Mills-ratio continued fraction: Q(z) = phi(z) / (z + 1/(z + 2/(z + ...))),
// evaluated bottom-up.  Converges rapidly for z >= ~6.
double mills_log(double z) {
  double cf = 0.0;
  for (int k = 80; k >= 1; --k) cf = static_cast<double>(k) / (z + cf);
  cf = 1.0 / (z + cf);
  return -0.5 * z * z - 0.5 * std::log(2.0 * M_PI) + std::log(cf);
}

}  // namespace

double gaussian_tail_log(double z) {
  if (z < 15.0) return std::log(gaussian_tail(z));
  return mills_log(z);
}

double gaussian_tail_inv(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("gaussian_tail_inv: p outside (0,1)");
  if (p == 0.5) return 0.0;  // median, exact
  return gaussian_tail_inv_log(std::log(p));
}

double gaussian_tail_inv_log(double log_p) {
  if (!(log_p < 0.0))
    throw std::domain_error("gaussian_tail_inv_log: log p must be negative");
  if (log_p < -850.0)
    throw std::domain_error("gaussian_tail_inv_log: target beyond |z| <= 40 range");
  // Bracket, bisect on the monotone log tail, then polish with Newton using
  // d/dz log Q(z) = -phi(z)/Q(z).
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    if (gaussian_tail_log(mid) > log_p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {
    double lq = gaussian_tail_log(z);
    double lphi = -0.5 * z * z - 0.5 * std::log(2.0 * M_PI);
    double step = (lq - log_p) * std::exp(lq - lphi);
    if (!std::isfinite(step)) break;
    z += step;
  }
  return z;
}

double gaussian_logpdf(double z, double mu, double var) {
  double d = z - mu;
  return -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
}

double log_exp_gaussian_upper(double a, double b, double mu, double var) {
  double sigma = std::sqrt(var);
  return mu * b + 0.5 * var * b * b +
         gaussian_tail_log((a - mu - b * var) / sigma);
}

double log_exp_gaussian_lower(double a, double b, double mu, double var) {
  double sigma = std::sqrt(var);
  // integral_{-inf}^a = e^{mu b + var b^2/2} (1 - Q((a-mu-b var)/sigma)) and
  // 1 - Q(x) = Q(-x).
  return mu * b + 0.5 * var * b * b +
         gaussian_tail_log(-(a - mu - b * var) / sigma);
}

double log_quadratic_sum(double b0, double b1, double b2, long long i_min,
                         long long i_max) {
  if (!(b2 < 0.0))
    throw std::domain_error("log_quadratic_sum: quadratic coefficient must be negative");
  if (i_min > i_max) return kNegInf;
  // The exponent g(i) = b0 + b1 i + b2 i^2 is concave with vertex at `peak`,
  // so its maximum over [i_min, i_max] sits at the clamped vertex.  Keep every
  // term within `drop` nats of that maximum: g(i) >= g_max - drop describes an
  // interval around the vertex of radius sqrt((g(peak) - g_max + drop)/(-b2)),
  // which also handles a vertex far outside the summation range (40 standard
  // units of the Gaussian profile corresponds to drop = 800).
  constexpr double drop = 800.0;
  auto g = [&](double i) { return b0 + b1 * i + b2 * i * i; };
  double peak = -b1 / (2.0 * b2);
  double clamped = std::min(std::max(peak, static_cast<double>(i_min)),
                            static_cast<double>(i_max));
  double g_max = g(clamped);
  double radius = std::sqrt((g(peak) - g_max + drop) / (-b2)) + 2.0;
  long long lo = i_min, hi = i_max;
  double wlo = std::floor(peak - radius);
  double whi = std::ceil(peak + radius);
  if (wlo > static_cast<double>(lo) && wlo < static_cast<double>(LLONG_MAX))
    lo = static_cast<long long>(wlo);
  if (whi < static_cast<double>(hi) && whi > static_cast<double>(LLONG_MIN))
    hi = static_cast<long long>(whi);
  if (lo > hi) return kNegInf;
  LogAccumulator acc;
  for (long long i = lo; i <= hi; ++i) {
    double di = static_cast<double>(i);
    acc.add(b0 + b1 * di + b2 * di * di);
  }
  return acc.result();
}

}  // namespace mdx
