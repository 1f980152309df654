#include "mdx/saddlepoint.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mdx/bounds.hpp"
#include "mdx/exponents.hpp"
#include "mdx/numerics.hpp"
#include "mdx/rates.hpp"

namespace mdx {

namespace {

// log SUM_{i in [i_min, i_max]} e^{b (gamma + i h)} h phi(gamma + i h; mu, s2):
// the lattice-smoothed weighted Gaussian.  The log terms form a downward
// parabola in i, summed by the truncated quadratic accumulator.
double log_lattice_sum(double b, double gamma, double h, double mu, double s2,
                       long long i_min, long long i_max) {
  const double d = gamma - mu;
  const double b0 = b * gamma + std::log(h) -
                    0.5 * std::log(2.0 * kPi * s2) - d * d / (2.0 * s2);
  const double b1 = b * h - d * h / s2;
  const double b2 = -h * h / (2.0 * s2);
  return log_quadratic_sum(b0, b1, b2, i_min, i_max);
}

void check_curvature(const SaddlepointParams& p) {
  if (!(p.c2 > 0.0))
    throw std::runtime_error(
        "degenerate curvature: the prefactor needs c2 > 0 (the tilted "
        "density has zero variance)");
}

void check_sharp(const SaddlepointParams& p) {
  if (!p.c3_ok || !(p.c3 > 0.0))
    throw std::runtime_error(
        "singular triple: the sharpened prefactor needs a positive "
        "reverse-metric variance c3; use the plain union bounds");
}

// Split point of the sharpened prefactor, log(sqrt(2 pi n c3) / psi).
double sharp_split(const SaddlepointParams& p) {
  return 0.5 * std::log(2.0 * kPi * static_cast<double>(p.n) * p.c3) -
         std::log(p.psi);
}

double log_alpha(const SaddlepointParams& p) {
  const double mu = static_cast<double>(p.n) * p.c1;
  const double s2 = static_cast<double>(p.n) * p.c2;
  const double rho = p.rho_hat;
  if (p.lattice.kind == LatticeInfo::Kind::lattice) {
    const double h = p.lattice.span;
    const double above =
        log_lattice_sum(-rho, p.gamma_n, h, mu, s2, 0, LLONG_MAX);
    const double below =
        log_lattice_sum(1.0 - rho, p.gamma_n, h, mu, s2, LLONG_MIN, -1);
    return log_add(above, below);
  }
  const double above = log_exp_gaussian_upper(0.0, -rho, mu, s2);
  const double below = log_exp_gaussian_lower(0.0, 1.0 - rho, mu, s2);
  return log_add(above, below);
}

double log_beta(const SaddlepointParams& p) {
  const double mu = static_cast<double>(p.n) * p.c1;
  const double s2 = static_cast<double>(p.n) * p.c2;
  const double rho = p.rho_hat;
  const double z0 = sharp_split(p);
  if (p.lattice.kind == LatticeInfo::Kind::lattice) {
    const double h = p.lattice.span;
    const double above =
        log_lattice_sum(-rho, p.gamma_n, h, mu, s2, p.i_star, LLONG_MAX);
    const double below = log_lattice_sum(1.0 - rho, p.gamma_n, h, mu, s2,
                                         LLONG_MIN, p.i_star - 1);
    return log_add(above, -z0 + below);
  }
  const double above = log_exp_gaussian_upper(z0, -rho, mu, s2);
  const double below = log_exp_gaussian_lower(z0, 1.0 - rho, mu, s2);
  return log_add(above, -z0 + below);
}

ApproxResult assemble(const ChannelTriple& t, double s, long long n, double M,
                      bool sharp) {
  if (n < 1) {
    std::ostringstream os;
    os << "approx: blocklength must be >= 1, got " << n;
    throw std::invalid_argument(os.str());
  }
  if (!(M > 1.0) || !std::isfinite(M))
    throw std::invalid_argument(
        "approx: codebook size must be a finite value > 1");
  const TiltedFamily fam = make_family(t, s);
  const double rate = std::log(M) / static_cast<double>(n);
  ApproxResult r;
  r.params = saddlepoint_params(fam, rate, n);
  check_curvature(r.params);
  if (sharp) check_sharp(r.params);
  const double log_pre = sharp ? log_beta(r.params) : log_alpha(r.params);
  r.prefactor = std::exp(log_pre);
  r.exponent = r.params.e0_value - r.params.rho_hat * rate;
  r.log_value = log_pre - static_cast<double>(n) * r.exponent;
  r.value = std::exp(r.log_value);
  r.branch = r.params.lattice.kind == LatticeInfo::Kind::lattice
                 ? PrefactorBranch::lattice
                 : PrefactorBranch::nonlattice;
  return r;
}

// Interior fixed-rate prefactor shared by the two kinds; gamma is gamma_n
// for the plain prefactor and the split-shifted representative for the
// sharpened one.
double interior_prefactor(const SaddlepointParams& p, double gamma) {
  const double n = static_cast<double>(p.n);
  const double rho = p.rho_hat;
  const double root = std::sqrt(2.0 * kPi * n * p.c2);
  if (p.lattice.kind == LatticeInfo::Kind::lattice) {
    const double h = p.lattice.span;
    const double plus = std::exp(-rho * gamma) / (-std::expm1(-rho * h));
    const double minus = std::exp((1.0 - rho) * gamma) *
                         std::exp(-(1.0 - rho) * h) /
                         (-std::expm1(-(1.0 - rho) * h));
    return h / root * (plus + minus);
  }
  return 1.0 / (root * rho * (1.0 - rho));
}

}  // namespace

double alpha_n(const SaddlepointParams& params) {
  check_curvature(params);
  return std::exp(log_alpha(params));
}

double beta_n(const SaddlepointParams& params) {
  check_curvature(params);
  check_sharp(params);
  return std::exp(log_beta(params));
}

ApproxResult rcus_hat(const ChannelTriple& t, double s, long long n,
                      double M) {
  return assemble(t, s, n, M, false);
}

ApproxResult rcuss_hat(const ChannelTriple& t, double s, long long n,
                       double M) {
  return assemble(t, s, n, M, true);
}

AsymptoticPrefactor exact_asymptotics_prefactor(const SaddlepointParams& params,
                                                PrefactorKind which) {
  check_curvature(params);
  if (which == PrefactorKind::beta) check_sharp(params);
  const double scale = std::max(
      {1.0, std::abs(params.crit_rate), std::abs(params.mean_density)});
  const double tol = 1e-9 * scale;
  const double rate = params.rate;
  const bool at_crit = std::abs(rate - params.crit_rate) <= tol;
  const bool at_mean = std::abs(rate - params.mean_density) <= tol;
  const bool below = !at_crit && rate < params.crit_rate;
  const bool above = !at_mean && rate > params.mean_density;

  AsymptoticPrefactor out;
  if (which == PrefactorKind::alpha) {
    if (below || above) {
      out.value = 1.0;
      return out;
    }
    if (at_crit || at_mean) {
      out.value = 0.5;
      return out;
    }
    out.value = interior_prefactor(params, params.gamma_n);
    out.diverges_at_endpoint = params.rho_hat * (1.0 - params.rho_hat) < 1e-6;
    return out;
  }

  const double sharp_weight =
      params.psi /
      std::sqrt(2.0 * kPi * static_cast<double>(params.n) * params.c3);
  if (below) {
    out.value = sharp_weight;
    return out;
  }
  if (at_crit) {
    out.value = 0.5 * sharp_weight;
    return out;
  }
  if (above) {
    out.value = 1.0;
    return out;
  }
  if (at_mean) {
    out.value = 0.5;
    return out;
  }
  double gamma = params.gamma_n;
  if (params.lattice.kind == LatticeInfo::Kind::lattice)
    gamma += static_cast<double>(params.i_star) * params.lattice.span -
             sharp_split(params);
  out.value = std::pow(sharp_weight, params.rho_hat) *
              interior_prefactor(params, gamma);
  out.diverges_at_endpoint = params.rho_hat * (1.0 - params.rho_hat) < 1e-6;
  return out;
}

double normal_approx_rate(const ChannelTriple& t, double s, long long n,
                          double eps, bool with_log_term) {
  if (n < 1) throw std::invalid_argument("approx: blocklength must be >= 1");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument(
        "approx: target error probability must lie in (0, 1)");
  const TiltedFamily fam = make_family(t, s);
  const Moments mom = moments(fam);
  const double nn = static_cast<double>(n);
  double rate =
      mom.mean - std::sqrt(mom.variance / nn) * gaussian_tail_inv(eps);
  if (with_log_term) rate += 0.5 * std::log(nn) / nn;
  return to_bits(rate);
}

double exponent_approx(const ChannelTriple& t, double rate, long long n) {
  if (n < 1) throw std::invalid_argument("approx: blocklength must be >= 1");
  const ExponentResult er = er_iid(t, std::max(0.0, rate));
  return std::exp(-static_cast<double>(n) * er.value);
}

double rate_for_epsilon(const std::function<double(double M)>& evaluator,
                        long long n, double eps, InversionMode mode) {
  if (n < 1)
    throw std::invalid_argument("inversion: blocklength must be >= 1");
  if (!(eps > 0.0 && eps < 1.0))
    throw std::invalid_argument(
        "inversion: target error probability must lie in (0, 1)");
  const double nn = static_cast<double>(n);
  auto feasible = [&](double M) { return evaluator(M) <= eps; };
  if (!feasible(2.0))
    throw std::runtime_error(
        "target unreachable: even the smallest codebook (M = 2) exceeds the "
        "target error probability");

  if (mode == InversionMode::integer_codebook) {
    // Bisect on log M (codebook sizes reach e^{O(n)}), then close the
    // remaining integer gap by walking, so small-M answers are exact.
    const double mu_cap = 700.0;
    auto candidate = [](double mu) {
      return std::max(2.0, std::floor(std::exp(mu)));
    };
    double lo = std::log(2.0);
    double hi = std::min(mu_cap, 4.0 * lo);
    while (feasible(candidate(hi))) {
      lo = hi;
      if (hi >= mu_cap) return to_bits(std::log(candidate(lo)) / nn);
      hi = std::min(mu_cap, 2.0 * hi);
    }
    while (hi - lo > 1e-9) {
      const double mid = 0.5 * (lo + hi);
      (feasible(candidate(mid)) ? lo : hi) = mid;
    }
    double best = candidate(lo);
    for (int walk = 0; walk < 64; ++walk) {
      const double next = best + 1.0;
      if (next == best || !feasible(next)) break;
      best = next;
    }
    return to_bits(std::log(best) / nn);
  }

  const double mu_cap = 700.0;
  double lo = std::log(2.0);
  double hi = std::min(mu_cap, 4.0 * lo);
  while (feasible(std::exp(hi))) {
    lo = hi;
    if (hi >= mu_cap) return to_bits(lo / nn);  // plateau guard
    hi = std::min(mu_cap, 2.0 * hi);
  }
  while (hi - lo > 1e-11 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (feasible(std::exp(mid)) ? lo : hi) = mid;
  }
  return to_bits(lo / nn);
}

double rate_for_epsilon(PeTarget target, const ChannelTriple& t, long long n,
                        double eps, const InversionOptions& opts) {
  if (target == PeTarget::normal) {
    const double s = opts.s ? *opts.s : gmi(t).s_star;
    return normal_approx_rate(t, s, n, eps, opts.with_log_term);
  }
  const double nn = static_cast<double>(n);
  auto tilt_for = [&](double M) {
    if (opts.s) return *opts.s;
    return er_iid(t, std::log(M) / nn).s;
  };
  std::function<double(double)> ev;
  InversionMode mode = InversionMode::integer_codebook;
  switch (target) {
    case PeTarget::rcu:
      ev = [&](double M) {
        BoundQuery q;
        q.triple = t;
        q.n = n;
        q.M = M;
        q.budget = opts.budget;
        return rcu_exact(q).value;
      };
      break;
    case PeTarget::rcus:
    case PeTarget::rcuss:
      ev = [&, target](double M) {
        BoundQuery q;
        q.triple = t;
        q.n = n;
        q.M = M;
        q.s = tilt_for(M);
        q.budget = opts.budget;
        return target == PeTarget::rcus ? rcus_exact(q).value
                                        : rcuss_exact(q).value;
      };
      break;
    case PeTarget::rcus_hat:
      mode = InversionMode::real_rate;
      ev = [&](double M) { return rcus_hat(t, tilt_for(M), n, M).value; };
      break;
    case PeTarget::rcuss_hat:
      mode = InversionMode::real_rate;
      ev = [&](double M) { return rcuss_hat(t, tilt_for(M), n, M).value; };
      break;
    case PeTarget::exponent:
      mode = InversionMode::real_rate;
      ev = [&](double M) { return exponent_approx(t, std::log(M) / nn, n); };
      break;
    case PeTarget::normal:
      break;  // handled above
  }
  return rate_for_epsilon(ev, n, eps, mode);
}

}  // namespace mdx
