#pragma once

#include <functional>
#include <optional>

#include "mdx/channel.hpp"
#include "mdx/tilted.hpp"

namespace mdx {

// Closed-form approximations of the finite-blocklength union bounds: the
// bound value is factored as prefactor * exp(-n * exponent) where the
// exponent is the fixed-s random-coding exponent E0(rho_hat) - rho_hat * R
// and the prefactor is a Gaussian-weighted correction evaluated either as
// two tail integrals (non-lattice statistic) or as two lattice sums.

enum class PrefactorBranch { nonlattice, lattice };

struct ApproxResult {
  double value = 0.0;      // prefactor * exp(-n * exponent); 0 on underflow
  double log_value = 0.0;  // log(prefactor) - n * exponent, always finite
  double prefactor = 0.0;  // > 0
  double exponent = 0.0;   // E0(rho_hat) - rho_hat * R, nats
  PrefactorBranch branch = PrefactorBranch::nonlattice;
  SaddlepointParams params;
};

// Gaussian-smoothed prefactor for the plain s-parameterized union bound.
// Non-lattice branch: the two exponentially weighted Gaussian tail
// integrals split at zero, each reduced in closed form to
// exp(mu b + sigma^2 b^2 / 2) * Q(.) and accumulated in the log domain.
// Lattice branch: the matching sums over the points gamma_n + i h,
// truncated to indices within 40 standard deviations of the quadratic
// peak.  Throws std::runtime_error("degenerate ...") when c2 <= 0.
double alpha_n(const SaddlepointParams& params);

// Sharpened prefactor: the positive-side integral starts at the split
// point log(sqrt(2 pi n c3) / psi) and the negative side carries the
// multiplier psi / sqrt(2 pi n c3) (lattice: split index i_star).  Throws
// std::runtime_error("singular triple ...") when c3 is unavailable and
// "degenerate ..." when c2 <= 0.
double beta_n(const SaddlepointParams& params);

// alpha_n(params) * exp(-n * (E0 - rho_hat R)) at R = log(M) / n, with the
// branch chosen by the lattice structure of R - density(X, Y).  Requires
// M > 1 and a density with positive variance ("degenerate statistic").
ApproxResult rcus_hat(const ChannelTriple& t, double s, long long n, double M);

// beta_n variant approximating the sharpened bound; additionally requires a
// nonsingular triple ("singular triple ...").
ApproxResult rcuss_hat(const ChannelTriple& t, double s, long long n,
                       double M);

// Fixed-rate limits of the prefactors: 1 outside [crit_rate, mean_density],
// 1/2 at the two endpoints, and the explicit interior formulas (which
// divergence as rho_hat approaches 0 or 1, reported by the flag when
// rho_hat (1 - rho_hat) < 1e-6).  beta additionally carries the
// psi / sqrt(2 pi n c3) weighting below the critical rate and the
// (psi / sqrt(2 pi n c3))^rho_hat factor in the interior.
enum class PrefactorKind { alpha, beta };

struct AsymptoticPrefactor {
  double value = 0.0;
  bool diverges_at_endpoint = false;
};

AsymptoticPrefactor exact_asymptotics_prefactor(const SaddlepointParams& params,
                                                PrefactorKind which);

// Second-order (dispersion) rate estimate in bits per use:
//   (I_s - sqrt(U_s / n) Qinv(eps) + [log(n) / (2n) if with_log_term]) / log 2
// with I_s and U_s the mean and variance of the density at tilt s under the
// channel law.  Requires eps in (0, 1).
double normal_approx_rate(const ChannelTriple& t, double s, long long n,
                          double eps, bool with_log_term);

// Error-exponent estimate e^{-n Er(R)} with Er the iid random-coding
// exponent at rate R (nats); equals 1 at and above the best achievable rate.
double exponent_approx(const ChannelTriple& t, double rate, long long n);

// Largest rate log(M)/n (bits per use) whose error evaluation stays <= eps.
// integer_codebook bisects over integer codebook sizes M >= 2 (for the
// exact bounds); real_rate bisects the rate continuously (for the
// approximations).  The evaluator maps M to an error probability and must
// be nondecreasing in M.  Throws std::runtime_error("target unreachable...")
// when even M = 2 misses the target.
enum class InversionMode { integer_codebook, real_rate };

double rate_for_epsilon(const std::function<double(double M)>& evaluator,
                        long long n, double eps, InversionMode mode);

// Convenience dispatch over the bounds and approximations implemented here
// and in the exact-bounds module.  The tilt is re-optimized for the error
// exponent at every probed rate unless pinned; the normal approximation
// instead uses the tilt achieving the best first-order rate.
enum class PeTarget { rcu, rcus, rcuss, rcus_hat, rcuss_hat, exponent, normal };

struct InversionOptions {
  std::optional<double> s;     // pin the tilt instead of per-rate optimization
  double budget = 1e8;         // forwarded to the exact bounds
  bool with_log_term = false;  // normal approximation third-order term
};

double rate_for_epsilon(PeTarget target, const ChannelTriple& t, long long n,
                        double eps, const InversionOptions& opts = {});

}  // namespace mdx
