#pragma once

#include <vector>

#include "mdx/channel.hpp"
#include "mdx/matrix.hpp"
#include "mdx/pmf.hpp"

namespace mdx {

// The one-parameter (plus input-shift) exponential family at the heart of
// every computation here: for a tilt s >= 0 and input shift a(.),
//   density(x,y) = log [ q(x,y)^s e^{a(x)} / sum_x' Q(x') q(x',y)^s e^{a(x')} ].
// With a = 0 this is the generalized information density of the metric; the
// matched case q = W, s = 1, a = 0 recovers the usual information density.
struct TiltedFamily {
  ChannelTriple triple;
  double s = 1.0;
  std::vector<double> a;            // input shift (empty means all zero)
  Matrix log_numerator;             // s log q(x,y) + a(x); -inf where q = 0
  Matrix density;                   // -inf where q = 0
  std::vector<double> log_denominator;  // per output; -inf only for unreachable y
};

// Builds the family tables in the log domain.  Throws std::runtime_error when
// some reachable output has zero denominator (the metric vanishes on every
// supported input for that output).
TiltedFamily make_family(const ChannelTriple& t, double s,
                         const std::vector<double>& a = {});

struct Moments {
  double mean;           // E[density] under Q x W; -inf if the metric
                         // vanishes somewhere on the channel support
  double variance;       // Var[density]
  double cond_variance;  // E_x Var[density | X = x]
};
Moments moments(const TiltedFamily& f);

// E0(rho) = -log E[e^{-rho * density}] under Q x W.  Concave in rho.
double e0(const TiltedFamily& f, double rho);

struct E0Derivatives {
  double first;   // dE0/drho   = mean of density under the rho-tilted joint
  double second;  // d2E0/drho2 = -variance under the rho-tilted joint
};
E0Derivatives e0_derivatives(const TiltedFamily& f, double rho);

// Law of density(X, Y) under Q x W.  Throws when the density is -inf on a
// positive-probability cell (metric zero on the channel support).
DiscretePmf density_pmf(const TiltedFamily& f);

// E_{W(.|x)}[density(x, Y)] per input; the second auxiliary cost used when
// matching constant-composition performance with two cost constraints.
std::vector<double> conditional_mean_by_input(const TiltedFamily& f);

// Everything the finite-blocklength prefactors need, evaluated at a rate R
// (nats) and blocklength n.  rho_hat maximizes E0(rho) - rho R over [0,1];
// c1/c2/c3 are the associated location/curvature/conditional-variance
// constants.  The lattice data describe R - density(X,Y).
struct SaddlepointParams {
  double rho_hat = 0.0;
  double c1 = 0.0;       // R - E0'(rho_hat); negative below the critical rate,
                         // ~0 between it and the mean, positive above
  double c2 = 0.0;       // -E0''(rho_hat) > 0 for a nondegenerate density
  double c3 = 0.0;       // mean conditional variance of the reverse channel
                         // under the tilted output law; valid iff c3_ok
  double psi = 1.0;      // lattice correction for the sharpened bound
  LatticeInfo lattice;   // structure of R - density(X,Y)
  double gamma_n = 0.0;  // smallest nonnegative point of the n-letter lattice
  long long i_star = 0;  // first lattice index at or above the c3 split point
  long long n = 0;
  double rate = 0.0;     // nats
  double e0_value = 0.0;     // E0(rho_hat)
  double crit_rate = 0.0;    // E0'(1); rho_hat = 1 iff R <= this
  double mean_density = 0.0; // E0'(0); rho_hat = 0 iff R >= this
  double var_density = 0.0;  // variance of density under Q x W
  bool c3_ok = false;    // true when the triple is regular and nonsingular
};

// Computes the bundle above.  Throws std::runtime_error("degenerate
// statistic...") when the density has zero variance, making the curvature
// machinery meaningless.
SaddlepointParams saddlepoint_params(const TiltedFamily& f, double rate,
                                     long long n);

}  // namespace mdx
