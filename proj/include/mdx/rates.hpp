#pragma once

#include <optional>
#include <vector>

#include "mdx/channel.hpp"

namespace mdx {

// Achievable-rate computations for mismatched decoding with a fixed input
// distribution.  All rates are in nats.
struct RateResult {
  double value = 0.0;           // the rate (clamped at 0 when the
                                // optimized objective is nonpositive)
  double s_star = 0.0;          // optimal tilt
  std::vector<double> a_star;   // optimal input shift (empty for the
                                // shift-free objective)
  double kkt_residual = 0.0;    // stationarity diagnostic at the optimum:
                                // see kkt_residual_lm below
  std::optional<double> primal_upper;  // certified upper bound when computed
};

// Generalized mutual information: sup_{s >= 0} E[density_s].  Returns 0 with
// s_star = 0 when no tilt achieves a positive objective.
RateResult gmi(const ChannelTriple& t);

// The shift-augmented rate: sup_{s >= 0, a} E[density_{s,a}].  Always at
// least gmi(t).value (up to solver tolerance); a_star is normalized to zero
// mean under Q.
RateResult lm_rate(const ChannelTriple& t);

// Certified upper bound on lm_rate via the equivalent constrained-coupling
// minimization: min I(X;Y) over joints whose X-marginal is Q, whose
// Y-marginal matches the channel output law, and which score at least as
// high under the metric as the true joint.  The returned value is the mutual
// information of an exactly feasible coupling, so it can never undercut the
// true minimum.  `trials` controls the number of optimizer restarts.
double lm_primal_upper(const ChannelTriple& t, int trials = 10);

// Stationarity diagnostic for a given (s, a): the maximum over supported
// inputs x' of |E_{P_Y}[exp(density(x', Y))] - 1| plus the spread of the
// per-input conditional mean densities.  Both terms vanish exactly when
// (Q, a) jointly maximize the shift-augmented rate; for a fixed suboptimal Q
// only the first term is expected to vanish at the (s, a) optimum.
double kkt_residual_lm(const ChannelTriple& t, double s,
                       const std::vector<double>& a);

}  // namespace mdx
