#pragma once

#include <vector>

#include "mdx/channel.hpp"

namespace mdx {

// Random-coding error exponents for three codeword ensembles sharing one
// input distribution Q:
//   * iid                  - codeword letters drawn independently from Q;
//   * constant_composition - codewords constrained to the type of Q;
//   * cost                 - iid conditioned on per-letter auxiliary-cost
//                            sums staying near their means (L cost vectors).
// Each exponent is computed in dual form: maximize over a tilt rho in [0,1]
// and inner parameters (metric power s, shifts, multipliers) of an
// E0-style objective minus rho * rate.  All rates and values are in nats.

// One exponent evaluation.  Fields beyond `value` report the maximizer; the
// vectors are filled only when the corresponding ensemble uses them.
struct ExponentResult {
  double value = 0.0;          // exponent, >= 0
  double rho = 0.0;            // maximizing tilt in [0, 1]
  double s = 0.0;              // maximizing metric power
  std::vector<double> a;       // per-input shift / auxiliary-cost maximizer
  std::vector<double> r;       // transmitted-side multipliers (cost ensemble)
  std::vector<double> rbar;    // competitor-side multipliers (cost ensemble)
};

enum class Ensemble { iid, constant_composition, cost };

// Constraint bundle for the primal oracle below.  For the cost ensemble the
// per-input cost vectors define the linear constraints; means are taken
// under Q.
struct EnsembleConstraints {
  Ensemble kind = Ensemble::iid;
  std::vector<std::vector<double>> costs;
};

// E0 objective at fixed parameters:
//   -log E[ ( E[q(X',Y)^s e^{competitor_shift(X')} | Y]
//             / (q(X,Y)^s e^{transmitted_shift(X)}) )^rho ]
// with (X, Y) ~ Q x W and X' ~ Q independent of (X, Y).  Empty shift vectors
// mean all-zero.  Returns 0 at rho = 0 and -inf when the metric vanishes on
// a channel support cell (the ratio is unbounded there).
double e0_shifted(const ChannelTriple& triple, double rho, double s,
                  const std::vector<double>& transmitted_shift = {},
                  const std::vector<double>& competitor_shift = {});

// Constant-composition form of the objective: the expectation over the
// transmitted letter is taken outside the logarithm and one shift a(.)
// appears on both sides,
//   E_X[ -log E[ (E[q(X',Y)^s e^{a(X')} | Y] / (q(X,Y)^s e^{a(X)}))^rho | X] ].
// Always >= e0_shifted at the same (s, a, a) by convexity of -log.
double e0_constant_composition(const ChannelTriple& triple, double rho,
                               double s, const std::vector<double>& a);

// iid-ensemble exponent: max_rho sup_s e0_shifted(rho, s) - rho * rate.
// Positive exactly for rates below gmi(Q) (up to solver tolerance).
ExponentResult er_iid(const ChannelTriple& triple, double rate);

// Constant-composition exponent: max_rho sup_{s,a} of the
// expectation-outside-log objective minus rho * rate.  Dominates every cost
// ensemble and stays positive up to the shift-augmented rate.
ExponentResult er_cc(const ChannelTriple& triple, double rate);

// Cost ensemble with fixed cost vectors: max_rho sup over s and one
// multiplier pair (r_l, rbar_l) per cost of e0_shifted with
//   transmitted_shift(x) = sum_l r_l    (a_l(x) - mean_Q a_l)
//   competitor_shift(x)  = sum_l rbar_l (a_l(x) - mean_Q a_l).
// An empty cost list reduces exactly to er_iid.
ExponentResult er_cost(const ChannelTriple& triple, double rate,
                       const std::vector<std::vector<double>>& costs);

// Single-cost variant with the multipliers pinned to 1 on both sides (the
// shift a1 enters the density directly): max_rho sup_s only.  a1 = 0
// reduces to er_iid.
ExponentResult er_cost_prime(const ChannelTriple& triple, double rate,
                             const std::vector<double>& a1);

// Conveniences that optimize the auxiliary cost itself.
ExponentResult er_cost_prime_opt(const ChannelTriple& triple, double rate);
ExponentResult er_cost_opt1(const ChannelTriple& triple, double rate);

// The two cost vectors that make the L = 2 cost ensemble match the
// constant-composition exponent: built from an er_cc maximizer (rho, s, a)
// as
//   a1(x) = a(x) + (1/rho) log sum_y W(y|x) e^{-rho * density_{s,a}(x,y)}
//   a2(x) = a(x),
// used with the multiplier corner r = (1, 0), rbar = (0, 1).  Requires a
// triple whose metric is positive on the channel support.
std::vector<std::vector<double>> cc_matching_costs(const ChannelTriple& triple,
                                                   const ExponentResult& cc);

// Primal oracle: numerically minimizes
//   D(P || Q x W) + [ D(Ptilde || Q x P_Y) - rate ]^+
// over the joint PMFs (P, Ptilde) admitted by the ensemble (marginal, cost
// and metric-dominance constraints).  Every candidate evaluated is exactly
// feasible, so the returned value is a certified upper bound on the
// corresponding dual exponent.  Throws std::invalid_argument("infeasible
// spec...") on malformed constraint input (wrong cost dimensions or
// non-finite entries).
double er_primal_upper(const ChannelTriple& triple, double rate,
                       const EnsembleConstraints& constraints);

}  // namespace mdx
