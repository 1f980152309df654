#pragma once

#include <vector>

#include "mdx/channel.hpp"
#include "mdx/pmf.hpp"

namespace mdx {

// Exact finite-blocklength evaluation of the random-coding union bounds.
// All computations run in the log domain so that probabilities far below
// double-length underflow survive the n-letter convolutions.

// How the per-letter statistic is discretized for the n-letter sum.
//  automatic      pick exact paths (degenerate / lattice support / small
//                 sparse enumeration) when available, else the grid.
//  exact_lattice  require the support to lie on a lattice; error otherwise.
//  grid           quantize to a fixed step with outward rounding, yielding a
//                 certified [lower, upper] bracket.
enum class Quantization { automatic, exact_lattice, grid };

enum class BracketMode { point, certified };

struct BoundQuery {
  ChannelTriple triple;
  long long n = 1;        // blocklength, >= 1
  double M = 2.0;         // codeword count, integer-valued, >= 2
  double s = 1.0;         // metric power for the s-parameterized bounds
  Quantization quantization = Quantization::automatic;
  BracketMode bracket = BracketMode::point;
  double grid_step = 1e-4;  // per-letter step in grid mode (nats)
  double budget = 1e8;      // state-space guard for the two-statistic bound
};

// value is the reported probability (the certified upper end in grid mode);
// [lower, upper] always contains the true value; exact marks the
// quantization-free paths where lower == value == upper.
struct BoundResult {
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool exact = false;
};

// E[min{1, (M-1) e^{-sum_i density_s(x_i, y_i)}}] under (Q x W)^n: the
// s-parameterized union bound.  Requires s > 0 and a metric positive on the
// channel support (the density must be finite there).
BoundResult rcus_exact(const BoundQuery& query);

// E[min{1, (M-1) P[q^n(competitor, Y) >= q^n(X, Y) | X, Y]}]: the full
// union bound with the closed inequality.  Evaluated by dynamic programming
// over output compositions with per-class convolutions of the transmitted
// and competitor log-metric statistics.  Throws std::runtime_error("state
// space too large...") when the composition count times the grid size
// exceeds query.budget.
BoundResult rcu_exact(const BoundQuery& query);

// Sharpened s-parameterized bound: the multiplier (M-1) is replaced by
// M psi_s / sqrt(2 pi n c3), with psi_s and c3 taken from the tilted family
// at the tilt maximizing the exponent for rate log(M)/n.  Requires a
// nonsingular triple (the metric must distinguish reachable inputs for some
// output); throws std::runtime_error("singular triple...") otherwise.
BoundResult rcuss_exact(const BoundQuery& query);

// Cost-constrained codeword set: per-letter cost vectors, their means under
// Q, and the admissible window delta.
struct CostEnsembleSpec {
  std::vector<std::vector<double>> costs;
  double delta = 0.0;
  std::vector<double> phi;  // means under Q; validated against Q to 1e-12
};

// P[|sum_i a_l(X_i) - n phi_l| <= delta for all l] under Q^n: the share of
// iid codewords meeting every cost constraint.  Computed exactly by
// enumerating input types (the cost sums depend on the letter counts only);
// throws std::runtime_error("state space too large...") when the type count
// exceeds the internal budget.
double mu_n(const CostEnsembleSpec& spec, const std::vector<double>& Q,
            long long n);

}  // namespace mdx
