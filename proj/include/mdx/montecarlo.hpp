#pragma once

#include <cstdint>

#include "mdx/bounds.hpp"
#include "mdx/channel.hpp"

namespace mdx {

// Which codebook distribution the simulated encoder draws from.
enum class CodebookEnsemble { iid, constant_composition, cost };

struct McQuery {
  ChannelTriple triple;
  long long n = 1;
  double M = 2.0;  // codeword count, integer-valued, >= 1 (M = 1 never errs)
  CodebookEnsemble ensemble = CodebookEnsemble::iid;
  CostEnsembleSpec cost;  // consulted by the cost ensemble only
  long long trials = 10000;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: use hardware concurrency
};

struct McResult {
  double estimate = 0.0;  // errors / trials
  double ci95 = 0.0;      // normal-approximation 95% half-width
  long long errors = 0;
  long long trials = 0;
  std::uint64_t seed = 0;
};

// Estimates the block error probability of the max-metric decoder with
// uniform tie-breaking: each trial draws a fresh codebook of M words from the
// chosen ensemble, sends word 0, and decodes.  Every trial derives all of its
// randomness from a counter-based generator keyed by (seed, trial index), and
// error counts are integers, so the result is bit-identical for any thread
// count.  The constant-composition ensemble permutes the largest-remainder
// type of Q (letter counts within 1/n of n Q); the cost ensemble redraws iid
// words until every cost window is met and throws std::runtime_error
// ("rejection rate too high...") when fewer than 1 in 10^4 draws qualify.
McResult montecarlo_pe(const McQuery& query);

}  // namespace mdx
