#pragma once

#include <cstdint>
#include <vector>

namespace mdx {

// Lattice structure of a finite set of reals: does the set lie on
// offset + span * Z for some maximal span?
struct LatticeInfo {
  enum class Kind { lattice, nonlattice, degenerate };
  Kind kind = Kind::nonlattice;
  double span = 0.0;    // maximal lattice spacing (lattice only)
  double offset = 0.0;  // representative point reduced mod span, in [0, span)
};

// Detects whether the given points all lie on a common lattice.  The spacing
// is recovered by rational reconstruction of difference ratios (continued
// fractions, denominators up to max_denom) and then verified against every
// point with absolute tolerance tol.  A single distinct point yields
// Kind::degenerate.  Invariant under permutation and global shifts (the shift
// moves offset, never span).
LatticeInfo detect_lattice(const std::vector<double>& points, double tol = 1e-9,
                           long long max_denom = 1000000);

// Finitely supported distribution with sorted distinct support and positive
// masses in the linear domain.  Used for per-letter statistics and small
// exact convolutions.
struct DiscretePmf {
  std::vector<double> value;  // strictly increasing
  std::vector<double> mass;   // > 0, sums to ~1 for probability inputs

  // Collapses atoms whose values agree to within merge_tol (relative to the
  // value magnitude) and drops zero-mass atoms.  Throws on non-finite values
  // carrying positive mass.
  static DiscretePmf from_atoms(std::vector<std::pair<double, double>> atoms,
                                double merge_tol = 1e-12);

  size_t size() const { return value.size(); }
  double mean() const;
  double variance() const;
  double total_mass() const;
};

LatticeInfo detect_lattice(const DiscretePmf& p, double tol = 1e-9,
                           long long max_denom = 1000000);

// Exact sparse convolution (sum of independent variables).  Throws
// "state space too large" via std::runtime_error when the intermediate atom
// count would exceed the budget.
DiscretePmf convolve(const DiscretePmf& a, const DiscretePmf& b,
                     double merge_tol = 1e-12, size_t budget = 20000000);
DiscretePmf nfold(const DiscretePmf& p, long long n, double merge_tol = 1e-12,
                  size_t budget = 20000000);

// Distribution supported on origin + k * step for k = 0..size-1, with masses
// kept as logs so that astronomically small tail probabilities survive
// repeated convolution.  This is the workhorse for n-letter sums.
struct LatticePmf {
  double origin = 0.0;
  double step = 1.0;
  std::vector<double> logp;  // log masses; -inf marks empty cells

  size_t size() const { return logp.size(); }
  double value_at(size_t k) const { return origin + static_cast<double>(k) * step; }
  double log_total() const;

  // log P[S >= origin + k*step] for each k, plus one trailing entry (= -inf);
  // computed right-to-left.
  std::vector<double> log_suffix_sums() const;
};

enum class Rounding { nearest, down, up };

// Places a sparse pmf on the given lattice.  With Rounding::nearest the values
// must already sit on the lattice to within tol (used after detect_lattice);
// down/up produce the outward-rounded pmfs for certified bracketing.
LatticePmf on_lattice(const DiscretePmf& p, double step, Rounding mode,
                      double tol = 1e-9);

LatticePmf convolve(const LatticePmf& a, const LatticePmf& b);
LatticePmf nfold(const LatticePmf& p, long long n, size_t budget = 200000000);

}  // namespace mdx
