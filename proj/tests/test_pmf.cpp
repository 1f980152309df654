// Tests for finite-support distributions: lattice detection, sparse exact
// convolution, and the log-domain lattice representation used for n-letter
// sums.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mdx/channel.hpp"
#include "mdx/numerics.hpp"
#include "mdx/pmf.hpp"
#include "mdx/tilted.hpp"

using namespace mdx;

namespace {

double binom_log_pmf(long long n, long long k, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
         k * std::log(p) + (n - k) * std::log1p(-p);
}

}  // namespace

TEST_CASE("from_atoms sorts, merges, and validates") {
  DiscretePmf p = DiscretePmf::from_atoms(
      {{0.5, 0.25}, {-1.0, 0.5}, {0.5 + 1e-15, 0.25}});
  REQUIRE(p.size() == 2);
  CHECK(p.value[0] == doctest::Approx(-1.0));
  CHECK(p.value[1] == doctest::Approx(0.5));
  CHECK(p.mass[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::is_sorted(p.value.begin(), p.value.end()));

  // Zero-mass atoms disappear; non-finite values with mass are rejected.
  DiscretePmf z = DiscretePmf::from_atoms({{1.0, 1.0}, {2.0, 0.0}});
  CHECK(z.size() == 1);
  CHECK_THROWS_AS(DiscretePmf::from_atoms(
                      {{std::numeric_limits<double>::infinity(), 0.5},
                       {0.0, 0.5}}),
                  std::invalid_argument);
}

TEST_CASE("mean and variance match direct accumulation") {
  DiscretePmf p = DiscretePmf::from_atoms(
      {{-2.0, 0.125}, {0.3, 0.5}, {1.7, 0.25}, {4.0, 0.125}});
  double m = 0.0, v = 0.0;
  for (size_t i = 0; i < p.size(); ++i) m += p.mass[i] * p.value[i];
  for (size_t i = 0; i < p.size(); ++i)
    v += p.mass[i] * (p.value[i] - m) * (p.value[i] - m);
  CHECK(p.mean() == doctest::Approx(m).epsilon(1e-14));
  CHECK(p.variance() == doctest::Approx(v).epsilon(1e-13));
}

TEST_CASE("lattice detection: progressions, irrationals, and guards") {
  const LatticeInfo a = detect_lattice({-1.2, 0.3, 1.8});
  REQUIRE(a.kind == LatticeInfo::Kind::lattice);
  CHECK(a.span == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(a.offset == doctest::Approx(0.3).epsilon(1e-9));

  const LatticeInfo b = detect_lattice({0.0, 1.0, std::sqrt(2.0)});
  CHECK(b.kind == LatticeInfo::Kind::nonlattice);

  // A near-miss that fits no lattice within tolerance must not be forced onto
  // a spurious fine span.
  const LatticeInfo c = detect_lattice({0.0, 1.0, 2.0 + 1e-7});
  CHECK(c.kind == LatticeInfo::Kind::nonlattice);

  // Single distinct point: degenerate, not a lattice.
  const LatticeInfo d = detect_lattice({0.7, 0.7});
  CHECK(d.kind == LatticeInfo::Kind::degenerate);

  // Span is maximal: multiples of 0.5 including an odd multiple.
  const LatticeInfo e = detect_lattice({0.0, 0.5, 2.0});
  REQUIRE(e.kind == LatticeInfo::Kind::lattice);
  CHECK(e.span == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("lattice detection is permutation- and shift-invariant") {
  std::vector<double> pts{0.1, 0.85, 2.35, -0.65};
  const LatticeInfo base = detect_lattice(pts);
  REQUIRE(base.kind == LatticeInfo::Kind::lattice);
  CHECK(base.span == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(pts.begin(), pts.end(), rng);
    const LatticeInfo perm = detect_lattice(pts);
    REQUIRE(perm.kind == LatticeInfo::Kind::lattice);
    CHECK(perm.span == doctest::Approx(base.span).epsilon(1e-12));
    CHECK(perm.offset == doctest::Approx(base.offset).epsilon(1e-9));
  }

  std::vector<double> shifted;
  for (double v : pts) shifted.push_back(v + 10.3);
  const LatticeInfo sh = detect_lattice(shifted);
  REQUIRE(sh.kind == LatticeInfo::Kind::lattice);
  CHECK(sh.span == doctest::Approx(base.span).epsilon(1e-12));
  // The offset moves with the shift but stays reduced mod the span.
  CHECK(sh.offset >= 0.0);
  CHECK(sh.offset < sh.span);
  const double delta = std::fmod(sh.offset - base.offset - 10.3, sh.span);
  const double circ = std::min(std::abs(delta), sh.span - std::abs(delta));
  CHECK(circ <= 1e-8);
}

TEST_CASE("distance-metric statistic lands on a lattice with the metric gap") {
  // With the two-valued distance metric the per-letter statistic takes values
  // that differ by integer multiples of s * log((1-2*delta)/delta), so the
  // detected span must divide that gap.
  Matrix W = Matrix::from_rows({{0.98, 0.01, 0.01},
                                {0.05, 0.90, 0.05},
                                {0.25, 0.25, 0.50}});
  ChannelTriple t = hamming_triple(W, 0.1, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const double s = 1.0;
  const DiscretePmf d = density_pmf(make_family(t, s));
  const LatticeInfo info = detect_lattice(d);
  REQUIRE(info.kind == LatticeInfo::Kind::lattice);
  const double gap = s * std::log(0.8 / 0.1);
  const double ratio = gap / info.span;
  CHECK(std::abs(ratio - std::llround(ratio)) <= 1e-6);
  CHECK(std::llround(ratio) >= 1);
}

TEST_CASE("sparse convolution: exact small cases") {
  DiscretePmf coin = DiscretePmf::from_atoms({{0.0, 0.5}, {1.0, 0.5}});
  DiscretePmf two = convolve(coin, coin);
  REQUIRE(two.size() == 3);
  CHECK(two.mass[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(two.mass[1] == doctest::Approx(0.50).epsilon(1e-15));
  CHECK(two.mass[2] == doctest::Approx(0.25).epsilon(1e-15));

  // Binomial(n, 0.3) via nfold against the closed form.
  DiscretePmf bern = DiscretePmf::from_atoms({{0.0, 0.7}, {1.0, 0.3}});
  const long long n = 40;
  DiscretePmf bin = nfold(bern, n);
  REQUIRE(bin.size() == static_cast<size_t>(n + 1));
  for (long long k = 0; k <= n; ++k) {
    CHECK(std::log(bin.mass[k]) ==
          doctest::Approx(binom_log_pmf(n, k, 0.3)).epsilon(1e-11));
  }
  CHECK(bin.mean() == doctest::Approx(n * 0.3).epsilon(1e-12));
  CHECK(bin.variance() == doctest::Approx(n * 0.3 * 0.7).epsilon(1e-10));
}

TEST_CASE("n-fold sums scale mean and variance linearly") {
  DiscretePmf p = DiscretePmf::from_atoms(
      {{-1.3, 0.2}, {0.0, 0.35}, {0.4, 0.25}, {2.2, 0.2}});
  for (long long n : {2LL, 5LL, 17LL}) {
    DiscretePmf s = nfold(p, n);
    CHECK(s.mean() == doctest::Approx(n * p.mean()).epsilon(1e-11));
    CHECK(s.variance() ==
          doctest::Approx(n * p.variance()).epsilon(1e-9));
    CHECK(s.total_mass() == doctest::Approx(1.0).epsilon(1e-11));
  }
}

TEST_CASE("convolution budget produces the documented error") {
  // Rationally independent values give ~binom(n+3, 3) distinct sums after
  // exact merging; n = 20 exceeds a 1000-atom budget.
  DiscretePmf p = DiscretePmf::from_atoms({{0.0, 0.25},
                                           {1.0, 0.25},
                                           {std::sqrt(2.0), 0.25},
                                           {std::sqrt(3.0), 0.25}});
  CHECK_THROWS_WITH_AS(nfold(p, 20, 1e-12, 1000),
                       doctest::Contains("state space too large"),
                       std::runtime_error);
  // The same request with an adequate budget succeeds.
  CHECK_NOTHROW(nfold(p, 20, 1e-12, 200000));
}

TEST_CASE("lattice placement: exact, and outward rounding for brackets") {
  DiscretePmf p = DiscretePmf::from_atoms({{0.25, 0.5}, {1.0, 0.3}, {1.75, 0.2}});
  LatticePmf exact = on_lattice(p, 0.25, Rounding::nearest);
  CHECK(exact.origin == doctest::Approx(0.25));
  CHECK(std::exp(exact.log_total()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(exact.value_at(3) == doctest::Approx(1.0));

  // Values off the lattice: nearest mode refuses, down/up shift mass outward.
  DiscretePmf off = DiscretePmf::from_atoms({{0.30, 0.5}, {0.95, 0.5}});
  CHECK_THROWS_AS(on_lattice(off, 0.25, Rounding::nearest),
                  std::invalid_argument);
  LatticePmf lo = on_lattice(off, 0.25, Rounding::down);
  LatticePmf hi = on_lattice(off, 0.25, Rounding::up);
  // Every mass cell in `lo` sits at a value <= the original, `hi` at >=.
  CHECK(lo.value_at(0) <= 0.30);
  CHECK(hi.size() >= 1);
  // Means bracket the true mean.
  auto lattice_mean = [](const LatticePmf& q) {
    double m = 0.0;
    for (size_t k = 0; k < q.size(); ++k)
      if (std::isfinite(q.logp[k])) m += std::exp(q.logp[k]) * q.value_at(k);
    return m;
  };
  CHECK(lattice_mean(lo) <= off.mean() + 1e-12);
  CHECK(lattice_mean(hi) >= off.mean() - 1e-12);
}

TEST_CASE("log-domain lattice convolution matches the sparse path") {
  DiscretePmf p = DiscretePmf::from_atoms(
      {{0.0, 0.15}, {0.5, 0.35}, {1.0, 0.3}, {2.0, 0.2}});
  const long long n = 25;
  DiscretePmf ref = nfold(p, n);
  LatticePmf lp = on_lattice(p, 0.5, Rounding::nearest);
  LatticePmf ln = nfold(lp, n);
  CHECK(std::exp(ln.log_total()) == doctest::Approx(1.0).epsilon(1e-11));
  // Compare every atom in the log domain.
  for (size_t i = 0; i < ref.size(); ++i) {
    const double k_real = (ref.value[i] - ln.origin) / ln.step;
    const long long k = std::llround(k_real);
    REQUIRE(std::abs(k_real - k) <= 1e-9);
    REQUIRE(k >= 0);
    REQUIRE(static_cast<size_t>(k) < ln.size());
    CHECK(ln.logp[k] ==
          doctest::Approx(std::log(ref.mass[i])).epsilon(1e-10));
  }
}

TEST_CASE("suffix sums are right-to-left tail logs") {
  DiscretePmf p = DiscretePmf::from_atoms({{0.0, 0.4}, {1.0, 0.35}, {2.0, 0.25}});
  LatticePmf lp = on_lattice(p, 1.0, Rounding::nearest);
  const std::vector<double> tails = lp.log_suffix_sums();
  REQUIRE(tails.size() == lp.size() + 1);
  CHECK(std::exp(tails[0]) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(std::exp(tails[1]) == doctest::Approx(0.6).epsilon(1e-13));
  CHECK(std::exp(tails[2]) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(tails[3] == -std::numeric_limits<double>::infinity());

  // Deep tails survive in log form: 400-fold sum of a coin has suffix logs
  // around -400 log 2 at the top end, far below linear-domain underflow.
  DiscretePmf coin = DiscretePmf::from_atoms({{0.0, 0.5}, {1.0, 0.5}});
  LatticePmf big = nfold(on_lattice(coin, 1.0, Rounding::nearest), 1200);
  const std::vector<double> bt = big.log_suffix_sums();
  CHECK(bt[big.size() - 1] ==
        doctest::Approx(-1200.0 * std::log(2.0)).epsilon(1e-9));
  CHECK(std::isfinite(bt[big.size() - 1]));
}
