// Tests for the tilted per-letter statistic family: density tables, moments,
// the E0 function and its derivatives, and the saddlepoint parameter bundle.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mdx/channel.hpp"
#include "mdx/numerics.hpp"
#include "mdx/pmf.hpp"
#include "mdx/tilted.hpp"

using namespace mdx;

namespace {

Matrix skew_w() {
  return Matrix::from_rows({{0.98, 0.01, 0.01},
                            {0.05, 0.90, 0.05},
                            {0.25, 0.25, 0.50}});
}

Matrix sym_w() {
  return Matrix::from_rows(
      {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}});
}

const std::vector<double> kUniform3{1.0 / 3, 1.0 / 3, 1.0 / 3};

// Direct summation of -log sum_{x,y} Q(x) W(y|x) [sum_x' Q(x') q(x',y)^s /
// q(x,y)^s]^rho, written independently of the library's log-domain path.
double e0_direct(const ChannelTriple& t, double rho, double s) {
  double total = 0.0;
  for (int x = 0; x < t.num_inputs(); ++x) {
    for (int y = 0; y < t.num_outputs(); ++y) {
      if (!(t.Q[x] > 0.0 && t.W(x, y) > 0.0)) continue;
      double den = 0.0;
      for (int xb = 0; xb < t.num_inputs(); ++xb)
        den += t.Q[xb] * std::pow(t.q(xb, y), s);
      total +=
          t.Q[x] * t.W(x, y) * std::pow(den / std::pow(t.q(x, y), s), rho);
    }
  }
  return -std::log(total);
}

}  // namespace

TEST_CASE("matched family at unit tilt is the information density") {
  ChannelTriple t = ml_triple(skew_w(), {0.1, 0.3, 0.6});
  TiltedFamily f = make_family(t, 1.0);
  const JointDist d = t.joint();
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (t.on_support(x, y))
        CHECK(f.density(x, y) ==
              doctest::Approx(std::log(t.W(x, y) / d.py[y])).epsilon(1e-13));
}

TEST_CASE("zero tilt collapses the density to zero") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  TiltedFamily f = make_family(t, 0.0);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (t.on_support(x, y)) CHECK(std::abs(f.density(x, y)) <= 1e-14);
  const Moments m = moments(f);
  CHECK(std::abs(m.mean) <= 1e-14);
  CHECK(std::abs(m.variance) <= 1e-14);
  CHECK(std::abs(m.cond_variance) <= 1e-14);
}

TEST_CASE("two-valued distance metric gives two density values per output") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  TiltedFamily f = make_family(t, 1.0);
  for (int y = 0; y < 3; ++y) {
    std::set<long long> distinct;
    for (int x = 0; x < 3; ++x)
      if (t.on_support(x, y))
        distinct.insert(std::llround(f.density(x, y) * 1e12));
    CHECK(distinct.size() == 2);
  }
}

TEST_CASE("input shifts enter the density the documented way") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  const std::vector<double> a{0.3, -0.2, 0.05};
  TiltedFamily f = make_family(t, 0.7, a);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) {
      if (!t.on_support(x, y)) continue;
      double den = 0.0;
      for (int xb = 0; xb < 3; ++xb)
        den += t.Q[xb] * std::pow(t.q(xb, y), 0.7) * std::exp(a[xb]);
      const double want =
          0.7 * std::log(t.q(x, y)) + a[x] - std::log(den);
      CHECK(f.density(x, y) == doctest::Approx(want).epsilon(1e-12));
    }

  // Shifting a by a constant leaves the density unchanged (gauge freedom).
  std::vector<double> b{a[0] + 2.0, a[1] + 2.0, a[2] + 2.0};
  TiltedFamily g = make_family(t, 0.7, b);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (t.on_support(x, y))
        CHECK(g.density(x, y) ==
              doctest::Approx(f.density(x, y)).epsilon(1e-12));
}

TEST_CASE("vanishing metric on a reachable output is rejected") {
  ChannelTriple t = ml_triple(Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}}),
                              {1.0, 0.0});
  t.q = Matrix::from_rows({{1.0, 0.0}, {1.0, 1.0}});
  // Output 1 is reachable (W(0,1) > 0) but the only supported input has
  // metric zero there, so the family denominator vanishes.
  CHECK_THROWS_AS(make_family(t, 1.0), std::runtime_error);
}

TEST_CASE("moments of the matched skewed channel reach 0.471 bits") {
  ChannelTriple t = ml_triple(skew_w(), {0.1, 0.3, 0.6});
  const Moments m = moments(make_family(t, 1.0));
  CHECK(m.mean / kLog2 == doctest::Approx(0.471).epsilon(2e-3));
  CHECK(m.mean == doctest::Approx(mutual_information(t)).epsilon(1e-12));
}

TEST_CASE("variance dominates conditional variance") {
  for (double s : {0.4, 0.8, 1.0, 1.7}) {
    ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
    const Moments m = moments(make_family(t, s));
    CHECK(m.variance >= m.cond_variance - 1e-12);
    CHECK(m.cond_variance >= -1e-12);
  }
}

TEST_CASE("E0 basics: zero at rho=0, slope I_s, concavity") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, kUniform3);
  TiltedFamily f = make_family(t, 0.9);
  CHECK(std::abs(e0(f, 0.0)) <= 1e-14);

  const Moments m = moments(f);
  const double h = 1e-5;
  const double slope0 = (e0(f, h) - e0(f, -h)) / (2.0 * h);
  CHECK(slope0 == doctest::Approx(m.mean).epsilon(1e-6));

  double prev_second = 1.0;
  for (double rho = 0.0; rho <= 1.0 + 1e-12; rho += 0.1) {
    const E0Derivatives d = e0_derivatives(f, rho);
    CHECK(d.second <= 1e-12);  // concave everywhere probed
    (void)prev_second;
  }
}

TEST_CASE("E0 matches an independent direct summation") {
  ChannelTriple skew = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  ChannelTriple sym = ml_triple(sym_w(), kUniform3);
  for (double s : {0.5, 1.0, 1.3}) {
    for (double rho : {0.2, 0.6, 1.0}) {
      CHECK(e0(make_family(skew, s), rho) ==
            doctest::Approx(e0_direct(skew, rho, s)).epsilon(1e-12));
      CHECK(e0(make_family(sym, s), rho) ==
            doctest::Approx(e0_direct(sym, rho, s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("matched E0 at the half tilt equals the classical exponent") {
  // For a matched decoder, E0(rho) with tilt s = 1/(1+rho) is the classical
  // random-coding E0: -log sum_y [sum_x Q(x) W(y|x)^{1/(1+rho)}]^{1+rho}.
  // At s = 1 the expectation telescopes to 1, so E0(1, s=1) = 0 identically;
  // the half tilt is where the classical value lives.
  ChannelTriple t = ml_triple(sym_w(), kUniform3);
  double classical = 0.0;
  for (int y = 0; y < 3; ++y) {
    double inner = 0.0;
    for (int x = 0; x < 3; ++x) inner += t.Q[x] * std::sqrt(t.W(x, y));
    classical += inner * inner;
  }
  classical = -std::log(classical);
  CHECK(e0(make_family(t, 0.5), 1.0) ==
        doctest::Approx(classical).epsilon(1e-12));
  CHECK(std::abs(e0(make_family(t, 1.0), 1.0)) <= 1e-13);

  // The half tilt is the maximizer: nearby tilts do strictly worse.
  const double at_half = e0(make_family(t, 0.5), 1.0);
  CHECK(e0(make_family(t, 0.45), 1.0) < at_half);
  CHECK(e0(make_family(t, 0.55), 1.0) < at_half);
}

TEST_CASE("analytic E0 derivatives match finite differences and reweighting") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, kUniform3);
  TiltedFamily f = make_family(t, 0.98);
  const double rho = 0.5, h = 1e-4;
  const E0Derivatives d = e0_derivatives(f, rho);
  const double fd1 = (e0(f, rho + h) - e0(f, rho - h)) / (2.0 * h);
  const double fd2 =
      (e0(f, rho + h) - 2.0 * e0(f, rho) + e0(f, rho - h)) / (h * h);
  CHECK(d.first == doctest::Approx(fd1).epsilon(1e-6));
  CHECK(d.second == doctest::Approx(fd2).epsilon(1e-4));

  // At rho = 0 the tilt is the plain joint: derivatives are (I_s, -U_s).
  const Moments m = moments(f);
  const E0Derivatives d0 = e0_derivatives(f, 0.0);
  CHECK(d0.first == doctest::Approx(m.mean).epsilon(1e-10));
  CHECK(d0.second == doctest::Approx(-m.variance).epsilon(1e-10));

  // Explicit reweighting oracle: tilt the joint by e^{-rho * density},
  // normalize, and take the mean/variance of the density directly.
  double norm = 0.0, mean = 0.0, var = 0.0;
  const JointDist jd = t.joint();
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (t.on_support(x, y))
        norm += jd.joint(x, y) * std::exp(-rho * f.density(x, y));
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (t.on_support(x, y))
        mean += jd.joint(x, y) * std::exp(-rho * f.density(x, y)) / norm *
                f.density(x, y);
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (t.on_support(x, y)) {
        const double z = f.density(x, y) - mean;
        var += jd.joint(x, y) * std::exp(-rho * f.density(x, y)) / norm * z * z;
      }
  CHECK(d.first == doctest::Approx(mean).epsilon(1e-10));
  CHECK(d.second == doctest::Approx(-var).epsilon(1e-10));
}

TEST_CASE("saddlepoint bundle: rate regimes for the tilt maximizer") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, kUniform3);
  // Note the landmark rates depend on the tilt: near s = 0.5 the critical
  // rate E0'(1) is comfortably positive for this triple (it goes negative
  // for s near 1, where only the interior/upper regimes exist).
  TiltedFamily f = make_family(t, 0.52);
  const long long n = 60;
  const SaddlepointParams probe = saddlepoint_params(f, 0.3 * kLog2, n);
  const double crit = probe.crit_rate, mean = probe.mean_density;
  REQUIRE(crit > 0.0);
  REQUIRE(mean > crit);

  // Below the critical rate: maximizer pinned at 1, location constant < 0.
  const SaddlepointParams lo = saddlepoint_params(f, 0.5 * crit, n);
  CHECK(lo.rho_hat == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(lo.c1 < 0.0);

  // Interior: stationary maximizer, c1 = R - E0'(rho_hat) = 0.
  const SaddlepointParams mid =
      saddlepoint_params(f, 0.5 * (crit + mean), n);
  CHECK(mid.rho_hat > 1e-4);
  CHECK(mid.rho_hat < 1.0 - 1e-4);
  CHECK(std::abs(mid.c1) <= 1e-9);
  CHECK(mid.e0_value ==
        doctest::Approx(e0(f, mid.rho_hat)).epsilon(1e-12));

  // At and above the mean of the statistic: maximizer 0, c1 = R - mean.
  const SaddlepointParams at = saddlepoint_params(f, mean, n);
  CHECK(std::abs(at.rho_hat) <= 1e-6);
  CHECK(std::abs(at.c1) <= 1e-8);
  const SaddlepointParams hi = saddlepoint_params(f, mean + 0.05, n);
  CHECK(hi.rho_hat == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(hi.c1 == doctest::Approx(0.05).epsilon(1e-9));

  // Monotone: the maximizer never increases with the rate.
  double prev = 1.1;
  for (double rb = 0.05; rb <= 0.7; rb += 0.05) {
    const double rh = saddlepoint_params(f, rb * kLog2, n).rho_hat;
    CHECK(rh <= prev + 1e-10);
    prev = rh;
  }
}

TEST_CASE("curvature at the mean equals the plain variance") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, kUniform3);
  TiltedFamily f = make_family(t, 1.1);
  const Moments m = moments(f);
  const SaddlepointParams p = saddlepoint_params(f, m.mean, 60);
  CHECK(p.c2 == doctest::Approx(m.variance).epsilon(1e-9));
  CHECK(p.var_density == doctest::Approx(m.variance).epsilon(1e-12));
}

TEST_CASE("reverse-channel variance and lattice correction flags") {
  // Regular nonsingular triple: c3 positive and usable, psi >= 1.
  ChannelTriple t = hamming_triple(skew_w(), 0.1, kUniform3);
  const SaddlepointParams p =
      saddlepoint_params(make_family(t, 0.98), 0.3 * kLog2, 60);
  CHECK(p.c3_ok);
  CHECK(p.c3 > 0.0);
  CHECK(p.psi >= 1.0);
  REQUIRE(p.lattice.kind == LatticeInfo::Kind::lattice);
  CHECK(p.psi > 1.0);  // lattice case strictly exceeds 1

  // Nonlattice statistic: no lattice correction.
  ChannelTriple a2 = ml_triple(Matrix::from_rows({{0.8, 0.2}, {0.3, 0.7}}),
                               {0.4, 0.6});
  const SaddlepointParams pa =
      saddlepoint_params(make_family(a2, 0.6), 0.12 * kLog2, 60);
  CHECK(pa.lattice.kind == LatticeInfo::Kind::nonlattice);
  CHECK(pa.psi == doctest::Approx(1.0));

  // Singular triple (erasure channel): the c3 machinery is flagged off.
  ChannelTriple bec = ml_triple(
      Matrix::from_rows({{0.6, 0.0, 0.4}, {0.0, 0.6, 0.4}}), {0.5, 0.5});
  const SaddlepointParams pb =
      saddlepoint_params(make_family(bec, 1.0), 0.2 * kLog2, 60);
  CHECK_FALSE(pb.c3_ok);
}

TEST_CASE("n-letter lattice offset is n * offset reduced mod the span") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, kUniform3);
  TiltedFamily f = make_family(t, 0.75);
  const double rate = 0.27 * kLog2;
  for (long long n : {1LL, 4LL, 9LL, 50LL}) {
    const SaddlepointParams p = saddlepoint_params(f, rate, n);
    REQUIRE(p.lattice.kind == LatticeInfo::Kind::lattice);
    const double h = p.lattice.span;
    CHECK(p.gamma_n >= -1e-12);
    CHECK(p.gamma_n < h + 1e-12);
    const double want = std::fmod(n * p.lattice.offset, h);
    const double diff = std::abs(p.gamma_n - want);
    CHECK(std::min(diff, h - diff) <= 1e-8);
  }
}

TEST_CASE("degenerate statistic is refused") {
  // Noiseless matched channel: the density is constant, so the curvature
  // bundle has nothing to work with.
  ChannelTriple t = ml_triple(Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}),
                              {0.5, 0.5});
  CHECK_THROWS_WITH_AS(
      saddlepoint_params(make_family(t, 1.0), 0.2, 8),
      doctest::Contains("degenerate statistic"), std::runtime_error);
}

TEST_CASE("density law matches the family table") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  TiltedFamily f = make_family(t, 1.0);
  DiscretePmf d = density_pmf(f);
  CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.mean() == doctest::Approx(moments(f).mean).epsilon(1e-12));
  CHECK(d.variance() == doctest::Approx(moments(f).variance).epsilon(1e-11));

  // The conditional means feed the two-cost construction; check one directly.
  const std::vector<double> v = conditional_mean_by_input(f);
  double v0 = 0.0;
  for (int y = 0; y < 3; ++y)
    if (t.W(0, y) > 0.0) v0 += t.W(0, y) * f.density(0, y);
  CHECK(v[0] == doctest::Approx(v0).epsilon(1e-13));
}
