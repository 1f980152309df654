// Tests for the channel/metric/input-distribution triple: validation, joint
// laws, the structural assumption report, and JSON config parsing.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "mdx/channel.hpp"
#include "mdx/numerics.hpp"

using namespace mdx;

namespace {

Matrix skew_w() {
  return Matrix::from_rows({{0.98, 0.01, 0.01},
                            {0.05, 0.90, 0.05},
                            {0.25, 0.25, 0.50}});
}

template <class Fn>
std::string message_of(Fn fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("validate accepts a well-formed triple and names violations") {
  ChannelTriple ok = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  CHECK_NOTHROW(ok.validate());

  ChannelTriple bad_row = ok;
  bad_row.W(1, 1) = 0.80;  // row 1 now sums to 0.9
  const std::string m1 = message_of([&] { bad_row.validate(); });
  CHECK(m1.find("row 1 not stochastic") != std::string::npos);

  ChannelTriple bad_q = ok;
  bad_q.q(2, 0) = -1.0;
  const std::string m2 = message_of([&] { bad_q.validate(); });
  CHECK(m2.find("negative metric q(2,0)") != std::string::npos);

  ChannelTriple bad_shape = ok;
  bad_shape.q = Matrix(2, 2, 0.25);
  CHECK_THROWS_AS(bad_shape.validate(), std::invalid_argument);

  ChannelTriple bad_pmf = ok;
  bad_pmf.Q = {0.5, 0.2, 0.2};
  const std::string m3 = message_of([&] { bad_pmf.validate(); });
  CHECK(m3.find("Q not a pmf") != std::string::npos);
}

TEST_CASE("normalize snaps near-stochastic inputs inside the tolerance") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  t.W(0, 0) = 0.98 + 4e-13;  // still within the 1e-12 row tolerance
  t.normalize();
  double sum = 0.0;
  for (int y = 0; y < 3; ++y) sum += t.W(0, y);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("joint law: products, marginals, and symmetry") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  const JointDist d = t.joint();
  CHECK(d.joint(2, 2) == doctest::Approx(0.30).epsilon(1e-14));
  double total = 0.0;
  for (int x = 0; x < 3; ++x) {
    double row = 0.0;
    for (int y = 0; y < 3; ++y) {
      CHECK(d.joint(x, y) >= 0.0);
      row += d.joint(x, y);
      total += d.joint(x, y);
    }
    CHECK(std::abs(row - t.Q[x]) <= 1e-12);  // X-marginal equals Q
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  double psum = 0.0;
  for (double v : d.py) psum += v;
  CHECK(std::abs(psum - 1.0) <= 1e-12);

  // Point-mass input: the joint collapses to the selected row.
  ChannelTriple pm = ml_triple(Matrix::from_rows({{0.7, 0.3}, {0.2, 0.8}}),
                               {1.0, 0.0});
  const JointDist dp = pm.joint();
  CHECK(dp.joint(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(dp.joint(0, 1) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(dp.joint(1, 0) == 0.0);
  CHECK(dp.joint(1, 1) == 0.0);

  // Uniform input on a symmetric channel gives a uniform output law.
  ChannelTriple sym = ml_triple(
      Matrix::from_rows(
          {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}}),
      {1.0 / 3, 1.0 / 3, 1.0 / 3});
  for (double v : sym.joint().py)
    CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-13));
}

TEST_CASE("assumption report: informative outputs and regularity") {
  // Distance-decoding metric on the skewed ternary channel: every output can
  // separate at least two reachable inputs, and supports match.
  ChannelTriple t =
      hamming_triple(skew_w(), 0.1, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  const AssumptionReport rep = t.assumptions();
  CHECK(rep.regularity_ok);
  CHECK(rep.informative_outputs == std::vector<int>{0, 1, 2});
  CHECK(rep.nonsingular);

  // Matched erasure channel: on each output all reachable inputs carry equal
  // metric, so nothing is informative and the triple is singular.
  ChannelTriple bec = ml_triple(
      Matrix::from_rows({{0.6, 0.0, 0.4}, {0.0, 0.6, 0.4}}), {0.5, 0.5});
  const AssumptionReport brep = bec.assumptions();
  CHECK(brep.regularity_ok);
  CHECK(brep.informative_outputs.empty());
  CHECK_FALSE(brep.nonsingular);

  // Single supported input: no pair of distinct reachable inputs exists.
  ChannelTriple solo = ml_triple(
      Matrix::from_rows({{0.7, 0.3}, {0.2, 0.8}}), {1.0, 0.0});
  CHECK(solo.assumptions().informative_outputs.empty());
  CHECK_FALSE(solo.assumptions().nonsingular);

  // A metric zero where the channel is positive breaks regularity.
  ChannelTriple irreg = ml_triple(
      Matrix::from_rows({{0.7, 0.3}, {0.2, 0.8}}), {0.5, 0.5});
  irreg.q(0, 1) = 0.0;
  CHECK_FALSE(irreg.assumptions().regularity_ok);
}

TEST_CASE("assumption report is equivariant under relabeling") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  const AssumptionReport base = t.assumptions();

  // Swap outputs 0 and 2 everywhere; informative outputs must follow the
  // permutation.
  ChannelTriple perm = t;
  for (int x = 0; x < 3; ++x) {
    std::swap(perm.W(x, 0), perm.W(x, 2));
    std::swap(perm.q(x, 0), perm.q(x, 2));
  }
  const AssumptionReport prep = perm.assumptions();
  CHECK(prep.regularity_ok == base.regularity_ok);
  std::vector<int> mapped;
  for (int y : base.informative_outputs) mapped.push_back(y == 0 ? 2 : y == 2 ? 0 : y);
  std::sort(mapped.begin(), mapped.end());
  CHECK(prep.informative_outputs == mapped);

  // Swap inputs 0 and 1 (rows of W and q, entries of Q); the output set is
  // unchanged.
  ChannelTriple permx = t;
  for (int y = 0; y < 3; ++y) {
    std::swap(permx.W(0, y), permx.W(1, y));
    std::swap(permx.q(0, y), permx.q(1, y));
  }
  std::swap(permx.Q[0], permx.Q[1]);
  CHECK(permx.assumptions().informative_outputs == base.informative_outputs);
}

TEST_CASE("scaling the metric leaves the report unchanged") {
  ChannelTriple t = hamming_triple(skew_w(), 0.1, {0.1, 0.3, 0.6});
  const AssumptionReport base = t.assumptions();
  ChannelTriple scaled = t;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y) scaled.q(x, y) *= 7.25;
  const AssumptionReport srep = scaled.assumptions();
  CHECK(srep.regularity_ok == base.regularity_ok);
  CHECK(srep.informative_outputs == base.informative_outputs);
  CHECK(srep.nonsingular == base.nonsingular);
}

TEST_CASE("config parsing: metric forms, defaults, and errors") {
  const std::string base = R"({
    "W": [[0.98, 0.01, 0.01], [0.05, 0.90, 0.05], [0.25, 0.25, 0.50]],
    "q": {"hamming": 0.1},
    "Q": [0.1, 0.3, 0.6]
  })";
  ChannelTriple t = parse_channel_config(base);
  CHECK(t.q(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(t.q(0, 1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(t.Q[2] == doctest::Approx(0.6).epsilon(1e-15));

  // "ML" and an omitted metric both mean q = W.
  const std::string ml = R"({"W": [[0.89, 0.11], [0.11, 0.89]],
                             "q": "ML", "Q": [0.5, 0.5]})";
  ChannelTriple tm = parse_channel_config(ml);
  CHECK(tm.q(0, 1) == doctest::Approx(0.11).epsilon(1e-15));
  const std::string noq = R"({"W": [[0.89, 0.11], [0.11, 0.89]],
                              "Q": [0.5, 0.5]})";
  ChannelTriple tn = parse_channel_config(noq);
  CHECK(tn.q(1, 0) == doctest::Approx(0.11).epsilon(1e-15));

  // Explicit metric rows.
  const std::string exq = R"({"W": [[0.89, 0.11], [0.11, 0.89]],
                              "q": [[2.0, 1.0], [1.0, 2.0]],
                              "Q": [0.5, 0.5]})";
  CHECK(parse_channel_config(exq).q(0, 0) == doctest::Approx(2.0));

  // Malformed JSON is wrapped into the config error family.
  const std::string m = message_of([&] { parse_channel_config("{\"W\": [["); });
  CHECK(m.rfind("config: malformed JSON", 0) == 0);

  // Structural problems.
  CHECK_THROWS_AS(parse_channel_config(R"({"Q": [1.0]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      parse_channel_config(
          R"({"W": [[0.5, 0.5], [1.0]], "Q": [0.5, 0.5]})"),
      std::invalid_argument);
  CHECK_THROWS_AS(
      parse_channel_config(
          R"({"W": [[0.5, 0.5], [0.4, 0.6]], "q": 3, "Q": [0.5, 0.5]})"),
      std::invalid_argument);
  const std::string missing =
      message_of([&] { load_channel_config("/definitely/not/here.json"); });
  CHECK(missing.rfind("config: cannot open", 0) == 0);
}

TEST_CASE("mutual information of the skewed ternary channel") {
  // Matched-decoding rate of the ternary channel with row noise levels
  // (0.01, 0.05, 0.25) and input law (0.1, 0.3, 0.6): 0.471 bits per use.
  ChannelTriple t = ml_triple(skew_w(), {0.1, 0.3, 0.6});
  CHECK(mutual_information(t) / kLog2 == doctest::Approx(0.471).epsilon(2e-3));

  // Independent in-test accumulation of sum p(x,y) log p(x,y)/(px py).
  const JointDist d = t.joint();
  double mi = 0.0;
  for (int x = 0; x < 3; ++x)
    for (int y = 0; y < 3; ++y)
      if (d.joint(x, y) > 0.0)
        mi += d.joint(x, y) *
              std::log(d.joint(x, y) / (d.px[x] * d.py[y]));
  CHECK(mutual_information(t) == doctest::Approx(mi).epsilon(1e-12));
}
