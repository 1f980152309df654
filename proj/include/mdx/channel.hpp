#pragma once

#include <string>
#include <vector>

#include "mdx/matrix.hpp"

namespace mdx {

// Joint law Q(x) W(y|x) together with its marginals.
struct JointDist {
  Matrix joint;            // (x, y)
  std::vector<double> px;  // = Q on the support
  std::vector<double> py;  // output distribution
};

// Structural facts about a (W, q, Q) triple that downstream approximations
// depend on.
struct AssumptionReport {
  // True when, restricted to inputs with Q(x) > 0, q(x,y) > 0 exactly where
  // W(y|x) > 0.  The exact finite-n bounds and the saddlepoint machinery
  // assume this support match.
  bool regularity_ok = false;
  // Outputs y for which the metric distinguishes at least two inputs that are
  // both reachable with positive probability (Q(x)Q(x')W(y|x)W(y|x') > 0 and
  // q(x,y) != q(x',y)).
  std::vector<int> informative_outputs;
  // True iff informative_outputs is nonempty.  When false the decoder's
  // metric comparisons degenerate (every competing codeword ties letterwise)
  // and several refinements collapse.
  bool nonsingular = false;
};

// A discrete memoryless channel W, a nonnegative decoding metric q of the
// same shape, and the random-coding input distribution Q.  The decoder picks
// the codeword maximizing the product metric, breaking ties uniformly.
struct ChannelTriple {
  Matrix W;               // rows: inputs, cols: outputs; each row a pmf
  Matrix q;               // metric values, >= 0
  std::vector<double> Q;  // input pmf

  int num_inputs() const { return W.rows(); }
  int num_outputs() const { return W.cols(); }
  bool on_support(int x, int y) const { return Q[x] > 0.0 && W(x, y) > 0.0; }

  // Checks shapes, nonnegativity, and row/pmf normalization to within 1e-12,
  // throwing std::invalid_argument naming the first violation.
  void validate() const;

  // validate() and then snap row sums and Q exactly to 1.
  void normalize();

  JointDist joint() const;
  AssumptionReport assumptions() const;
};

// Convenience constructors.
ChannelTriple ml_triple(Matrix W, std::vector<double> Q);  // q = W (matched)
// Metric with value 1-2*delta when x == y and delta otherwise; requires a
// square alphabet and delta in (0, 1/2).  The maximizer of the product metric
// is then the minimum-Hamming-distance codeword.
ChannelTriple hamming_triple(Matrix W, double delta, std::vector<double> Q);

// JSON channel description:
//   {"W": [[...],...], "q": [[...],...] | "ML" | {"hamming": 0.1}, "Q": [...]}
// Throws std::invalid_argument on structural problems; the caller maps JSON
// parse failures to its own exit discipline.
ChannelTriple parse_channel_config(const std::string& json_text);
ChannelTriple load_channel_config(const std::string& path);

// Mutual information (nats) of the joint Q x W; the matched-decoding rate.
double mutual_information(const ChannelTriple& t);

}  // namespace mdx
