#pragma once

#include <functional>
#include <vector>

// Small deterministic optimizers used across the library.  All of them
// maximize; callers negate if they need a minimum.

namespace mdx {

struct ScalarOpt {
  double x = 0.0;
  double value = 0.0;
};

// Golden-section search for a maximum of f on [lo, hi].  Assumes f is
// unimodal on the bracket; callers establish the bracket with a coarse scan.
ScalarOpt golden_max(const std::function<double(double)>& f, double lo,
                     double hi, double xtol = 1e-10, int max_iter = 200);

// Coarse scan over the given abscissae followed by golden-section refinement
// on the bracket around the best sample.
ScalarOpt scan_then_golden(const std::function<double(double)>& f,
                           const std::vector<double>& scan, double xtol = 1e-10);

// Geometric grid {2^k : k = k_lo..k_hi}; the default arguments give the
// standard bracket used for tilt-parameter searches.
std::vector<double> geometric_grid(int k_lo = -10, int k_hi = 6);

struct VectorOpt {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
};

struct AscentOptions {
  double fd_step = 1e-6;     // central-difference step (relative to 1+|x|)
  double tol = 1e-11;        // stop when the improvement falls below this
  int max_iter = 400;
  double init_step = 1.0;    // initial line-search scale
};

// BFGS ascent with finite-difference gradients and Armijo backtracking.
// Deterministic; suitable for the smooth low-dimensional inner problems here.
VectorOpt quasi_newton_max(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x0, const AscentOptions& opt = {});

}  // namespace mdx
