#include "mdx/rates.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mdx/linalg.hpp"
#include "mdx/numerics.hpp"
#include "mdx/optim.hpp"
#include "mdx/tilted.hpp"

namespace mdx {
namespace {

double dual_objective(const ChannelTriple& t, double s,
                      const std::vector<double>& a) {
  return moments(make_family(t, s, a)).mean;
}

// E_{P_Y}[exp(density(x, Y))] per input; equals 1 on every supported input at
// a stationary shift.
std::vector<double> reverse_mass(const TiltedFamily& f) {
  const ChannelTriple& t = f.triple;
  const JointDist jd = t.joint();
  std::vector<double> r(t.num_inputs(), 0.0);
  for (int x = 0; x < t.num_inputs(); ++x)
    for (int y = 0; y < t.num_outputs(); ++y)
      if (jd.py[y] > 0.0 && f.density(x, y) != kNegInf)
        r[x] += jd.py[y] * std::exp(f.density(x, y));
  return r;
}

// Zero-mean-under-Q gauge; the objective is invariant to it.
void apply_gauge(const ChannelTriple& t, std::vector<double>& a) {
  double mean = 0.0;
  for (int x = 0; x < t.num_inputs(); ++x) mean += t.Q[x] * a[x];
  for (int x = 0; x < t.num_inputs(); ++x)
    a[x] = t.Q[x] > 0.0 ? a[x] - mean : 0.0;
}

ScalarOpt best_tilt(const ChannelTriple& t, const std::vector<double>& a) {
  std::vector<double> scan;
  for (double s : geometric_grid()) scan.push_back(std::log(s));
  auto obj = [&](double ls) { return dual_objective(t, std::exp(ls), a); };
  const ScalarOpt r = scan_then_golden(obj, scan, 1e-12);
  return {std::exp(r.x), r.value};
}

// Backtracking gradient ascent over the shift at fixed tilt.
double ascend_shift(const ChannelTriple& t, double s, std::vector<double>& a,
                    int max_iter) {
  double f_val = dual_objective(t, s, a);
  for (int it = 0; it < max_iter; ++it) {
    const TiltedFamily fam = make_family(t, s, a);
    const std::vector<double> r = reverse_mass(fam);
    std::vector<double> g(a.size(), 0.0);
    double g_max = 0.0, g_sq = 0.0;
    for (int x = 0; x < t.num_inputs(); ++x) {
      if (t.Q[x] <= 0.0) continue;
      g[x] = t.Q[x] * (1.0 - r[x]);
      g_max = std::max(g_max, std::abs(g[x]));
      g_sq += g[x] * g[x];
    }
    if (g_max < 1e-13) break;
    double eta = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> a_try = a;
      for (std::size_t x = 0; x < a.size(); ++x) a_try[x] += eta * g[x];
      const double f_try = dual_objective(t, s, a_try);
      if (f_try > f_val + 1e-4 * eta * g_sq) {
        a = std::move(a_try);
        f_val = f_try;
        moved = true;
        break;
      }
      eta *= 0.5;
    }
    if (!moved) break;
  }
  return f_val;
}

}  // namespace

RateResult gmi(const ChannelTriple& t) {
  t.validate();
  const ScalarOpt so = best_tilt(t, {});
  RateResult r;
  if (!(so.value > 0.0)) return r;  // value 0, s_star 0
  r.value = so.value;
  r.s_star = so.x;
  r.kkt_residual = kkt_residual_lm(t, r.s_star, {});
  return r;
}

RateResult lm_rate(const ChannelTriple& t) {
  t.validate();
  const RateResult base = gmi(t);
  const int nx = t.num_inputs();
  const double s_init = base.s_star > 0.0 ? base.s_star : 1.0;

  double best_val = base.value;
  double best_s = s_init;
  std::vector<double> best_a(nx, 0.0);

  for (int trial = 0; trial < 2; ++trial) {
    std::vector<double> a(nx, 0.0);
    double s = s_init;
    if (trial == 1) {
      // Damped fixed-point warm start from the stationarity condition
      // E_{P_Y}[exp(density(x, Y))] = 1.
      for (int it = 0; it < 30; ++it) {
        const TiltedFamily fam = make_family(t, s, a);
        const std::vector<double> r = reverse_mass(fam);
        for (int x = 0; x < nx; ++x)
          if (t.Q[x] > 0.0 && r[x] > 0.0) a[x] -= 0.5 * std::log(r[x]);
        apply_gauge(t, a);
      }
    }
    double f_val = dual_objective(t, s, a);
    for (int outer = 0; outer < 200; ++outer) {
      const ScalarOpt so = best_tilt(t, a);
      s = so.x;
      const double f_new = ascend_shift(t, s, a, 80);
      apply_gauge(t, a);
      if (f_new <= f_val + 1e-13 * std::max(1.0, std::abs(f_val))) {
        f_val = std::max(f_val, f_new);
        break;
      }
      f_val = f_new;
    }
    if (f_val > best_val) {
      best_val = f_val;
      best_s = s;
      best_a = a;
    }
  }

  RateResult r;
  if (!(best_val > 0.0)) return r;  // value 0, s_star 0
  apply_gauge(t, best_a);
  r.value = best_val;
  r.s_star = best_s;
  r.a_star = best_a;
  r.kkt_residual = kkt_residual_lm(t, best_s, best_a);
  return r;
}

double kkt_residual_lm(const ChannelTriple& t, double s,
                       const std::vector<double>& a) {
  if (!(s > 0.0)) {
    throw std::invalid_argument(
        "kkt residual: tilt must be positive for the stationarity conditions");
  }
  const TiltedFamily f = make_family(t, s, a);
  const std::vector<double> r = reverse_mass(f);
  double res = 0.0;
  for (int x = 0; x < t.num_inputs(); ++x)
    if (t.Q[x] > 0.0) res = std::max(res, std::abs(r[x] - 1.0));
  const std::vector<double> v = conditional_mean_by_input(f);
  double v_lo = std::numeric_limits<double>::infinity();
  double v_hi = -std::numeric_limits<double>::infinity();
  for (int x = 0; x < t.num_inputs(); ++x) {
    if (t.Q[x] <= 0.0) continue;
    v_lo = std::min(v_lo, v[x]);
    v_hi = std::max(v_hi, v[x]);
  }
  return res + (v_hi - v_lo);
}

// ---------------------------------------------------------------------------
// Primal coupling oracle.
// ---------------------------------------------------------------------------
namespace {

struct CouplingProblem {
  std::vector<int> xs, ys;      // support cell coordinates
  std::vector<double> ref_log;  // log(Q(x) py(y)) per cell
  std::vector<double> logq;     // log metric per cell
  std::vector<double> qw;       // Q(x) W(y|x) per cell (the feasible anchor)
  std::vector<int> sup_x, sup_y;  // supported input / output indices
  double target = 0.0;            // E_{QW}[log metric]
  int nx = 0, ny = 0;
};

double coupling_mi(const CouplingProblem& pr, const std::vector<double>& p) {
  double v = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) v += p[i] * (std::log(p[i]) - pr.ref_log[i]);
  return std::max(0.0, v);
}

void marginals(const CouplingProblem& pr, const std::vector<double>& p,
               std::vector<double>& row, std::vector<double>& col) {
  row.assign(pr.nx, 0.0);
  col.assign(pr.ny, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    row[pr.xs[i]] += p[i];
    col[pr.ys[i]] += p[i];
  }
}

double metric_mean(const CouplingProblem& pr, const std::vector<double>& p) {
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) e += p[i] * pr.logq[i];
  return e;
}

// Entropic mirror descent on the cell simplex with quadratic penalties for
// the marginal constraints and the (one-sided) metric constraint.
void mirror_descent(const ChannelTriple& t, const CouplingProblem& pr,
                    std::vector<double>& p) {
  const JointDist jd = t.joint();
  std::vector<double> row, col;
  for (int stage = 0; stage < 10; ++stage) {
    const double lam = std::pow(2.0, stage);
    // Multiplicative updates contract the penalty terms only when the step
    // times the penalty curvature stays below 1; scale the step accordingly.
    const double eta = 0.3 / (1.0 + lam);
    for (int it = 0; it < 500; ++it) {
      marginals(pr, p, row, col);
      const double viol = std::max(0.0, pr.target - metric_mean(pr, p));
      double shift_max = kNegInf;
      std::vector<double> lg(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::max(p[i], 1e-300);
        double g = std::log(pi) - pr.ref_log[i] + 1.0;
        g += 2.0 * lam * (row[pr.xs[i]] - t.Q[pr.xs[i]]);
        g += 2.0 * lam * (col[pr.ys[i]] - jd.py[pr.ys[i]]);
        g -= 2.0 * lam * viol * pr.logq[i];
        lg[i] = std::log(pi) - eta * g;
        shift_max = std::max(shift_max, lg[i]);
      }
      double z = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) z += std::exp(lg[i] - shift_max);
      const double log_z = shift_max + std::log(z);
      for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = std::exp(lg[i] - log_z);
    }
  }
}

// Direction with zero row/col sums maximally aligned with the metric values,
// via alternating centering (von Neumann projections).
std::vector<double> metric_direction(const CouplingProblem& pr) {
  std::vector<double> d = pr.logq;
  std::vector<int> cnt_x(pr.nx, 0), cnt_y(pr.ny, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    ++cnt_x[pr.xs[i]];
    ++cnt_y[pr.ys[i]];
  }
  std::vector<double> sum_x(pr.nx), sum_y(pr.ny);
  for (int sweep = 0; sweep < 300; ++sweep) {
    std::fill(sum_x.begin(), sum_x.end(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) sum_x[pr.xs[i]] += d[i];
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] -= sum_x[pr.xs[i]] / cnt_x[pr.xs[i]];
    std::fill(sum_y.begin(), sum_y.end(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) sum_y[pr.ys[i]] += d[i];
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] -= sum_y[pr.ys[i]] / cnt_y[pr.ys[i]];
  }
  return d;
}

// Restores exact feasibility: iterative proportional fitting for the
// marginals, then null-direction moves plus blending with the anchor QW
// (which meets the metric constraint with equality) until the metric
// constraint holds.  Returns false when the iterate is unusable.
bool repair(const ChannelTriple& t, const CouplingProblem& pr,
            std::vector<double>& p) {
  const JointDist jd = t.joint();
  std::vector<double> row, col;
  for (int it = 0; it < 500; ++it) {
    marginals(pr, p, row, col);
    for (int x : pr.sup_x)
      if (!(row[x] > 0.0)) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] *= t.Q[pr.xs[i]] / row[pr.xs[i]];
    marginals(pr, p, row, col);
    for (int y : pr.sup_y)
      if (!(col[y] > 0.0)) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] *= jd.py[pr.ys[i]] / col[pr.ys[i]];
  }
  marginals(pr, p, row, col);
  double res = 0.0;
  for (int x : pr.sup_x) res = std::max(res, std::abs(row[x] - t.Q[x]));
  for (int y : pr.sup_y) res = std::max(res, std::abs(col[y] - jd.py[y]));
  if (res > 1e-9) return false;

  // Drive the metric mean to the equality face (where the constrained
  // optimum sits whenever the independent coupling is infeasible, which is
  // the only case that reaches this code).
  const std::vector<double> dir = metric_direction(pr);
  double dir_sq = 0.0;
  for (double v : dir) dir_sq += v * v;
  const double scale = std::max(1.0, std::abs(pr.target));
  for (int it = 0; it < 400; ++it) {
    const double gap = pr.target - metric_mean(pr, p);
    if (std::abs(gap) <= 1e-13 * scale) return true;
    if (dir_sq > 1e-14) {
      // Signed move along the marginal-preserving direction, clamped so the
      // iterate stays nonnegative.
      double tau = gap / dir_sq;
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] + tau * dir[i] < 0.0) tau = -p[i] / dir[i];
      for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = std::max(0.0, p[i] + tau * dir[i]);
    }
    if (std::abs(pr.target - metric_mean(pr, p)) <= 1e-13 * scale) return true;
    // Blend toward the anchor; this contracts the remaining offset by the
    // blend weight while keeping both marginals exact.
    const double mu = 0.2;
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] = (1.0 - mu) * p[i] + mu * pr.qw[i];
  }
  return std::abs(pr.target - metric_mean(pr, p)) <= 1e-9 * scale;
}

// Equality-constrained Newton refinement inside the affine feasible set.
// Only used when the anchor is strictly positive on every support cell, so
// a strictly interior start exists.
std::vector<double> polish(const CouplingProblem& pr, std::vector<double> p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    p[i] = 0.98 * p[i] + 0.02 * pr.qw[i];

  DenseMatrix con;
  for (int x : pr.sup_x) {
    std::vector<double> rowv(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (pr.xs[i] == x) rowv[i] = 1.0;
    con.push_back(std::move(rowv));
  }
  for (int y : pr.sup_y) {
    std::vector<double> rowv(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (pr.ys[i] == y) rowv[i] = 1.0;
    con.push_back(std::move(rowv));
  }
  con.push_back(pr.logq);
  const std::vector<std::vector<double>> basis = null_space(con);
  if (basis.empty()) return p;
  const std::size_t k = basis.size();

  double f_cur = coupling_mi(pr, p);
  for (int it = 0; it < 40; ++it) {
    std::vector<double> gp(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      gp[i] = std::log(std::max(p[i], 1e-300)) - pr.ref_log[i] + 1.0;
    std::vector<double> gz(k, 0.0);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < p.size(); ++i) gz[j] += basis[j][i] * gp[i];
    DenseMatrix hz(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double w = 1.0 / std::max(p[i], 1e-300);
      for (std::size_t j1 = 0; j1 < k; ++j1)
        for (std::size_t j2 = 0; j2 < k; ++j2)
          hz[j1][j2] += w * basis[j1][i] * basis[j2][i];
    }
    std::vector<double> delta;
    std::vector<double> neg_g(k);
    for (std::size_t j = 0; j < k; ++j) neg_g[j] = -gz[j];
    if (!solve_gauss(hz, neg_g, delta)) break;
    std::vector<double> dp(p.size(), 0.0);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = 0; i < p.size(); ++i) dp[i] += delta[j] * basis[j][i];
    double slope = 0.0;
    for (std::size_t j = 0; j < k; ++j) slope += gz[j] * delta[j];
    if (slope >= 0.0) break;  // not a descent direction; stop here
    double step = 1.0;
    bool ok = false;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> p_try(p.size());
      bool positive = true;
      for (std::size_t i = 0; i < p.size(); ++i) {
        p_try[i] = p[i] + step * dp[i];
        if (p_try[i] <= 0.0) {
          positive = false;
          break;
        }
      }
      if (positive) {
        const double f_try = coupling_mi(pr, p_try);
        if (f_try <= f_cur + 1e-4 * step * slope) {
          p = std::move(p_try);
          f_cur = f_try;
          ok = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!ok || step * std::sqrt(-slope) < 1e-14) break;
  }
  return p;
}

}  // namespace

double lm_primal_upper(const ChannelTriple& t, int trials) {
  t.validate();
  const JointDist jd = t.joint();
  const int nx = t.num_inputs();
  const int ny = t.num_outputs();

  // Metric mean of the true joint; -inf means the constraint is vacuous and
  // the independent coupling (rate 0) is optimal.
  double target = 0.0;
  bool target_finite = true;
  for (int x = 0; x < nx && target_finite; ++x)
    for (int y = 0; y < ny; ++y) {
      if (!t.on_support(x, y)) continue;
      if (t.q(x, y) <= 0.0) {
        target_finite = false;
        break;
      }
      target += t.Q[x] * t.W(x, y) * std::log(t.q(x, y));
    }
  if (!target_finite) return 0.0;

  double indep = 0.0;
  bool indep_finite = true;
  for (int x = 0; x < nx && indep_finite; ++x) {
    if (t.Q[x] <= 0.0) continue;
    for (int y = 0; y < ny; ++y) {
      if (jd.py[y] <= 0.0) continue;
      if (t.q(x, y) <= 0.0) {
        indep_finite = false;
        break;
      }
      indep += t.Q[x] * jd.py[y] * std::log(t.q(x, y));
    }
  }
  if (indep_finite && indep >= target) return 0.0;

  CouplingProblem pr;
  pr.nx = nx;
  pr.ny = ny;
  pr.target = target;
  bool anchor_positive = true;
  for (int x = 0; x < nx; ++x) {
    if (t.Q[x] <= 0.0) continue;
    pr.sup_x.push_back(x);
    for (int y = 0; y < ny; ++y) {
      if (jd.py[y] <= 0.0 || t.q(x, y) <= 0.0) continue;
      pr.xs.push_back(x);
      pr.ys.push_back(y);
      pr.ref_log.push_back(std::log(t.Q[x]) + std::log(jd.py[y]));
      pr.logq.push_back(std::log(t.q(x, y)));
      pr.qw.push_back(t.Q[x] * t.W(x, y));
      if (t.W(x, y) <= 0.0) anchor_positive = false;
    }
  }
  for (int y = 0; y < ny; ++y)
    if (jd.py[y] > 0.0) pr.sup_y.push_back(y);

  double best = mutual_information(t);  // the anchor QW is always feasible
  const std::size_t cells = pr.xs.size();

  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> p(cells);
    std::uint64_t st = 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(trial + 1);
    auto rnd = [&st]() {
      st = st * 6364136223846793005ull + 1442695040888963407ull;
      return static_cast<double>(st >> 11) * 0x1.0p-53;
    };
    double z = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double ind = std::exp(pr.ref_log[i]);
      double v = 0.0;
      switch (trial % 3) {
        case 0: v = 0.9 * pr.qw[i] + 0.1 * ind; break;
        case 1: v = 0.5 * pr.qw[i] + 0.5 * ind; break;
        default:
          v = (0.5 * pr.qw[i] + 0.5 * ind) * std::exp(rnd() - 0.5);
          break;
      }
      p[i] = std::max(v, 1e-12);
      z += p[i];
    }
    for (double& v : p) v /= z;

    mirror_descent(t, pr, p);
    if (!repair(t, pr, p)) continue;
    best = std::min(best, coupling_mi(pr, p));
    if (anchor_positive) {
      std::vector<double> q = polish(pr, p);
      if (repair(t, pr, q)) best = std::min(best, coupling_mi(pr, q));
    }
  }

  if (!std::isfinite(best)) throw std::runtime_error("no feasible point found");
  return best;
}

}  // namespace mdx
