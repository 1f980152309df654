#include "mdx/exponents.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mdx/linalg.hpp"
#include "mdx/numerics.hpp"
#include "mdx/optim.hpp"
#include "mdx/rates.hpp"
#include "mdx/tilted.hpp"

namespace mdx {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Precomputed log tables shared by every objective evaluation for one triple.
struct Tables {
  int nx = 0;
  int ny = 0;
  std::vector<double> logQ;  // log Q(x); -inf off the input support
  Matrix logq;               // log q(x,y); -inf where the metric vanishes
  Matrix logW;               // log W(y|x); -inf off the channel support
  Matrix qw;                 // Q(x) W(y|x)
  std::vector<int> xs;       // supported inputs
  bool metric_positive = true;  // q > 0 wherever Q(x) W(y|x) > 0
};

Tables build_tables(const ChannelTriple& t) {
  Tables tab;
  tab.nx = t.num_inputs();
  tab.ny = t.num_outputs();
  tab.logQ.assign(tab.nx, kNegInf);
  tab.logq = Matrix(tab.nx, tab.ny, kNegInf);
  tab.logW = Matrix(tab.nx, tab.ny, kNegInf);
  tab.qw = Matrix(tab.nx, tab.ny, 0.0);
  for (int x = 0; x < tab.nx; ++x) {
    if (t.Q[x] > 0.0) {
      tab.logQ[x] = std::log(t.Q[x]);
      tab.xs.push_back(x);
    }
    for (int y = 0; y < tab.ny; ++y) {
      if (t.q(x, y) > 0.0) tab.logq(x, y) = std::log(t.q(x, y));
      if (t.W(x, y) > 0.0) tab.logW(x, y) = std::log(t.W(x, y));
      tab.qw(x, y) = t.Q[x] * t.W(x, y);
      if (tab.qw(x, y) > 0.0 && t.q(x, y) <= 0.0) tab.metric_positive = false;
    }
  }
  return tab;
}

// log sum_x Q(x) q(x,y)^s e^{shift(x)} per output.
void competitor_logden(const Tables& tab, double s, const double* shift,
                       std::vector<double>& out) {
  out.assign(tab.ny, kNegInf);
  for (int y = 0; y < tab.ny; ++y) {
    LogAccumulator acc;
    for (int x : tab.xs) {
      if (tab.logq(x, y) == kNegInf) continue;
      double term = tab.logQ[x] + s * tab.logq(x, y);
      if (shift != nullptr) term += shift[x];
      acc.add(term);
    }
    out[y] = acc.result();
  }
}

double e0_shifted_impl(const Tables& tab, double rho, double s,
                       const double* transmitted, const double* competitor) {
  if (rho == 0.0) return 0.0;
  if (!tab.metric_positive) return kNegInf;
  std::vector<double> logden;
  competitor_logden(tab, s, competitor, logden);
  LogAccumulator acc;
  for (int x : tab.xs) {
    for (int y = 0; y < tab.ny; ++y) {
      if (tab.qw(x, y) <= 0.0) continue;
      double ratio = logden[y] - s * tab.logq(x, y);
      if (transmitted != nullptr) ratio -= transmitted[x];
      acc.add(std::log(tab.qw(x, y)) + rho * ratio);
    }
  }
  return -acc.result();
}

double e0_cc_impl(const Tables& tab, double rho, double s, const double* a) {
  if (rho == 0.0) return 0.0;
  if (!tab.metric_positive) return kNegInf;
  std::vector<double> logden;
  competitor_logden(tab, s, a, logden);
  double total = 0.0;
  for (int x : tab.xs) {
    LogAccumulator acc;
    for (int y = 0; y < tab.ny; ++y) {
      if (tab.logW(x, y) == kNegInf) continue;
      double ratio = logden[y] - s * tab.logq(x, y);
      if (a != nullptr) ratio -= a[x];
      acc.add(tab.logW(x, y) + rho * ratio);
    }
    total += std::exp(tab.logQ[x]) * acc.result();
  }
  return -total;
}

// ---------------------------------------------------------------------------
// Inner suprema at fixed rho.
// ---------------------------------------------------------------------------

struct InnerSol {
  double value = -kInf;
  double s = 1.0;
  std::vector<double> a;
  std::vector<double> r;
  std::vector<double> rbar;
};

// sup_s of the plain objective; concave in s, so a scan plus golden-section
// refinement in log s suffices.
InnerSol inner_iid(const Tables& tab, double rho) {
  std::vector<double> scan;
  for (double s : geometric_grid()) scan.push_back(std::log(s));
  auto f = [&](double u) {
    return e0_shifted_impl(tab, rho, std::exp(u), nullptr, nullptr);
  };
  ScalarOpt best = scan_then_golden(f, scan, 1e-12);
  InnerSol sol;
  sol.value = best.value;
  sol.s = std::exp(best.x);
  return sol;
}

// sup_s at a fixed common shift on both sides.
InnerSol inner_fixed_shift(const Tables& tab, double rho,
                          const std::vector<double>& a1) {
  std::vector<double> scan;
  for (double s : geometric_grid()) scan.push_back(std::log(s));
  auto f = [&](double u) {
    return e0_shifted_impl(tab, rho, std::exp(u), a1.data(), a1.data());
  };
  ScalarOpt best = scan_then_golden(f, scan, 1e-12);
  InnerSol sol;
  sol.value = best.value;
  sol.s = std::exp(best.x);
  sol.a = a1;
  return sol;
}

std::vector<double> perturb_vector(int n, double magnitude) {
  std::vector<double> v(n, 0.0);
  for (int i = 0; i < n; ++i) v[i] = (i % 2 == 0 ? magnitude : -magnitude);
  return v;
}

// Runs the BFGS ascent from each start and keeps the best outcome.  `unpack`
// maps the optimization vector to an InnerSol.
InnerSol best_of_starts(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<std::vector<double>>& starts,
    const std::function<InnerSol(const std::vector<double>&, double)>& unpack) {
  AscentOptions opt;
  opt.tol = 1e-12;
  opt.max_iter = 500;
  InnerSol best;
  for (const auto& z0 : starts) {
    VectorOpt run = quasi_newton_max(objective, z0, opt);
    if (run.value > best.value) best = unpack(run.x, run.value);
  }
  return best;
}

// sup over (s, a) of the expectation-outside-log objective.  Jointly concave
// in (s, a); the log-s reparametrization keeps s positive without harming
// the unique stationary point.
InnerSol inner_cc(const Tables& tab, double rho,
                  const std::vector<std::pair<double, std::vector<double>>>& warm,
                  bool wide) {
  const int nx = tab.nx;
  auto objective = [&](const std::vector<double>& z) {
    return e0_cc_impl(tab, rho, std::exp(z[0]), z.data() + 1);
  };
  auto unpack = [&](const std::vector<double>& z, double value) {
    InnerSol sol;
    sol.value = value;
    sol.s = std::exp(z[0]);
    sol.a.assign(z.begin() + 1, z.end());
    return sol;
  };
  std::vector<std::vector<double>> starts;
  auto add_start = [&](double s0, const std::vector<double>& a0) {
    std::vector<double> z(1 + nx, 0.0);
    z[0] = std::log(std::max(s0, 1e-8));
    for (int x = 0; x < nx && x < static_cast<int>(a0.size()); ++x) z[1 + x] = a0[x];
    starts.push_back(std::move(z));
  };
  for (const auto& w : warm) add_start(w.first, w.second);
  add_start(1.0, {});
  if (wide) {
    add_start(0.5, {});
    add_start(2.0, {});
    add_start(1.0, perturb_vector(nx, 0.05));
  }
  return best_of_starts(objective, starts, unpack);
}

// sup over (s, a) of the plain objective with the same shift on both sides.
InnerSol inner_shift_opt(const Tables& tab, double rho,
                         const std::vector<std::pair<double, std::vector<double>>>& warm,
                         bool wide) {
  const int nx = tab.nx;
  auto objective = [&](const std::vector<double>& z) {
    return e0_shifted_impl(tab, rho, std::exp(z[0]), z.data() + 1, z.data() + 1);
  };
  auto unpack = [&](const std::vector<double>& z, double value) {
    InnerSol sol;
    sol.value = value;
    sol.s = std::exp(z[0]);
    sol.a.assign(z.begin() + 1, z.end());
    return sol;
  };
  std::vector<std::vector<double>> starts;
  auto add_start = [&](double s0, const std::vector<double>& a0) {
    std::vector<double> z(1 + nx, 0.0);
    z[0] = std::log(std::max(s0, 1e-8));
    for (int x = 0; x < nx && x < static_cast<int>(a0.size()); ++x) z[1 + x] = a0[x];
    starts.push_back(std::move(z));
  };
  for (const auto& w : warm) add_start(w.first, w.second);
  add_start(1.0, {});
  if (wide) {
    add_start(0.5, {});
    add_start(2.0, {});
    add_start(1.0, perturb_vector(nx, 0.05));
  }
  InnerSol best = best_of_starts(objective, starts, unpack);
  // A shift-free run with a dedicated s search is always an admissible point;
  // never report less than it.
  InnerSol base = inner_iid(tab, rho);
  if (base.value > best.value) {
    base.a.assign(nx, 0.0);
    return base;
  }
  return best;
}

// sup over (s, {r_l}, {rbar_l}) at fixed costs.
InnerSol inner_cost(const Tables& tab, double rho,
                    const std::vector<std::vector<double>>& costs,
                    const std::vector<double>& phi,
                    const std::vector<std::pair<double, std::vector<double>>>& warm,
                    bool wide) {
  const int nx = tab.nx;
  const int L = static_cast<int>(costs.size());
  std::vector<double> b(nx), bbar(nx);
  auto objective = [&](const std::vector<double>& z) {
    const double s = std::exp(z[0]);
    for (int x = 0; x < nx; ++x) {
      double tb = 0.0, tbbar = 0.0;
      for (int l = 0; l < L; ++l) {
        const double centered = costs[l][x] - phi[l];
        tb += z[1 + l] * centered;
        tbbar += z[1 + L + l] * centered;
      }
      b[x] = tb;
      bbar[x] = tbbar;
    }
    return e0_shifted_impl(tab, rho, s, b.data(), bbar.data());
  };
  auto unpack = [&](const std::vector<double>& z, double value) {
    InnerSol sol;
    sol.value = value;
    sol.s = std::exp(z[0]);
    sol.r.assign(z.begin() + 1, z.begin() + 1 + L);
    sol.rbar.assign(z.begin() + 1 + L, z.begin() + 1 + 2 * L);
    return sol;
  };
  std::vector<std::vector<double>> starts;
  auto add_start = [&](double s0, double r_even, double r_odd, double rbar_even,
                       double rbar_odd) {
    std::vector<double> z(1 + 2 * L, 0.0);
    z[0] = std::log(s0);
    for (int l = 0; l < L; ++l) {
      z[1 + l] = (l % 2 == 0) ? r_even : r_odd;
      z[1 + L + l] = (l % 2 == 0) ? rbar_even : rbar_odd;
    }
    starts.push_back(std::move(z));
  };
  for (const auto& w : warm) {
    std::vector<double> z(1 + 2 * L, 0.0);
    z[0] = std::log(std::max(w.first, 1e-8));
    for (int l = 0; l < 2 * L && l < static_cast<int>(w.second.size()); ++l)
      z[1 + l] = w.second[l];
    starts.push_back(std::move(z));
  }
  add_start(1.0, 0.0, 0.0, 0.0, 0.0);  // multipliers off: the shift-free point
  if (wide || warm.empty()) {
    add_start(1.0, 1.0, 1.0, 1.0, 1.0);   // both sides fully on
    add_start(1.0, 1.0, 0.0, 0.0, 1.0);   // transmitted-first corner
    add_start(1.0, 0.0, 1.0, 1.0, 0.0);   // competitor-first corner
  }
  return best_of_starts(objective, starts, unpack);
}

// sup over (s, r, rbar, a) for a single optimized cost.
InnerSol inner_cost_opt1(const Tables& tab, double rho,
                         const std::vector<double>& Q,
                         const std::vector<std::pair<double, std::vector<double>>>& warm,
                         bool wide) {
  const int nx = tab.nx;
  std::vector<double> b(nx), bbar(nx);
  auto objective = [&](const std::vector<double>& z) {
    const double s = std::exp(z[0]);
    const double r = z[1];
    const double rbar = z[2];
    double phi = 0.0;
    for (int x = 0; x < nx; ++x) phi += Q[x] * z[3 + x];
    for (int x = 0; x < nx; ++x) {
      const double centered = z[3 + x] - phi;
      b[x] = r * centered;
      bbar[x] = rbar * centered;
    }
    return e0_shifted_impl(tab, rho, s, b.data(), bbar.data());
  };
  auto unpack = [&](const std::vector<double>& z, double value) {
    InnerSol sol;
    sol.value = value;
    sol.s = std::exp(z[0]);
    sol.r = {z[1]};
    sol.rbar = {z[2]};
    sol.a.assign(z.begin() + 3, z.end());
    return sol;
  };
  std::vector<std::vector<double>> starts;
  auto add_start = [&](double s0, double r0, double rbar0,
                       const std::vector<double>& a0) {
    std::vector<double> z(3 + nx, 0.0);
    z[0] = std::log(std::max(s0, 1e-8));
    z[1] = r0;
    z[2] = rbar0;
    for (int x = 0; x < nx && x < static_cast<int>(a0.size()); ++x) z[3 + x] = a0[x];
    starts.push_back(std::move(z));
  };
  for (const auto& w : warm) add_start(w.first, 1.0, 1.0, w.second);
  add_start(1.0, 1.0, 1.0, {});
  if (wide) {
    add_start(1.0, 1.0, 0.0, perturb_vector(nx, 0.05));
    add_start(1.0, 0.0, 1.0, perturb_vector(nx, 0.05));
    add_start(0.5, 1.0, 1.0, {});
  }
  return best_of_starts(objective, starts, unpack);
}

// ---------------------------------------------------------------------------
// Outer maximization over rho.
// ---------------------------------------------------------------------------

// The envelope rho -> sup_inner E0 - rho * rate is concave (it is a lower
// envelope of affine functions of rho via the primal representation), so a
// coarse scan plus golden-section refinement finds the maximum.
ExponentResult maximize_over_rho(
    const std::function<InnerSol(double)>& inner, double rate) {
  auto objective = [&](double rho) { return inner(rho).value - rho * rate; };
  std::vector<double> grid;
  for (int i = 0; i <= 16; ++i) grid.push_back(i / 16.0);
  ScalarOpt best = scan_then_golden(objective, grid, 1e-10);

  ExponentResult out;
  if (!(best.value > 1e-13)) {
    // The exponent is zero; report the small-tilt maximizer so the metric
    // power is still informative.
    InnerSol sol = inner(1e-6);
    out.value = 0.0;
    out.rho = 0.0;
    out.s = sol.s;
    out.a = sol.a;
    out.r = sol.r;
    out.rbar = sol.rbar;
    return out;
  }
  InnerSol sol = inner(best.x);
  out.value = std::max(0.0, sol.value - best.x * rate);
  out.rho = best.x;
  out.s = sol.s;
  out.a = sol.a;
  out.r = sol.r;
  out.rbar = sol.rbar;
  return out;
}

std::vector<double> cost_means(const ChannelTriple& t,
                               const std::vector<std::vector<double>>& costs) {
  std::vector<double> phi(costs.size(), 0.0);
  for (size_t l = 0; l < costs.size(); ++l)
    for (int x = 0; x < t.num_inputs(); ++x) phi[l] += t.Q[x] * costs[l][x];
  return phi;
}

}  // namespace

// ---------------------------------------------------------------------------
// Fixed-parameter objectives.
// ---------------------------------------------------------------------------

double e0_shifted(const ChannelTriple& triple, double rho, double s,
                  const std::vector<double>& transmitted_shift,
                  const std::vector<double>& competitor_shift) {
  triple.validate();
  Tables tab = build_tables(triple);
  const double* b =
      transmitted_shift.empty() ? nullptr : transmitted_shift.data();
  const double* bbar =
      competitor_shift.empty() ? nullptr : competitor_shift.data();
  if (!transmitted_shift.empty() &&
      static_cast<int>(transmitted_shift.size()) != tab.nx)
    throw std::invalid_argument("transmitted shift length mismatch");
  if (!competitor_shift.empty() &&
      static_cast<int>(competitor_shift.size()) != tab.nx)
    throw std::invalid_argument("competitor shift length mismatch");
  return e0_shifted_impl(tab, rho, s, b, bbar);
}

double e0_constant_composition(const ChannelTriple& triple, double rho,
                               double s, const std::vector<double>& a) {
  triple.validate();
  Tables tab = build_tables(triple);
  if (!a.empty() && static_cast<int>(a.size()) != tab.nx)
    throw std::invalid_argument("shift length mismatch");
  return e0_cc_impl(tab, rho, s, a.empty() ? nullptr : a.data());
}

// ---------------------------------------------------------------------------
// Dual exponents.
// ---------------------------------------------------------------------------

ExponentResult er_iid(const ChannelTriple& triple, double rate) {
  triple.validate();
  Tables tab = build_tables(triple);
  auto inner = [&](double rho) { return inner_iid(tab, rho); };
  return maximize_over_rho(inner, rate);
}

ExponentResult er_cc(const ChannelTriple& triple, double rate) {
  triple.validate();
  Tables tab = build_tables(triple);
  RateResult lm = lm_rate(triple);

  struct Warm {
    bool have = false;
    double s = 1.0;
    std::vector<double> a;
    bool first = true;
  };
  auto inner = [&, warm = std::make_shared<Warm>()](double rho) {
    std::vector<std::pair<double, std::vector<double>>> starts;
    if (warm->have) starts.emplace_back(warm->s, warm->a);
    starts.emplace_back(lm.s_star, lm.a_star);
    InnerSol sol = inner_cc(tab, rho, starts, warm->first);
    warm->first = false;
    warm->have = true;
    warm->s = sol.s;
    warm->a = sol.a;
    return sol;
  };
  return maximize_over_rho(inner, rate);
}

ExponentResult er_cost(const ChannelTriple& triple, double rate,
                       const std::vector<std::vector<double>>& costs) {
  triple.validate();
  if (costs.empty()) return er_iid(triple, rate);
  for (const auto& c : costs) {
    if (static_cast<int>(c.size()) != triple.num_inputs())
      throw std::invalid_argument("cost vector length mismatch");
    for (double v : c)
      if (!std::isfinite(v))
        throw std::invalid_argument("non-finite cost entry");
  }
  Tables tab = build_tables(triple);
  std::vector<double> phi = cost_means(triple, costs);

  struct Warm {
    bool have = false;
    double s = 1.0;
    std::vector<double> z;
    bool first = true;
  };
  auto inner = [&, warm = std::make_shared<Warm>()](double rho) {
    std::vector<std::pair<double, std::vector<double>>> starts;
    if (warm->have) starts.emplace_back(warm->s, warm->z);
    InnerSol sol = inner_cost(tab, rho, costs, phi, starts, warm->first);
    warm->first = false;
    warm->have = true;
    warm->s = sol.s;
    warm->z.clear();
    warm->z.insert(warm->z.end(), sol.r.begin(), sol.r.end());
    warm->z.insert(warm->z.end(), sol.rbar.begin(), sol.rbar.end());
    return sol;
  };
  return maximize_over_rho(inner, rate);
}

ExponentResult er_cost_prime(const ChannelTriple& triple, double rate,
                             const std::vector<double>& a1) {
  triple.validate();
  if (!a1.empty() && static_cast<int>(a1.size()) != triple.num_inputs())
    throw std::invalid_argument("cost vector length mismatch");
  Tables tab = build_tables(triple);
  if (a1.empty()) {
    auto inner = [&](double rho) { return inner_iid(tab, rho); };
    return maximize_over_rho(inner, rate);
  }
  auto inner = [&](double rho) { return inner_fixed_shift(tab, rho, a1); };
  ExponentResult out = maximize_over_rho(inner, rate);
  out.a = a1;
  return out;
}

ExponentResult er_cost_prime_opt(const ChannelTriple& triple, double rate) {
  triple.validate();
  Tables tab = build_tables(triple);
  struct Warm {
    bool have = false;
    double s = 1.0;
    std::vector<double> a;
    bool first = true;
  };
  auto inner = [&, warm = std::make_shared<Warm>()](double rho) {
    std::vector<std::pair<double, std::vector<double>>> starts;
    if (warm->have) starts.emplace_back(warm->s, warm->a);
    InnerSol sol = inner_shift_opt(tab, rho, starts, warm->first);
    warm->first = false;
    warm->have = true;
    warm->s = sol.s;
    warm->a = sol.a;
    return sol;
  };
  return maximize_over_rho(inner, rate);
}

ExponentResult er_cost_opt1(const ChannelTriple& triple, double rate) {
  triple.validate();
  Tables tab = build_tables(triple);
  // The pinned-multiplier optimum is an admissible point of this problem;
  // seeding with it guarantees we never report less.
  ExponentResult pinned = er_cost_prime_opt(triple, rate);

  struct Warm {
    bool have = false;
    double s = 1.0;
    std::vector<double> a;
    bool first = true;
  };
  auto inner = [&, warm = std::make_shared<Warm>()](double rho) {
    std::vector<std::pair<double, std::vector<double>>> starts;
    if (warm->have) starts.emplace_back(warm->s, warm->a);
    if (!pinned.a.empty()) starts.emplace_back(pinned.s, pinned.a);
    InnerSol sol = inner_cost_opt1(tab, rho, triple.Q, starts, warm->first);
    warm->first = false;
    warm->have = true;
    warm->s = sol.s;
    warm->a = sol.a;
    return sol;
  };
  ExponentResult out = maximize_over_rho(inner, rate);
  if (out.value < pinned.value) {
    pinned.r = {1.0};
    pinned.rbar = {1.0};
    return pinned;
  }
  return out;
}

std::vector<std::vector<double>> cc_matching_costs(const ChannelTriple& triple,
                                                   const ExponentResult& cc) {
  triple.validate();
  const int nx = triple.num_inputs();
  std::vector<double> a = cc.a;
  if (a.empty()) a.assign(nx, 0.0);
  if (static_cast<int>(a.size()) != nx)
    throw std::invalid_argument("shift length mismatch");
  TiltedFamily fam = make_family(triple, cc.s, a);
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < triple.num_outputs(); ++y)
      if (triple.on_support(x, y) && fam.density(x, y) == kNegInf)
        throw std::runtime_error(
            "metric vanishes on a channel support cell; matching costs "
            "undefined");

  std::vector<double> a1(nx, 0.0), a2(nx, 0.0);
  if (cc.rho >= 1e-6) {
    for (int x = 0; x < nx; ++x) {
      if (triple.Q[x] <= 0.0) continue;
      LogAccumulator acc;
      for (int y = 0; y < triple.num_outputs(); ++y) {
        if (triple.W(x, y) <= 0.0) continue;
        acc.add(std::log(triple.W(x, y)) - cc.rho * fam.density(x, y));
      }
      a1[x] = a[x] + acc.result() / cc.rho;
      a2[x] = a[x];
    }
  } else {
    // Zero-tilt limit: the log-average collapses to minus the conditional
    // mean of the density.
    std::vector<double> cm = conditional_mean_by_input(fam);
    for (int x = 0; x < nx; ++x) {
      if (triple.Q[x] <= 0.0) continue;
      a1[x] = a[x] - cm[x];
      a2[x] = a[x];
    }
  }
  return {a1, a2};
}

// ---------------------------------------------------------------------------
// Primal oracle.
// ---------------------------------------------------------------------------

namespace {

// Cells admissible for the outer joint: positive input probability, positive
// channel probability, positive metric (so both divergences and the metric
// mean stay finite).
struct PrimalData {
  int nx = 0, ny = 0, n = 0;
  std::vector<int> cx, cy;
  std::vector<double> clogq, clogqw, cqw;
  std::vector<std::vector<int>> col;  // output -> cells
  std::vector<std::vector<int>> row;  // input -> cells
  std::vector<double> logQ;
  Ensemble kind = Ensemble::iid;
  std::vector<std::vector<double>> costs;
  std::vector<double> phi;
  std::vector<double> anchor;  // renormalized reference point over cells
};

// Exact minimizer of D(Ptilde || Q x py) subject to the ensemble's linear
// constraints on Ptilde and the metric-dominance constraint
// <log q, Ptilde> >= c.  The metric constraint is dualized through a scalar
// tilt mu >= 0 found by bisection (its mean is nondecreasing in mu); the
// remaining constraints are handled in closed form per output column (iid),
// by log-domain Sinkhorn scaling (constant composition), or by a small
// Newton solve on the cost-feature multipliers (cost ensemble).
class InnerSolver {
 public:
  explicit InnerSolver(const PrimalData& d)
      : d_(d),
        logu_(d.nx, 0.0),
        beta_(d.costs.size(), 0.0),
        ptilde_(d.n, 0.0),
        ypot_(d.ny, 0.0) {}

  struct Out {
    double divergence = 0.0;
    double mu = 0.0;
    std::vector<double> ygrad;  // per output, up to an additive constant
  };

  Out solve(const std::vector<double>& py, double c) {
    const double scale = 1.0 + std::abs(c);
    double e0v = metric_mean(0.0, py);
    double mu = 0.0;
    if (e0v < c - 1e-13 * scale) {
      double lo = 0.0;
      double hi = std::max(1.0, 2.0 * warm_mu_);
      int guard = 0;
      while (metric_mean(hi, py) < c && guard++ < 60) {
        lo = hi;
        hi *= 2.0;
      }
      for (int it = 0; it < 90; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double e = metric_mean(mid, py);
        if (std::abs(e - c) <= 1e-12 * scale) {
          hi = mid;
          break;
        }
        (e < c ? lo : hi) = mid;
      }
      mu = hi;  // the >= side: the candidate satisfies the constraint
    }
    warm_mu_ = mu;
    const double unused = metric_mean(mu, py);
    (void)unused;

    Out out;
    out.mu = mu;
    out.ygrad = ypot_;
    double div = 0.0;
    for (int k = 0; k < d_.n; ++k) {
      if (ptilde_[k] <= 0.0) continue;
      div += ptilde_[k] * lp_[k];
    }
    out.divergence = div;
    return out;
  }

 private:
  // Builds the candidate at tilt mu, returns its metric mean, and fills
  // ptilde_, lp_ (log Ptilde/(Q x py) per cell) and ypot_ (gradient piece).
  double metric_mean(double mu, const std::vector<double>& py) {
    lp_.assign(d_.n, 0.0);
    if (d_.kind == Ensemble::constant_composition) return sinkhorn(mu, py);
    if (d_.kind == Ensemble::cost) match_features(mu, py);
    // Per-column closed form: Ptilde(x|y) proportional to
    // Q(x) e^{features(x)} q(x,y)^mu.
    double metric = 0.0;
    for (int y = 0; y < d_.ny; ++y) {
      if (d_.col[y].empty()) continue;
      if (py[y] <= 0.0) {
        for (int k : d_.col[y]) ptilde_[k] = 0.0;
        continue;
      }
      LogAccumulator acc;
      for (int k : d_.col[y]) acc.add(weight(k, mu));
      const double z = acc.result();
      ypot_[y] = -z;
      for (int k : d_.col[y]) {
        const double w = weight(k, mu);
        ptilde_[k] = py[y] * std::exp(w - z);
        lp_[k] = w - d_.logQ[d_.cx[k]] - z;
        metric += ptilde_[k] * d_.clogq[k];
      }
    }
    return metric;
  }

  double weight(int k, double mu) const {
    double w = d_.logQ[d_.cx[k]] + mu * d_.clogq[k];
    for (size_t l = 0; l < beta_.size(); ++l)
      w += beta_[l] * d_.costs[l][d_.cx[k]];
    return w;
  }

  // Newton iteration matching E[a_l] to phi_l at fixed mu.
  void match_features(double mu, const std::vector<double>& py) {
    const int L = static_cast<int>(d_.costs.size());
    if (L == 0) return;
    for (int it = 0; it < 50; ++it) {
      // Candidate moments and per-column covariance.
      std::vector<double> mean(L, 0.0);
      DenseMatrix cov(L, std::vector<double>(L, 0.0));
      for (int y = 0; y < d_.ny; ++y) {
        if (d_.col[y].empty() || py[y] <= 0.0) continue;
        LogAccumulator acc;
        for (int k : d_.col[y]) acc.add(weight(k, mu));
        const double z = acc.result();
        std::vector<double> m(L, 0.0);
        for (int k : d_.col[y]) {
          const double p = std::exp(weight(k, mu) - z);
          for (int l = 0; l < L; ++l) m[l] += p * d_.costs[l][d_.cx[k]];
        }
        for (int k : d_.col[y]) {
          const double p = std::exp(weight(k, mu) - z);
          for (int l = 0; l < L; ++l)
            for (int j = 0; j < L; ++j)
              cov[l][j] += py[y] * p * (d_.costs[l][d_.cx[k]] - m[l]) *
                           (d_.costs[j][d_.cx[k]] - m[j]);
        }
        for (int l = 0; l < L; ++l) mean[l] += py[y] * m[l];
      }
      double err = 0.0;
      std::vector<double> rhs(L, 0.0);
      for (int l = 0; l < L; ++l) {
        rhs[l] = d_.phi[l] - mean[l];
        err = std::max(err, std::abs(rhs[l]));
        cov[l][l] += 1e-14;
      }
      if (err < 1e-13) break;
      std::vector<double> delta;
      if (!solve_gauss(cov, rhs, delta)) break;
      double step = 1.0;
      double norm = 0.0;
      for (double v : delta) norm = std::max(norm, std::abs(v));
      if (norm > 5.0) step = 5.0 / norm;
      for (int l = 0; l < L; ++l) beta_[l] += step * delta[l];
    }
  }

  // Log-domain Sinkhorn scaling to rows Q and columns py.
  double sinkhorn(double mu, const std::vector<double>& py) {
    std::vector<double> logv(d_.ny, kNegInf);
    std::vector<double> logpy(d_.ny, kNegInf);
    for (int y = 0; y < d_.ny; ++y)
      if (py[y] > 0.0) logpy[y] = std::log(py[y]);
    auto logk = [&](int k) { return d_.logQ[d_.cx[k]] + mu * d_.clogq[k]; };
    // Column update from the warm row potentials, then alternate.
    for (int it = 0; it < 400; ++it) {
      for (int y = 0; y < d_.ny; ++y) {
        if (d_.col[y].empty() || logpy[y] == kNegInf) {
          logv[y] = kNegInf;
          continue;
        }
        LogAccumulator acc;
        for (int k : d_.col[y]) acc.add(logk(k) + logu_[d_.cx[k]]);
        logv[y] = logpy[y] - acc.result();
      }
      double err = 0.0;
      for (int x = 0; x < d_.nx; ++x) {
        if (d_.row[x].empty()) continue;
        LogAccumulator acc;
        for (int k : d_.row[x]) {
          if (logv[d_.cy[k]] == kNegInf) continue;
          acc.add(logk(k) + logv[d_.cy[k]]);
        }
        const double target = d_.logQ[x];
        const double rowsum = acc.result();
        err = std::max(err, std::abs(std::exp(rowsum + logu_[x]) -
                                     std::exp(target)));
        logu_[x] = target - rowsum;
      }
      if (err < 1e-14) break;
    }
    double metric = 0.0;
    for (int k = 0; k < d_.n; ++k) {
      const int y = d_.cy[k];
      if (logv[y] == kNegInf) {
        ptilde_[k] = 0.0;
        continue;
      }
      const double lpt = logu_[d_.cx[k]] + logk(k) + logv[y];
      ptilde_[k] = std::exp(lpt);
      lp_[k] = logu_[d_.cx[k]] + mu * d_.clogq[k] + logv[y] - logpy[y];
      metric += ptilde_[k] * d_.clogq[k];
    }
    for (int y = 0; y < d_.ny; ++y)
      ypot_[y] = (logv[y] == kNegInf) ? 0.0 : logv[y] - logpy[y];
    return metric;
  }

  const PrimalData& d_;
  double warm_mu_ = 0.0;
  std::vector<double> logu_;
  std::vector<double> beta_;
  std::vector<double> ptilde_;
  std::vector<double> lp_;
  std::vector<double> ypot_;
};

// Exponential-family correction pushing the cost means of p (over cells)
// back to their targets, with a blend toward the anchor as fallback.
void repair_cost_means(const PrimalData& d, std::vector<double>& p) {
  const int L = static_cast<int>(d.costs.size());
  if (L == 0) return;
  for (int it = 0; it < 60; ++it) {
    std::vector<double> mean(L, 0.0);
    for (int k = 0; k < d.n; ++k)
      for (int l = 0; l < L; ++l) mean[l] += p[k] * d.costs[l][d.cx[k]];
    double err = 0.0;
    std::vector<double> rhs(L, 0.0);
    for (int l = 0; l < L; ++l) {
      rhs[l] = d.phi[l] - mean[l];
      err = std::max(err, std::abs(rhs[l]));
    }
    if (err < 1e-12) return;
    DenseMatrix cov(L, std::vector<double>(L, 0.0));
    for (int k = 0; k < d.n; ++k)
      for (int l = 0; l < L; ++l)
        for (int j = 0; j < L; ++j)
          cov[l][j] += p[k] * (d.costs[l][d.cx[k]] - mean[l]) *
                       (d.costs[j][d.cx[k]] - mean[j]);
    for (int l = 0; l < L; ++l) cov[l][l] += 1e-14;
    std::vector<double> delta;
    if (!solve_gauss(cov, rhs, delta)) break;
    double norm = 0.0;
    for (double v : delta) norm = std::max(norm, std::abs(v));
    const double step = norm > 5.0 ? 5.0 / norm : 1.0;
    double total = 0.0;
    for (int k = 0; k < d.n; ++k) {
      double tilt = 0.0;
      for (int l = 0; l < L; ++l) tilt += step * delta[l] * d.costs[l][d.cx[k]];
      p[k] *= std::exp(tilt);
      total += p[k];
    }
    for (double& v : p) v /= total;
  }
  // Fallback: the anchor meets the constraints exactly, so blending
  // contracts any remaining violation geometrically.
  for (int blend = 0; blend < 80; ++blend) {
    double err = 0.0;
    for (int l = 0; l < L; ++l) {
      double mean = 0.0;
      for (int k = 0; k < d.n; ++k) mean += p[k] * d.costs[l][d.cx[k]];
      err = std::max(err, std::abs(mean - d.phi[l]));
    }
    if (err < 1e-12) break;
    for (int k = 0; k < d.n; ++k) p[k] = 0.5 * (p[k] + d.anchor[k]);
  }
}

}  // namespace

double er_primal_upper(const ChannelTriple& triple, double rate,
                       const EnsembleConstraints& constraints) {
  triple.validate();
  const int nx = triple.num_inputs();
  const int ny = triple.num_outputs();
  if (constraints.kind != Ensemble::iid &&
      constraints.kind != Ensemble::constant_composition &&
      constraints.kind != Ensemble::cost)
    throw std::invalid_argument("infeasible spec: unknown ensemble kind");

  PrimalData d;
  d.nx = nx;
  d.ny = ny;
  d.kind = constraints.kind;
  if (constraints.kind == Ensemble::cost) {
    for (const auto& c : constraints.costs) {
      if (static_cast<int>(c.size()) != nx)
        throw std::invalid_argument(
            "infeasible spec: cost vector length mismatch");
      for (double v : c)
        if (!std::isfinite(v))
          throw std::invalid_argument("infeasible spec: non-finite cost entry");
    }
    std::vector<double> phi_all = cost_means(triple, constraints.costs);
    // Drop costs that are constant on the input support; their constraints
    // are vacuous and would only make the feature solves singular.
    for (size_t l = 0; l < constraints.costs.size(); ++l) {
      bool constant = true;
      for (int x = 0; x < nx && constant; ++x)
        if (triple.Q[x] > 0.0 &&
            std::abs(constraints.costs[l][x] - phi_all[l]) > 1e-12)
          constant = false;
      if (!constant) {
        d.costs.push_back(constraints.costs[l]);
        d.phi.push_back(phi_all[l]);
      }
    }
    if (d.costs.empty()) d.kind = Ensemble::iid;
  }

  d.logQ.assign(nx, kNegInf);
  d.col.assign(ny, {});
  d.row.assign(nx, {});
  for (int x = 0; x < nx; ++x) {
    if (triple.Q[x] > 0.0) d.logQ[x] = std::log(triple.Q[x]);
    for (int y = 0; y < ny; ++y) {
      const double mass = triple.Q[x] * triple.W(x, y);
      if (mass <= 0.0 || triple.q(x, y) <= 0.0) continue;
      const int k = d.n++;
      d.cx.push_back(x);
      d.cy.push_back(y);
      d.clogq.push_back(std::log(triple.q(x, y)));
      d.clogqw.push_back(std::log(mass));
      d.cqw.push_back(mass);
      d.col[y].push_back(k);
      d.row[x].push_back(k);
    }
  }
  if (d.n == 0) return kInf;
  if (d.kind == Ensemble::constant_composition)
    for (int x = 0; x < nx; ++x)
      if (triple.Q[x] > 0.0 && d.row[x].empty()) return kInf;

  // Anchor: the reference restricted to the admissible cells, renormalized
  // (per input row for the composition-pinned case).
  d.anchor.assign(d.n, 0.0);
  if (d.kind == Ensemble::constant_composition) {
    for (int x = 0; x < nx; ++x) {
      double rowsum = 0.0;
      for (int k : d.row[x]) rowsum += d.cqw[k];
      for (int k : d.row[x]) d.anchor[k] = triple.Q[x] * d.cqw[k] / rowsum;
    }
  } else {
    double total = 0.0;
    for (int k = 0; k < d.n; ++k) total += d.cqw[k];
    for (int k = 0; k < d.n; ++k) d.anchor[k] = d.cqw[k] / total;
  }

  InnerSolver inner(d);
  InnerSolver probe(d);  // separate warm state for candidate evaluations

  std::vector<double> logp(d.n), p(d.n), py(ny), grad(d.n);
  for (int k = 0; k < d.n; ++k) logp[k] = std::log(d.anchor[k]);

  auto project = [&](std::vector<double>& lp) {
    if (d.kind == Ensemble::constant_composition) {
      for (int x = 0; x < nx; ++x) {
        if (d.row[x].empty()) continue;
        LogAccumulator acc;
        for (int k : d.row[x]) acc.add(lp[k]);
        const double shift = d.logQ[x] - acc.result();
        for (int k : d.row[x]) lp[k] += shift;
      }
    } else {
      LogAccumulator acc;
      for (double v : lp) acc.add(v);
      const double z = acc.result();
      for (double& v : lp) v -= z;
    }
  };
  auto refresh = [&]() {
    std::fill(py.begin(), py.end(), 0.0);
    for (int k = 0; k < d.n; ++k) {
      p[k] = std::exp(logp[k]);
      py[d.cy[k]] += p[k];
    }
  };
  auto value_at = [&](const std::vector<double>& pp, InnerSolver& solver) {
    std::vector<double> ppy(ny, 0.0);
    double c = 0.0, div = 0.0;
    for (int k = 0; k < d.n; ++k) {
      ppy[d.cy[k]] += pp[k];
      c += pp[k] * d.clogq[k];
      if (pp[k] > 0.0) div += pp[k] * (std::log(pp[k]) - d.clogqw[k]);
    }
    InnerSolver::Out o = solver.solve(ppy, c);
    return div + std::max(0.0, o.divergence - rate);
  };

  double best = kInf;
  double amax = 0.0;
  for (size_t l = 0; l < d.costs.size(); ++l)
    for (int x = 0; x < nx; ++x)
      if (triple.Q[x] > 0.0)
        amax = std::max(amax, std::abs(d.costs[l][x] - d.phi[l]));

  const bool penalized = (d.kind == Ensemble::cost);
  std::vector<double> lambdas =
      penalized ? std::vector<double>{2, 8, 32, 128, 512}
                : std::vector<double>{0};
  for (double lambda : lambdas) {
    const double eta =
        penalized ? 0.3 / (1.0 + lambda * amax * amax) : 0.25;
    const int iters = penalized ? 320 : 1600;
    for (int it = 0; it < iters; ++it) {
      refresh();
      double c = 0.0, div = 0.0;
      for (int k = 0; k < d.n; ++k) {
        c += p[k] * d.clogq[k];
        div += p[k] * (logp[k] - d.clogqw[k]);
      }
      InnerSolver::Out o = inner.solve(py, c);
      const bool active = o.divergence > rate;
      if (!penalized) best = std::min(best, div + std::max(0.0, o.divergence - rate));
      std::vector<double> viol(d.costs.size(), 0.0);
      if (penalized)
        for (size_t l = 0; l < d.costs.size(); ++l) {
          for (int k = 0; k < d.n; ++k)
            viol[l] += p[k] * d.costs[l][d.cx[k]];
          viol[l] -= d.phi[l];
        }
      for (int k = 0; k < d.n; ++k) {
        double g = (logp[k] - d.clogqw[k]) + 1.0;
        if (active) g += o.mu * d.clogq[k] + o.ygrad[d.cy[k]];
        if (penalized)
          for (size_t l = 0; l < d.costs.size(); ++l)
            g += 2.0 * lambda * viol[l] * (d.costs[l][d.cx[k]] - d.phi[l]);
        grad[k] = std::clamp(g, -50.0, 50.0);
      }
      for (int k = 0; k < d.n; ++k) logp[k] -= eta * grad[k];
      project(logp);
      if (penalized && (it % 25 == 24 || it == iters - 1)) {
        refresh();
        std::vector<double> repaired = p;
        repair_cost_means(d, repaired);
        best = std::min(best, value_at(repaired, probe));
      }
    }
  }
  refresh();
  if (penalized) {
    std::vector<double> repaired = p;
    repair_cost_means(d, repaired);
    best = std::min(best, value_at(repaired, probe));
  } else {
    best = std::min(best, value_at(p, probe));
  }
  // Both terms of the objective are nonnegative; tiny negatives are
  // accumulation noise.
  return std::max(0.0, best);
}

}  // namespace mdx
