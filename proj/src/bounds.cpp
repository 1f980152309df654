#include "mdx/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdx/numerics.hpp"
#include "mdx/tilted.hpp"

namespace mdx {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
// Snap tolerance for closed >= comparisons between real-valued metric sums.
constexpr double kTieSlack = 1e-9;
// Cap on accumulate operations for the dense log-domain convolutions.
constexpr double kOpBudget = 4e9;
// Pairwise atom-product cap for the exact sparse convolutions.
constexpr size_t kSparseBudget = 4000000;

std::string too_large(const char* what, double need, double have) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "state space too large: ~%.3g %s (budget %.3g)",
                need, what, have);
  return buf;
}

void check_query(const BoundQuery& q, bool needs_s) {
  q.triple.validate();
  if (q.n < 1) throw std::invalid_argument("bounds: blocklength must be >= 1");
  if (!(q.M >= 2.0) ||
      std::abs(q.M - std::round(q.M)) > 1e-9 * std::max(1.0, std::abs(q.M)))
    throw std::invalid_argument("bounds: codeword count must be an integer >= 2");
  if (needs_s && !(q.s > 0.0))
    throw std::invalid_argument("bounds: metric power s must be positive");
  if (q.quantization == Quantization::grid && !(q.grid_step > 0.0))
    throw std::invalid_argument("bounds: grid step must be positive");
  if (!(q.budget > 0.0))
    throw std::invalid_argument("bounds: state-space budget must be positive");
}

double log_m_minus_one(double M) { return std::log(M) + std::log1p(-1.0 / M); }

// ---------------------------------------------------------------------------
// Integer-lattice log-domain convolution machinery.  Per-letter laws are kept
// sparse (few occupied cells on a possibly fine lattice); n-letter sums are
// dense arrays of log masses indexed from kmin.  Values are reconstructed as
// letters * offset + k * step, so two sums over the same number of letters
// compare by their integer indices alone.
// ---------------------------------------------------------------------------

using Atoms = std::vector<std::pair<long long, double>>;  // (index, log mass)

Atoms merge_atoms(Atoms raw) {
  std::sort(raw.begin(), raw.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Atoms out;
  for (const auto& [k, lm] : raw) {
    if (!out.empty() && out.back().first == k)
      out.back().second = log_add(out.back().second, lm);
    else
      out.push_back({k, lm});
  }
  return out;
}

struct LogArr {
  long long kmin = 0;
  std::vector<double> logp;
  size_t size() const { return logp.size(); }
};

LogArr unit_arr() { return {0, {0.0}}; }

LogArr dense_from_atoms(const Atoms& atoms) {
  LogArr out;
  out.kmin = atoms.front().first;
  out.logp.assign(static_cast<size_t>(atoms.back().first - atoms.front().first) + 1,
                  kNegInf);
  for (const auto& [k, lm] : atoms)
    out.logp[static_cast<size_t>(k - out.kmin)] = lm;
  return out;
}

LogArr conv_sparse(const LogArr& in, const Atoms& atoms) {
  LogArr out;
  const long long amin = atoms.front().first;
  const long long amax = atoms.back().first;
  out.kmin = in.kmin + amin;
  out.logp.assign(in.size() + static_cast<size_t>(amax - amin), kNegInf);
  std::vector<double> tmp(atoms.size());
  const long long in_size = static_cast<long long>(in.size());
  for (size_t j = 0; j < out.logp.size(); ++j) {
    const long long base = static_cast<long long>(j) + amin;
    double mx = kNegInf;
    size_t cnt = 0;
    for (const auto& [k, lm] : atoms) {
      const long long i = base - k;
      if (i < 0 || i >= in_size) continue;
      const double v = in.logp[static_cast<size_t>(i)];
      if (v == kNegInf) continue;
      const double term = v + lm;
      tmp[cnt++] = term;
      if (term > mx) mx = term;
    }
    if (cnt == 0) continue;
    double ssum = 0.0;
    for (size_t t = 0; t < cnt; ++t) {
      const double d = tmp[t] - mx;
      if (d > -40.0) ssum += std::exp(d);
    }
    out.logp[j] = mx + std::log(ssum);
  }
  return out;
}

LogArr nfold_sparse(const Atoms& atoms, long long n, const char* what) {
  const double span = static_cast<double>(atoms.back().first - atoms.front().first);
  const double m = static_cast<double>(atoms.size());
  const double nn = static_cast<double>(n);
  const double est = 0.5 * nn * nn * span * m + nn * m + 1.0;
  if (est > kOpBudget) throw std::runtime_error(too_large(what, est, kOpBudget));
  LogArr cur = dense_from_atoms(atoms);
  for (long long i = 1; i < n; ++i) cur = conv_sparse(cur, atoms);
  return cur;
}

// log E[min{1, e^{lm - S}}] when the statistic at cell k is base + k * step.
double log_min_sum(const LogArr& s, double base, double step, double lm) {
  LogAccumulator acc;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s.logp[i] == kNegInf) continue;
    const double t =
        base + static_cast<double>(s.kmin + static_cast<long long>(i)) * step;
    acc.add(s.logp[i] + std::min(0.0, lm - t));
  }
  return acc.result();
}

double log_min_sum(const DiscretePmf& s, double lm) {
  LogAccumulator acc;
  for (size_t i = 0; i < s.size(); ++i)
    acc.add(std::log(s.mass[i]) + std::min(0.0, lm - s.value[i]));
  return acc.result();
}

// Per-letter law quantized to integers: value = offset + k * step.
struct IntLetter {
  Atoms atoms;
  double offset = 0.0;
  double step = 1.0;
};

IntLetter lattice_letter(const DiscretePmf& p, const LatticeInfo& info) {
  IntLetter out;
  out.offset = info.offset;
  out.step = info.span;
  Atoms raw;
  raw.reserve(p.size());
  for (size_t i = 0; i < p.size(); ++i)
    raw.push_back({std::llround((p.value[i] - info.offset) / info.span),
                   std::log(p.mass[i])});
  out.atoms = merge_atoms(std::move(raw));
  return out;
}

long long grid_index(double v, double step, Rounding mode) {
  return mode == Rounding::down
             ? static_cast<long long>(std::floor(v / step + 1e-12))
             : static_cast<long long>(std::ceil(v / step - 1e-12));
}

IntLetter grid_letter(const DiscretePmf& p, double step, Rounding mode) {
  IntLetter out;
  out.offset = 0.0;
  out.step = step;
  Atoms raw;
  raw.reserve(p.size());
  for (size_t i = 0; i < p.size(); ++i)
    raw.push_back({grid_index(p.value[i], step, mode), std::log(p.mass[i])});
  out.atoms = merge_atoms(std::move(raw));
  return out;
}

double eval_single(const IntLetter& letter, long long n, double lm) {
  const LogArr s =
      nfold_sparse(letter.atoms, n, "accumulate operations for the n-letter sum");
  const double lv =
      log_min_sum(s, static_cast<double>(n) * letter.offset, letter.step, lm);
  return std::min(1.0, std::exp(lv));
}

// Rough count of distinct atoms an exact n-fold convolution of m atoms can
// produce: multisets of size n from m values.
double multiset_count(long long n, size_t m) {
  if (m <= 1) return 1.0;
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return std::exp(std::lgamma(nn + mm) - std::lgamma(nn + 1.0) - std::lgamma(mm));
}

double composition_count(long long n, size_t k) { return multiset_count(n, k); }

// ---------------------------------------------------------------------------
// Output-composition decomposition for the single-statistic bound.  When the
// per-cell numerator values share a lattice, the statistic splits into a
// lattice part plus an output-dependent shift that is constant given the
// output composition, so the bound is exact for any blocklength.
// ---------------------------------------------------------------------------

std::optional<BoundResult> composition_min_sum(const TiltedFamily& fam,
                                               const BoundQuery& qy, double lm) {
  const ChannelTriple& t = fam.triple;
  const JointDist jd = t.joint();
  const int nx = t.num_inputs(), ny = t.num_outputs();
  std::vector<double> vals;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      if (t.on_support(x, y)) vals.push_back(fam.log_numerator(x, y));
  const LatticeInfo info = detect_lattice(vals);
  if (info.kind == LatticeInfo::Kind::nonlattice) return std::nullopt;
  const double step = info.kind == LatticeInfo::Kind::degenerate ? 1.0 : info.span;
  const double offset =
      info.kind == LatticeInfo::Kind::degenerate ? vals.front() : info.offset;

  struct Cls {
    double log_py = 0.0;
    double log_den = 0.0;
    Atoms atoms;
  };
  std::vector<Cls> classes;
  long long span_letter = 0;
  for (int y = 0; y < ny; ++y) {
    if (!(jd.py[y] > 0.0)) continue;
    Cls c;
    c.log_py = std::log(jd.py[y]);
    c.log_den = fam.log_denominator[y];
    Atoms raw;
    for (int x = 0; x < nx; ++x) {
      if (!t.on_support(x, y)) continue;
      raw.push_back({std::llround((fam.log_numerator(x, y) - offset) / step),
                     std::log(jd.joint(x, y) / jd.py[y])});
    }
    c.atoms = merge_atoms(std::move(raw));
    span_letter = std::max(span_letter, c.atoms.back().first - c.atoms.front().first);
    classes.push_back(std::move(c));
  }
  // Outputs with identical denominators and conditional laws are
  // interchangeable in the composition sum; collapsing them leaves the value
  // unchanged and turns fully symmetric channels into a single class.
  {
    std::vector<Cls> merged;
    for (auto& c : classes) {
      bool found = false;
      for (auto& o : merged)
        if (o.log_den == c.log_den && o.atoms == c.atoms) {
          o.log_py = log_add(o.log_py, c.log_py);
          found = true;
          break;
        }
      if (!found) merged.push_back(std::move(c));
    }
    classes.swap(merged);
  }
  const long long n = qy.n;
  const double comps = composition_count(n, classes.size());
  const double bins = static_cast<double>(n) * static_cast<double>(span_letter) + 1.0;
  if (comps * bins > qy.budget) return std::nullopt;

  LogAccumulator total;
  auto rec = [&](auto&& self, size_t j, long long rem, const LogArr& part,
                 double logw, double shift) -> void {
    const Cls& c = classes[j];
    if (j + 1 == classes.size()) {
      LogArr cur = part;
      for (long long i = 0; i < rem; ++i) cur = conv_sparse(cur, c.atoms);
      const double lw = logw + static_cast<double>(rem) * c.log_py -
                        std::lgamma(static_cast<double>(rem) + 1.0);
      const double sh = shift + static_cast<double>(rem) * c.log_den;
      const double base = static_cast<double>(n) * offset - sh;
      total.add(lw + log_min_sum(cur, base, step, lm));
      return;
    }
    LogArr cur = part;
    for (long long cc = 0;; ++cc) {
      self(self, j + 1, rem - cc, cur,
           logw + static_cast<double>(cc) * c.log_py -
               std::lgamma(static_cast<double>(cc) + 1.0),
           shift + static_cast<double>(cc) * c.log_den);
      if (cc == rem) break;
      cur = conv_sparse(cur, c.atoms);
    }
  };
  rec(rec, 0, n, unit_arr(), std::lgamma(static_cast<double>(n) + 1.0), 0.0);
  const double v = std::min(1.0, std::exp(total.result()));
  return BoundResult{v, v, v, true};
}

// Single-statistic bound: E[min{1, e^{lm - sum_i density(x_i, y_i)}}].
BoundResult weighted_sum_bound(const TiltedFamily& fam, const BoundQuery& qy,
                               double lm) {
  const DiscretePmf letter = density_pmf(fam);  // checks metric positivity
  const long long n = qy.n;
  if (letter.size() == 1) {
    const double v = std::exp(
        std::min(0.0, lm - static_cast<double>(n) * letter.value.front()));
    return {v, v, v, true};
  }
  const LatticeInfo info = detect_lattice(letter);
  const bool lat = info.kind == LatticeInfo::Kind::lattice;
  if (qy.quantization == Quantization::exact_lattice) {
    if (!lat)
      throw std::invalid_argument(
          "bounds: statistic support is not a lattice; use grid quantization");
    const double v = eval_single(lattice_letter(letter, info), n, lm);
    return {v, v, v, true};
  }
  if (qy.quantization == Quantization::automatic) {
    if (lat) {
      try {
        const double v = eval_single(lattice_letter(letter, info), n, lm);
        return {v, v, v, true};
      } catch (const std::runtime_error&) {
        // Lattice finer than the grid step: fall through to the bracket.
      }
    } else {
      if (auto r = composition_min_sum(fam, qy, lm)) return *r;
      if (multiset_count(n, letter.size()) * static_cast<double>(letter.size()) <
          static_cast<double>(kSparseBudget)) {
        try {
          const DiscretePmf sn = nfold(letter, n, 1e-12, kSparseBudget);
          const double v = std::min(1.0, std::exp(log_min_sum(sn, lm)));
          return {v, v, v, true};
        } catch (const std::runtime_error&) {
          // Atom growth beat the estimate: fall through to the bracket.
        }
      }
    }
  }
  const double up =
      eval_single(grid_letter(letter, qy.grid_step, Rounding::down), n, lm);
  double lo = eval_single(grid_letter(letter, qy.grid_step, Rounding::up), n, lm);
  lo = std::min(lo, up);
  return {up, lo, up, false};
}

// ---------------------------------------------------------------------------
// Two-statistic bound: E[min{1, (M-1) P[competitor sum >= transmitted sum]}].
// Conditioned on the output composition, the transmitted and competitor
// log-metric sums are independent, each an n-fold convolution of per-class
// laws; the recursion walks compositions with incremental convolutions.
// ---------------------------------------------------------------------------

struct RcuRaw {
  double log_py = 0.0;
  std::vector<std::pair<double, double>> tv;  // transmitted (value, mass | y)
  std::vector<std::pair<double, double>> zv;  // competitor (value, mass)
};

struct RcuIntClass {
  double log_py = 0.0;
  Atoms t_atoms;
  Atoms z_atoms;  // empty: competitors score zero against this class
};

double rcu_dp_int(const std::vector<RcuIntClass>& classes, long long n, double lm) {
  LogAccumulator total;
  auto leaf = [&](const LogArr& tarr, const LogArr& zarr, double logw) {
    std::vector<double> suf(zarr.size() + 1, kNegInf);
    for (size_t i = zarr.size(); i-- > 0;) suf[i] = log_add(suf[i + 1], zarr.logp[i]);
    LogAccumulator acc;
    for (size_t i = 0; i < tarr.size(); ++i) {
      if (tarr.logp[i] == kNegInf) continue;
      const long long jj = tarr.kmin + static_cast<long long>(i) - zarr.kmin;
      const double lsuf = jj <= 0 ? suf[0]
                          : jj >= static_cast<long long>(zarr.size())
                              ? kNegInf
                              : suf[static_cast<size_t>(jj)];
      acc.add(tarr.logp[i] + std::min(0.0, lm + lsuf));
    }
    const double r = acc.result();
    if (r != kNegInf) total.add(logw + r);
  };
  auto rec = [&](auto&& self, size_t j, long long rem, const LogArr& tarr,
                 const LogArr& zarr, double logw) -> void {
    const RcuIntClass& c = classes[j];
    const bool dead = c.z_atoms.empty();
    if (j + 1 == classes.size()) {
      if (rem > 0 && dead) return;
      LogArr tc = tarr, zc = zarr;
      for (long long i = 0; i < rem; ++i) {
        tc = conv_sparse(tc, c.t_atoms);
        zc = conv_sparse(zc, c.z_atoms);
      }
      leaf(tc, zc,
           logw + static_cast<double>(rem) * c.log_py -
               std::lgamma(static_cast<double>(rem) + 1.0));
      return;
    }
    LogArr tc = tarr, zc = zarr;
    for (long long cc = 0;; ++cc) {
      self(self, j + 1, rem - cc, tc, zc,
           logw + static_cast<double>(cc) * c.log_py -
               std::lgamma(static_cast<double>(cc) + 1.0));
      if (cc == rem || dead) break;
      tc = conv_sparse(tc, c.t_atoms);
      zc = conv_sparse(zc, c.z_atoms);
    }
  };
  rec(rec, 0, n, unit_arr(), unit_arr(),
      std::lgamma(static_cast<double>(n) + 1.0));
  return std::exp(total.result());
}

// Exact enumeration over real-valued sums; ties are closed with a relative
// snap so that symmetric constructions compare equal despite roundoff.
double rcu_dp_discrete(const std::vector<RcuRaw>& classes, long long n, double lm) {
  DiscretePmf unit;
  unit.value = {0.0};
  unit.mass = {1.0};
  std::vector<DiscretePmf> tpmf(classes.size()), zpmf(classes.size());
  std::vector<bool> dead(classes.size());
  for (size_t j = 0; j < classes.size(); ++j) {
    tpmf[j] = DiscretePmf::from_atoms(classes[j].tv);
    dead[j] = classes[j].zv.empty();
    if (!dead[j]) zpmf[j] = DiscretePmf::from_atoms(classes[j].zv);
  }
  LogAccumulator total;
  auto leaf = [&](const DiscretePmf& tp, const DiscretePmf& zp, double logw) {
    std::vector<double> suf(zp.size() + 1, kNegInf);
    for (size_t i = zp.size(); i-- > 0;) suf[i] = log_add(suf[i + 1], std::log(zp.mass[i]));
    LogAccumulator acc;
    for (size_t i = 0; i < tp.size(); ++i) {
      const double t = tp.value[i];
      const double thresh = t - kTieSlack * std::max(1.0, std::abs(t));
      const size_t idx = static_cast<size_t>(
          std::lower_bound(zp.value.begin(), zp.value.end(), thresh) -
          zp.value.begin());
      acc.add(std::log(tp.mass[i]) + std::min(0.0, lm + suf[idx]));
    }
    const double r = acc.result();
    if (r != kNegInf) total.add(logw + r);
  };
  auto rec = [&](auto&& self, size_t j, long long rem, const DiscretePmf& tp,
                 const DiscretePmf& zp, double logw) -> void {
    if (j + 1 == classes.size()) {
      if (rem > 0 && dead[j]) return;
      DiscretePmf tc = tp, zc = zp;
      for (long long i = 0; i < rem; ++i) {
        tc = convolve(tc, tpmf[j], 1e-12, kSparseBudget);
        zc = convolve(zc, zpmf[j], 1e-12, kSparseBudget);
      }
      leaf(tc, zc,
           logw + static_cast<double>(rem) * classes[j].log_py -
               std::lgamma(static_cast<double>(rem) + 1.0));
      return;
    }
    DiscretePmf tc = tp, zc = zp;
    for (long long cc = 0;; ++cc) {
      self(self, j + 1, rem - cc, tc, zc,
           logw + static_cast<double>(cc) * classes[j].log_py -
               std::lgamma(static_cast<double>(cc) + 1.0));
      if (cc == rem || dead[j]) break;
      tc = convolve(tc, tpmf[j], 1e-12, kSparseBudget);
      zc = convolve(zc, zpmf[j], 1e-12, kSparseBudget);
    }
  };
  rec(rec, 0, n, unit, unit, std::lgamma(static_cast<double>(n) + 1.0));
  return std::exp(total.result());
}

std::vector<RcuIntClass> rcu_quantize(const std::vector<RcuRaw>& raw, double offset,
                                      double step, Rounding t_mode, Rounding z_mode,
                                      bool absolute_grid) {
  std::vector<RcuIntClass> out;
  out.reserve(raw.size());
  for (const auto& rc : raw) {
    RcuIntClass c;
    c.log_py = rc.log_py;
    Atoms traw, zraw;
    for (const auto& [v, m] : rc.tv)
      traw.push_back({absolute_grid ? grid_index(v, step, t_mode)
                                    : std::llround((v - offset) / step),
                      std::log(m)});
    for (const auto& [v, m] : rc.zv)
      zraw.push_back({absolute_grid ? grid_index(v, step, z_mode)
                                    : std::llround((v - offset) / step),
                      std::log(m)});
    c.t_atoms = merge_atoms(std::move(traw));
    c.z_atoms = merge_atoms(std::move(zraw));
    out.push_back(std::move(c));
  }
  return out;
}

void rcu_budget_check(const std::vector<RcuIntClass>& classes, long long n,
                      double budget) {
  long long span = 0;
  for (const auto& c : classes) {
    if (!c.t_atoms.empty())
      span = std::max(span, c.t_atoms.back().first - c.t_atoms.front().first);
    if (!c.z_atoms.empty())
      span = std::max(span, c.z_atoms.back().first - c.z_atoms.front().first);
  }
  const double comps = composition_count(n, classes.size());
  const double bins =
      2.0 * (static_cast<double>(n) * static_cast<double>(span) + 1.0);
  if (comps * bins > budget)
    throw std::runtime_error(
        too_large("output-composition states", comps * bins, budget));
}

}  // namespace

BoundResult rcus_exact(const BoundQuery& query) {
  check_query(query, true);
  const TiltedFamily fam = make_family(query.triple, query.s);
  return weighted_sum_bound(fam, query, log_m_minus_one(query.M));
}

BoundResult rcuss_exact(const BoundQuery& query) {
  check_query(query, true);
  const AssumptionReport rep = query.triple.assumptions();
  if (!rep.nonsingular)
    throw std::runtime_error(
        "singular triple: the metric never distinguishes reachable inputs, so "
        "the sharpened multiplier is undefined; use the plain union bounds");
  const TiltedFamily fam = make_family(query.triple, query.s);
  const SaddlepointParams pars =
      saddlepoint_params(fam, std::log(query.M) / static_cast<double>(query.n),
                         query.n);
  if (!(pars.c3 > 0.0))
    throw std::runtime_error(
        "singular triple: zero reverse-metric variance at the operating tilt");
  const double lm = std::log(query.M) + std::log(pars.psi) -
                    0.5 * std::log(kTwoPi * static_cast<double>(query.n) * pars.c3);
  return weighted_sum_bound(fam, query, lm);
}

BoundResult rcu_exact(const BoundQuery& query) {
  check_query(query, false);
  const ChannelTriple& t = query.triple;
  const JointDist jd = t.joint();
  const int nx = t.num_inputs(), ny = t.num_outputs();
  const long long n = query.n;
  const double lm = log_m_minus_one(query.M);

  // Mass of support cells whose metric is zero: the transmitted product
  // metric vanishes there, every competitor ties at zero, and the closed
  // comparison makes those blocks certain errors up to the multiplier cap.
  double p0 = 0.0;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      if (t.on_support(x, y) && !(t.q(x, y) > 0.0)) p0 += t.Q[x] * t.W(x, y);
  const double defect =
      -std::expm1(static_cast<double>(n) * std::log1p(-std::min(1.0, p0)));

  std::vector<RcuRaw> raw;
  std::vector<double> union_vals;
  for (int y = 0; y < ny; ++y) {
    if (!(jd.py[y] > 0.0)) continue;
    RcuRaw rc;
    rc.log_py = std::log(jd.py[y]);
    for (int x = 0; x < nx; ++x) {
      if (!t.on_support(x, y) || !(t.q(x, y) > 0.0)) continue;
      rc.tv.push_back({std::log(t.q(x, y)), jd.joint(x, y) / jd.py[y]});
    }
    if (rc.tv.empty()) continue;  // all transmitted mass here is defect
    for (int x = 0; x < nx; ++x) {
      if (!(t.Q[x] > 0.0) || !(t.q(x, y) > 0.0)) continue;
      rc.zv.push_back({std::log(t.q(x, y)), t.Q[x]});
    }
    for (const auto& vm : rc.tv) union_vals.push_back(vm.first);
    for (const auto& vm : rc.zv) union_vals.push_back(vm.first);
    raw.push_back(std::move(rc));
  }
  if (raw.empty()) return {1.0, 1.0, 1.0, true};  // p0 = 1: pure defect

  // Collapse outputs with identical transmitted and competitor laws; the
  // composition sum over duplicates is exactly the binomial collapse.  Sort
  // the per-output atom lists first so permuted rows compare equal.
  {
    for (auto& rc : raw) {
      std::sort(rc.tv.begin(), rc.tv.end());
      std::sort(rc.zv.begin(), rc.zv.end());
    }
    std::vector<RcuRaw> merged;
    for (auto& rc : raw) {
      bool found = false;
      for (auto& o : merged)
        if (o.tv == rc.tv && o.zv == rc.zv) {
          o.log_py = log_add(o.log_py, rc.log_py);
          found = true;
          break;
        }
      if (!found) merged.push_back(std::move(rc));
    }
    raw.swap(merged);
  }

  const LatticeInfo info = detect_lattice(union_vals);
  const bool lat = info.kind != LatticeInfo::Kind::nonlattice;
  const double lat_step =
      info.kind == LatticeInfo::Kind::lattice ? info.span : 1.0;
  const double lat_off = info.kind == LatticeInfo::Kind::lattice
                             ? info.offset
                             : union_vals.front();

  if (query.quantization == Quantization::exact_lattice && !lat)
    throw std::invalid_argument(
        "bounds: metric support is not a lattice; use grid quantization");

  if (lat && query.quantization != Quantization::grid) {
    const std::vector<RcuIntClass> classes = rcu_quantize(
        raw, lat_off, lat_step, Rounding::nearest, Rounding::nearest, false);
    try {
      rcu_budget_check(classes, n, query.budget);
      const double v = std::min(1.0, rcu_dp_int(classes, n, lm) + defect);
      return {v, v, v, true};
    } catch (const std::runtime_error&) {
      // Lattice finer than the grid step: the bracket below may still fit.
      if (query.quantization == Quantization::exact_lattice) throw;
    }
  }

  if (query.quantization == Quantization::automatic) {
    size_t max_atoms = 0;
    for (const auto& rc : raw) max_atoms = std::max(max_atoms, rc.tv.size());
    const bool small =
        composition_count(n, raw.size()) < 20000.0 &&
        multiset_count(n, std::max<size_t>(max_atoms, 2)) *
                static_cast<double>(std::max<size_t>(max_atoms, 2)) <
            static_cast<double>(kSparseBudget);
    if (small) {
      try {
        const double v = std::min(1.0, rcu_dp_discrete(raw, n, lm) + defect);
        return {v, v, v, true};
      } catch (const std::runtime_error&) {
        // Atom growth beat the estimate: fall through to the bracket.
      }
    }
  }

  const double step = query.grid_step;
  const std::vector<RcuIntClass> upper_cls =
      rcu_quantize(raw, 0.0, step, Rounding::down, Rounding::up, true);
  rcu_budget_check(upper_cls, n, query.budget);
  const double up = std::min(1.0, rcu_dp_int(upper_cls, n, lm) + defect);
  const std::vector<RcuIntClass> lower_cls =
      rcu_quantize(raw, 0.0, step, Rounding::up, Rounding::down, true);
  double lo = std::min(1.0, rcu_dp_int(lower_cls, n, lm) + defect);
  lo = std::min(lo, up);
  return {up, lo, up, false};
}

double mu_n(const CostEnsembleSpec& spec, const std::vector<double>& Q,
            long long n) {
  if (n < 1) throw std::invalid_argument("bounds: blocklength must be >= 1");
  if (Q.empty()) throw std::invalid_argument("bounds: empty input distribution");
  double qsum = 0.0;
  for (double v : Q) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("bounds: input distribution entries must be >= 0");
    qsum += v;
  }
  if (std::abs(qsum - 1.0) > 1e-9)
    throw std::invalid_argument("bounds: input distribution must sum to 1");
  const size_t L = spec.costs.size();
  if (L == 0)
    throw std::invalid_argument("bounds: cost ensemble needs at least one cost");
  if (!(spec.delta > 0.0))
    throw std::invalid_argument("bounds: cost window delta must be positive");
  if (spec.phi.size() != L)
    throw std::invalid_argument("bounds: one mean per cost is required");
  for (size_t l = 0; l < L; ++l) {
    if (spec.costs[l].size() != Q.size())
      throw std::invalid_argument("bounds: cost length must match the alphabet");
    double dot = 0.0;
    for (size_t x = 0; x < Q.size(); ++x) {
      if (!std::isfinite(spec.costs[l][x]))
        throw std::invalid_argument("bounds: costs must be finite");
      dot += Q[x] * spec.costs[l][x];
    }
    if (std::abs(dot - spec.phi[l]) > 1e-12 * std::max(1.0, std::abs(dot)))
      throw std::invalid_argument(
          "bounds: cost means inconsistent with the input distribution");
  }

  std::vector<size_t> sup;
  for (size_t x = 0; x < Q.size(); ++x)
    if (Q[x] > 0.0) sup.push_back(x);
  const double types = multiset_count(n, sup.size());
  if (types > 2e7)
    throw std::runtime_error(too_large("input types", types, 2e7));

  LogAccumulator acc;
  std::vector<double> sums(L, 0.0);
  const double slack = spec.delta + 1e-9;
  auto rec = [&](auto&& self, size_t i, long long rem, double logw) -> void {
    const size_t x = sup[i];
    if (i + 1 == sup.size()) {
      bool ok = true;
      for (size_t l = 0; l < L && ok; ++l) {
        const double s = sums[l] + static_cast<double>(rem) * spec.costs[l][x] -
                         static_cast<double>(n) * spec.phi[l];
        ok = std::abs(s) <= slack;
      }
      if (ok)
        acc.add(logw + static_cast<double>(rem) * std::log(Q[x]) -
                std::lgamma(static_cast<double>(rem) + 1.0));
      return;
    }
    for (long long k = 0;; ++k) {
      self(self, i + 1, rem - k,
           logw + static_cast<double>(k) * std::log(Q[x]) -
               std::lgamma(static_cast<double>(k) + 1.0));
      if (k == rem) break;
      for (size_t l = 0; l < L; ++l) sums[l] += spec.costs[l][x];
    }
    for (size_t l = 0; l < L; ++l)
      sums[l] -= static_cast<double>(rem) * spec.costs[l][x];
  };
  rec(rec, 0, n, std::lgamma(static_cast<double>(n) + 1.0));
  return std::min(1.0, std::exp(acc.result()));
}

}  // namespace mdx
