#include "mdx/pmf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdx/numerics.hpp"

namespace mdx {

namespace {

// Best rational approximation p/q to r with q <= max_denom, by continued
// fractions.  Returns false when even the best approximant misses by more
// than tol.
bool rationalize(double r, double tol, long long max_denom, long long* p,
                 long long* q) {
  double x = r;
  long long p0 = 1, q0 = 0, p1 = static_cast<long long>(std::floor(x)), q1 = 1;
  x -= std::floor(x);
  for (int it = 0; it < 64; ++it) {
    if (std::abs(r - static_cast<double>(p1) / static_cast<double>(q1)) <= tol) break;
    if (x < 1e-15) break;
    x = 1.0 / x;
    double aid = std::floor(x);
    if (aid > 4e18) break;
    long long ai = static_cast<long long>(aid);
    x -= aid;
    // Overflow-safe advance.
    if (q1 != 0 && ai > (4000000000000000000LL - q0) / q1) break;
    long long p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    if (q1 > max_denom) {
      p1 = p0;
      q1 = q0;
      break;
    }
  }
  if (q1 <= 0 || q1 > max_denom) return false;
  if (std::abs(r - static_cast<double>(p1) / static_cast<double>(q1)) > tol) return false;
  *p = p1;
  *q = q1;
  return true;
}

long long gcd_ll(long long a, long long b) {
  while (b) {
    long long t = a % b;
    a = b;
    b = t;
  }
  return a < 0 ? -a : a;
}

}  // namespace

LatticeInfo detect_lattice(const std::vector<double>& points, double tol,
                           long long max_denom) {
  if (points.empty())
    throw std::invalid_argument("detect_lattice: empty point set");
  std::vector<double> z = points;
  std::sort(z.begin(), z.end());
  // Collapse points that are equal to within tol.
  std::vector<double> u;
  for (double v : z)
    if (u.empty() || v - u.back() > tol * std::max(1.0, std::abs(v))) u.push_back(v);
  if (u.size() == 1) return {LatticeInfo::Kind::degenerate, 0.0, u[0]};

  // Smallest gap between consecutive distinct points: every lattice spacing
  // divides it... no -- it IS a multiple of the spacing; use it as the unit.
  double unit = u[1] - u[0];
  for (size_t i = 2; i < u.size(); ++i) unit = std::min(unit, u[i] - u[i - 1]);

  // Express every difference from the minimum as a rational multiple of the
  // unit, then take the rational gcd to get the true spacing.
  long long L = 1;  // running lcm of denominators
  std::vector<std::pair<long long, long long>> fracs;
  for (size_t i = 1; i < u.size(); ++i) {
    double d = u[i] - u[0];
    long long p, q;
    if (!rationalize(d / unit, tol / unit, max_denom, &p, &q))
      return {LatticeInfo::Kind::nonlattice, 0.0, 0.0};
    fracs.push_back({p, q});
    long long g = gcd_ll(L, q);
    if (L / g > 2000000000000000LL / q)  // lcm overflow guard
      return {LatticeInfo::Kind::nonlattice, 0.0, 0.0};
    L = L / g * q;
  }
  long long num_gcd = L;  // include the unit itself (= L/L * unit)
  for (auto [p, q] : fracs) num_gcd = gcd_ll(num_gcd, p * (L / q));
  double h = unit * static_cast<double>(num_gcd) / static_cast<double>(L);

  // A spacing near the detection tolerance is meaningless: the verification
  // below would accept arbitrary reals, since every point is within tol of
  // such a fine grid.  Demand a clear separation of scales.
  if (h < 1e4 * tol) return {LatticeInfo::Kind::nonlattice, 0.0, 0.0};

  // Complexity guard: continued-fraction convergents of a quadratic irrational
  // (ratio like 1+sqrt(2)) with denominator <= max_denom can land inside tol,
  // which would certify a spurious lattice with ~1e5 cells.  Genuine per-letter
  // statistics span only a handful of cells, so cap the cell count.
  if ((u.back() - u.front()) / h > 1e4)
    return {LatticeInfo::Kind::nonlattice, 0.0, 0.0};

  // Verification pass: every point must sit on u[0] + h Z within tol.
  for (double v : u) {
    double k = std::round((v - u[0]) / h);
    if (std::abs(v - u[0] - k * h) > tol * std::max(1.0, std::abs(v)))
      return {LatticeInfo::Kind::nonlattice, 0.0, 0.0};
  }
  double offset = u[0] - std::floor(u[0] / h) * h;
  if (offset >= h) offset -= h;
  if (offset < 0.0) offset += h;
  return {LatticeInfo::Kind::lattice, h, offset};
}

LatticeInfo detect_lattice(const DiscretePmf& p, double tol, long long max_denom) {
  return detect_lattice(p.value, tol, max_denom);
}

DiscretePmf DiscretePmf::from_atoms(std::vector<std::pair<double, double>> atoms,
                                    double merge_tol) {
  std::sort(atoms.begin(), atoms.end());
  DiscretePmf out;
  for (auto [v, m] : atoms) {
    if (m <= 0.0) continue;
    if (!std::isfinite(v))
      throw std::invalid_argument("pmf: non-finite support value with positive mass");
    if (!out.value.empty() &&
        v - out.value.back() <= merge_tol * std::max(1.0, std::abs(v))) {
      out.mass.back() += m;
    } else {
      out.value.push_back(v);
      out.mass.push_back(m);
    }
  }
  if (out.value.empty()) throw std::invalid_argument("pmf: no positive-mass atoms");
  return out;
}

double DiscretePmf::mean() const {
  double m = 0.0;
  for (size_t i = 0; i < value.size(); ++i) m += value[i] * mass[i];
  return m;
}

double DiscretePmf::variance() const {
  double m = mean(), v = 0.0;
  for (size_t i = 0; i < value.size(); ++i) {
    double d = value[i] - m;
    v += d * d * mass[i];
  }
  return v;
}

double DiscretePmf::total_mass() const {
  double t = 0.0;
  for (double m : mass) t += m;
  return t;
}

DiscretePmf convolve(const DiscretePmf& a, const DiscretePmf& b,
                     double merge_tol, size_t budget) {
  if (a.size() * b.size() > budget)
    throw std::runtime_error("pmf: state space too large for exact convolution");
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(a.size() * b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j)
      atoms.push_back({a.value[i] + b.value[j], a.mass[i] * b.mass[j]});
  return DiscretePmf::from_atoms(std::move(atoms), merge_tol);
}

DiscretePmf nfold(const DiscretePmf& p, long long n, double merge_tol,
                  size_t budget) {
  if (n < 1) throw std::invalid_argument("pmf: nfold needs n >= 1");
  DiscretePmf out = p;
  for (long long i = 1; i < n; ++i) out = convolve(out, p, merge_tol, budget);
  return out;
}

double LatticePmf::log_total() const {
  LogAccumulator acc;
  for (double lp : logp) acc.add(lp);
  return acc.result();
}

std::vector<double> LatticePmf::log_suffix_sums() const {
  std::vector<double> suf(logp.size() + 1, kNegInf);
  for (size_t k = logp.size(); k-- > 0;) suf[k] = log_add(suf[k + 1], logp[k]);
  return suf;
}

LatticePmf on_lattice(const DiscretePmf& p, double step, Rounding mode,
                      double tol) {
  if (!(step > 0.0)) throw std::invalid_argument("pmf: lattice step must be positive");
  std::vector<long long> idx(p.size());
  double base = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    switch (mode) {
      case Rounding::nearest: {
        // Exact representation of a lattice-supported pmf: indices relative to
        // the smallest value, which becomes the origin (offsets need not be
        // multiples of the step).
        base = p.value.front();
        double k = std::round((p.value[i] - base) / step);
        if (std::abs(p.value[i] - base - k * step) >
            tol * std::max(1.0, std::abs(p.value[i])))
          throw std::invalid_argument("pmf: value off the lattice");
        idx[i] = static_cast<long long>(k);
        break;
      }
      case Rounding::down:
        // Quantization onto the absolute grid step * Z for certified brackets.
        idx[i] = static_cast<long long>(std::floor(p.value[i] / step + 1e-12));
        break;
      case Rounding::up:
        idx[i] = static_cast<long long>(std::ceil(p.value[i] / step - 1e-12));
        break;
    }
  }
  long long kmin = *std::min_element(idx.begin(), idx.end());
  long long kmax = *std::max_element(idx.begin(), idx.end());
  LatticePmf out;
  out.origin = mode == Rounding::nearest ? base + static_cast<double>(kmin) * step
                                         : static_cast<double>(kmin) * step;
  out.step = step;
  out.logp.assign(static_cast<size_t>(kmax - kmin + 1), kNegInf);
  for (size_t i = 0; i < p.size(); ++i)
    out.logp[static_cast<size_t>(idx[i] - kmin)] =
        log_add(out.logp[static_cast<size_t>(idx[i] - kmin)], std::log(p.mass[i]));
  return out;
}

LatticePmf convolve(const LatticePmf& a, const LatticePmf& b) {
  if (!nearly_equal(a.step, b.step, 1e-12))
    throw std::invalid_argument("pmf: lattice step mismatch in convolution");
  LatticePmf out;
  out.origin = a.origin + b.origin;
  out.step = a.step;
  out.logp.assign(a.size() + b.size() - 1, kNegInf);
  // Accumulate per output cell; inner loop over the shorter operand.
  const LatticePmf& s = a.size() <= b.size() ? a : b;
  const LatticePmf& t = a.size() <= b.size() ? b : a;
  for (size_t k = 0; k < out.logp.size(); ++k) {
    LogAccumulator acc;
    size_t i_lo = k >= t.size() ? k - t.size() + 1 : 0;
    size_t i_hi = std::min(s.size() - 1, k);
    for (size_t i = i_lo; i <= i_hi; ++i) {
      double la = s.logp[i], lb = t.logp[k - i];
      if (la != kNegInf && lb != kNegInf) acc.add(la + lb);
    }
    out.logp[k] = acc.result();
  }
  return out;
}

LatticePmf nfold(const LatticePmf& p, long long n, size_t budget) {
  if (n < 1) throw std::invalid_argument("pmf: nfold needs n >= 1");
  // Quadratic prefix scheme: step i convolves a support of i*(k-1)+1 cells
  // with the k-cell base, so the accumulate count is ~ k^2 n^2 / 2.
  double k = static_cast<double>(p.size());
  double est_ops = 0.5 * static_cast<double>(n) * static_cast<double>(n) * k * k;
  if (est_ops > static_cast<double>(budget))
    throw std::runtime_error("pmf: state space too large for n-fold convolution");
  LatticePmf out = p;
  for (long long i = 1; i < n; ++i) out = convolve(out, p);
  return out;
}

}  // namespace mdx
