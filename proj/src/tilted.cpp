#include "mdx/tilted.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mdx/numerics.hpp"
#include "mdx/optim.hpp"

namespace mdx {
namespace {

bool cell_on_support(const ChannelTriple& t, int x, int y) {
  return t.Q[x] > 0.0 && t.W(x, y) > 0.0;
}

}  // namespace

TiltedFamily make_family(const ChannelTriple& t, double s,
                         const std::vector<double>& a) {
  if (!(s >= 0.0) || !std::isfinite(s)) {
    std::ostringstream os;
    os << "tilted family: tilt must be finite and nonnegative, got " << s;
    throw std::invalid_argument(os.str());
  }
  std::vector<double> shift = a;
  if (shift.empty()) shift.assign(t.num_inputs(), 0.0);
  if (static_cast<int>(shift.size()) != t.num_inputs()) {
    std::ostringstream os;
    os << "tilted family: shift has " << shift.size() << " entries for "
       << t.num_inputs() << " inputs";
    throw std::invalid_argument(os.str());
  }

  const int nx = t.num_inputs();
  const int ny = t.num_outputs();
  TiltedFamily f;
  f.triple = t;
  f.s = s;
  f.a = shift;
  f.log_numerator = Matrix(nx, ny, kNegInf);
  f.density = Matrix(nx, ny, kNegInf);
  f.log_denominator.assign(ny, kNegInf);

  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) {
      if (t.q(x, y) > 0.0) {
        f.log_numerator(x, y) = s * std::log(t.q(x, y)) + shift[x];
      }
    }
  }

  const JointDist jd = t.joint();
  for (int y = 0; y < ny; ++y) {
    LogAccumulator acc;
    for (int x = 0; x < nx; ++x) {
      if (t.Q[x] > 0.0 && t.q(x, y) > 0.0) {
        acc.add(std::log(t.Q[x]) + f.log_numerator(x, y));
      }
    }
    f.log_denominator[y] = acc.result();
    if (f.log_denominator[y] == kNegInf && jd.py[y] > 0.0) {
      std::ostringstream os;
      os << "tilted family: output " << y << " has probability " << jd.py[y]
         << " but the metric vanishes on every supported input";
      throw std::runtime_error(os.str());
    }
  }

  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) {
      if (f.log_numerator(x, y) != kNegInf &&
          f.log_denominator[y] != kNegInf) {
        f.density(x, y) = f.log_numerator(x, y) - f.log_denominator[y];
      }
    }
  }
  return f;
}

Moments moments(const TiltedFamily& f) {
  const ChannelTriple& t = f.triple;
  const int nx = t.num_inputs();
  const int ny = t.num_outputs();

  // First pass: detect densities that are -inf on the channel support.
  for (int x = 0; x < nx; ++x) {
    for (int y = 0; y < ny; ++y) {
      if (cell_on_support(t, x, y) && f.density(x, y) == kNegInf) {
        return {kNegInf, kNaN, kNaN};
      }
    }
  }

  double mean = 0.0;
  double second = 0.0;
  double cond = 0.0;
  for (int x = 0; x < nx; ++x) {
    if (t.Q[x] <= 0.0) continue;
    double mx = 0.0, sx = 0.0;
    for (int y = 0; y < ny; ++y) {
      if (t.W(x, y) <= 0.0) continue;
      const double v = f.density(x, y);
      mx += t.W(x, y) * v;
      sx += t.W(x, y) * v * v;
    }
    mean += t.Q[x] * mx;
    second += t.Q[x] * sx;
    cond += t.Q[x] * (sx - mx * mx);
  }
  return {mean, std::max(0.0, second - mean * mean), std::max(0.0, cond)};
}

double e0(const TiltedFamily& f, double rho) {
  if (rho == 0.0) return 0.0;
  const ChannelTriple& t = f.triple;
  LogAccumulator acc;
  for (int x = 0; x < t.num_inputs(); ++x) {
    for (int y = 0; y < t.num_outputs(); ++y) {
      if (!cell_on_support(t, x, y)) continue;
      const double v = f.density(x, y);
      if (v == kNegInf) return kNegInf;  // e^{+inf} term dominates
      acc.add(std::log(t.Q[x] * t.W(x, y)) - rho * v);
    }
  }
  return -acc.result();
}

E0Derivatives e0_derivatives(const TiltedFamily& f, double rho) {
  const ChannelTriple& t = f.triple;
  LogAccumulator z;
  for (int x = 0; x < t.num_inputs(); ++x) {
    for (int y = 0; y < t.num_outputs(); ++y) {
      if (!cell_on_support(t, x, y)) continue;
      const double v = f.density(x, y);
      if (v == kNegInf) {
        throw std::runtime_error(
            "tilted family: derivatives undefined, density infinite on the "
            "channel support");
      }
      z.add(std::log(t.Q[x] * t.W(x, y)) - rho * v);
    }
  }
  const double log_z = z.result();
  double mean = 0.0, second = 0.0;
  for (int x = 0; x < t.num_inputs(); ++x) {
    for (int y = 0; y < t.num_outputs(); ++y) {
      if (!cell_on_support(t, x, y)) continue;
      const double v = f.density(x, y);
      const double w =
          std::exp(std::log(t.Q[x] * t.W(x, y)) - rho * v - log_z);
      mean += w * v;
      second += w * v * v;
    }
  }
  return {mean, -(std::max(0.0, second - mean * mean))};
}

DiscretePmf density_pmf(const TiltedFamily& f) {
  const ChannelTriple& t = f.triple;
  std::vector<std::pair<double, double>> atoms;
  for (int x = 0; x < t.num_inputs(); ++x) {
    for (int y = 0; y < t.num_outputs(); ++y) {
      if (!cell_on_support(t, x, y)) continue;
      const double v = f.density(x, y);
      if (v == kNegInf) {
        std::ostringstream os;
        os << "tilted family: density is -inf at supported cell (" << x << ", "
           << y << "); the metric vanishes where the channel does not";
        throw std::runtime_error(os.str());
      }
      atoms.emplace_back(v, t.Q[x] * t.W(x, y));
    }
  }
  return DiscretePmf::from_atoms(std::move(atoms));
}

std::vector<double> conditional_mean_by_input(const TiltedFamily& f) {
  const ChannelTriple& t = f.triple;
  std::vector<double> out(t.num_inputs(), 0.0);
  for (int x = 0; x < t.num_inputs(); ++x) {
    if (t.Q[x] <= 0.0) continue;
    double m = 0.0;
    for (int y = 0; y < t.num_outputs(); ++y) {
      if (t.W(x, y) <= 0.0) continue;
      if (f.density(x, y) == kNegInf) {
        m = kNegInf;
        break;
      }
      m += t.W(x, y) * f.density(x, y);
    }
    out[x] = m;
  }
  return out;
}

SaddlepointParams saddlepoint_params(const TiltedFamily& f, double rate,
                                     long long n) {
  if (n <= 0) {
    std::ostringstream os;
    os << "saddlepoint: blocklength must be positive, got " << n;
    throw std::invalid_argument(os.str());
  }
  const DiscretePmf pmf = density_pmf(f);  // also certifies regular support
  const Moments mom = moments(f);
  if (!(mom.variance > 0.0)) {
    throw std::runtime_error(
        "saddlepoint: degenerate statistic, the density has zero variance");
  }

  SaddlepointParams p;
  p.n = n;
  p.rate = rate;
  p.var_density = mom.variance;
  p.mean_density = mom.mean;  // equals dE0/drho at rho = 0
  p.crit_rate = e0_derivatives(f, 1.0).first;

  if (rate <= p.crit_rate) {
    p.rho_hat = 1.0;
  } else if (rate >= p.mean_density) {
    p.rho_hat = 0.0;
  } else {
    // Interior maximizer of E0(rho) - rho R: coarse scan, golden refinement,
    // then safeguarded Newton on the stationarity condition E0'(rho) = R.
    auto g = [&](double r) { return e0(f, r) - r * rate; };
    double best = 0.0, best_v = g(0.0);
    const int scan_pts = 33;
    for (int i = 1; i <= scan_pts; ++i) {
      const double r = static_cast<double>(i) / scan_pts;
      const double v = g(r);
      if (v > best_v) {
        best_v = v;
        best = r;
      }
    }
    const double lo = std::max(0.0, best - 1.0 / scan_pts);
    const double hi = std::min(1.0, best + 1.0 / scan_pts);
    double rho = golden_max(g, lo, hi, 1e-10).x;
    for (int it = 0; it < 8; ++it) {
      const E0Derivatives d = e0_derivatives(f, rho);
      if (d.second >= 0.0) break;
      const double step = (d.first - rate) / d.second;
      const double next = std::min(1.0 - 1e-12, std::max(1e-12, rho - step));
      if (std::abs(next - rho) < 1e-15) {
        rho = next;
        break;
      }
      rho = next;
    }
    p.rho_hat = rho;
  }

  const E0Derivatives d = e0_derivatives(f, p.rho_hat);
  p.c1 = rate - d.first;
  p.c2 = -d.second;
  p.e0_value = e0(f, p.rho_hat);

  std::vector<double> pts(pmf.value.size());
  for (std::size_t j = 0; j < pts.size(); ++j) pts[j] = rate - pmf.value[j];
  p.lattice = detect_lattice(pts);
  if (p.lattice.kind == LatticeInfo::Kind::lattice) {
    const double nn = static_cast<double>(n);
    double g = std::fmod(nn * p.lattice.offset, p.lattice.span);
    if (g < 0.0) g += p.lattice.span;
    if (g >= p.lattice.span) g -= p.lattice.span;
    p.gamma_n = g;
  }

  const AssumptionReport rep = f.triple.assumptions();
  p.c3_ok = rep.regularity_ok && rep.nonsingular;
  if (!p.c3_ok) {
    p.c3 = kNaN;
    p.psi = kNaN;
    return p;
  }

  const ChannelTriple& t = f.triple;
  const int nx = t.num_inputs();
  const int ny = t.num_outputs();

  // Output law of the rho_hat-tilted joint.
  LogAccumulator z;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      if (cell_on_support(t, x, y))
        z.add(std::log(t.Q[x] * t.W(x, y)) - p.rho_hat * f.density(x, y));
  const double log_z = z.result();
  std::vector<double> tilted_py(ny, 0.0);
  for (int y = 0; y < ny; ++y) {
    LogAccumulator acc;
    for (int x = 0; x < nx; ++x)
      if (cell_on_support(t, x, y))
        acc.add(std::log(t.Q[x] * t.W(x, y)) - p.rho_hat * f.density(x, y));
    if (acc.result() != kNegInf)
      tilted_py[y] = std::exp(acc.result() - log_z);
  }

  // c3: conditional variance of the density under the reverse conditional
  // Q(x) e^{numerator} / denominator, averaged over the tilted output law.
  double c3 = 0.0;
  for (int y = 0; y < ny; ++y) {
    if (tilted_py[y] <= 0.0) continue;
    double m = 0.0, s2 = 0.0;
    for (int x = 0; x < nx; ++x) {
      if (t.Q[x] <= 0.0 || f.log_numerator(x, y) == kNegInf) continue;
      const double w = std::exp(std::log(t.Q[x]) + f.log_numerator(x, y) -
                                f.log_denominator[y]);
      const double v = f.density(x, y);
      m += w * v;
      s2 += w * v * v;
    }
    c3 += tilted_py[y] * std::max(0.0, s2 - m * m);
  }
  p.c3 = c3;

  // psi: lattice correction built from densities restricted to outputs where
  // the metric actually separates two plausible inputs.
  std::vector<double> sep_vals;
  for (int y : rep.informative_outputs)
    for (int x = 0; x < nx; ++x)
      if (cell_on_support(t, x, y)) sep_vals.push_back(f.density(x, y));
  const LatticeInfo sep = detect_lattice(sep_vals);
  if (sep.kind == LatticeInfo::Kind::lattice) {
    p.psi = sep.span / (1.0 - std::exp(-sep.span));
  } else {
    p.psi = 1.0;  // nonlattice, or a single point (continuous limit)
  }

  if (p.lattice.kind == LatticeInfo::Kind::lattice && p.c3 > 0.0) {
    const double z0 =
        std::log(std::sqrt(2.0 * kPi * static_cast<double>(n) * p.c3) / p.psi);
    const double dfrac = (z0 - p.gamma_n) / p.lattice.span;
    p.i_star = static_cast<long long>(std::ceil(dfrac - 1e-9));
  }
  return p;
}

}  // namespace mdx
