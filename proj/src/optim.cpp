#include "mdx/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdx {

ScalarOpt golden_max(const std::function<double(double)>& f, double lo,
                     double hi, double xtol, int max_iter) {
  if (lo > hi) std::swap(lo, hi);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > xtol; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  double xm = 0.5 * (a + b);
  double fm = f(xm);
  ScalarOpt best{xm, fm};
  if (fc > best.value) best = {c, fc};
  if (fd > best.value) best = {d, fd};
  return best;
}

ScalarOpt scan_then_golden(const std::function<double(double)>& f,
                           const std::vector<double>& scan, double xtol) {
  if (scan.empty()) throw std::invalid_argument("scan_then_golden: empty scan grid");
  size_t best = 0;
  double best_val = f(scan[0]);
  std::vector<double> vals(scan.size());
  vals[0] = best_val;
  for (size_t i = 1; i < scan.size(); ++i) {
    vals[i] = f(scan[i]);
    if (vals[i] > best_val) {
      best_val = vals[i];
      best = i;
    }
  }
  double lo = scan[best > 0 ? best - 1 : 0];
  double hi = scan[best + 1 < scan.size() ? best + 1 : scan.size() - 1];
  if (lo == hi) return {scan[best], best_val};
  ScalarOpt refined = golden_max(f, lo, hi, xtol);
  if (refined.value >= best_val) return refined;
  return {scan[best], best_val};
}

std::vector<double> geometric_grid(int k_lo, int k_hi) {
  std::vector<double> g;
  g.reserve(static_cast<size_t>(k_hi - k_lo + 1));
  for (int k = k_lo; k <= k_hi; ++k) g.push_back(std::ldexp(1.0, k));
  return g;
}

namespace {

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& x, double rel_step) {
  std::vector<double> g(x.size());
  std::vector<double> xp = x;
  for (size_t i = 0; i < x.size(); ++i) {
    double h = rel_step * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    double fp = f(xp);
    xp[i] = x[i] - h;
    double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

VectorOpt quasi_newton_max(const std::function<double(const std::vector<double>&)>& f,
                           std::vector<double> x0, const AscentOptions& opt) {
  const size_t n = x0.size();
  std::vector<double> x = std::move(x0);
  double fx = f(x);
  if (n == 0) return {x, fx, 0};

  // Inverse Hessian approximation, started at identity.
  std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) H[i][i] = 1.0;
  std::vector<double> g = fd_gradient(f, x, opt.fd_step);

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    // Ascent direction d = H g.
    std::vector<double> d(n, 0.0);
    double dg = 0.0;
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) d[i] += H[i][j] * g[j];
      dg += d[i] * g[i];
    }
    if (!(dg > 0.0)) {
      // Not an ascent direction; reset to steepest ascent.
      d = g;
      dg = 0.0;
      for (size_t i = 0; i < n; ++i) dg += g[i] * g[i];
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) H[i][j] = (i == j) ? 1.0 : 0.0;
      if (!(dg > 0.0)) break;  // zero gradient
    }

    // Armijo backtracking.
    double t = opt.init_step;
    double fnew = fx;
    std::vector<double> xnew = x;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (size_t i = 0; i < n; ++i) xnew[i] = x[i] + t * d[i];
      fnew = f(xnew);
      if (std::isfinite(fnew) && fnew >= fx + 1e-4 * t * dg) {
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;

    std::vector<double> gnew = fd_gradient(f, xnew, opt.fd_step);
    // BFGS update with s = xnew - x, yv = gnew - g (note: maximizing, so the
    // curvature condition is s.yv < 0; we update on |s.yv| with the standard
    // formula applied to the negated problem).
    std::vector<double> s(n), yv(n);
    double sy = 0.0;
    for (size_t i = 0; i < n; ++i) {
      s[i] = xnew[i] - x[i];
      yv[i] = g[i] - gnew[i];  // gradient of the negated (minimized) problem
      sy += s[i] * yv[i];
    }
    if (sy > 1e-14) {
      std::vector<double> Hy(n, 0.0);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) Hy[i] += H[i][j] * yv[j];
      double yHy = 0.0;
      for (size_t i = 0; i < n; ++i) yHy += yv[i] * Hy[i];
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
          H[i][j] += (sy + yHy) * s[i] * s[j] / (sy * sy) -
                     (Hy[i] * s[j] + s[i] * Hy[j]) / sy;
        }
      }
    }

    double gain = fnew - fx;
    x = std::move(xnew);
    fx = fnew;
    g = std::move(gnew);
    if (gain < opt.tol * (1.0 + std::abs(fx))) break;
  }
  return {x, fx, it};
}

}  // namespace mdx
