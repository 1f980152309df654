#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

// Tiny dense linear-algebra helpers for the constrained-coupling oracles.
// Alphabet sizes here are single digits, so plain Gaussian elimination with
// partial pivoting is more than enough.

namespace mdx {

using DenseMatrix = std::vector<std::vector<double>>;

// Solves A x = b in place (A square).  Returns false when A is numerically
// singular at the given pivot tolerance.
inline bool solve_gauss(DenseMatrix a, std::vector<double> b,
                        std::vector<double>& x, double piv_tol = 1e-12) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < piv_tol) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double m = a[r][col] / a[col][col];
      if (m == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= m * a[col][c];
      b[r] -= m * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return true;
}

// Orthonormal basis (columns) of the null space of the m x n matrix A,
// computed by row reduction with a relative pivot tolerance followed by
// Gram-Schmidt.  Returns a list of n-vectors.
inline std::vector<std::vector<double>> null_space(DenseMatrix a,
                                                   double rel_tol = 1e-10) {
  const std::size_t m = a.size();
  const std::size_t n = m == 0 ? 0 : a[0].size();
  double scale = 0.0;
  for (const auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  const double tol = rel_tol * std::max(1.0, scale);

  std::vector<std::size_t> pivot_col;
  std::size_t row = 0;
  for (std::size_t col = 0; col < n && row < m; ++col) {
    std::size_t piv = row;
    for (std::size_t r = row + 1; r < m; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) <= tol) continue;
    std::swap(a[piv], a[row]);
    const double d = a[row][col];
    for (std::size_t c = 0; c < n; ++c) a[row][c] /= d;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == row) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) a[r][c] -= f * a[row][c];
    }
    pivot_col.push_back(col);
    ++row;
  }

  std::vector<bool> is_pivot(n, false);
  for (std::size_t c : pivot_col) is_pivot[c] = true;
  std::vector<std::vector<double>> basis;
  for (std::size_t free_c = 0; free_c < n; ++free_c) {
    if (is_pivot[free_c]) continue;
    std::vector<double> v(n, 0.0);
    v[free_c] = 1.0;
    for (std::size_t r = 0; r < pivot_col.size(); ++r)
      v[pivot_col[r]] = -a[r][free_c];
    basis.push_back(std::move(v));
  }

  // Gram-Schmidt for numerical hygiene downstream.
  std::vector<std::vector<double>> ortho;
  for (auto& v : basis) {
    for (const auto& u : ortho) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double vi : v) norm += vi * vi;
    norm = std::sqrt(norm);
    if (norm > 1e-12) {
      for (double& vi : v) vi /= norm;
      ortho.push_back(std::move(v));
    }
  }
  return ortho;
}

}  // namespace mdx
