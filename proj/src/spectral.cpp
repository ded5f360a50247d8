// SPDX-License-Identifier: Apache-2.0

#include "gremc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace gremc {

Mat normalized_laplacian(const Mat& adj) {
  require(adj.rows == adj.cols, "adjacency not square");
  size_t n = adj.rows;
  for (size_t i = 0; i < n; ++i) {
    require(adj(i, i) == 0.0, "adjacency has nonzero diagonal");
    for (size_t j = i + 1; j < n; ++j)
      require(adj(i, j) == adj(j, i), "asymmetric adjacency");
  }

  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (size_t j = 0; j < n; ++j) deg += adj(i, j);
    if (deg > 0.0) inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }

  Mat lap(n, n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    if (inv_sqrt_deg[i] == 0.0) continue;  // degree-0 row stays all zero
    lap(i, i) = 1.0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i || adj(i, j) == 0.0) continue;
      lap(i, j) = -adj(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  return lap;
}

namespace {

double off_diag_norm2(const Mat& a) {
  double s = 0.0;
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < a.cols; ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return s;
}

}  // namespace

EigenResult eigen_decompose_symmetric(Mat a, unsigned max_sweeps) {
  require(a.rows == a.cols, "matrix not square");
  size_t n = a.rows;

  Mat v(n, n, 0.0);
  for (size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  if (n > 1) {
    // Convergence threshold scaled to the matrix magnitude; residuals come
    // out far below the 1e-8 contract because Jacobi converges quadratically.
    double scale = 0.0;
    for (double x : a.data) scale = std::max(scale, std::abs(x));
    double threshold = std::max(scale, 1.0) * 1e-14;
    threshold = threshold * threshold * static_cast<double>(n * n);

    bool converged = false;
    for (unsigned sweep = 0; sweep < max_sweeps; ++sweep) {
      if (off_diag_norm2(a) < threshold) {
        converged = true;
        break;
      }
      for (size_t p = 0; p < n; ++p) {
        for (size_t q = p + 1; q < n; ++q) {
          double apq = a(p, q);
          if (apq == 0.0) continue;
          double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
          double t = (theta >= 0.0 ? 1.0 : -1.0) /
                     (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          double c = 1.0 / std::sqrt(t * t + 1.0);
          double s = t * c;

          for (size_t i = 0; i < n; ++i) {
            double aip = a(i, p), aiq = a(i, q);
            a(i, p) = c * aip - s * aiq;
            a(i, q) = s * aip + c * aiq;
          }
          for (size_t i = 0; i < n; ++i) {
            double api = a(p, i), aqi = a(q, i);
            a(p, i) = c * api - s * aqi;
            a(q, i) = s * api + c * aqi;
          }
          for (size_t i = 0; i < n; ++i) {
            double vip = v(i, p), viq = v(i, q);
            v(i, p) = c * vip - s * viq;
            v(i, q) = s * vip + c * viq;
          }
        }
      }
    }
    if (!converged && off_diag_norm2(a) >= threshold) {
      fail("jacobi failed to converge after " + std::to_string(max_sweeps) +
           " sweeps; off-diagonal norm " + std::to_string(std::sqrt(off_diag_norm2(a))));
    }
  }

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return a(x, x) < a(y, y); });

  EigenResult out;
  out.values.resize(n);
  out.vectors = Mat(n, n, 0.0);
  for (size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

LaplacianPE laplacian_pe(const Mat& adj, unsigned k) {
  require(k >= 1, "pe dimension must be positive");
  size_t n = adj.rows;
  EigenResult eig = eigen_decompose_symmetric(normalized_laplacian(adj));

  LaplacianPE pe;
  pe.k = k;
  pe.vectors = Mat(n, k, 0.0);
  size_t col = 0;
  for (size_t j = 0; j < n && col < k; ++j) {
    if (eig.values[j] <= 1e-8) continue;  // kernel modes carry no structure

    size_t pivot = 0;
    double best = -1.0;
    for (size_t i = 0; i < n; ++i) {
      double mag = std::abs(eig.vectors(i, j));
      if (mag > best) {
        best = mag;
        pivot = i;
      }
    }
    double sign = eig.vectors(pivot, j) < 0.0 ? -1.0 : 1.0;
    for (size_t i = 0; i < n; ++i) pe.vectors(i, col) = sign * eig.vectors(i, j);
    pe.eigenvalues.push_back(eig.values[j]);
    ++col;
  }
  return pe;
}

}  // namespace gremc
