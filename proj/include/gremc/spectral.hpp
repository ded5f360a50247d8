// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "gremc/common.hpp"

namespace gremc {

/// Positional encoding block for one token set. `vectors` is |tokens| x k;
/// when fewer than k nontrivial eigenvectors exist the trailing columns stay
/// zero and `eigenvalues` lists only the selected ones.
struct LaplacianPE {
  unsigned k = 0;
  Mat vectors;
  std::vector<double> eigenvalues;
};

/// L = I - D^{-1/2} A D^{-1/2} with the degree-0 convention L_jj = 0: an
/// isolated token carries no structure and must read as a zero encoding, not
/// as a spurious unit eigenvalue.
Mat normalized_laplacian(const Mat& adj);

struct EigenResult {
  std::vector<double> values;  // ascending
  Mat vectors;                 // column j pairs with values[j]
};

/// Cyclic Jacobi on a dense symmetric matrix. Token sets stay small (a few
/// hundred at most), where Jacobi is simple, accurate, and has no convergence
/// edge cases worth trading for a faster method.
EigenResult eigen_decompose_symmetric(Mat m, unsigned max_sweeps = 64);

/// Bottom-k nontrivial (eigenvalue > 1e-8) eigenvectors of the normalized
/// Laplacian of adj, ascending by eigenvalue, sign-canonicalized so the
/// largest-magnitude component is positive (ties resolved at the lowest
/// index). Missing columns are zero-padded.
LaplacianPE laplacian_pe(const Mat& adj, unsigned k);

}  // namespace gremc
