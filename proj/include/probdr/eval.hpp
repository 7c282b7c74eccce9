#pragma once

#include "probdr/core.hpp"

#include <functional>
#include <vector>

namespace probdr {

struct ProcrustesResult {
  double residual = 0.0;
  Matrix aligned;  // b mapped onto a
};

/// Optimal translation + orthogonal map (+ uniform scale when `with_scale`)
/// taking b onto a. With scaling both inputs are centred and scaled to unit
/// Frobenius norm, residual = sqrt(1 - (sum of singular values of a^T b)^2),
/// which is symmetric in a and b. Without scaling the residual is
/// |a_c - b_c R| / |a_c|.
ProcrustesResult procrustes(const Matrix& a, const Matrix& b, bool with_scale = true);
ProcrustesResult procrustes(const Embedding& a, const Embedding& b, bool with_scale = true);

/// Mean silhouette with Euclidean distances. Points in singleton clusters and
/// points with a = b = 0 score 0.
double silhouette(const Matrix& x, const std::vector<int>& labels);

double rmse(const Matrix& pred, const Matrix& truth);

/// Spearman rank correlation; ties get their average rank.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// sup_x |F_n(x) - F(x)| for the empirical distribution of `samples`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

}  // namespace probdr
