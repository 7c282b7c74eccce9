#include "probdr/eval.hpp"

#include "probdr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace probdr {

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start + 1;
    while (end < idx.size() && v[idx[end]] == v[idx[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + end - 1) + 1.0;
    for (std::size_t k = start; k < end; ++k) ranks[idx[k]] = rank;
    start = end;
  }
  return ranks;
}

}  // namespace

ProcrustesResult procrustes(const Matrix& a, const Matrix& b, bool with_scale) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError("procrustes inputs differ in shape: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  if (!all_finite(a) || !all_finite(b)) throw DataError("procrustes inputs contain non-finite entries");
  const Eigen::RowVectorXd mean_a = a.colwise().mean();
  const Eigen::RowVectorXd mean_b = b.colwise().mean();
  Matrix ac = a.rowwise() - mean_a;
  Matrix bc = b.rowwise() - mean_b;
  const double norm_a = ac.norm();
  const double norm_b = bc.norm();
  if (!(norm_a > 0.0) || !(norm_b > 0.0)) throw DataError("procrustes input has zero variance");

  Eigen::JacobiSVD<Matrix> svd(ac.transpose() * bc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // R maps b's coordinates onto a's: b R ~ a.
  const Matrix r = svd.matrixV() * svd.matrixU().transpose();
  ProcrustesResult out;
  if (with_scale) {
    const double trace = svd.singularValues().sum() / (norm_a * norm_b);
    // Equals sqrt(1 - trace^2) but keeps full precision near zero.
    out.residual = (ac / norm_a - (bc * r) * (trace / norm_b)).norm();
    out.aligned = ((bc * r) * (trace * norm_a / norm_b)).rowwise() + mean_a;
  } else {
    out.aligned = (bc * r).rowwise() + mean_a;
    out.residual = (ac - bc * r).norm() / norm_a;
  }
  return out;
}

ProcrustesResult procrustes(const Embedding& a, const Embedding& b, bool with_scale) {
  return procrustes(a.values(), b.values(), with_scale);
}

double silhouette(const Matrix& x, const std::vector<int>& labels) {
  const Index n = x.rows();
  if (static_cast<Index>(labels.size()) != n) throw DataError("silhouette: one label per point is required");
  std::map<int, std::vector<Index>> clusters;
  for (Index i = 0; i < n; ++i) clusters[labels[static_cast<std::size_t>(i)]].push_back(i);
  if (clusters.size() < 2) throw DataError("silhouette needs at least two clusters");
  const Matrix dist = pairwise_sq_dists(x).cwiseMax(0.0).cwiseSqrt();

  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int own = labels[static_cast<std::size_t>(i)];
    const auto& members = clusters[own];
    if (members.size() == 1) continue;
    double a = 0.0;
    for (Index j : members) a += dist(i, j);
    a /= static_cast<double>(members.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, other] : clusters) {
      if (label == own) continue;
      double m = 0.0;
      for (Index j : other) m += dist(i, j);
      b = std::min(b, m / static_cast<double>(other.size()));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

double rmse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw DataError("rmse inputs differ in shape");
  }
  if (pred.size() == 0) throw DataError("rmse of empty matrices");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("spearman needs two equal-length samples of size >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw DataError("ks_statistic of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double stat = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double f = cdf(samples[k]);
    stat = std::max({stat, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
  }
  return stat;
}

}  // namespace probdr
