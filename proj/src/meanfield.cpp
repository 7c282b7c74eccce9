#include "probdr/meanfield.hpp"

#include "probdr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace probdr {

namespace {

void require_pair(const CaviState& state, Index i, Index j) {
  const Index n = state.edge_probs.rows();
  if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
    throw ConfigError("invalid pair (" + std::to_string(i) + "," + std::to_string(j) + ") for n=" + std::to_string(n));
  }
}

double quadratic_form(const Matrix& c, Index i, Index j) {
  return c(i, i) + c(j, j) - 2.0 * c(i, j);
}

Matrix cavity_from_laplacian(Matrix l, double beta, double removed, Index i, Index j) {
  l(i, i) -= removed;
  l(j, j) -= removed;
  l(i, j) += removed;
  l(j, i) += removed;
  l.diagonal().array() += beta;
  Eigen::LLT<Matrix> llt(l);
  if (llt.info() != Eigen::Success) throw NumericalError("cavity precision is not positive definite");
  return llt.solve(Matrix::Identity(l.rows(), l.cols()));
}

}  // namespace

void validate(const CaviState& s) {
  const Index n = s.edge_probs.rows();
  if (n < 2 || s.edge_probs.cols() != n || s.prior.rows() != n || s.prior.cols() != n || s.sq_dists.rows() != n ||
      s.sq_dists.cols() != n) {
    throw DataError("CAVI state matrices must all be n x n with n >= 2");
  }
  if (!(s.d > 0.0) || !(s.beta > 0.0)) throw ConfigError("CAVI state needs d > 0 and beta > 0");
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double q = s.edge_probs(i, j);
      if (!(q >= 0.0 && q <= 1.0)) throw DataError("edge probabilities must lie in [0, 1]");
      if (q != s.edge_probs(j, i)) throw DataError("edge probabilities must be symmetric");
      const double p = s.prior(i, j);
      if (!(p > 0.0 && p < 1.0)) throw DataError("prior edge probabilities must lie strictly inside (0, 1)");
      if (!(s.sq_dists(i, j) >= 0.0) || s.sq_dists(i, j) != s.sq_dists(j, i)) {
        throw DataError("squared distances must be symmetric and non-negative");
      }
    }
  }
}

Matrix expected_laplacian(const CaviState& state) {
  Matrix q = state.edge_probs;
  q.diagonal().setZero();
  Matrix l = -q;
  l.diagonal() = q.rowwise().sum();
  return 2.0 * state.coupling() * l;
}

Matrix cavity_covariance(const CaviState& state, Index i, Index j) {
  require_pair(state, i, j);
  const double removed = 2.0 * state.coupling() * state.edge_probs(i, j);
  return cavity_from_laplacian(expected_laplacian(state), state.beta, removed, i, j);
}

double cavity_distance(const CaviState& state, Index i, Index j) {
  return std::max(0.0, quadratic_form(cavity_covariance(state, i, j), i, j));
}

double cavi_probability(double kappa_term, double distance_term, double prior) {
  const double logit = std::log(prior) - std::log1p(-prior);
  const double z = kappa_term - distance_term + logit;
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

double cavi_update(const CaviState& state, Index i, Index j, const CaviOptions& options, SeededRng* rng) {
  require_pair(state, i, j);
  const double rho = state.coupling();
  double kappa = 0.0;
  if (options.estimator == KappaEstimator::plug_in) {
    kappa = cavity_distance(state, i, j);
  } else {
    if (rng == nullptr) throw ConfigError("the Monte Carlo kappa estimator needs a random stream");
    if (options.mc_samples < 1) throw ConfigError("mc_samples must be positive");
    const Index n = state.edge_probs.rows();
    for (int s = 0; s < options.mc_samples; ++s) {
      Matrix l = Matrix::Zero(n, n);
      for (Index a = 0; a < n; ++a) {
        for (Index b = a + 1; b < n; ++b) {
          if ((a == i && b == j) || (a == j && b == i)) continue;
          if (!rng->bernoulli(state.edge_probs(a, b))) continue;
          l(a, a) += 2.0 * rho;
          l(b, b) += 2.0 * rho;
          l(a, b) -= 2.0 * rho;
          l(b, a) -= 2.0 * rho;
        }
      }
      kappa += std::max(0.0, quadratic_form(cavity_from_laplacian(l, state.beta, 0.0, i, j), i, j));
    }
    kappa /= options.mc_samples;
  }
  return cavi_probability(state.d * rho * kappa, rho * state.sq_dists(i, j), state.prior(i, j));
}

CaviResult cavi_sweep(const CaviState& state, int max_sweeps, const CaviOptions& options,
                      const std::vector<std::pair<Index, Index>>& order) {
  validate(state);
  if (max_sweeps < 1) throw ConfigError("max_sweeps must be positive");
  const Index n = state.edge_probs.rows();
  std::vector<std::pair<Index, Index>> pairs = order;
  if (pairs.empty()) {
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  for (const auto& [i, j] : pairs) require_pair(state, i, j);

  CaviResult out{state, {}, false};
  out.state.edge_probs.diagonal().setZero();
  SeededRng rng(options.seed);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double change = 0.0;
    for (const auto& [i, j] : pairs) {
      const double updated = cavi_update(out.state, i, j, options, &rng);
      change = std::max(change, std::abs(updated - out.state.edge_probs(i, j)));
      out.state.edge_probs(i, j) = updated;
      out.state.edge_probs(j, i) = updated;
    }
    out.max_change.push_back(change);
    if (change < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace probdr
