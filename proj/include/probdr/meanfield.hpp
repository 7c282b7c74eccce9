#pragma once

// Mean-field coordinate ascent for the edge posterior of the UMAP-style
// generative model y ~ N(0, (beta I + L(A))^{-1}).

#include "probdr/core.hpp"
#include "probdr/rng.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace probdr {

struct CaviState {
  Matrix edge_probs;  // q(A_ij = 1), symmetric, zero diagonal
  Matrix prior;       // pi_ij in (0, 1)
  Matrix sq_dists;    // d_ij = |y_i - y_j|^2
  double d = 1.0;     // data dimension
  double rho = 0.0;   // edge coupling; <= 0 selects 1/d
  double beta = 1.0;

  double coupling() const { return rho > 0.0 ? rho : 1.0 / d; }
};

/// Throws DataError / ConfigError when the state violates its invariants.
void validate(const CaviState& state);

/// 2 rho (diag(Q 1) - Q): the Laplacian is linear in A, so this is E[L].
Matrix expected_laplacian(const CaviState& state);

/// (beta I + E[L] - 2 rho q_ij phi phi^T)^{-1} with phi = e_i - e_j.
Matrix cavity_covariance(const CaviState& state, Index i, Index j);

/// phi^T C^{ij} phi.
double cavity_distance(const CaviState& state, Index i, Index j);

/// sigma(kappa_term - distance_term + logit(prior)), clamped to [1e-12, 1 - 1e-12].
double cavi_probability(double kappa_term, double distance_term, double prior);

enum class KappaEstimator { plug_in, monte_carlo };

struct CaviOptions {
  KappaEstimator estimator = KappaEstimator::plug_in;
  int mc_samples = 32;
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
};

/// New q(A_ij = 1) = sigma(d rho E[kappa_ij] - rho d_ij + logit pi_ij).
/// The Monte Carlo estimator averages kappa over graphs drawn from q (edge ij removed).
double cavi_update(const CaviState& state, Index i, Index j, const CaviOptions& options = {},
                   SeededRng* rng = nullptr);

struct CaviResult {
  CaviState state;
  std::vector<double> max_change;  // one entry per sweep
  bool converged = false;
};

/// Sequential updates in the given pair order (lexicographic i < j when empty),
/// stopping once a sweep changes no probability by more than options.tolerance.
CaviResult cavi_sweep(const CaviState& state, int max_sweeps, const CaviOptions& options = {},
                      const std::vector<std::pair<Index, Index>>& order = {});

}  // namespace probdr
