#pragma once

// Second step of two-step MAP: Wishart likelihoods over moment matrices and
// their closed-form maximisers (probabilistic principal / minor coordinates).

#include "probdr/core.hpp"
#include "probdr/moments.hpp"
#include "probdr/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace probdr {

struct MapEmbedding {
  Embedding embedding;
  double noise = 0.0;                // sigma^2 (covariance input) or beta (precision input)
  std::vector<Index> used_components;  // eigenpair indices in descending-eigenvalue order
  bool clamped = false;               // some radicand lambda - noise was <= 0
};

/// X X^T + noise * I, the covariance implied by a fitted map embedding.
Matrix implied_covariance(const MapEmbedding& fit);

/// -(dof/2) tr(M^{-1} T) - (dof/2) log|M|, constant dropped. `t` is the unscaled
/// moment (T * dof is the Wishart variate) and may be singular.
double wishart_logpdf(const Matrix& t, const Matrix& m, double dof);

/// Full log density of W(rho * t_hat | m, rho). Singular t_hat contributes its
/// pseudo-determinant, which is constant in m.
double scaled_wishart_logpdf(const Matrix& t_hat, const Matrix& m, double rho);

/// KL(W(q_mean, dof) || W(p_mean, dof)), exact for equal degrees of freedom.
double wishart_kl(const Matrix& q_mean, const Matrix& p_mean, double dof);

/// log MN(Y | 0, K, I_d).
double gplvm_objective(const DataMatrix& y, const Matrix& kernel_matrix);

/// X_hat = U_q (Lambda_q - sigma^2)^{1/2}, sigma^2 = mean of trailing eigenvalues.
MapEmbedding pca_map(const MomentMatrix& moment, int q);

/// X_hat = U_q (Lambda_q^{-1} - beta)^{1/2} over the q minor eigenpairs of the
/// precision (plus ridge * I). drop_null discards the smallest eigenpair first.
/// beta = (n' - q) / sum of the remaining eigenvalues, n' = n - dropped.
MapEmbedding mca_map(const MomentMatrix& moment, int q, bool drop_null, double ridge = 1e-8);

struct AlgoSpec {
  enum class Name { pca, cmds, isomap, kpca, le, le_covariance, lle, diffusion };
  Name name = Name::pca;
  bool center = true;                  // pca
  int k = 10;                          // isomap, lle
  GraphSpec graph = GraphSpec::knn(10);  // le
  LaplacianKind laplacian = LaplacianKind::normalized;
  KernelSpec kernel;                   // kpca
  double lle_ridge = 1e-3;
  double gamma = 1.0;                  // le_covariance
  double lengthscale = 1.0;            // diffusion
  int steps = 1;
  double precision_ridge = 1e-8;       // mca_map ridge for precision moments
};

std::string to_string(AlgoSpec::Name name);
AlgoSpec::Name parse_spectral_algo(const std::string& name);  // throws ConfigError

MomentMatrix compute_moment(const DataMatrix& y, const AlgoSpec& algo);

/// Step 1 then step 2: covariance moments use major eigenpairs, precision
/// moments use minor eigenpairs after dropping the null vector.
MapEmbedding two_step_map(const DataMatrix& y, const AlgoSpec& algo, int q);

/// Draws W(scale, dof) via the Bartlett decomposition. dof > n - 1.
Matrix sample_wishart(const Matrix& scale, double dof, SeededRng& rng);

/// Monte Carlo estimate of Cov(y) under S ~ W(X X^T + sigma2 I, rho), y | S ~ N(0, S / rho).
/// Samples are split across `workers` sub-streams derived from `seed`; the result
/// depends only on (seed, workers, samples).
Matrix pca_marginal_covariance_mc(const Matrix& x, double sigma2, double rho, int samples, std::uint64_t seed,
                                  int workers = 1);

}  // namespace probdr
