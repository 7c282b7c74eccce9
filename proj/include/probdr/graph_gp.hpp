#pragma once

// Generative side: random graphs from latent positions, graph Laplacians,
// Matérn graph-GP covariances, hyperparameter fitting and conditional
// prediction, plus the directed-graph and propagation covariances.

#include "probdr/core.hpp"
#include "probdr/laplacian.hpp"
#include "probdr/neighbor_embed.hpp"
#include "probdr/rng.hpp"

#include <string>
#include <vector>

namespace probdr {

struct AdjacencySample {
  Matrix a_prime;  // sampled relation, zero diagonal; upper triangular for the Bernoulli family
  Matrix a_sym;    // a_prime OR a_prime^T
};

struct GraphGPHyper {
  double beta = 1.0;     // Matérn-1 ridge
  double t = 1.0;        // Matérn-inf diffusion time
  double kappa = 1.0;    // lengthscale; beta = 2 / kappa^2 in the fitted model
  double sigma_s = 1.0;
  double sigma_n = 0.1;
};

enum class CovarianceKind { matern1, matern_inf, bayesnet, gcgp };
enum class MaternNu { one, inf };

struct GraphCovariance {
  Matrix values;
  CovarianceKind kind = CovarianceKind::matern1;
  bool normalized = false;
};

/// (L + beta I)^{-1} for nu = 1, exp(-t L) for nu = inf.
GraphCovariance matern_covariance(const Matrix& laplacian, const GraphGPHyper& hyper, MaternNu nu);

/// diag(C)^{-1/2} C diag(C)^{-1/2}. Throws DataError on a non-positive diagonal entry.
GraphCovariance normalize_to_correlation(const GraphCovariance& c);

/// Bernoulli family: A'_ij ~ Bernoulli(w_ij) for i < j, w = 1/(1 + a d^{2b}).
/// Categorical families: one neighbour per row drawn from the row of w.
AdjacencySample sample_adjacency(const Matrix& x, AffinityFamily family, double a, double b, SeededRng& rng);

/// Independent Bernoulli edges for i < j with the given symmetric probabilities.
AdjacencySample sample_adjacency_from_probs(const Matrix& probs, SeededRng& rng);

struct PriorChain {
  AffinityFamily family = AffinityFamily::bernoulli_pairs;
  double a = 2.0;
  double b = 1.0;
  LaplacianKind laplacian = LaplacianKind::normalized;
  MaternNu nu = MaternNu::inf;
  GraphGPHyper hyper{1.0, 12.5, 1.0, 1.0, 0.0};
  int columns = 1;
};

struct PriorSample {
  AdjacencySample graph;
  Matrix covariance;
  Matrix y;  // n x columns
};

/// X -> A' -> L -> y ~ N(0, C): one graph, `columns` independent draws of y.
PriorSample prior_sample(const Matrix& x, const PriorChain& chain, SeededRng& rng);

struct LatentSpec {
  int n = 200;
  int q = 1;
  double low = -3.0;
  double high = 3.0;
};

/// Uniform latent positions, drawn row by row.
Matrix sample_uniform_latent(const LatentSpec& spec, SeededRng& rng);

struct Fig5Preset {
  LatentSpec latent;
  PriorChain chain;
};

/// n = 200 points uniform on (-3, 3), Bernoulli(1/(1 + 2 d^2)) edges,
/// normalized Laplacian, exp(-12.5 L), 200 sampled columns.
Fig5Preset fig5_preset();

/// sigma_s^2 (L + (2/kappa^2) I)^{-1}, the noiseless fitted-model covariance.
Matrix fitted_covariance(const Matrix& laplacian, const GraphGPHyper& hyper);

/// log MN(Y | 0, fitted_covariance + sigma_n^2 I, I) averaged over the given Laplacians.
double hyper_log_likelihood(const Matrix& y, const std::vector<Matrix>& laplacians, const GraphGPHyper& hyper);

struct FitOptions {
  int max_iters = 500;
  double learning_rate = 0.05;
  double tolerance = 1e-10;  // stop when the per-entry objective improves by less
  bool fit_sigma_n = true;
};

struct FitResult {
  GraphGPHyper hyper;
  std::vector<double> trace;  // total log-likelihood per accepted iteration
  bool converged = false;
};

/// Gradient ascent over (log kappa, log sigma_s, log sigma_n) on the
/// log-likelihood averaged over `laplacians` (one for the expected graph, or
/// several sampled graphs). The initial sigma_s and sigma_n are read relative
/// to the RMS of y_train; a fixed sigma_n (fit_sigma_n = false) is absolute.
FitResult fit_hyperparams(const Matrix& y_train, const std::vector<Matrix>& laplacians, const GraphGPHyper& init,
                          const FitOptions& options = {});

struct Prediction {
  Matrix mean;       // n_test x d
  Vector variances;  // per test point; empty unless requested
};

/// Conditional mean C_cross^T (C_train + sigma_n^2 I)^{-1} Y_train where the
/// first n_train rows/columns of c_full are the training block.
Prediction predict_unseen(const Matrix& y_train, const Matrix& c_full, Index n_train, double sigma_n,
                          bool with_variances = false);

enum class PredictGraphMode { latent_knn, data };

struct PredictConfig {
  int n_neighbors = 15;
  EmbedConfig embed;
  PredictGraphMode graph = PredictGraphMode::data;
  GraphGPHyper init{1.0, 1.0, 1.0, 1.0, 0.5};
  FitOptions fit;
  double sigma_n_override = -1.0;  // used for prediction when >= 0
  int graph_samples = 0;           // > 0 fits on sampled graphs instead of the expected graph
  bool with_variances = false;
};

struct PredictOutcome {
  Prediction prediction;
  FitResult fit;
  Embedding x_full;  // train rows first
};

/// Embed train, embed test out of sample, fit hyperparameters on the expected
/// training graph, then predict the test rows from the full graph. Test rows
/// identical to a training row share its graph node.
PredictOutcome predict_pipeline(const DataMatrix& y_train, const DataMatrix& y_test, const PredictConfig& config);

/// M M^T with M = (I - A)^{-1} for a strictly lower-triangular weight matrix.
GraphCovariance bayesnet_covariance(const Matrix& a_lower);

/// Draws from y = A y + e, e ~ N(0, I), in topological order. Returns draws x n.
Matrix ancestral_samples(const Matrix& a_lower, int draws, SeededRng& rng);

/// sum_{k=0}^{depth} a^k.
Matrix neumann_power_sum(const Matrix& a, int depth);

/// S^k C (S^k)^T with S = D~^{-1/2} (A + I) D~^{-1/2}.
GraphCovariance gcgp_covariance(const Matrix& a_sym, int k, const Matrix& base);

struct GammaLaw {
  double shape = 1.0;
  double scale = 1.0;  // zero means a point mass at 0

  double mean() const { return shape * scale; }
  double cdf(double x) const;
};

/// Law of |y_i - y_j|^2 when the d columns of y are i.i.d. N(0, K).
GammaLaw normal_distance_gamma(double k_ii, double k_jj, double k_ij, double d);

}  // namespace probdr
