#pragma once

// SNE, t-SNE and UMAP as variational inference over a random adjacency
// matrix: data-side affinities v, latent-side kernels w, the KL objectives
// between them, analytic gradients and a latent optimizer.

#include "probdr/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace probdr {

enum class AffinityFamily {
  categorical_rows,   // SNE: each row sums to 1
  categorical_joint,  // t-SNE: the whole matrix sums to 1, symmetric
  bernoulli_pairs,    // UMAP: independent edge probabilities, symmetric
};

std::string to_string(AffinityFamily family);
AffinityFamily parse_affinity_family(const std::string& name);  // "sne" | "tsne" | "umap"

struct AffinityMatrix {
  Matrix probs;  // zero diagonal
  AffinityFamily family = AffinityFamily::categorical_rows;
};

struct CalibrationWarning {
  Index point = 0;
  std::string message;
};

struct PerplexityCalibration {
  double target = 0.0;       // perplexity (SNE/t-SNE) or neighbour count (UMAP)
  Vector sigmas;
  Vector rhos;               // UMAP nearest-neighbour distances; empty otherwise
  std::vector<CalibrationWarning> warnings;
};

struct AffinityResult {
  AffinityMatrix affinity;
  Matrix conditional;  // row-conditional probabilities before symmetrization
  PerplexityCalibration calibration;
};

/// Row-normalized Gaussian affinities; sigma_i found by bisection so that
/// 2^H_i matches the perplexity. Requires 1 < perplexity < n.
AffinityResult sne_affinities(const DataMatrix& y, double perplexity);

/// (P + P^T) / (2n) from the SNE conditionals.
AffinityResult tsne_affinities(const DataMatrix& y, double perplexity);

/// Fuzzy kNN memberships exp(-(dist - rho_i) / sigma_i), calibrated so each row
/// sums to log2(k) over its k neighbours, then OR-symmetrized.
AffinityResult umap_affinities(const DataMatrix& y, int n_neighbors);

/// Latent-side probabilities w for the given family. a and b only affect UMAP:
/// w_ij = 1 / (1 + a |x_i - x_j|^{2b}).
AffinityMatrix latent_kernel(const Matrix& x, AffinityFamily family, double a = 1.0, double b = 1.0);

/// Probabilities inside logarithms are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-12;

struct KlBreakdown {
  double value = 0.0;
  std::size_t clamped = 0;  // number of w entries that hit the clamp
};

/// SNE / t-SNE: sum_{i != j} v log(v / w). UMAP: the i < j Bernoulli form
/// sum_{i<j} v log(v/w) + (1 - v) log((1 - v)/(1 - w)), half of the i != j cost.
double kl_objective(const AffinityMatrix& v, const AffinityMatrix& w);
KlBreakdown kl_objective_detail(const AffinityMatrix& v, const AffinityMatrix& w);

enum class InitMethod { random_gaussian, spectral };

struct EmbedConfig {
  int q = 2;
  double a = 1.0;
  double b = 1.0;
  double learning_rate = 0.1;  // step = learning_rate * n / |grad_0|
  double momentum = 0.8;
  int max_iters = 1000;
  std::uint64_t seed = 0;
  InitMethod init = InitMethod::random_gaussian;
  double init_scale = 1e-2;
  std::string trace_path;  // JSON lines, written when non-empty
};

/// d KL / d X for the family of v, evaluated at x (n x q).
Matrix kl_gradient(const AffinityMatrix& v, const Matrix& x, const EmbedConfig& config);

struct TraceEntry {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct EmbedResult {
  Embedding embedding;
  std::vector<TraceEntry> trace;  // entry 0 is the initial state
};

Matrix initial_embedding(const AffinityMatrix& v, const EmbedConfig& config);

/// Momentum gradient descent on the KL objective. Deterministic given the seed.
EmbedResult optimize_embedding(const AffinityMatrix& v, const EmbedConfig& config);

/// Optimizes only the trailing rows of an embedding whose leading rows are
/// fixed to x_train. v_full covers train rows first, then test rows.
EmbedResult embed_out_of_sample(const AffinityMatrix& v_full, const Embedding& x_train, const EmbedConfig& config);

/// Pseudo-counts floor(resolution * p) where p is the row-conditional
/// distribution of v (joint affinities count n times as many draws).
/// resolution <= 0 selects max(n, 1000) per row.
Matrix categorical_map_approx(const AffinityMatrix& v, double resolution = 0.0);

/// -sum counts_ij log w_ij, the categorical negative log-likelihood of the counts.
double categorical_count_nll(const Matrix& counts, const AffinityMatrix& w);

void write_trace_jsonl(const std::string& path, const std::vector<TraceEntry>& trace);

}  // namespace probdr
