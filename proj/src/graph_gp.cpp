#include "probdr/graph_gp.hpp"

#include "probdr/errors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace probdr {

namespace {

constexpr double kSymmetryTolerance = 1e-10;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw DataError(std::string(what) + ": matrix must be square");
  if (!all_finite(m)) throw DataError(std::string(what) + ": matrix contains non-finite entries");
}

Matrix checked_adjacency(const Matrix& a, const char* what) {
  require_square(a, what);
  if ((a.array() < 0.0).any()) throw DataError(std::string(what) + ": adjacency weights must be non-negative");
  if (relative_asymmetry(a) > kSymmetryTolerance) throw DataError(std::string(what) + ": adjacency is not symmetric");
  Matrix out = 0.5 * (a + a.transpose());
  out.diagonal().setZero();
  return out;
}

Matrix or_symmetrize(const Matrix& a_prime) {
  return a_prime.cwiseMax(a_prime.transpose());
}

// Per-graph spectral data for the fitted-model likelihood.
struct SpectralData {
  Vector ell;     // Laplacian eigenvalues
  Vector energy;  // squared norms of the rows of U^T Y
};

struct Params {
  double log_kappa;
  double log_sigma_s;
  double log_sigma_n;
};

GraphGPHyper to_hyper(const Params& p, const GraphGPHyper& base) {
  GraphGPHyper h = base;
  h.kappa = std::exp(p.log_kappa);
  h.sigma_s = std::exp(p.log_sigma_s);
  h.sigma_n = std::exp(p.log_sigma_n);
  h.beta = 2.0 / (h.kappa * h.kappa);
  return h;
}

// Mean log-likelihood over graphs and its gradient in log-parameters.
double likelihood_and_gradient(const std::vector<SpectralData>& graphs, Index d, const Params& p, double grad[3]) {
  const double tau = 2.0 * std::exp(-2.0 * p.log_kappa);
  const double s2 = std::exp(2.0 * p.log_sigma_s);
  const double n2 = std::exp(2.0 * p.log_sigma_n);
  const double dd = static_cast<double>(d);
  double total = 0.0;
  grad[0] = grad[1] = grad[2] = 0.0;
  for (const auto& g : graphs) {
    const Index n = g.ell.size();
    double ll = -0.5 * static_cast<double>(n) * dd * std::log(2.0 * std::numbers::pi);
    for (Index k = 0; k < n; ++k) {
      const double denom = std::max(g.ell(k), 0.0) + tau;
      const double c = s2 / denom + n2;
      ll += -0.5 * dd * std::log(c) - 0.5 * g.energy(k) / c;
      const double dll_dc = -0.5 * dd / c + 0.5 * g.energy(k) / (c * c);
      grad[0] += dll_dc * 2.0 * tau * s2 / (denom * denom);
      grad[1] += dll_dc * 2.0 * s2 / denom;
      grad[2] += dll_dc * 2.0 * n2;
    }
    total += ll;
  }
  const double m = static_cast<double>(graphs.size());
  for (int i = 0; i < 3; ++i) grad[i] /= m;
  return total / m;
}

std::vector<SpectralData> spectral_data(const Matrix& y, const std::vector<Matrix>& laplacians) {
  if (laplacians.empty()) throw ConfigError("at least one Laplacian is required");
  std::vector<SpectralData> out;
  out.reserve(laplacians.size());
  for (const auto& l : laplacians) {
    require_square(l, "laplacian");
    if (l.rows() != y.rows()) {
      throw DataError("Laplacian has " + std::to_string(l.rows()) + " rows but the data has " +
                      std::to_string(y.rows()));
    }
    const auto eig = sym_eigendecomposition(l);
    out.push_back({eig.eigenvalues, (eig.eigenvectors.transpose() * y).rowwise().squaredNorm()});
  }
  return out;
}

std::string describe(const GraphGPHyper& h) {
  return "kappa=" + format_double(h.kappa) + " sigma_s=" + format_double(h.sigma_s) +
         " sigma_n=" + format_double(h.sigma_n);
}

}  // namespace

Matrix build_laplacian(const Matrix& adjacency, LaplacianKind kind) {
  const Matrix a = checked_adjacency(adjacency, "build_laplacian");
  const Index n = a.rows();
  const Vector degree = a.rowwise().sum();
  if (kind == LaplacianKind::ordinary) {
    Matrix l = -a;
    l.diagonal() = degree;
    return l;
  }
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  Matrix l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  return 0.5 * (l + l.transpose());
}

GraphCovariance matern_covariance(const Matrix& laplacian, const GraphGPHyper& hyper, MaternNu nu) {
  require_square(laplacian, "matern_covariance");
  const Index n = laplacian.rows();
  if (nu == MaternNu::one) {
    if (!(hyper.beta > 0.0)) throw ConfigError("Matérn-1 covariance needs beta > 0");
    Matrix shifted = 0.5 * (laplacian + laplacian.transpose());
    shifted.diagonal().array() += hyper.beta;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) throw NumericalError("L + beta I is not positive definite");
    Matrix c = llt.solve(Matrix::Identity(n, n));
    return {0.5 * (c + c.transpose()), CovarianceKind::matern1, false};
  }
  if (!(hyper.t >= 0.0)) throw ConfigError("Matérn-inf covariance needs t >= 0");
  return {matrix_exponential_sym(laplacian, -hyper.t), CovarianceKind::matern_inf, false};
}

GraphCovariance normalize_to_correlation(const GraphCovariance& c) {
  require_square(c.values, "normalize_to_correlation");
  const Vector diag = c.values.diagonal();
  for (Index i = 0; i < diag.size(); ++i) {
    if (!(diag(i) > 0.0)) {
      throw DataError("covariance diagonal entry " + std::to_string(i) + " is not positive");
    }
  }
  const Vector s = diag.cwiseSqrt().cwiseInverse();
  Matrix out = s.asDiagonal() * c.values * s.asDiagonal();
  out = 0.5 * (out + out.transpose());
  out.diagonal().setOnes();
  return {out, c.kind, true};
}

AdjacencySample sample_adjacency(const Matrix& x, AffinityFamily family, double a, double b, SeededRng& rng) {
  const AffinityMatrix w = latent_kernel(x, family, a, b);
  const Index n = x.rows();
  Matrix a_prime = Matrix::Zero(n, n);
  if (family == AffinityFamily::bernoulli_pairs) {
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        if (rng.bernoulli(w.probs(i, j))) a_prime(i, j) = 1.0;
  } else {
    for (Index i = 0; i < n; ++i) {
      const double total = w.probs.row(i).sum();
      const double u = rng.uniform() * total;
      double acc = 0.0;
      Index pick = (i == n - 1) ? n - 2 : n - 1;
      for (Index j = 0; j < n; ++j) {
        if (j == i) continue;
        acc += w.probs(i, j);
        if (u < acc) {
          pick = j;
          break;
        }
      }
      a_prime(i, pick) = 1.0;
    }
  }
  return {a_prime, or_symmetrize(a_prime)};
}

AdjacencySample sample_adjacency_from_probs(const Matrix& probs, SeededRng& rng) {
  require_square(probs, "sample_adjacency_from_probs");
  const Index n = probs.rows();
  Matrix a_prime = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (rng.bernoulli(std::clamp(probs(i, j), 0.0, 1.0))) a_prime(i, j) = 1.0;
  return {a_prime, or_symmetrize(a_prime)};
}

PriorSample prior_sample(const Matrix& x, const PriorChain& chain, SeededRng& rng) {
  if (chain.columns < 1) throw ConfigError("prior_sample needs at least one column");
  PriorSample out;
  out.graph = sample_adjacency(x, chain.family, chain.a, chain.b, rng);
  const Matrix l = build_laplacian(out.graph.a_sym, chain.laplacian);
  out.covariance = matern_covariance(l, chain.hyper, chain.nu).values;
  const auto eig = sym_eigendecomposition(out.covariance);
  const Matrix root = eig.eigenvectors * eig.eigenvalues.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Index n = x.rows();
  Matrix z(n, chain.columns);
  for (Index c = 0; c < chain.columns; ++c)
    for (Index i = 0; i < n; ++i) z(i, c) = rng.normal();
  out.y = root * z;
  return out;
}

Matrix sample_uniform_latent(const LatentSpec& spec, SeededRng& rng) {
  if (spec.n < 2 || spec.q < 1) throw ConfigError("latent spec needs n >= 2 and q >= 1");
  if (!(spec.low < spec.high)) throw ConfigError("latent range must satisfy low < high");
  Matrix x(spec.n, spec.q);
  for (Index i = 0; i < spec.n; ++i)
    for (Index c = 0; c < spec.q; ++c) x(i, c) = rng.uniform(spec.low, spec.high);
  return x;
}

Fig5Preset fig5_preset() {
  Fig5Preset p;
  p.latent = {200, 1, -3.0, 3.0};
  p.chain.family = AffinityFamily::bernoulli_pairs;
  p.chain.a = 2.0;
  p.chain.b = 1.0;
  p.chain.laplacian = LaplacianKind::normalized;
  p.chain.nu = MaternNu::inf;
  p.chain.hyper.t = 12.5;
  p.chain.columns = 200;
  return p;
}

Matrix fitted_covariance(const Matrix& laplacian, const GraphGPHyper& hyper) {
  if (!(hyper.kappa > 0.0) || !(hyper.sigma_s > 0.0)) throw ConfigError("kappa and sigma_s must be positive");
  GraphGPHyper h = hyper;
  h.beta = 2.0 / (hyper.kappa * hyper.kappa);
  return hyper.sigma_s * hyper.sigma_s * matern_covariance(laplacian, h, MaternNu::one).values;
}

double hyper_log_likelihood(const Matrix& y, const std::vector<Matrix>& laplacians, const GraphGPHyper& hyper) {
  const auto graphs = spectral_data(y, laplacians);
  double grad[3];
  return likelihood_and_gradient(graphs, y.cols(),
                                 {std::log(hyper.kappa), std::log(hyper.sigma_s), std::log(hyper.sigma_n)}, grad);
}

FitResult fit_hyperparams(const Matrix& y_train, const std::vector<Matrix>& laplacians, const GraphGPHyper& init,
                          const FitOptions& options) {
  if (!(init.kappa > 0.0) || !(init.sigma_s > 0.0) || !(init.sigma_n > 0.0)) {
    throw ConfigError("initial kappa, sigma_s and sigma_n must be positive");
  }
  if (!all_finite(y_train)) throw DataError("training data contains non-finite entries");
  const double entries = static_cast<double>(y_train.rows() * y_train.cols());
  // Fitting runs on data scaled to unit RMS, so the result is exactly
  // equivariant under rescaling of y.
  const double scale = std::sqrt(y_train.squaredNorm() / entries);
  if (!(scale > 0.0)) throw DataError("training data is identically zero");
  const auto graphs = spectral_data(y_train / scale, laplacians);
  const double log_scale = std::log(scale);
  const double sigma_n0 = options.fit_sigma_n ? init.sigma_n : init.sigma_n / scale;

  Params p{std::log(init.kappa), std::log(init.sigma_s), std::log(sigma_n0)};
  double grad[3];
  double value = likelihood_and_gradient(graphs, y_train.cols(), p, grad);
  if (!std::isfinite(value)) throw NumericalError("hyperparameter objective is not finite at " + describe(init));

  FitResult out;
  out.trace.push_back(value);
  double lr = options.learning_rate;
  for (int it = 0; it < options.max_iters; ++it) {
    if (!options.fit_sigma_n) grad[2] = 0.0;
    Params next = p;
    double next_grad[3];
    double next_value = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      next = {p.log_kappa + lr * grad[0] / entries, p.log_sigma_s + lr * grad[1] / entries,
              p.log_sigma_n + lr * grad[2] / entries};
      next_value = likelihood_and_gradient(graphs, y_train.cols(), next, next_grad);
      if (std::isfinite(next_value) && next_value >= value) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    const double gain = (next_value - value) / entries;
    p = next;
    value = next_value;
    std::copy(next_grad, next_grad + 3, grad);
    out.trace.push_back(value);
    lr *= 1.25;
    if (gain < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  if (!std::isfinite(value)) throw NumericalError("hyperparameter objective is not finite at " + describe(to_hyper(p, init)));
  out.hyper = to_hyper(p, init);
  out.hyper.sigma_s *= scale;
  out.hyper.sigma_n *= scale;
  for (double& v : out.trace) v -= entries * log_scale;
  return out;
}

Prediction predict_unseen(const Matrix& y_train, const Matrix& c_full, Index n_train, double sigma_n,
                          bool with_variances) {
  require_square(c_full, "predict_unseen");
  if (n_train < 1 || n_train > c_full.rows()) throw DataError("training block size is out of range");
  if (y_train.rows() != n_train) {
    throw DataError("training data has " + std::to_string(y_train.rows()) + " rows but the covariance block has " +
                    std::to_string(n_train));
  }
  if (!(sigma_n >= 0.0)) throw ConfigError("sigma_n must be non-negative");
  const Index n_test = c_full.rows() - n_train;
  Matrix a = c_full.topLeftCorner(n_train, n_train);
  a = 0.5 * (a + a.transpose());
  a.diagonal().array() += sigma_n * sigma_n;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("C_train + sigma_n^2 I is singular or not positive definite");
  }
  const Matrix cross = c_full.topRightCorner(n_train, n_test);
  Prediction out;
  out.mean = cross.transpose() * llt.solve(y_train);
  if (with_variances) {
    const Matrix solved = llt.solve(cross);
    out.variances = c_full.bottomRightCorner(n_test, n_test).diagonal() -
                    cross.cwiseProduct(solved).colwise().sum().transpose();
    out.variances.array() += sigma_n * sigma_n;
  }
  return out;
}

PredictOutcome predict_pipeline(const DataMatrix& y_train, const DataMatrix& y_test, const PredictConfig& config) {
  if (y_train.d() != y_test.d()) {
    throw DataError("train and test data differ in width: " + std::to_string(y_train.d()) + " vs " +
                    std::to_string(y_test.d()));
  }
  const Index n_train = y_train.n();
  const Index n_test = y_test.n();
  const Vector center = y_train.values().colwise().mean().transpose();
  const Matrix y_centered = y_train.values().rowwise() - center.transpose();

  const AffinityResult v_train = umap_affinities(y_train, config.n_neighbors);
  const EmbedResult train_fit = optimize_embedding(v_train.affinity, config.embed);

  // A test row equal to a training row is the same observation: it reuses
  // that training node instead of becoming a new one.
  std::vector<Index> node(static_cast<std::size_t>(n_test));
  std::vector<Index> fresh;
  for (Index t = 0; t < n_test; ++t) {
    Index match = -1;
    for (Index i = 0; i < n_train && match < 0; ++i)
      if (y_train.values().row(i) == y_test.values().row(t)) match = i;
    if (match < 0) {
      match = n_train + static_cast<Index>(fresh.size());
      fresh.push_back(t);
    }
    node[static_cast<std::size_t>(t)] = match;
  }
  const Index n_nodes = n_train + static_cast<Index>(fresh.size());

  Matrix stacked(n_nodes, y_train.d());
  stacked.topRows(n_train) = y_train.values();
  for (std::size_t k = 0; k < fresh.size(); ++k) stacked.row(n_train + static_cast<Index>(k)) = y_test.values().row(fresh[k]);
  const AffinityResult v_full = umap_affinities(DataMatrix(stacked), config.n_neighbors);
  EmbedConfig oos = config.embed;
  oos.trace_path.clear();
  const Matrix x_nodes = embed_out_of_sample(v_full.affinity, train_fit.embedding, oos).embedding.values();

  std::vector<Matrix> train_laplacians;
  if (config.graph_samples > 0) {
    SeededRng rng = SeededRng(config.embed.seed).derive(1);
    for (int s = 0; s < config.graph_samples; ++s) {
      train_laplacians.push_back(
          build_laplacian(sample_adjacency_from_probs(v_train.affinity.probs, rng).a_sym, LaplacianKind::normalized));
    }
  } else {
    train_laplacians.push_back(build_laplacian(v_train.affinity.probs, LaplacianKind::normalized));
  }
  FitResult fit = fit_hyperparams(y_centered, train_laplacians, config.init, config.fit);

  Matrix full_probs;
  if (config.graph == PredictGraphMode::latent_knn) {
    full_probs = umap_affinities(DataMatrix(x_nodes), config.n_neighbors).affinity.probs;
  } else {
    full_probs = v_full.affinity.probs;
  }
  const Matrix c_nodes = fitted_covariance(build_laplacian(full_probs, LaplacianKind::normalized), fit.hyper);

  // Rows: training nodes, then the node of every test row.
  std::vector<Index> rows(static_cast<std::size_t>(n_train));
  std::iota(rows.begin(), rows.end(), Index{0});
  rows.insert(rows.end(), node.begin(), node.end());
  const Matrix c_full = c_nodes(rows, rows);
  Matrix x_full = x_nodes(rows, Eigen::all);

  const double sigma_n = config.sigma_n_override >= 0.0 ? config.sigma_n_override : fit.hyper.sigma_n;
  Prediction pred = predict_unseen(y_centered, c_full, n_train, sigma_n, config.with_variances);
  pred.mean.rowwise() += center.transpose();
  return {std::move(pred), std::move(fit), Embedding(std::move(x_full))};
}

GraphCovariance bayesnet_covariance(const Matrix& a_lower) {
  require_square(a_lower, "bayesnet_covariance");
  const Index n = a_lower.rows();
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j)
      if (a_lower(i, j) != 0.0) {
        throw DataError("bayesnet weights must be strictly lower triangular; entry (" + std::to_string(i) + "," +
                        std::to_string(j) + ") is non-zero");
      }
  const Matrix i_minus_a = Matrix::Identity(n, n) - a_lower;
  const Matrix m = i_minus_a.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return {m * m.transpose(), CovarianceKind::bayesnet, false};
}

Matrix ancestral_samples(const Matrix& a_lower, int draws, SeededRng& rng) {
  bayesnet_covariance(a_lower);  // validates the structure
  const Index n = a_lower.rows();
  Matrix out(draws, n);
  for (int s = 0; s < draws; ++s) {
    for (Index i = 0; i < n; ++i) {
      double mean = 0.0;
      for (Index j = 0; j < i; ++j) mean += a_lower(i, j) * out(s, j);
      out(s, i) = mean + rng.normal();
    }
  }
  return out;
}

Matrix neumann_power_sum(const Matrix& a, int depth) {
  require_square(a, "neumann_power_sum");
  if (depth < 0) throw ConfigError("power-sum depth must be non-negative");
  const Index n = a.rows();
  Matrix term = Matrix::Identity(n, n);
  Matrix sum = term;
  for (int k = 1; k <= depth; ++k) {
    term = term * a;
    sum += term;
  }
  return sum;
}

GraphCovariance gcgp_covariance(const Matrix& a_sym, int k, const Matrix& base) {
  if (k < 0) throw ConfigError("propagation power k must be non-negative");
  const Matrix a = checked_adjacency(a_sym, "gcgp_covariance");
  require_square(base, "gcgp_covariance");
  if (base.rows() != a.rows()) throw DataError("base covariance and adjacency differ in size");
  const Index n = a.rows();
  const Matrix a_tilde = a + Matrix::Identity(n, n);
  const Vector inv_sqrt = a_tilde.rowwise().sum().cwiseSqrt().cwiseInverse();
  const Matrix s = inv_sqrt.asDiagonal() * a_tilde * inv_sqrt.asDiagonal();
  Matrix sk = Matrix::Identity(n, n);
  for (int p = 0; p < k; ++p) sk = sk * s;
  Matrix c = sk * base * sk.transpose();
  return {0.5 * (c + c.transpose()), CovarianceKind::gcgp, false};
}

double GammaLaw::cdf(double x) const {
  if (x <= 0.0) return scale == 0.0 && x == 0.0 ? 1.0 : 0.0;
  if (scale == 0.0) return 1.0;
  return boost::math::gamma_p(shape, x / scale);
}

GammaLaw normal_distance_gamma(double k_ii, double k_jj, double k_ij, double d) {
  if (!(d > 0.0)) throw ConfigError("dimension d must be positive");
  const double v = k_ii + k_jj - 2.0 * k_ij;
  const double tol = 1e-12 * std::max({1.0, std::abs(k_ii), std::abs(k_jj)});
  if (!std::isfinite(v) || v < -tol) {
    throw DataError("k_ii + k_jj - 2 k_ij is negative (" + format_double(v) + "); not a valid covariance");
  }
  return {0.5 * d, 2.0 * std::max(v, 0.0)};
}

}  // namespace probdr
